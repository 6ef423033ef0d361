#pragma once

#include <string>
#include <vector>

#include "poseseq/pose_sequence.hpp"

namespace poseseq {

enum class PseqFrames { text, binary };

// A parsed PSEQ document: the sequence plus any unknown header lines, which
// survive a read-modify-write round trip.
struct PseqFile {
  PoseSequence sequence;
  std::vector<std::string> extra_fields;
};

// Line-oriented "pseq-v1" container: fps, embedded topology, validity mask
// and the frame tensor, either as text (shortest-round-trip decimals) or as
// a packed little-endian binary block. The reader auto-detects the form.
// Distinct diagnostics for version mismatch, shape inconsistency and
// non-finite coordinates on valid frames.
PseqFile read_pseq_file(const std::string& path);
PoseSequence read_pseq(const std::string& path);

void write_pseq_file(const PseqFile& file, const std::string& path,
                     PseqFrames frames = PseqFrames::text);
void write_pseq(const PoseSequence& seq, const std::string& path,
                PseqFrames frames = PseqFrames::text);

}  // namespace poseseq
