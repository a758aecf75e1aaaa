#pragma once

#include <string>
#include <vector>

#include "fedprop/dataset.hpp"

namespace fedprop::harness {

// Reads a big-endian IDX image/label file pair (the MNIST container format:
// magic 0x00000803 for unsigned-byte images with count x rows x cols, magic
// 0x00000801 for labels).  Pixel bytes are scaled to [0, 1]; labels are kept
// as small integers.  Throws std::runtime_error on missing files, wrong
// magic numbers, truncated payloads, or mismatched example counts.
std::vector<fedsim::Sample> load_idx(const std::string& images_path,
                                     const std::string& labels_path);

}  // namespace fedprop::harness
