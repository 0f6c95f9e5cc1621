// Versioned binary checkpoint: map from parameter path to tensor.
// Layout (little-endian): magic "RRGCKPT1", u32 entry count, then per entry
// u32 name length, name bytes, u32 ndim, u32 dims..., f64 data.

#ifndef RRG_CHECKPOINT_HPP
#define RRG_CHECKPOINT_HPP

#include <string>

#include "rrg/vision.hpp"

namespace rrg {

void save_checkpoint(const NamedParams& params, const std::string& path);

// Loads values into matching tensors of `params` (shapes must agree).
// Throws on missing or mismatched entries.
void load_checkpoint(NamedParams& params, const std::string& path);

}  // namespace rrg

#endif
