#pragma once

#include <filesystem>

#include "tssl/engine/optim.hpp"

namespace tssl::engine {

// Binary checkpoint: magic "TSSL", format version u32, then per tensor:
// name length u32, name bytes, rank u32, extents u32 each, raw little-endian
// f32 payload. Entries appear in ParamSet order; load preserves that order.
// Round-trips are bit-exact.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params);
ParamSet load_checkpoint(const std::filesystem::path& path);

// FNV-1a fingerprint of a file's bytes (checkpoint provenance tags).
uint64_t file_fingerprint(const std::filesystem::path& path);

}  // namespace tssl::engine
