#pragma once

#include <filesystem>

#include "tssl/engine/tensor.hpp"

namespace tssl::netpbm {

// Binary netpbm IO, 8-bit only. Images are [3,H,W] float tensors in [0,1];
// because datasets are quantized to k/255 at generation time, a write/read
// round-trip is bit-exact. Masks are raw byte label planes [H,W].

void write_ppm(const std::filesystem::path& path, const engine::Tensor& image);
engine::Tensor read_ppm(const std::filesystem::path& path);

void write_pgm(const std::filesystem::path& path, const engine::IntMask& mask);
engine::IntMask read_pgm(const std::filesystem::path& path);

}  // namespace tssl::netpbm
