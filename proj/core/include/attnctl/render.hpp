#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

#include "attnctl/boxes.hpp"
#include "attnctl/tensor.hpp"

namespace attnctl {

/// Collapses an attention trace to one L-vector: the sum over all steps, or
/// row `step` (0-based) when given. Rank-1 input is taken as already summed.
/// Trace rows must be simplexes; DomainError otherwise.
DenseArray collapse_trace(const DenseArray& trace, std::optional<std::size_t> step = std::nullopt);

/// grid x grid map scaled so the maximum is 255 (all zero stays zero), then
/// upscaled by an integer factor with nearest neighbour.
ByteGrid render_attention(const DenseArray& values, std::size_t grid, std::size_t upscale = 1);

/// Binary PGM (P5).
std::string encode_pgm(const ByteGrid& image);
void write_pgm(const std::filesystem::path& path, const ByteGrid& image);

/// False when the library was built without libpng.
bool png_supported();
/// 8-bit grayscale PNG; throws std::runtime_error without libpng.
void write_png(const std::filesystem::path& path, const ByteGrid& image);

}  // namespace attnctl
