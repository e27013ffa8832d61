#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pgd/grid.hpp"

namespace pgd {

/// Binary 8-bit PGM (P5) encoding. Each value is multiplied by `scale`,
/// clamped to [0, 1] and quantized linearly to [0, 255] with rounding.
std::vector<std::uint8_t> encode_pgm(const Grid& grid, double scale = 1.0);

void write_pgm(const std::filesystem::path& path, const Grid& grid, double scale = 1.0);

/// Scale that maps the grid maximum to 255 (1.0 for an all-zero grid).
double max_scale(const Grid& grid);

} // namespace pgd
