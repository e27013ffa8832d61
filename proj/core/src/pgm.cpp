#include "pgd/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "pgd/types.hpp"

namespace pgd {

std::vector<std::uint8_t> encode_pgm(const Grid& grid, double scale) {
    const std::string header = "P5\n" + std::to_string(grid.width()) + " " + std::to_string(grid.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(header.size() + grid.size());
    for (double v : grid.values()) {
        const double u = std::clamp(v * scale, 0.0, 1.0);
        out.push_back(static_cast<std::uint8_t>(std::lround(u * 255.0)));
    }
    return out;
}

void write_pgm(const std::filesystem::path& path, const Grid& grid, double scale) {
    const auto bytes = encode_pgm(grid, scale);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(path.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

double max_scale(const Grid& grid) {
    double m = 0.0;
    for (double v : grid.values()) m = std::max(m, v);
    return m > 0.0 ? 1.0 / m : 1.0;
}

} // namespace pgd
