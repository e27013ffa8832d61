#include "pgd/grid.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <stdexcept>
#include <thread>

namespace pgd {

Grid::Grid(int height, int width, double fill)
    : height_(height), width_(width),
      values_(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0), fill) {
    if (height < 0 || width < 0) throw std::invalid_argument("Grid: negative dims");
}

double Grid::sum() const noexcept {
    double s = 0.0;
    for (double v : values_) s += v;
    return s;
}

std::size_t Grid::count_positive() const noexcept {
    return static_cast<std::size_t>(std::count_if(values_.begin(), values_.end(), [](double v) { return v > 0.0; }));
}

LevelMaps zero_maps(std::span<const LevelGeometry> levels) {
    LevelMaps maps;
    maps.reserve(levels.size());
    for (const auto& lv : levels) maps.emplace_back(lv.height, lv.width);
    return maps;
}

Volume::Volume(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width),
      values_(static_cast<std::size_t>(std::max(channels, 0)) * std::max(height, 0) * std::max(width, 0), fill) {
    if (channels < 0 || height < 0 || width < 0) throw std::invalid_argument("Volume: negative dims");
}

Volume Volume::from(const FeatureTensor& t) {
    Volume v(t.channels(), t.height(), t.width());
    std::copy(t.values().begin(), t.values().end(), v.values_.begin());
    return v;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace pgd
