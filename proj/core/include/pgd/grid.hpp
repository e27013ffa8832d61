#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "pgd/types.hpp"

namespace pgd {

/// Dense H x W plane of 64-bit reals. Masks, quality fields and spatial
/// attention all live on one of these per pyramid level.
class Grid {
public:
    Grid() = default;
    Grid(int height, int width, double fill = 0.0);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return values_.size(); }

    double at(int i, int j) const { return values_[static_cast<std::size_t>(i) * width_ + j]; }
    double& at(int i, int j) { return values_[static_cast<std::size_t>(i) * width_ + j]; }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }

    bool same_shape(const Grid& o) const noexcept { return height_ == o.height_ && width_ == o.width_; }
    double sum() const noexcept;
    std::size_t count_positive() const noexcept;

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<double> values_;
};

/// One Grid per pyramid level.
using LevelMaps = std::vector<Grid>;

/// All-zero maps shaped like the given levels.
LevelMaps zero_maps(std::span<const LevelGeometry> levels);

/// Dense C x H x W volume of 64-bit reals (channel attention, gradients,
/// widened feature tensors).
class Volume {
public:
    Volume() = default;
    Volume(int channels, int height, int width, double fill = 0.0);

    static Volume from(const FeatureTensor& t);

    int channels() const noexcept { return channels_; }
    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return values_.size(); }

    double at(int c, int i, int j) const { return values_[index(c, i, j)]; }
    double& at(int c, int i, int j) { return values_[index(c, i, j)]; }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }

    bool same_shape(const Volume& o) const noexcept {
        return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
    }

    friend bool operator==(const Volume&, const Volume&) = default;

private:
    std::size_t index(int c, int i, int j) const noexcept {
        return (static_cast<std::size_t>(c) * height_ + i) * width_ + j;
    }

    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<double> values_;
};

/// Runs fn(0) .. fn(n-1) on up to `workers` threads. Each index must write
/// only to its own output slot, so results do not depend on the worker
/// count. Exceptions from fn are rethrown (lowest index first).
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

} // namespace pgd
