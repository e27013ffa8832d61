#include "pgd/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace pgd {

namespace {

void check_tau(double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("attention: tau must be positive");
}

// scale * softmax(logits), written back into logits. Max-subtracted.
void scaled_softmax(std::span<double> logits, double scale) {
    double peak = -std::numeric_limits<double>::infinity();
    for (double v : logits) peak = std::max(peak, v);
    double z = 0.0;
    for (double& v : logits) {
        v = std::exp(v - peak);
        z += v;
    }
    for (double& v : logits) v = scale * v / z;
}

} // namespace

Grid spatial_attention(const Volume& f, double tau) {
    check_tau(tau);
    Grid p(f.height(), f.width());
    for (int i = 0; i < f.height(); ++i) {
        for (int j = 0; j < f.width(); ++j) {
            double s = 0.0;
            for (int k = 0; k < f.channels(); ++k) s += std::abs(f.at(k, i, j));
            p.at(i, j) = s / tau;
        }
    }
    scaled_softmax(p.values(), static_cast<double>(p.size()));
    return p;
}

Volume channel_attention(const Volume& f, double tau) {
    check_tau(tau);
    Volume a(f.channels(), f.height(), f.width());
    std::vector<double> logits(static_cast<std::size_t>(f.channels()));
    for (int i = 0; i < f.height(); ++i) {
        for (int j = 0; j < f.width(); ++j) {
            for (int k = 0; k < f.channels(); ++k) logits[static_cast<std::size_t>(k)] = std::abs(f.at(k, i, j)) / tau;
            scaled_softmax(logits, static_cast<double>(f.channels()));
            for (int k = 0; k < f.channels(); ++k) a.at(k, i, j) = logits[static_cast<std::size_t>(k)];
        }
    }
    return a;
}

AttentionPair attention_pair(const Volume& features, double tau) {
    return {spatial_attention(features, tau), channel_attention(features, tau), tau};
}

Grid background_level(const LevelGeometry& level, std::span<const Box> gt) {
    Grid n(level.height, level.width);
    std::size_t count = 0;
    for (int i = 0; i < level.height; ++i) {
        for (int j = 0; j < level.width; ++j) {
            const Point c = cell_center(level, i, j);
            const bool foreground = std::any_of(gt.begin(), gt.end(), [&](const Box& b) { return point_in_box(c, b); });
            if (!foreground) {
                n.at(i, j) = 1.0;
                ++count;
            }
        }
    }
    if (count > 0)
        for (double& v : n.values()) v /= static_cast<double>(count);
    return n;
}

LevelMaps background_mask(const SceneBundle& bundle) {
    LevelMaps maps;
    maps.reserve(bundle.levels.size());
    for (const auto& lv : bundle.levels) maps.push_back(background_level(lv, bundle.gt));
    return maps;
}

} // namespace pgd
