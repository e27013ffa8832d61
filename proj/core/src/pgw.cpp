#include "pgd/pgw.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iterator>
#include <limits>
#include <stdexcept>
#include <string>

namespace pgd {

namespace {

bool ranks_before(const RankedPosition& a, const RankedPosition& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.cell() < b.cell();
}

// Mahalanobis importance. Far cells can underflow exp() to zero; they are
// floored at the smallest normal double so they stay in the support.
double gaussian_weight(Point x, const GaussianFit& fit) {
    const double dx = x.x - fit.mu.x;
    const double dy = x.y - fit.mu.y;
    const Sym2& s = fit.sigma;
    const double m = (dx * dx * s.yy - 2.0 * dx * dy * s.xy + dy * dy * s.xx) / s.det();
    return std::max(std::exp(-0.5 * m), std::numeric_limits<double>::min());
}

LevelMaps merge_or_zero(const std::vector<LevelMaps>& per_object, std::span<const LevelGeometry> levels) {
    if (per_object.empty()) return zero_maps(levels);
    return merge_importance(per_object);
}

// Indicator-style maps for the box-geometry strategies.
template <typename WeightFn>
std::vector<LevelMaps> box_strategy(const SceneBundle& bundle, WeightFn weight) {
    std::vector<LevelMaps> per_object;
    for (const Box& box : bundle.gt) {
        LevelMaps maps = zero_maps(bundle.levels);
        for (std::size_t l = 0; l < bundle.levels.size(); ++l) {
            const auto& lv = bundle.levels[l];
            for (int i = 0; i < lv.height; ++i)
                for (int j = 0; j < lv.width; ++j) maps[l].at(i, j) = weight(box, cell_center(lv, i, j));
        }
        per_object.push_back(std::move(maps));
    }
    return per_object;
}

// Unbiased (n - 1) standard deviation of one coordinate; 0 for n < 2.
double sample_std(std::span<const RankedPosition> pts, double Point::*axis) {
    if (pts.size() < 2) return 0.0;
    const double n = static_cast<double>(pts.size());
    double mean = 0.0;
    for (const auto& p : pts) mean += p.coord.*axis;
    mean /= n;
    double ss = 0.0;
    for (const auto& p : pts) {
        const double d = p.coord.*axis - mean;
        ss += d * d;
    }
    return std::sqrt(ss / (n - 1.0));
}

LevelMaps kde_importance(std::span<const RankedPosition> top, std::span<const LevelGeometry> levels) {
    LevelMaps maps = zero_maps(levels);
    if (top.empty()) return maps;
    const double shrink = 1.06 * std::pow(static_cast<double>(top.size()), -0.2);
    const double hx = std::max(shrink * sample_std(top, &Point::x), kKdeMinBandwidth);
    const double hy = std::max(shrink * sample_std(top, &Point::y), kKdeMinBandwidth);

    std::vector<double> density(top.size(), 0.0);
    double peak = 0.0;
    for (std::size_t a = 0; a < top.size(); ++a) {
        for (const auto& b : top) {
            const double u = (top[a].coord.x - b.coord.x) / hx;
            const double v = (top[a].coord.y - b.coord.y) / hy;
            density[a] += std::exp(-0.5 * (u * u + v * v));
        }
        peak = std::max(peak, density[a]);
    }
    for (std::size_t a = 0; a < top.size(); ++a)
        maps[static_cast<std::size_t>(top[a].level)].at(top[a].row, top[a].col) = density[a] / peak;
    return maps;
}

} // namespace

double Sym2::min_eigenvalue() const noexcept {
    const double half_diff = 0.5 * (xx - yy);
    return 0.5 * (xx + yy) - std::sqrt(half_diff * half_diff + xy * xy);
}

std::vector<std::vector<RankedPosition>> select_topk(std::span<const QualityField> fields,
                                                     std::span<const LevelGeometry> levels, int k) {
    if (k < 1) throw std::invalid_argument("select_topk: k must be positive");
    std::vector<std::vector<RankedPosition>> out;
    out.reserve(fields.size());
    for (const auto& field : fields) {
        std::vector<RankedPosition> cells;
        for (std::size_t l = 0; l < levels.size(); ++l) {
            const auto& lv = levels[l];
            const Grid& q = field.levels[l];
            for (int i = 0; i < lv.height; ++i)
                for (int j = 0; j < lv.width; ++j)
                    if (q.at(i, j) > 0.0)
                        cells.push_back({static_cast<int>(l), i, j, cell_center(lv, i, j), q.at(i, j), field.object_index});
        }
        const auto keep = std::min(cells.size(), static_cast<std::size_t>(k));
        std::partial_sort(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(keep), cells.end(), ranks_before);
        cells.resize(keep);
        out.push_back(std::move(cells));
    }
    return out;
}

GaussianFit fit_gaussian(std::span<const Point> points) {
    if (points.empty()) throw std::invalid_argument("fit_gaussian: empty point set");
    const double n = static_cast<double>(points.size());
    GaussianFit fit;
    for (const auto& p : points) {
        fit.mu.x += p.x;
        fit.mu.y += p.y;
    }
    fit.mu.x /= n;
    fit.mu.y /= n;
    for (const auto& p : points) {
        const double dx = p.x - fit.mu.x;
        const double dy = p.y - fit.mu.y;
        fit.sigma.xx += dx * dx;
        fit.sigma.xy += dx * dy;
        fit.sigma.yy += dy * dy;
    }
    fit.sigma.xx /= n;
    fit.sigma.xy /= n;
    fit.sigma.yy /= n;

    if (fit.sigma.min_eigenvalue() < kSingularRatio * std::max(fit.sigma.trace(), 1.0)) {
        fit.sigma.xx += kCovarianceRidge;
        fit.sigma.yy += kCovarianceRidge;
        fit.regularized = true;
    }
    return fit;
}

LevelMaps importance(std::span<const RankedPosition> positions, const GaussianFit& fit,
                     std::span<const LevelGeometry> levels) {
    if (!(fit.sigma.det() > 0.0 && fit.sigma.xx > 0.0))
        throw std::invalid_argument("importance: covariance is not positive-definite");
    LevelMaps maps = zero_maps(levels);
    for (const auto& p : positions) {
        const auto& lv = levels[static_cast<std::size_t>(p.level)];
        maps[static_cast<std::size_t>(p.level)].at(p.row, p.col) = gaussian_weight(cell_center(lv, p.row, p.col), fit);
    }
    return maps;
}

LevelMaps merge_importance(std::span<const LevelMaps> per_object) {
    if (per_object.empty()) throw std::invalid_argument("merge_importance: no objects");
    LevelMaps merged = per_object.front();
    for (std::size_t o = 1; o < per_object.size(); ++o) {
        const auto& maps = per_object[o];
        if (maps.size() != merged.size()) throw std::invalid_argument("merge_importance: level count mismatch");
        for (std::size_t l = 0; l < maps.size(); ++l) {
            if (!maps[l].same_shape(merged[l])) throw std::invalid_argument("merge_importance: level shape mismatch");
            auto dst = merged[l].values();
            auto src = maps[l].values();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::max(dst[i], src[i]);
        }
    }
    return merged;
}

WeightMask normalize_mask(const LevelMaps& importance) {
    WeightMask mask{importance, {}};
    for (std::size_t l = 0; l < mask.levels.size(); ++l) {
        Grid& g = mask.levels[l];
        const std::size_t nonzero = g.count_positive();
        if (nonzero == 0) continue;
        const double denom = static_cast<double>(nonzero);
        for (int i = 0; i < g.height(); ++i) {
            for (int j = 0; j < g.width(); ++j) {
                if (g.at(i, j) > 0.0) {
                    g.at(i, j) /= denom;
                    mask.support.push_back({static_cast<int>(l), i, j});
                } else {
                    g.at(i, j) = 0.0;
                }
            }
        }
    }
    return mask;
}

WeightMask pgw_mask(const SceneBundle& bundle, double xi, int k) {
    const auto fields = quality_fields(bundle, xi);
    const auto top = select_topk(fields, bundle.levels, k);
    std::vector<LevelMaps> per_object;
    for (const auto& positions : top) {
        if (positions.empty()) continue;
        std::vector<Point> coords;
        coords.reserve(positions.size());
        for (const auto& p : positions) coords.push_back(p.coord);
        per_object.push_back(importance(positions, fit_gaussian(coords), bundle.levels));
    }
    return normalize_mask(merge_or_zero(per_object, bundle.levels));
}

std::string_view strategy_name(Strategy s) {
    switch (s) {
    case Strategy::Box: return "Box";
    case Strategy::BoxGauss: return "BoxGauss";
    case Strategy::Centre: return "Centre";
    case Strategy::Quality: return "Quality";
    case Strategy::TopkEq: return "TopkEq";
    case Strategy::KDE: return "KDE";
    case Strategy::PGW: return "PGW";
    }
    throw std::invalid_argument("unknown strategy");
}

Strategy parse_strategy(std::string_view tag) {
    auto lower = [](std::string_view s) {
        std::string out(s);
        for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return out;
    };
    const std::string wanted = lower(tag);
    for (Strategy s : kAllStrategies)
        if (lower(strategy_name(s)) == wanted) return s;
    throw std::invalid_argument("unknown strategy '" + std::string(tag) +
                                "' (expected Box, BoxGauss, Centre, Quality, TopkEq, KDE or PGW)");
}

WeightMask strategy_mask(const SceneBundle& bundle, Strategy strategy, const DistillConfig& config, Head head) {
    const double xi = head == Head::Cls ? config.xi_cls : config.xi_reg;
    std::vector<LevelMaps> per_object;

    switch (strategy) {
    case Strategy::Box:
        per_object = box_strategy(bundle, [](const Box& b, Point c) { return point_in_box(c, b) ? 1.0 : 0.0; });
        break;
    case Strategy::BoxGauss:
        per_object = box_strategy(bundle, [](const Box& b, Point c) {
            if (!point_in_box(c, b)) return 0.0;
            const Point m = b.center();
            const double sx = kBoxGaussSigmaFraction * b.width();
            const double sy = kBoxGaussSigmaFraction * b.height();
            const double dx = c.x - m.x;
            const double dy = c.y - m.y;
            return std::exp(-(dx * dx / (2.0 * sx * sx) + dy * dy / (2.0 * sy * sy)));
        });
        break;
    case Strategy::Centre:
        per_object = box_strategy(bundle, [](const Box& b, Point c) {
            const Point m = b.center();
            const double hw = 0.5 * kCentreFraction * b.width();
            const double hh = 0.5 * kCentreFraction * b.height();
            const Box region{m.x - hw, m.y - hh, m.x + hw, m.y + hh, b.category};
            return point_in_box(c, region) ? 1.0 : 0.0;
        });
        break;
    case Strategy::Quality:
        for (auto& f : quality_fields(bundle, xi)) per_object.push_back(std::move(f.levels));
        break;
    case Strategy::TopkEq:
        for (const auto& top : select_topk(quality_fields(bundle, xi), bundle.levels, config.k)) {
            LevelMaps maps = zero_maps(bundle.levels);
            for (const auto& p : top) maps[static_cast<std::size_t>(p.level)].at(p.row, p.col) = 1.0;
            per_object.push_back(std::move(maps));
        }
        break;
    case Strategy::KDE:
        for (const auto& top : select_topk(quality_fields(bundle, xi), bundle.levels, config.k))
            per_object.push_back(kde_importance(top, bundle.levels));
        break;
    case Strategy::PGW:
        return pgw_mask(bundle, xi, config.k);
    default:
        throw std::invalid_argument("strategy_mask: unknown strategy");
    }
    return normalize_mask(merge_or_zero(per_object, bundle.levels));
}

double mask_entropy(const WeightMask& mask) {
    double total = 0.0;
    for (const auto& g : mask.levels) total += g.sum();
    if (total <= 0.0) return 0.0;
    double h = 0.0;
    for (const auto& g : mask.levels) {
        for (double v : g.values()) {
            if (v <= 0.0) continue;
            const double p = v / total;
            h -= p * std::log(p);
        }
    }
    return h;
}

double support_jaccard(const WeightMask& a, const WeightMask& b) {
    if (a.support.empty() && b.support.empty()) return 1.0;
    std::vector<CellIndex> inter;
    std::set_intersection(a.support.begin(), a.support.end(), b.support.begin(), b.support.end(),
                          std::back_inserter(inter));
    const double uni = static_cast<double>(a.support.size() + b.support.size() - inter.size());
    return static_cast<double>(inter.size()) / uni;
}

} // namespace pgd
