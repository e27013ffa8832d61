#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "pgd/grid.hpp"
#include "pgd/quality.hpp"
#include "pgd/types.hpp"

namespace pgd {

/// One selected cell of an object's top-K set.
struct RankedPosition {
    int level = 0;
    int row = 0;
    int col = 0;
    Point coord;
    double score = 0.0;
    int object_index = 0;

    CellIndex cell() const noexcept { return {level, row, col}; }
};

/// Per object, the k cells with the highest positive quality pooled across
/// all levels. Order: descending score, then ascending (level, row, col).
/// Objects with fewer than k positive cells keep all of them.
std::vector<std::vector<RankedPosition>> select_topk(std::span<const QualityField> fields,
                                                     std::span<const LevelGeometry> levels, int k);

/// Symmetric 2x2 matrix.
struct Sym2 {
    double xx = 0.0;
    double xy = 0.0;
    double yy = 0.0;

    double trace() const noexcept { return xx + yy; }
    double det() const noexcept { return xx * yy - xy * xy; }
    double min_eigenvalue() const noexcept;
};

struct GaussianFit {
    Point mu;
    Sym2 sigma;
    bool regularized = false;
};

/// Added to the covariance when it is near-singular, in pixel^2.
inline constexpr double kCovarianceRidge = 1.0;
/// Near-singular means min eigenvalue < kSingularRatio * max(trace, 1).
inline constexpr double kSingularRatio = 1e-6;

/// Maximum-likelihood 2D Gaussian: sample mean and biased (1/K) covariance.
/// A near-singular covariance gets kCovarianceRidge * I added.
/// Throws std::invalid_argument on an empty point set.
GaussianFit fit_gaussian(std::span<const Point> points);

/// exp(-1/2 (X - mu)^T Sigma^-1 (X - mu)) at the listed cells, 0 elsewhere.
LevelMaps importance(std::span<const RankedPosition> positions, const GaussianFit& fit,
                     std::span<const LevelGeometry> levels);

/// Elementwise max over objects. Throws on an empty list or shape mismatch.
LevelMaps merge_importance(std::span<const LevelMaps> per_object);

/// Foreground distillation weights with their explicit support.
struct WeightMask {
    LevelMaps levels;
    std::vector<CellIndex> support; // ascending (level, row, col)

    std::size_t support_size() const noexcept { return support.size(); }
};

/// Per level, divides importance by the number of nonzero cells on that
/// level. All-zero levels stay zero.
WeightMask normalize_mask(const LevelMaps& importance);

/// Full Prediction-Guided Weighting: quality -> top-k -> Gaussian fit ->
/// importance -> max over objects -> per-level normalization.
WeightMask pgw_mask(const SceneBundle& bundle, double xi, int k);

enum class Strategy { Box, BoxGauss, Centre, Quality, TopkEq, KDE, PGW };
enum class Head { Cls, Reg };

inline constexpr Strategy kAllStrategies[] = {Strategy::Box,    Strategy::BoxGauss, Strategy::Centre, Strategy::Quality,
                                              Strategy::TopkEq, Strategy::KDE,      Strategy::PGW};

std::string_view strategy_name(Strategy s);
/// Case-insensitive. Throws std::invalid_argument for an unknown tag.
Strategy parse_strategy(std::string_view tag);

/// Fraction of the Centre strategy's region along each box side.
inline constexpr double kCentreFraction = 0.2;
/// BoxGauss standard deviation as a fraction of the box side.
inline constexpr double kBoxGaussSigmaFraction = 0.25;
/// Lower bound on the KDE bandwidth, in pixels.
inline constexpr double kKdeMinBandwidth = 1.0;

/// Foreground mask for one of the weighting strategies. The quality-based
/// strategies score with config.xi_cls or config.xi_reg depending on head.
/// Every strategy is merged over objects and normalized like PGW.
WeightMask strategy_mask(const SceneBundle& bundle, Strategy strategy, const DistillConfig& config,
                         Head head = Head::Cls);

/// Shannon entropy (nats) of the mask treated as a distribution over cells.
double mask_entropy(const WeightMask& mask);

/// |A n B| / |A u B| over supports; 1 when both are empty.
double support_jaccard(const WeightMask& a, const WeightMask& b);

} // namespace pgd
