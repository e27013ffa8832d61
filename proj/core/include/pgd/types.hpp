#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pgd {

/// Thrown when a serialized file does not match the TensorFile layout.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown when a SceneBundle violates its invariants. Carries every
/// violation found, not just the first one.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(std::vector<std::string> violations);

    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    std::vector<std::string> violations_;
};

/// Image-plane point in pixels.
struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

/// One FPN level: its stride and grid size.
struct LevelGeometry {
    int level_index = 0;
    int stride = 1;
    int height = 1;
    int width = 1;

    std::size_t cells() const noexcept { return static_cast<std::size_t>(height) * width; }

    friend bool operator==(const LevelGeometry&, const LevelGeometry&) = default;
};

/// Axis-aligned box in image pixels with a class id.
struct Box {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;
    int category = 0;

    double width() const noexcept { return x2 - x1; }
    double height() const noexcept { return y2 - y1; }
    double area() const noexcept { return (x2 - x1) * (y2 - y1); }
    Point center() const noexcept { return {0.5 * (x1 + x2), 0.5 * (y1 + y2)}; }
    bool valid() const noexcept { return x1 < x2 && y1 < y2; }

    friend bool operator==(const Box&, const Box&) = default;
};

/// C x H x W tensor of 32-bit reals, row-major.
class FeatureTensor {
public:
    FeatureTensor() = default;
    FeatureTensor(int channels, int height, int width);
    FeatureTensor(int channels, int height, int width, std::vector<float> values);

    int channels() const noexcept { return channels_; }
    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return values_.size(); }

    float at(int c, int i, int j) const { return values_[index(c, i, j)]; }
    float& at(int c, int i, int j) { return values_[index(c, i, j)]; }

    const std::vector<float>& values() const noexcept { return values_; }
    std::vector<float>& values() noexcept { return values_; }

    bool all_finite() const noexcept;

    friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;

private:
    std::size_t index(int c, int i, int j) const noexcept {
        return (static_cast<std::size_t>(c) * height_ + i) * width_ + j;
    }

    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<float> values_;
};

/// Decoded teacher predictions for one level.
///   boxes:       anchors x 4 x H x W  (x1, y1, x2, y2 in image pixels)
///   class_probs: anchors x num_classes x H x W
struct PredictionLevel {
    int anchors = 1;
    int num_classes = 1;
    int height = 1;
    int width = 1;
    std::vector<float> boxes;
    std::vector<float> class_probs;

    Box box(int anchor, int row, int col) const;
    float prob(int anchor, int category, int row, int col) const {
        return class_probs[((static_cast<std::size_t>(anchor) * num_classes + category) * height + row) * width + col];
    }

    friend bool operator==(const PredictionLevel&, const PredictionLevel&) = default;
};

struct PredictionField {
    int anchors_per_loc = 1;
    std::vector<PredictionLevel> levels;

    friend bool operator==(const PredictionField&, const PredictionField&) = default;
};

/// One image's worth of teacher/student tensors, predictions, GT and FPN
/// geometry.
struct SceneBundle {
    int image_width = 0;
    int image_height = 0;
    int num_classes = 1;
    std::vector<LevelGeometry> levels;
    std::vector<Box> gt;
    std::vector<FeatureTensor> teacher_cls_feats;
    std::vector<FeatureTensor> teacher_reg_feats;
    std::vector<FeatureTensor> student_cls_feats;
    std::vector<FeatureTensor> student_reg_feats;
    PredictionField teacher_preds;

    friend bool operator==(const SceneBundle&, const SceneBundle&) = default;
};

/// Image, level geometry and GT checks only; no tensor checks.
std::vector<std::string> scene_violations(const SceneBundle& bundle);

/// Lists every invariant violation of the bundle; empty means valid.
std::vector<std::string> bundle_violations(const SceneBundle& bundle);

/// Throws ValidationError when bundle_violations() is nonempty.
void validate_bundle(const SceneBundle& bundle);

/// Loss and mask hyper-parameters. Defaults are the anchor-based detector
/// configuration (alpha = 0.8).
struct DistillConfig {
    double xi_cls = 0.8;
    double xi_reg = 0.6;
    int k = 30;
    double alpha = 0.8;
    double beta = 0.4;   // 0.5 * alpha
    double gamma = 1.28; // 1.6 * alpha
    double delta = 0.0008;
    double tau = 0.8;

    /// Default configuration with beta and gamma tied to the given alpha.
    static DistillConfig with_alpha(double alpha);

    /// Throws std::invalid_argument when a field is out of range.
    void validate() const;

    friend bool operator==(const DistillConfig&, const DistillConfig&) = default;
};

/// Image-plane center of a grid cell: stride * (index + 0.5).
Point cell_center(const LevelGeometry& level, int row, int col);

/// Closed-box membership: x1 <= x <= x2 and y1 <= y <= y2.
inline bool point_in_box(Point p, const Box& b) noexcept {
    return b.x1 <= p.x && p.x <= b.x2 && b.y1 <= p.y && p.y <= b.y2;
}

/// Position of one cell in the pyramid.
struct CellIndex {
    int level = 0;
    int row = 0;
    int col = 0;

    friend auto operator<=>(const CellIndex&, const CellIndex&) = default;
};

} // namespace pgd
