#include "pgd/types.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pgd {

namespace {

std::string join_violations(const std::vector<std::string>& violations) {
    std::ostringstream os;
    os << "invalid scene bundle (" << violations.size() << " violation"
       << (violations.size() == 1 ? "" : "s") << ")";
    for (const auto& v : violations) os << "\n  - " << v;
    return os.str();
}

bool all_finite(const std::vector<float>& v) {
    for (float x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

void check_feature_list(const std::vector<FeatureTensor>& feats, const char* name,
                        const std::vector<LevelGeometry>& levels, std::vector<std::string>& out) {
    if (feats.size() != levels.size()) {
        std::ostringstream os;
        os << name << ": " << feats.size() << " levels, expected " << levels.size();
        out.push_back(os.str());
        return;
    }
    for (std::size_t l = 0; l < feats.size(); ++l) {
        const auto& f = feats[l];
        std::ostringstream os;
        os << name << "[" << l << "]: ";
        if (f.channels() < 1 || f.height() < 1 || f.width() < 1) {
            os << "non-positive dims " << f.channels() << "x" << f.height() << "x" << f.width();
            out.push_back(os.str());
        } else if (f.height() != levels[l].height || f.width() != levels[l].width) {
            os << "grid " << f.height() << "x" << f.width() << " does not match level "
               << levels[l].height << "x" << levels[l].width;
            out.push_back(os.str());
        } else if (!f.all_finite()) {
            os << "non-finite values";
            out.push_back(os.str());
        }
    }
}

} // namespace

ValidationError::ValidationError(std::vector<std::string> violations)
    : std::runtime_error(join_violations(violations)), violations_(std::move(violations)) {}

FeatureTensor::FeatureTensor(int channels, int height, int width)
    : FeatureTensor(channels, height, width,
                    std::vector<float>(static_cast<std::size_t>(std::max(channels, 0)) *
                                       std::max(height, 0) * std::max(width, 0))) {}

FeatureTensor::FeatureTensor(int channels, int height, int width, std::vector<float> values)
    : channels_(channels), height_(height), width_(width), values_(std::move(values)) {
    if (channels < 1 || height < 1 || width < 1)
        throw std::invalid_argument("FeatureTensor: dims must be positive");
    if (values_.size() != static_cast<std::size_t>(channels) * height * width)
        throw std::invalid_argument("FeatureTensor: value count does not match C*H*W");
}

bool FeatureTensor::all_finite() const noexcept { return pgd::all_finite(values_); }

Box PredictionLevel::box(int anchor, int row, int col) const {
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    const std::size_t base = static_cast<std::size_t>(anchor) * 4 * plane + static_cast<std::size_t>(row) * width + col;
    return Box{boxes[base], boxes[base + plane], boxes[base + 2 * plane], boxes[base + 3 * plane], 0};
}

Point cell_center(const LevelGeometry& level, int row, int col) {
    if (row < 0 || row >= level.height || col < 0 || col >= level.width)
        throw std::out_of_range("cell_center: (" + std::to_string(row) + ", " + std::to_string(col) +
                                ") outside " + std::to_string(level.height) + "x" +
                                std::to_string(level.width) + " grid");
    return {level.stride * (col + 0.5), level.stride * (row + 0.5)};
}

DistillConfig DistillConfig::with_alpha(double alpha) {
    DistillConfig c;
    c.alpha = alpha;
    c.beta = 0.5 * alpha;
    c.gamma = 1.6 * alpha;
    return c;
}

void DistillConfig::validate() const {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(xi_cls)) throw std::invalid_argument("xi_cls must lie in [0, 1]");
    if (!in_unit(xi_reg)) throw std::invalid_argument("xi_reg must lie in [0, 1]");
    if (k < 1) throw std::invalid_argument("k must be positive");
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0) || !(delta >= 0.0))
        throw std::invalid_argument("alpha, beta, gamma and delta must be nonnegative");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be positive");
}

std::vector<std::string> scene_violations(const SceneBundle& b) {
    std::vector<std::string> out;
    if (b.image_width < 1 || b.image_height < 1) out.push_back("image size must be positive");
    if (b.num_classes < 1) out.push_back("num_classes must be positive");
    if (b.levels.empty()) out.push_back("bundle has no levels");

    for (std::size_t l = 0; l < b.levels.size(); ++l) {
        const auto& lv = b.levels[l];
        std::ostringstream os;
        os << "level[" << l << "]: ";
        if (lv.level_index != static_cast<int>(l)) out.push_back(os.str() + "level_index " + std::to_string(lv.level_index) + " out of order");
        if (lv.stride < 1) out.push_back(os.str() + "stride must be positive");
        if (lv.height < 1 || lv.width < 1) out.push_back(os.str() + "grid must be at least 1x1");
        if (l > 0 && lv.stride <= b.levels[l - 1].stride) out.push_back(os.str() + "strides must strictly increase");
    }

    for (std::size_t i = 0; i < b.gt.size(); ++i) {
        const auto& g = b.gt[i];
        std::ostringstream os;
        os << "gt[" << i << "]: ";
        if (!(std::isfinite(g.x1) && std::isfinite(g.y1) && std::isfinite(g.x2) && std::isfinite(g.y2)))
            out.push_back(os.str() + "non-finite coordinates");
        else if (!g.valid())
            out.push_back(os.str() + "requires x1 < x2 and y1 < y2");
        else if (g.x1 < 0.0 || g.y1 < 0.0 || g.x2 > b.image_width || g.y2 > b.image_height)
            out.push_back(os.str() + "box lies outside the image");
        if (g.category < 0 || g.category >= b.num_classes)
            out.push_back(os.str() + "category " + std::to_string(g.category) + " outside [0, num_classes)");
    }
    return out;
}

std::vector<std::string> bundle_violations(const SceneBundle& b) {
    std::vector<std::string> out = scene_violations(b);

    check_feature_list(b.teacher_cls_feats, "teacher_cls", b.levels, out);
    check_feature_list(b.teacher_reg_feats, "teacher_reg", b.levels, out);
    check_feature_list(b.student_cls_feats, "student_cls", b.levels, out);
    check_feature_list(b.student_reg_feats, "student_reg", b.levels, out);
    for (std::size_t l = 0; l < b.levels.size(); ++l) {
        auto channels = [&](const std::vector<FeatureTensor>& v) { return l < v.size() ? v[l].channels() : -1; };
        if (channels(b.teacher_cls_feats) != channels(b.student_cls_feats))
            out.push_back("level[" + std::to_string(l) + "]: teacher/student cls channel counts differ");
        if (channels(b.teacher_reg_feats) != channels(b.student_reg_feats))
            out.push_back("level[" + std::to_string(l) + "]: teacher/student reg channel counts differ");
    }

    const auto& preds = b.teacher_preds;
    if (preds.anchors_per_loc < 1) out.push_back("anchors_per_loc must be positive");
    if (preds.levels.size() != b.levels.size()) {
        out.push_back("teacher_preds: " + std::to_string(preds.levels.size()) + " levels, expected " +
                      std::to_string(b.levels.size()));
    } else {
        for (std::size_t l = 0; l < preds.levels.size(); ++l) {
            const auto& p = preds.levels[l];
            const std::string tag = "teacher_preds[" + std::to_string(l) + "]: ";
            if (p.anchors != preds.anchors_per_loc) out.push_back(tag + "anchor count mismatch");
            if (p.num_classes != b.num_classes) out.push_back(tag + "class count mismatch");
            if (p.height != b.levels[l].height || p.width != b.levels[l].width) out.push_back(tag + "grid does not match level");
            const std::size_t plane = static_cast<std::size_t>(std::max(p.height, 0)) * std::max(p.width, 0);
            const std::size_t anchors = static_cast<std::size_t>(std::max(p.anchors, 0));
            if (p.boxes.size() != anchors * 4 * plane) out.push_back(tag + "box tensor size mismatch");
            else if (!all_finite(p.boxes)) out.push_back(tag + "non-finite box coordinates");
            if (p.class_probs.size() != anchors * static_cast<std::size_t>(std::max(p.num_classes, 0)) * plane) {
                out.push_back(tag + "class_probs tensor size mismatch");
            } else {
                for (float v : p.class_probs) {
                    if (!(v >= 0.0f && v <= 1.0f)) {
                        out.push_back(tag + "class probability outside [0, 1]");
                        break;
                    }
                }
            }
        }
    }
    return out;
}

void validate_bundle(const SceneBundle& bundle) {
    auto v = bundle_violations(bundle);
    if (!v.empty()) throw ValidationError(std::move(v));
}

} // namespace pgd
