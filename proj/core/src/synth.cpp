#include "pgd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

namespace pgd {

void SynthSpec::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("synth spec: " + what); };
    if (image_width < 1 || image_height < 1) fail("image size must be positive");
    if (strides.empty()) fail("strides must not be empty");
    for (std::size_t i = 0; i < strides.size(); ++i) {
        if (strides[i] < 1) fail("strides must be positive");
        if (i > 0 && strides[i] <= strides[i - 1]) fail("strides must strictly increase");
    }
    if (num_objects < 0) fail("num_objects must be nonnegative");
    if (num_classes < 1) fail("num_classes must be positive");
    if (channels < 1) fail("channels must be positive");
    if (anchors_per_loc < 1) fail("anchors_per_loc must be positive");
    if (!(quality_concentration > 0.0) || !std::isfinite(quality_concentration))
        fail("quality_concentration must be positive");
    if (!(center_offset_fraction >= 0.0 && center_offset_fraction <= 0.5))
        fail("center_offset_fraction must lie in [0, 0.5]");
    if (!(student_noise >= 0.0) || !std::isfinite(student_noise)) fail("student_noise must be nonnegative");
    if (!(min_box_size >= strides.front())) fail("min_box_size must be at least the finest stride");
    if (!(max_box_size >= min_box_size)) fail("max_box_size must be at least min_box_size");
}

SynthSpec parse_synth_spec(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("synth spec: ") + e.what());
    }
    if (!doc.is_object()) throw FormatError("synth spec: top level must be an object");
    SynthSpec s;
    try {
        for (const auto& [key, v] : doc.items()) {
            auto integer = [&]() {
                if (!v.is_number_integer()) throw FormatError("synth spec: '" + key + "' must be an integer");
                return v.get<int>();
            };
            auto real = [&]() {
                if (!v.is_number()) throw FormatError("synth spec: '" + key + "' must be a number");
                return v.get<double>();
            };
            if (key == "seed") {
                if (!v.is_number_unsigned()) throw FormatError("synth spec: 'seed' must be a nonnegative integer");
                s.seed = v.get<std::uint64_t>();
            } else if (key == "image_width") s.image_width = integer();
            else if (key == "image_height") s.image_height = integer();
            else if (key == "strides") {
                if (!v.is_array()) throw FormatError("synth spec: 'strides' must be an array");
                s.strides.clear();
                for (const auto& e : v) {
                    if (!e.is_number_integer()) throw FormatError("synth spec: strides must be integers");
                    s.strides.push_back(e.get<int>());
                }
            } else if (key == "num_objects") s.num_objects = integer();
            else if (key == "num_classes") s.num_classes = integer();
            else if (key == "channels") s.channels = integer();
            else if (key == "anchors_per_loc") s.anchors_per_loc = integer();
            else if (key == "quality_concentration") s.quality_concentration = real();
            else if (key == "center_offset_fraction") s.center_offset_fraction = real();
            else if (key == "student_noise") s.student_noise = real();
            else if (key == "min_box_size") s.min_box_size = real();
            else if (key == "max_box_size") s.max_box_size = real();
            else throw FormatError("synth spec: unknown key '" + key + "'");
        }
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(e.what());
    }
    return s;
}

SynthSpec read_synth_spec(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path.string() + ": cannot open synth spec");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_synth_spec(ss.str());
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

bool contains(const Box& outer, const Box& inner) {
    return outer.x1 <= inner.x1 && outer.y1 <= inner.y1 && inner.x2 <= outer.x2 && inner.y2 <= outer.y2;
}

std::vector<Box> place_objects(const SynthSpec& spec, Rng& rng) {
    constexpr int kAttempts = 1000;
    const double max_w = std::min<double>(spec.max_box_size, spec.image_width);
    const double max_h = std::min<double>(spec.max_box_size, spec.image_height);
    if (spec.num_objects > 0 && (max_w < spec.min_box_size || max_h < spec.min_box_size))
        throw GenerationError("synth: min_box_size does not fit in the image");
    std::vector<Box> boxes;
    for (int o = 0; o < spec.num_objects; ++o) {
        bool placed = false;
        for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
            const double w = std::round(uniform(rng, spec.min_box_size, max_w));
            const double h = std::round(uniform(rng, spec.min_box_size, max_h));
            const double x = std::round(uniform(rng, 0.0, spec.image_width - w));
            const double y = std::round(uniform(rng, 0.0, spec.image_height - h));
            const int category = std::uniform_int_distribution<int>(0, spec.num_classes - 1)(rng);
            Box b{x, y, x + w, y + h, category};
            const bool nested = std::any_of(boxes.begin(), boxes.end(),
                                            [&](const Box& o2) { return contains(o2, b) || contains(b, o2); });
            if (!nested) {
                boxes.push_back(b);
                placed = true;
            }
        }
        if (!placed)
            throw GenerationError("synth: could not place object " + std::to_string(o) + " without nesting after " +
                                  std::to_string(kAttempts) + " attempts");
    }
    return boxes;
}

// Level whose stride suits the box size, moved finer until some cell center
// falls inside the box.
int object_level(const Box& b, const std::vector<LevelGeometry>& levels) {
    const double side = std::sqrt(b.area());
    const double ratio = side / (8.0 * levels.front().stride);
    int l = ratio > 0.0 ? static_cast<int>(std::lround(std::log2(ratio))) : 0;
    l = std::clamp(l, 0, static_cast<int>(levels.size()) - 1);
    for (; l > 0; --l) {
        const auto& lv = levels[static_cast<std::size_t>(l)];
        const double s = lv.stride;
        const bool any = std::ceil(b.x1 / s - 0.5) <= std::floor(b.x2 / s - 0.5) &&
                         std::ceil(b.y1 / s - 0.5) <= std::floor(b.y2 / s - 0.5);
        if (any) break;
    }
    return l;
}

struct Peak {
    Point at;
    int level = 0;
};

// Nearest in-box cell center to the displaced box center, skipping cells
// already used as another object's peak.
Peak object_peak(const Box& b, const std::vector<LevelGeometry>& levels, double offset, const std::vector<Peak>& taken,
                 Rng& rng) {
    const int l = object_level(b, levels);
    const auto& lv = levels[static_cast<std::size_t>(l)];
    const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const Point c = b.center();
    const Point target{c.x + offset * b.width() * std::cos(theta), c.y + offset * b.height() * std::sin(theta)};
    Peak best{c, l};
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < lv.height; ++i) {
        for (int j = 0; j < lv.width; ++j) {
            const Point p = cell_center(lv, i, j);
            if (!point_in_box(p, b)) continue;
            const bool used = std::any_of(taken.begin(), taken.end(),
                                          [&](const Peak& o) { return o.level == l && o.at == p; });
            if (used) continue;
            const double d = std::hypot(p.x - target.x, p.y - target.y);
            if (d < best_d) {
                best_d = d;
                best.at = p;
            }
        }
    }
    return best;
}

// Peak profile of object o at a cell: 1 at its peak, falling off with the
// distance measured in cells of the peak's level.
double profile(const Peak& peak, const std::vector<LevelGeometry>& levels, std::size_t l, Point p, double conc) {
    const double s = levels[static_cast<std::size_t>(peak.level)].stride;
    const double dx = (p.x - peak.at.x) / s;
    const double dy = (p.y - peak.at.y) / s;
    const double amp = static_cast<int>(l) == peak.level ? 1.0 : kOffLevelAmplitude;
    return amp * std::exp(-0.5 * conc * (dx * dx + dy * dy));
}

Box scaled_about_center(const Box& b, double scale) {
    const Point c = b.center();
    const double hw = 0.5 * scale * b.width();
    const double hh = 0.5 * scale * b.height();
    return {c.x - hw, c.y - hh, c.x + hw, c.y + hh, b.category};
}

} // namespace

SceneBundle generate_bundle(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);

    SceneBundle b;
    b.image_width = spec.image_width;
    b.image_height = spec.image_height;
    b.num_classes = spec.num_classes;
    for (std::size_t l = 0; l < spec.strides.size(); ++l) {
        const int s = spec.strides[l];
        b.levels.push_back({static_cast<int>(l), s, (spec.image_height + s - 1) / s, (spec.image_width + s - 1) / s});
    }
    b.gt = place_objects(spec, rng);

    std::vector<Peak> peaks;
    for (const auto& g : b.gt) peaks.push_back(object_peak(g, b.levels, spec.center_offset_fraction, peaks, rng));

    const int A = spec.anchors_per_loc;
    const int K = spec.num_classes;
    b.teacher_preds.anchors_per_loc = A;
    // Per level, the strongest profile value at each cell (0 off-object).
    std::vector<std::vector<double>> strength(b.levels.size());

    for (std::size_t l = 0; l < b.levels.size(); ++l) {
        const auto& lv = b.levels[l];
        const std::size_t plane = lv.cells();
        PredictionLevel pl;
        pl.anchors = A;
        pl.num_classes = K;
        pl.height = lv.height;
        pl.width = lv.width;
        pl.boxes.assign(static_cast<std::size_t>(A) * 4 * plane, 0.0f);
        pl.class_probs.assign(static_cast<std::size_t>(A) * K * plane, 0.0f);
        strength[l].assign(plane, 0.0);
        auto box_at = [&](int a, int c, int i, int j) -> float& {
            return pl.boxes[((static_cast<std::size_t>(a) * 4 + c) * lv.height + i) * lv.width + j];
        };
        auto prob_at = [&](int a, int c, int i, int j) -> float& {
            return pl.class_probs[((static_cast<std::size_t>(a) * K + c) * lv.height + i) * lv.width + j];
        };

        for (int i = 0; i < lv.height; ++i) {
            for (int j = 0; j < lv.width; ++j) {
                const Point p = cell_center(lv, i, j);
                int owner = -1;
                double g = -1.0;
                for (std::size_t o = 0; o < b.gt.size(); ++o) {
                    if (!point_in_box(p, b.gt[o])) continue;
                    const double v = profile(peaks[o], b.levels, l, p, spec.quality_concentration);
                    if (v > g) {
                        g = v;
                        owner = static_cast<int>(o);
                    }
                }
                for (int a = 0; a < A; ++a) {
                    // Extra anchors repeat the first one at reduced strength.
                    const double damp = a == 0 ? 1.0 : 0.5;
                    Box pred;
                    if (owner >= 0) {
                        const Box& gt = b.gt[static_cast<std::size_t>(owner)];
                        const double iou_target = kFloorIoU + (kPeakIoU - kFloorIoU) * damp * g;
                        const double prob = kFloorProb + (kPeakProb - kFloorProb) * damp * g;
                        pred = scaled_about_center(gt, std::sqrt(iou_target));
                        for (int c = 0; c < K; ++c)
                            prob_at(a, c, i, j) = static_cast<float>(c == gt.category ? prob : 0.5 * kFloorProb);
                    } else {
                        const double side = lv.stride * uniform(rng, 0.5, 2.0);
                        pred = {p.x - 0.5 * side, p.y - 0.5 * side, p.x + 0.5 * side, p.y + 0.5 * side, 0};
                        for (int c = 0; c < K; ++c) prob_at(a, c, i, j) = static_cast<float>(uniform(rng, 0.0, 0.05));
                    }
                    box_at(a, 0, i, j) = static_cast<float>(pred.x1);
                    box_at(a, 1, i, j) = static_cast<float>(pred.y1);
                    box_at(a, 2, i, j) = static_cast<float>(pred.x2);
                    box_at(a, 3, i, j) = static_cast<float>(pred.y2);
                }
                if (owner >= 0) strength[l][static_cast<std::size_t>(i) * lv.width + j] = g;
            }
        }
        b.teacher_preds.levels.push_back(std::move(pl));
    }

    // Teacher features: a smooth per-channel wave, a term tracking the peak
    // profile, and a little noise.
    std::normal_distribution<double> jitter(0.0, 0.05);
    auto teacher_features = [&](std::vector<FeatureTensor>& out) {
        const int C = spec.channels;
        std::vector<double> fx(C), fy(C), phase(C), weight(C);
        for (int k = 0; k < C; ++k) {
            fx[k] = uniform(rng, 0.5, 2.0);
            fy[k] = uniform(rng, 0.5, 2.0);
            phase[k] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
            weight[k] = uniform(rng, 0.5, 1.5);
        }
        for (std::size_t l = 0; l < b.levels.size(); ++l) {
            const auto& lv = b.levels[l];
            FeatureTensor t(C, lv.height, lv.width);
            for (int k = 0; k < C; ++k) {
                for (int i = 0; i < lv.height; ++i) {
                    for (int j = 0; j < lv.width; ++j) {
                        const Point p = cell_center(lv, i, j);
                        const double wave = std::sin(2.0 * std::numbers::pi *
                                                         (fx[k] * p.x / spec.image_width + fy[k] * p.y / spec.image_height) +
                                                     phase[k]);
                        const double peak = strength[l][static_cast<std::size_t>(i) * lv.width + j];
                        t.at(k, i, j) = static_cast<float>(wave + 2.0 * weight[k] * peak + jitter(rng));
                    }
                }
            }
            out.push_back(std::move(t));
        }
    };
    teacher_features(b.teacher_cls_feats);
    teacher_features(b.teacher_reg_feats);

    auto student_features = [&](const std::vector<FeatureTensor>& teacher) {
        std::vector<FeatureTensor> out = teacher;
        if (spec.student_noise == 0.0) return out;
        std::normal_distribution<double> noise(0.0, spec.student_noise);
        for (auto& t : out)
            for (float& v : t.values()) v = static_cast<float>(v + noise(rng));
        return out;
    };
    b.student_cls_feats = student_features(b.teacher_cls_feats);
    b.student_reg_feats = student_features(b.teacher_reg_feats);

    validate_bundle(b);
    return b;
}

} // namespace pgd
