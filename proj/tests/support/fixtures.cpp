#include "fixtures.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

namespace pgd::testing {

SceneBundle make_bundle(const TinyScene& s) {
    std::mt19937_64 rng(s.seed);
    std::uniform_real_distribution<float> unit(-1.0f, 1.0f);
    SceneBundle b;
    b.image_width = s.width;
    b.image_height = s.height;
    b.num_classes = s.num_classes;
    b.gt = s.gt;
    b.teacher_preds.anchors_per_loc = s.anchors;
    for (std::size_t l = 0; l < s.strides.size(); ++l) {
        const int st = s.strides[l];
        const LevelGeometry lv{static_cast<int>(l), st, (s.height + st - 1) / st, (s.width + st - 1) / st};
        b.levels.push_back(lv);
        auto features = [&] {
            FeatureTensor t(s.channels, lv.height, lv.width);
            for (float& v : t.values()) v = unit(rng);
            return t;
        };
        b.teacher_cls_feats.push_back(features());
        b.teacher_reg_feats.push_back(features());
        auto noisy = [&](FeatureTensor t) {
            for (float& v : t.values()) v += static_cast<float>(s.student_noise) * unit(rng);
            return t;
        };
        b.student_cls_feats.push_back(noisy(b.teacher_cls_feats.back()));
        b.student_reg_feats.push_back(noisy(b.teacher_reg_feats.back()));

        PredictionLevel p;
        p.anchors = s.anchors;
        p.num_classes = s.num_classes;
        p.height = lv.height;
        p.width = lv.width;
        const std::size_t plane = lv.cells();
        p.boxes.resize(static_cast<std::size_t>(s.anchors) * 4 * plane);
        p.class_probs.assign(static_cast<std::size_t>(s.anchors) * s.num_classes * plane,
                             static_cast<float>(s.background_prob));
        b.teacher_preds.levels.push_back(std::move(p));
        for (int a = 0; a < s.anchors; ++a) {
            for (int i = 0; i < lv.height; ++i) {
                for (int j = 0; j < lv.width; ++j) {
                    const Point c = cell_center(lv, i, j);
                    const double h = 0.5 * st;
                    std::vector<float> probs(static_cast<std::size_t>(s.num_classes), static_cast<float>(s.background_prob));
                    set_prediction(b, static_cast<int>(l), a, i, j, {c.x - h, c.y - h, c.x + h, c.y + h, 0}, probs);
                }
            }
        }
    }
    return b;
}

void set_prediction(SceneBundle& b, int level, int anchor, int row, int col, const Box& box,
                    const std::vector<float>& probs) {
    auto& p = b.teacher_preds.levels.at(static_cast<std::size_t>(level));
    if (probs.size() != static_cast<std::size_t>(p.num_classes)) throw std::invalid_argument("set_prediction: probs");
    const std::size_t plane = static_cast<std::size_t>(p.height) * p.width;
    const std::size_t cell = static_cast<std::size_t>(row) * p.width + col;
    const double coords[4] = {box.x1, box.y1, box.x2, box.y2};
    for (int c = 0; c < 4; ++c)
        p.boxes[(static_cast<std::size_t>(anchor) * 4 + c) * plane + cell] = static_cast<float>(coords[c]);
    for (int k = 0; k < p.num_classes; ++k)
        p.class_probs[(static_cast<std::size_t>(anchor) * p.num_classes + k) * plane + cell] = probs[static_cast<std::size_t>(k)];
}

SynthSpec random_spec(std::mt19937_64& rng) {
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    auto real = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    SynthSpec s;
    s.seed = rng();
    s.image_width = pick(48, 128);
    s.image_height = pick(48, 128);
    const int first = 1 << pick(2, 3); // 4 or 8
    s.strides = {first};
    const int extra = pick(0, 2);
    for (int l = 0; l < extra; ++l) s.strides.push_back(s.strides.back() * 2);
    s.num_objects = pick(0, 4);
    s.num_classes = pick(1, 3);
    s.channels = pick(1, 4);
    s.anchors_per_loc = pick(1, 2);
    s.quality_concentration = real(0.5, 10.0);
    s.center_offset_fraction = real(0.0, 0.5);
    s.student_noise = real(0.0, 0.5);
    const int small_side = std::min(s.image_width, s.image_height);
    s.min_box_size = std::max<double>(first, small_side / 6.0);
    s.max_box_size = std::max(s.min_box_size, small_side * 0.6);
    return s;
}

SynthSpec small_spec(std::uint64_t seed) {
    SynthSpec s;
    s.seed = seed;
    s.image_width = 64;
    s.image_height = 64;
    s.strides = {8, 16};
    s.num_objects = 1 + static_cast<int>(seed % 3);
    s.num_classes = 2;
    s.channels = 1 + static_cast<int>(seed % 4);
    s.anchors_per_loc = 1 + static_cast<int>(seed % 2);
    s.quality_concentration = 2.0;
    s.center_offset_fraction = 0.25;
    s.student_noise = 0.3;
    s.min_box_size = 16;
    s.max_box_size = 40;
    return s;
}

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("pgd-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

double rel_diff(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

} // namespace pgd::testing
