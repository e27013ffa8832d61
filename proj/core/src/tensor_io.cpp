#include "pgd/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <sstream>

#include <json.hpp>

namespace pgd {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::size_t kHeaderSize = 12;
// 2^31 floats = 8 GiB; anything larger is treated as a corrupt header.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 31;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t off) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in[off + b]) << (8 * b);
    return v;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path.string() + ": cannot open for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(path.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(path.string() + ": write failed");
}

RawTensor to_raw(const FeatureTensor& t) {
    return RawTensor{{static_cast<std::uint32_t>(t.channels()), static_cast<std::uint32_t>(t.height()),
                      static_cast<std::uint32_t>(t.width())},
                     t.values()};
}

std::string dims_str(const std::vector<std::uint32_t>& dims) {
    std::ostringstream os;
    for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
    return os.str();
}

struct LevelFiles {
    std::string teacher_cls, teacher_reg, student_cls, student_reg, pred_boxes, pred_probs;
};

LevelFiles level_file_names(std::size_t l) {
    const std::string p = "level" + std::to_string(l) + "_";
    return {p + "teacher_cls.bin", p + "teacher_reg.bin", p + "student_cls.bin",
            p + "student_reg.bin", p + "pred_boxes.bin", p + "pred_probs.bin"};
}

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw FormatError("scene.json: missing field " + where + key);
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw FormatError("scene.json: field " + where + key + " has the wrong type");
    }
}

} // namespace

std::size_t RawTensor::element_count() const noexcept {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::vector<std::uint8_t> encode_tensor(const RawTensor& t) {
    if (t.dims.empty() || t.dims.size() > kMaxDims) throw FormatError("ndim: must lie in [1, 8]");
    if (t.values.size() != t.element_count())
        throw FormatError("payload: " + std::to_string(t.values.size()) + " values for dims " + dims_str(t.dims));
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderSize + 4 * t.dims.size() + 4 * t.values.size());
    out.insert(out.end(), kTensorMagic.begin(), kTensorMagic.end());
    out.push_back(kDtypeFloat32);
    out.push_back(static_cast<std::uint8_t>(t.dims.size()));
    out.push_back(0);
    out.push_back(0);
    for (auto d : t.dims) put_u32(out, d);
    for (float v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

RawTensor decode_tensor(std::span<const std::uint8_t> in) {
    if (in.size() < kHeaderSize) throw FormatError("header: truncated (" + std::to_string(in.size()) + " bytes)");
    if (!std::equal(kTensorMagic.begin(), kTensorMagic.end(), in.begin())) throw FormatError("magic: expected PGDTENS1");
    if (in[8] != kDtypeFloat32) throw FormatError("dtype_code: unsupported value " + std::to_string(in[8]));
    const std::size_t ndim = in[9];
    if (ndim == 0 || ndim > kMaxDims) throw FormatError("ndim: unsupported value " + std::to_string(ndim));
    if (in[10] != 0 || in[11] != 0) throw FormatError("reserved: must be zero");
    if (in.size() < kHeaderSize + 4 * ndim) throw FormatError("dims: truncated");

    RawTensor t;
    t.dims.resize(ndim);
    std::uint64_t count = 1;
    for (std::size_t d = 0; d < ndim; ++d) {
        t.dims[d] = get_u32(in, kHeaderSize + 4 * d);
        if (t.dims[d] == 0) throw FormatError("dims: zero extent in dimension " + std::to_string(d));
        count *= t.dims[d];
        if (count > kMaxElements) throw FormatError("dims: element count overflows");
    }
    const std::size_t payload_off = kHeaderSize + 4 * ndim;
    const std::uint64_t expected = 4 * count;
    const std::uint64_t actual = in.size() - payload_off;
    if (actual < expected)
        throw FormatError("payload: truncated, expected " + std::to_string(expected) + " bytes, found " + std::to_string(actual));
    if (actual > expected)
        throw FormatError("payload: " + std::to_string(actual - expected) + " trailing bytes");

    t.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) t.values[i] = std::bit_cast<float>(get_u32(in, payload_off + 4 * i));
    return t;
}

void write_raw_tensor(const fs::path& path, const RawTensor& tensor) { write_file(path, encode_tensor(tensor)); }

RawTensor read_raw_tensor(const fs::path& path) {
    const auto bytes = read_file(path);
    try {
        return decode_tensor(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.filename().string() + ": " + e.what());
    }
}

void write_tensor(const fs::path& path, const FeatureTensor& tensor) { write_raw_tensor(path, to_raw(tensor)); }

FeatureTensor read_tensor(const fs::path& path) {
    auto raw = read_raw_tensor(path);
    if (raw.dims.size() != 3)
        throw FormatError(path.filename().string() + ": ndim: expected 3 for a feature tensor, found " +
                          std::to_string(raw.dims.size()));
    return FeatureTensor(static_cast<int>(raw.dims[0]), static_cast<int>(raw.dims[1]), static_cast<int>(raw.dims[2]),
                         std::move(raw.values));
}

void write_grid(const fs::path& path, const Grid& grid) {
    RawTensor t{{static_cast<std::uint32_t>(grid.height()), static_cast<std::uint32_t>(grid.width())}, {}};
    t.values.reserve(grid.size());
    for (double v : grid.values()) t.values.push_back(static_cast<float>(v));
    write_raw_tensor(path, t);
}

void write_bundle(const fs::path& dir, const SceneBundle& b) {
    validate_bundle(b);
    fs::create_directories(dir);

    json manifest;
    manifest["format"] = "pgd-scene-bundle";
    manifest["version"] = 1;
    manifest["image"] = {{"width", b.image_width}, {"height", b.image_height}};
    manifest["num_classes"] = b.num_classes;
    manifest["anchors_per_loc"] = b.teacher_preds.anchors_per_loc;
    json levels = json::array();
    for (std::size_t l = 0; l < b.levels.size(); ++l) {
        const auto& lv = b.levels[l];
        const auto& pl = b.teacher_preds.levels[l];
        const auto files = level_file_names(l);
        write_tensor(dir / files.teacher_cls, b.teacher_cls_feats[l]);
        write_tensor(dir / files.teacher_reg, b.teacher_reg_feats[l]);
        write_tensor(dir / files.student_cls, b.student_cls_feats[l]);
        write_tensor(dir / files.student_reg, b.student_reg_feats[l]);
        const auto a = static_cast<std::uint32_t>(pl.anchors);
        const auto h = static_cast<std::uint32_t>(lv.height);
        const auto w = static_cast<std::uint32_t>(lv.width);
        write_raw_tensor(dir / files.pred_boxes, RawTensor{{a, 4, h, w}, pl.boxes});
        write_raw_tensor(dir / files.pred_probs,
                         RawTensor{{a, static_cast<std::uint32_t>(pl.num_classes), h, w}, pl.class_probs});
        levels.push_back({{"stride", lv.stride},
                          {"height", lv.height},
                          {"width", lv.width},
                          {"tensors",
                           {{"teacher_cls", files.teacher_cls},
                            {"teacher_reg", files.teacher_reg},
                            {"student_cls", files.student_cls},
                            {"student_reg", files.student_reg},
                            {"pred_boxes", files.pred_boxes},
                            {"pred_probs", files.pred_probs}}}});
    }
    manifest["levels"] = std::move(levels);
    json gt = json::array();
    for (const auto& g : b.gt)
        gt.push_back({{"x1", g.x1}, {"y1", g.y1}, {"x2", g.x2}, {"y2", g.y2}, {"category", g.category}});
    manifest["gt"] = std::move(gt);

    const std::string text = manifest.dump(2) + "\n";
    write_file(dir / kManifestName, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

SceneBundle read_bundle(const fs::path& dir) {
    const fs::path manifest_path = dir / kManifestName;
    if (!fs::exists(manifest_path)) throw ValidationError({"missing manifest " + manifest_path.string()});

    json m;
    {
        std::ifstream in(manifest_path);
        try {
            m = json::parse(in);
        } catch (const json::parse_error& e) {
            throw FormatError("scene.json: " + std::string(e.what()));
        }
    }

    SceneBundle b;
    const json image = m.contains("image") ? m["image"] : json{};
    b.image_width = required<int>(image, "width", "image.");
    b.image_height = required<int>(image, "height", "image.");
    b.num_classes = required<int>(m, "num_classes", "");
    b.teacher_preds.anchors_per_loc = required<int>(m, "anchors_per_loc", "");
    if (!m.contains("levels") || !m["levels"].is_array()) throw FormatError("scene.json: missing field levels");
    if (!m.contains("gt") || !m["gt"].is_array()) throw FormatError("scene.json: missing field gt");

    for (const auto& g : m["gt"]) {
        b.gt.push_back(Box{required<double>(g, "x1", "gt."), required<double>(g, "y1", "gt."),
                           required<double>(g, "x2", "gt."), required<double>(g, "y2", "gt."),
                           required<int>(g, "category", "gt.")});
    }

    std::vector<std::string> violations;
    const auto& levels = m["levels"];
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const auto& jl = levels[l];
        const std::string where = "levels[" + std::to_string(l) + "].";
        LevelGeometry lv{static_cast<int>(l), required<int>(jl, "stride", where), required<int>(jl, "height", where),
                         required<int>(jl, "width", where)};
        b.levels.push_back(lv);
        const json tensors = jl.contains("tensors") ? jl["tensors"] : json{};

        // Loads one tensor, checking its header dims against what the
        // manifest implies. Problems become violations, not exceptions.
        auto load = [&](const char* key, const std::vector<std::uint32_t>& expect) -> std::optional<RawTensor> {
            const std::string name = where + "tensors." + key;
            const auto rel = required<std::string>(tensors, key, where + "tensors.");
            const fs::path rel_path(rel);
            if (rel_path.is_absolute()) {
                violations.push_back(name + ": path must be relative to the bundle directory");
                return std::nullopt;
            }
            const fs::path path = dir / rel_path;
            if (!fs::exists(path)) {
                violations.push_back(name + ": missing tensor file " + rel);
                return std::nullopt;
            }
            try {
                auto raw = read_raw_tensor(path);
                bool ok = raw.dims.size() == expect.size();
                for (std::size_t d = 0; ok && d < expect.size(); ++d)
                    ok = expect[d] == 0 || raw.dims[d] == expect[d];
                if (!ok) {
                    violations.push_back(name + ": " + rel + " header dims " + dims_str(raw.dims) +
                                         " do not match manifest (expected " + dims_str(expect) + ", 0 = any)");
                    return std::nullopt;
                }
                return raw;
            } catch (const FormatError& e) {
                violations.push_back(name + ": " + e.what()); // e names the file
                return std::nullopt;
            }
        };

        const auto h = static_cast<std::uint32_t>(std::max(lv.height, 0));
        const auto w = static_cast<std::uint32_t>(std::max(lv.width, 0));
        auto feature = [&](const char* key, std::vector<FeatureTensor>& dst) {
            if (auto raw = load(key, {0, h, w}))
                dst.emplace_back(static_cast<int>(raw->dims[0]), static_cast<int>(raw->dims[1]),
                                 static_cast<int>(raw->dims[2]), std::move(raw->values));
        };
        feature("teacher_cls", b.teacher_cls_feats);
        feature("teacher_reg", b.teacher_reg_feats);
        feature("student_cls", b.student_cls_feats);
        feature("student_reg", b.student_reg_feats);

        const auto a = static_cast<std::uint32_t>(std::max(b.teacher_preds.anchors_per_loc, 0));
        const auto k = static_cast<std::uint32_t>(std::max(b.num_classes, 0));
        auto boxes = load("pred_boxes", {a, 4, h, w});
        auto probs = load("pred_probs", {a, k, h, w});
        if (boxes && probs) {
            PredictionLevel pl;
            pl.anchors = static_cast<int>(a);
            pl.num_classes = static_cast<int>(k);
            pl.height = lv.height;
            pl.width = lv.width;
            pl.boxes = std::move(boxes->values);
            pl.class_probs = std::move(probs->values);
            b.teacher_preds.levels.push_back(std::move(pl));
        }
    }

    if (!violations.empty()) {
        // Tensors are incomplete, but the manifest-level checks still apply.
        auto scene = scene_violations(b);
        scene.insert(scene.end(), violations.begin(), violations.end());
        throw ValidationError(std::move(scene));
    }
    validate_bundle(b);
    return b;
}

} // namespace pgd
