#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "pgd/synth.hpp"
#include "pgd/types.hpp"

namespace pgd::testing {

/// Hand-described scene. Features are uniform in [-1, 1] from `seed`;
/// the student is the teacher plus uniform noise of `student_noise`.
/// Every prediction starts as a stride-sized box at the cell center with
/// probability `background_prob` for every class.
struct TinyScene {
    int width = 32;
    int height = 32;
    std::vector<int> strides{8};
    int channels = 2;
    int num_classes = 1;
    int anchors = 1;
    std::vector<Box> gt;
    std::uint64_t seed = 1;
    double student_noise = 0.25;
    double background_prob = 0.1;
};

SceneBundle make_bundle(const TinyScene& scene);

/// Overwrites one anchor's prediction. probs has num_classes entries.
void set_prediction(SceneBundle& b, int level, int anchor, int row, int col, const Box& box,
                    const std::vector<float>& probs);

/// Random but always-feasible synth spec for property tests.
SynthSpec random_spec(std::mt19937_64& rng);

/// Small spec for loss and gradient fixtures: C <= 4, grids <= 8x8.
SynthSpec small_spec(std::uint64_t seed);

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Relative difference |a - b| / max(|a|, |b|, floor).
double rel_diff(double a, double b, double floor = 1e-300);

} // namespace pgd::testing
