#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "pgd/types.hpp"

namespace pgd {

/// Raised when a spec cannot be realized (objects do not fit).
class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SynthSpec {
    std::uint64_t seed = 0;
    int image_width = 256;
    int image_height = 256;
    std::vector<int> strides{8, 16, 32};
    int num_objects = 3;
    int num_classes = 3;
    int channels = 8;
    int anchors_per_loc = 1;
    /// Peak sharpness: the profile is exp(-c * d^2 / 2), d in cells of the
    /// object's level.
    double quality_concentration = 4.0;
    /// Peak displacement from the box center, as a fraction of the box size.
    double center_offset_fraction = 0.2;
    double student_noise = 0.1;
    /// Box side range in pixels.
    double min_box_size = 64.0;
    double max_box_size = 160.0;

    /// Throws std::invalid_argument naming the bad field.
    void validate() const;

    friend bool operator==(const SynthSpec&, const SynthSpec&) = default;
};

/// Keys are the field names above; omitted keys keep their defaults,
/// unknown keys are rejected with FormatError.
SynthSpec parse_synth_spec(std::string_view text);
SynthSpec read_synth_spec(const std::filesystem::path& path);

/// Peak height of the profile on levels other than the object's own.
inline constexpr double kOffLevelAmplitude = 0.4;
/// Class probability and IoU at the very top of a peak.
inline constexpr double kPeakProb = 0.95;
inline constexpr double kPeakIoU = 0.97;
/// Class probability and IoU far from every peak, inside a box.
inline constexpr double kFloorProb = 1e-4;
inline constexpr double kFloorIoU = 1e-4;

/// Deterministic for a given spec. Throws GenerationError when the objects
/// cannot be placed without one box containing another.
SceneBundle generate_bundle(const SynthSpec& spec);

} // namespace pgd
