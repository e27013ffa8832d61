#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "pgd/grid.hpp"
#include "pgd/types.hpp"

namespace pgd {

// TensorFile layout (all integers little-endian):
//   0   8 bytes  magic "PGDTENS1"
//   8   1 byte   dtype code (1 = float32 LE)
//   9   1 byte   ndim
//   10  2 bytes  reserved, zero
//   12  ndim x u32 dims
//   ..  product(dims) x float32 payload, row-major
inline constexpr std::string_view kTensorMagic = "PGDTENS1";
inline constexpr std::uint8_t kDtypeFloat32 = 1;
inline constexpr std::size_t kMaxDims = 8;
inline constexpr std::string_view kManifestName = "scene.json";

/// Arbitrary-rank float32 tensor as stored on disk.
struct RawTensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> values;

    std::size_t element_count() const noexcept;

    friend bool operator==(const RawTensor&, const RawTensor&) = default;
};

std::vector<std::uint8_t> encode_tensor(const RawTensor& tensor);
RawTensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_raw_tensor(const std::filesystem::path& path, const RawTensor& tensor);
RawTensor read_raw_tensor(const std::filesystem::path& path);

/// C x H x W feature tensor (ndim = 3).
void write_tensor(const std::filesystem::path& path, const FeatureTensor& tensor);
FeatureTensor read_tensor(const std::filesystem::path& path);

/// H x W plane (ndim = 2), narrowed to float32.
void write_grid(const std::filesystem::path& path, const Grid& grid);

/// Reads `dir/scene.json` and every tensor it names. Every violation found
/// (missing files, header/manifest mismatches, bundle invariants) is
/// reported together in one ValidationError.
SceneBundle read_bundle(const std::filesystem::path& dir);

/// Writes the manifest and one TensorFile per tensor. Validates first.
void write_bundle(const std::filesystem::path& dir, const SceneBundle& bundle);

} // namespace pgd
