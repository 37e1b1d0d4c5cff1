#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "rtfm/dataset.hpp"
#include "rtfm/model.hpp"
#include "rtfm/tensor.hpp"

namespace rtfm::io {

// Feature file, little-endian:
//   "RTFM" | u8 version=1 | u32 T | u32 D | T*D float32, row-major
inline constexpr std::uint8_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderSize = 4 + 1 + 4 + 4;

std::vector<std::uint8_t> encode_features(const Tensor& features);
Tensor decode_features(const std::vector<std::uint8_t>& bytes);

void write_features(const std::filesystem::path& path, const Tensor& features);
Tensor read_features(const std::filesystem::path& path);
/// Reads only the header; returns {T, D}.
std::pair<std::size_t, std::size_t> read_feature_header(const std::filesystem::path& path);

// Manifest: JSON lines. The first line is a header object
//   {"format":"rtfm-manifest","version":1,"T":..,"D":..}
// followed by one object per video
//   {"id":..,"path":..,"label":0|1,"split":"train"|"test","snippet_labels":"0,0,1,..."}
// where snippet_labels is optional.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
/// Parses and validates; when `probe_files` is set every feature header is
/// checked against the manifest's T and D.
DatasetManifest read_manifest(const std::filesystem::path& path, bool probe_files = true);

// Checkpoint container, little-endian:
//   "RTFMCKPT" | u8 version=1 | u32 count |
//   count * ( u32 name_len | name | u32 rank | rank * u32 extent | f64 values )
inline constexpr std::uint8_t kCheckpointVersion = 1;

using NamedArrays = std::vector<std::pair<std::string, Tensor>>;

void write_arrays(const std::filesystem::path& path, const NamedArrays& arrays);
NamedArrays read_arrays(const std::filesystem::path& path);

/// Parameters plus "config.mtn" / "config.classifier" arrays that make the
/// file self-describing.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace rtfm::io
