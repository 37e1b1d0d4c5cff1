#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rtfm/tensor.hpp"

namespace rtfm {

inline constexpr const char* kTrainSplit = "train";
inline constexpr const char* kTestSplit = "test";

/// A video's snippet features with its weak label and, for evaluation
/// videos, per-snippet ground truth.
struct Video {
  std::string id;
  Tensor features;  // [T x D]
  int label = 0;
  std::string split = kTrainSplit;
  std::vector<int> snippet_labels;  // empty when unknown
};

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the manifest's directory
  int label = 0;
  std::string split = kTrainSplit;
  std::optional<std::vector<int>> snippet_labels;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  int version = 1;
  std::size_t T = 0;
  std::size_t D = 0;
  std::vector<ManifestEntry> entries;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Subset of videos with the given split tag.
std::vector<const Video*> select_split(const std::vector<Video>& videos, const std::string& split);

/// Controls for the synthetic generator. Normal snippets are
///   x = base_mean + base_stddev * z + o_v,   o_v ~ N(0, noise_stddev^2 I) per video,
/// and abnormal videos add `perturbation * direction` to a contiguous window
/// of `mu` snippets.
struct SyntheticSpec {
  std::size_t n_normal = 100;
  std::size_t n_abnormal = 100;
  std::size_t n_test_normal = 30;
  std::size_t n_test_abnormal = 30;
  std::size_t T = 32;
  std::size_t D = 64;
  std::size_t mu = 3;
  double base_mean = 0.0;
  double base_stddev = 0.25;
  double noise_stddev = 0.125;
  double perturbation = 2.0;
  /// Unit direction of the abnormal shift; empty draws one from the seed.
  std::vector<double> direction;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticDataset {
  std::vector<Video> videos;
  std::vector<double> direction;  // the unit direction actually used
};

SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec);

/// Writes features/<id>.rtfm files plus manifest.jsonl under `dir`.
DatasetManifest write_dataset(const std::vector<Video>& videos, const std::filesystem::path& dir);

/// Loads all feature files referenced by a manifest.
std::vector<Video> load_videos(const DatasetManifest& manifest,
                               const std::filesystem::path& manifest_path);

}  // namespace rtfm
