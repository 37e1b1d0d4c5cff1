#include "rtfm/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "rtfm/errors.hpp"
#include "rtfm/io.hpp"

namespace rtfm {

namespace fs = std::filesystem;

std::vector<const Video*> select_split(const std::vector<Video>& videos, const std::string& split) {
  std::vector<const Video*> out;
  for (const auto& v : videos) {
    if (v.split == split) out.push_back(&v);
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (T < 1 || D < 1) throw ValidationError("synthetic: T and D must be positive");
  if (mu < 1 || mu > T) {
    throw ValidationError("synthetic: mu must satisfy 1 <= mu <= T (mu=" + std::to_string(mu) +
                          ", T=" + std::to_string(T) + ")");
  }
  if (perturbation < 0.0) throw ValidationError("synthetic: perturbation must be >= 0");
  if (base_stddev < 0.0 || noise_stddev < 0.0) {
    throw ValidationError("synthetic: standard deviations must be >= 0");
  }
  if (!direction.empty() && direction.size() != D) {
    throw ValidationError("synthetic: direction has " + std::to_string(direction.size()) +
                          " components, D=" + std::to_string(D));
  }
}

namespace {

std::string video_id(const char* split, const char* cls, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%s_%04zu", split, cls, i);
  return buf;
}

}  // namespace

SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SyntheticDataset out;
  out.direction = spec.direction;
  if (out.direction.empty()) {
    out.direction.resize(spec.D);
    for (auto& v : out.direction) v = gauss(rng);
  }
  double norm = 0.0;
  for (double v : out.direction) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw ValidationError("synthetic: direction must be non-zero");
  for (auto& v : out.direction) v /= norm;

  auto make_video = [&](const char* split, int label, std::size_t index) {
    Video v;
    v.id = video_id(split, label ? "abnormal" : "normal", index);
    v.label = label;
    v.split = split;
    v.features = Tensor(Shape{spec.T, spec.D});
    std::vector<double> offset(spec.D);
    for (auto& o : offset) o = spec.noise_stddev * gauss(rng);
    for (std::size_t t = 0; t < spec.T; ++t)
      for (std::size_t d = 0; d < spec.D; ++d)
        v.features(t, d) = spec.base_mean + spec.base_stddev * gauss(rng) + offset[d];
    v.snippet_labels.assign(spec.T, 0);
    if (label == 1) {
      std::uniform_int_distribution<std::size_t> start_dist(0, spec.T - spec.mu);
      const std::size_t start = start_dist(rng);
      for (std::size_t t = start; t < start + spec.mu; ++t) {
        v.snippet_labels[t] = 1;
        for (std::size_t d = 0; d < spec.D; ++d)
          v.features(t, d) += spec.perturbation * out.direction[d];
      }
    }
    // Store exactly what the float32 file format can hold.
    for (auto& x : v.features.values()) x = static_cast<double>(static_cast<float>(x));
    return v;
  };

  for (std::size_t i = 0; i < spec.n_normal; ++i) out.videos.push_back(make_video(kTrainSplit, 0, i));
  for (std::size_t i = 0; i < spec.n_abnormal; ++i) out.videos.push_back(make_video(kTrainSplit, 1, i));
  for (std::size_t i = 0; i < spec.n_test_normal; ++i) out.videos.push_back(make_video(kTestSplit, 0, i));
  for (std::size_t i = 0; i < spec.n_test_abnormal; ++i) out.videos.push_back(make_video(kTestSplit, 1, i));
  return out;
}

DatasetManifest write_dataset(const std::vector<Video>& videos, const fs::path& dir) {
  DatasetManifest m;
  if (!videos.empty()) {
    m.T = videos.front().features.rows();
    m.D = videos.front().features.cols();
  }
  fs::create_directories(dir / "features");
  for (const auto& v : videos) {
    if (v.features.rows() != m.T || v.features.cols() != m.D) {
      throw ValidationError("video " + v.id + " does not share the dataset's T and D");
    }
    ManifestEntry e;
    e.id = v.id;
    e.path = "features/" + v.id + ".rtfm";
    e.label = v.label;
    e.split = v.split;
    if (v.split == kTestSplit) e.snippet_labels = v.snippet_labels;
    io::write_features(dir / e.path, v.features);
    m.entries.push_back(std::move(e));
  }
  io::write_manifest(dir / "manifest.jsonl", m);
  return m;
}

std::vector<Video> load_videos(const DatasetManifest& manifest, const fs::path& manifest_path) {
  const fs::path base = manifest_path.parent_path();
  std::vector<Video> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    Video v;
    v.id = e.id;
    v.label = e.label;
    v.split = e.split;
    v.features = io::read_features(base / e.path);
    if (v.features.rows() != manifest.T || v.features.cols() != manifest.D) {
      throw ValidationError("video " + e.id + " has features " +
                            shape_string(v.features.shape()) + ", manifest declares [" +
                            std::to_string(manifest.T) + "x" + std::to_string(manifest.D) + "]");
    }
    if (e.snippet_labels) v.snippet_labels = *e.snippet_labels;
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace rtfm
