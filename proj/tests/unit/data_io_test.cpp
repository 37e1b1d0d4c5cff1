#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "rtfm/dataset.hpp"
#include "rtfm/errors.hpp"
#include "rtfm/io.hpp"
#include "rtfm/model.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace rtfm {
namespace {

using testing::random_tensor;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() /
           (std::string("rtfm_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Byte-by-byte little-endian writer following the published layout.
std::vector<std::uint8_t> manual_feature_bytes(std::uint32_t T, std::uint32_t D,
                                               const std::vector<float>& values) {
  std::vector<std::uint8_t> b{'R', 'T', 'F', 'M', 1};
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  u32(T);
  u32(D);
  for (float f : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    u32(bits);
  }
  return b;
}

Tensor float_exact(Tensor t) {
  for (auto& v : t.values()) v = static_cast<double>(static_cast<float>(v));
  return t;
}

int expect_format_error(const std::vector<std::uint8_t>& bytes) {
  try {
    io::decode_features(bytes);
  } catch (const FormatError& e) {
    return static_cast<int>(e.offset());
  }
  ADD_FAILURE() << "no FormatError";
  return -1;
}

// ---- feature files

TEST_F(TempDir, FeatureRoundTripIsBitExact) {
  const Tensor t = float_exact(random_tensor({32, 64}, 1, -100, 100));
  io::write_features(dir_ / "a.rtfm", t);
  EXPECT_EQ(io::read_features(dir_ / "a.rtfm"), t);
  EXPECT_EQ(fs::file_size(dir_ / "a.rtfm"), io::kFeatureHeaderSize + 32 * 64 * 4);
  EXPECT_EQ(io::read_feature_header(dir_ / "a.rtfm"), (std::pair<std::size_t, std::size_t>{32, 64}));
}

TEST(FeatureFormat, MatchesManualByteLayout) {
  const std::vector<float> vals{1.5f, -2.0f, 0.1f, 1e-30f, -0.0f, 3.25f};
  Tensor t({2, 3});
  for (std::size_t i = 0; i < 6; ++i) t[i] = vals[i];
  EXPECT_EQ(io::encode_features(t), manual_feature_bytes(2, 3, vals));
  EXPECT_EQ(io::decode_features(manual_feature_bytes(2, 3, vals)), t);
}

TEST(FeatureFormat, ReadsIndependentPythonFixture) {
  const Tensor t = io::read_features(fs::path(RTFM_TEST_DATA_DIR) / "fixture_3x2.rtfm");
  ASSERT_EQ(t.shape(), (Shape{3, 2}));
  const std::vector<float> expect{0.5f, -1.25f, 3.0f, 1e-3f, -0.0f, 65504.0f};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(t[i], static_cast<double>(expect[i]));
  EXPECT_TRUE(std::signbit(t[4]));
}

TEST(FeatureFormat, ErrorsCarryByteOffsets) {
  const auto good = manual_feature_bytes(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(expect_format_error({}), 0);

  auto bad_magic = good;
  bad_magic[2] = 'X';
  EXPECT_EQ(expect_format_error(bad_magic), 0);

  auto bad_version = good;
  bad_version[4] = 2;
  EXPECT_EQ(expect_format_error(bad_version), 4);

  auto zero = manual_feature_bytes(0, 2, {});
  EXPECT_EQ(expect_format_error(zero), 5);

  auto truncated = good;
  truncated.resize(good.size() - 3);
  EXPECT_GE(expect_format_error(truncated), 13);

  auto header_only = good;
  header_only.resize(7);
  EXPECT_EQ(expect_format_error(header_only), 5);

  auto trailing = good;
  trailing.push_back(0);
  EXPECT_EQ(expect_format_error(trailing), static_cast<int>(good.size()));

  auto nan = manual_feature_bytes(1, 1, {std::nanf("")});
  EXPECT_GE(expect_format_error(nan), 13);
}

TEST(FeatureFormat, HugeHeaderDoesNotAllocate) {
  auto b = manual_feature_bytes(0xFFFFFFFFu, 0xFFFFFFFFu, {});
  EXPECT_GE(expect_format_error(b), 0);
}

TEST_F(TempDir, EmptyFileIsFormatError) {
  dump(dir_ / "empty.rtfm", {});
  EXPECT_THROW(io::read_features(dir_ / "empty.rtfm"), FormatError);
  EXPECT_THROW(io::read_features(dir_ / "missing.rtfm"), ValidationError);
}

TEST(FeatureFormat, RejectsNonFiniteOnWrite) {
  Tensor t({1, 2}, 0.0);
  t[1] = INFINITY;
  EXPECT_THROW(io::encode_features(t), NumericError);
}

// ---- synthetic generator

TEST(Synthetic, MuAboveTRejectedWithNamedConstraint) {
  SyntheticSpec s;
  s.mu = 40;
  try {
    generate_synthetic_dataset(s);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("mu"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("T"), std::string::npos);
  }
}

TEST(Synthetic, SnippetLabelsConsistentWithVideoLabel) {
  SyntheticSpec s;
  s.n_normal = s.n_abnormal = 10;
  s.n_test_normal = s.n_test_abnormal = 5;
  s.T = 12;
  s.D = 8;
  s.mu = 4;
  const auto ds = generate_synthetic_dataset(s);
  ASSERT_EQ(ds.videos.size(), 30u);
  for (const auto& v : ds.videos) {
    int pos = 0, first = -1, last = -1;
    for (std::size_t t = 0; t < v.snippet_labels.size(); ++t) {
      if (v.snippet_labels[t]) {
        ++pos;
        if (first < 0) first = static_cast<int>(t);
        last = static_cast<int>(t);
      }
    }
    if (v.label == 1) {
      EXPECT_EQ(pos, 4);
      EXPECT_EQ(last - first + 1, 4);  // contiguous window
    } else {
      EXPECT_EQ(pos, 0);
    }
  }
}

TEST_F(TempDir, OneAbnormalSnippetInManifest) {
  SyntheticSpec s;
  s.n_normal = s.n_abnormal = 0;
  s.n_test_normal = s.n_test_abnormal = 1;
  s.T = 4;
  s.D = 4;
  s.mu = 1;
  write_dataset(generate_synthetic_dataset(s).videos, dir_);
  const auto m = io::read_manifest(dir_ / "manifest.jsonl");
  int flagged = 0;
  for (const auto& e : m.entries) {
    ASSERT_TRUE(e.snippet_labels.has_value());
    for (int l : *e.snippet_labels) flagged += l;
  }
  EXPECT_EQ(flagged, 1);
}

TEST(Synthetic, FixedSeedIsDeterministic) {
  SyntheticSpec s;
  s.n_normal = s.n_abnormal = 3;
  s.n_test_normal = s.n_test_abnormal = 2;
  s.seed = 5;
  const auto a = generate_synthetic_dataset(s), b = generate_synthetic_dataset(s);
  ASSERT_EQ(a.videos.size(), b.videos.size());
  for (std::size_t i = 0; i < a.videos.size(); ++i) {
    EXPECT_EQ(a.videos[i].features, b.videos[i].features);
    EXPECT_EQ(a.videos[i].snippet_labels, b.videos[i].snippet_labels);
  }
  s.seed = 6;
  EXPECT_FALSE(generate_synthetic_dataset(s).videos[0].features == a.videos[0].features);
}

TEST(Synthetic, ZeroPerturbationMakesClassesIdentical) {
  SyntheticSpec s;
  s.perturbation = 0.0;
  s.n_normal = s.n_abnormal = 200;
  s.n_test_normal = s.n_test_abnormal = 0;
  const auto ds = generate_synthetic_dataset(s);
  double na = 0.0, nn = 0.0;
  std::size_t ca = 0, cn = 0;
  for (const auto& v : ds.videos) {
    for (std::size_t t = 0; t < s.T; ++t) {
      double r = 0.0;
      for (std::size_t d = 0; d < s.D; ++d) r += v.features(t, d) * v.features(t, d);
      if (v.snippet_labels[t]) {
        na += std::sqrt(r);
        ++ca;
      } else {
        nn += std::sqrt(r);
        ++cn;
      }
    }
  }
  EXPECT_NEAR(na / ca, nn / cn, 0.01 * nn / cn);
}

// E of a scaled non-central chi with D degrees of freedom and non-centrality
// lambda: s * sqrt(2) * Gamma((D+1)/2) / Gamma(D/2) * 1F1(-1/2; D/2; -lambda^2/2),
// with Kummer's transformation so that the series has positive terms.
double noncentral_chi_mean(double s, double D, double lambda) {
  const double z = lambda * lambda / 2.0;
  const double a = D / 2.0 + 0.5, b = D / 2.0;  // 1F1(b - (-1/2); b; z)
  double term = 1.0, sum = 1.0;
  for (int n = 0; n < 2000; ++n) {
    term *= (a + n) / (b + n) * z / (n + 1);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  const double hyp = std::exp(-z) * sum;
  return s * std::sqrt(2.0) * std::exp(std::lgamma((D + 1) / 2.0) - std::lgamma(D / 2.0)) * hyp;
}

TEST(Synthetic, NormGapMatchesClosedForm) {
  SyntheticSpec s;  // defaults
  s.seed = 11;
  const auto ds = generate_synthetic_dataset(s);
  // Per-video means are independent samples; within-video snippets share an offset.
  std::vector<double> abn, norm;
  for (const auto& v : ds.videos) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < s.T; ++t) {
      if (v.label == 1 && !v.snippet_labels[t]) continue;
      double r = 0.0;
      for (std::size_t d = 0; d < s.D; ++d) r += v.features(t, d) * v.features(t, d);
      sum += std::sqrt(r);
      ++n;
    }
    (v.label == 1 ? abn : norm).push_back(sum / static_cast<double>(n));
  }
  auto mean_se = [](const std::vector<double>& x) {
    double m = 0.0, v = 0.0;
    for (double e : x) m += e;
    m /= static_cast<double>(x.size());
    for (double e : x) v += (e - m) * (e - m);
    v /= static_cast<double>(x.size() - 1);
    return std::pair{m, std::sqrt(v / static_cast<double>(x.size()))};
  };
  const auto [ma, sa] = mean_se(abn);
  const auto [mn, sn] = mean_se(norm);
  const double sigma = std::hypot(s.base_stddev, s.noise_stddev);
  const double D = static_cast<double>(s.D);
  const double analytic =
      noncentral_chi_mean(sigma, D, s.perturbation / sigma) - noncentral_chi_mean(sigma, D, 0.0);
  EXPECT_NEAR(ma - mn, analytic, 2.0 * std::hypot(sa, sn));
  EXPECT_GT(analytic, 0.5);
}

TEST(Synthetic, ValuesAreFloat32Representable) {
  SyntheticSpec s;
  s.n_normal = s.n_abnormal = 1;
  s.n_test_normal = s.n_test_abnormal = 0;
  for (const auto& v : generate_synthetic_dataset(s).videos) {
    for (double x : v.features.values()) EXPECT_EQ(x, static_cast<double>(static_cast<float>(x)));
  }
}

TEST(Synthetic, ExplicitDirectionIsNormalised) {
  SyntheticSpec s;
  s.D = 4;
  s.T = 4;
  s.mu = 2;
  s.n_normal = s.n_abnormal = 1;
  s.n_test_normal = s.n_test_abnormal = 0;
  s.direction = {3, 0, 4, 0};
  const auto ds = generate_synthetic_dataset(s);
  EXPECT_EQ(ds.direction, (std::vector<double>{0.6, 0.0, 0.8, 0.0}));
  s.direction = {1, 2};
  EXPECT_THROW(generate_synthetic_dataset(s), ValidationError);
}

// ---- manifest

TEST_F(TempDir, EmptyManifestIsValid) {
  DatasetManifest m;
  m.T = 32;
  m.D = 64;
  io::write_manifest(dir_ / "manifest.jsonl", m);
  const auto r = io::read_manifest(dir_ / "manifest.jsonl");
  EXPECT_TRUE(r.entries.empty());
  EXPECT_EQ(r, m);
}

TEST_F(TempDir, GeneratedDatasetRoundTrips) {
  SyntheticSpec s;
  s.n_normal = s.n_abnormal = 4;
  s.n_test_normal = s.n_test_abnormal = 3;
  const auto ds = generate_synthetic_dataset(s);
  const auto written = write_dataset(ds.videos, dir_);
  const auto read = io::read_manifest(dir_ / "manifest.jsonl");
  EXPECT_EQ(read, written);
  const auto videos = load_videos(read, dir_ / "manifest.jsonl");
  ASSERT_EQ(videos.size(), ds.videos.size());
  for (std::size_t i = 0; i < videos.size(); ++i) {
    EXPECT_EQ(videos[i].id, ds.videos[i].id);
    EXPECT_EQ(videos[i].features, ds.videos[i].features);
    EXPECT_EQ(videos[i].label, ds.videos[i].label);
    if (videos[i].split == kTestSplit) EXPECT_EQ(videos[i].snippet_labels, ds.videos[i].snippet_labels);
  }
}

TEST_F(TempDir, MismatchedDimensionNamesEntry) {
  SyntheticSpec s;
  s.n_normal = s.n_abnormal = 2;
  s.n_test_normal = s.n_test_abnormal = 0;
  s.T = 4;
  s.D = 8;
  s.mu = 1;
  write_dataset(generate_synthetic_dataset(s).videos, dir_);
  io::write_features(dir_ / "features" / "train_normal_0001.rtfm", Tensor({4, 12}, 0.5));
  try {
    io::read_manifest(dir_ / "manifest.jsonl");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("train_normal_0001"), std::string::npos) << msg;
    EXPECT_EQ(msg.find("train_normal_0000"), std::string::npos) << msg;
  }
}

TEST_F(TempDir, ManifestRejectsBadRecords) {
  auto write = [&](const std::string& body) {
    std::ofstream(dir_ / "m.jsonl")
        << R"({"format":"rtfm-manifest","version":1,"T":2,"D":2})" << '\n'
        << body << '\n';
  };
  write(R"({"id":"a","path":"a.rtfm","label":2,"split":"train"})");
  EXPECT_THROW(io::read_manifest(dir_ / "m.jsonl", false), ValidationError);
  write(R"({"id":"a","path":"a.rtfm","label":0,"split":"train","extra":1})");
  EXPECT_THROW(io::read_manifest(dir_ / "m.jsonl", false), ValidationError);
  write(R"({"id":"a","path":"a.rtfm","label":1,"split":"test"})");
  EXPECT_THROW(io::read_manifest(dir_ / "m.jsonl", false), ValidationError);
  write(R"({"id":"a","path":"a.rtfm","label":1,"split":"test","snippet_labels":"0,0"})");
  EXPECT_THROW(io::read_manifest(dir_ / "m.jsonl", false), ValidationError);
  write(R"({"id":"a","path":"a.rtfm","label":0,"split":"test","snippet_labels":"0,1"})");
  EXPECT_THROW(io::read_manifest(dir_ / "m.jsonl", false), ValidationError);
  write(R"({"id":"a","path":"a.rtfm","label":1,"split":"test","snippet_labels":"0,1"})");
  EXPECT_NO_THROW(io::read_manifest(dir_ / "m.jsonl", false));
  write("not json");
  EXPECT_THROW(io::read_manifest(dir_ / "m.jsonl", false), ValidationError);
  EXPECT_THROW(io::read_manifest(dir_ / "nope.jsonl"), ValidationError);
}

// ---- checkpoints

TEST_F(TempDir, CheckpointRoundTrip) {
  ModelConfig c;
  c.mtn.T = 8;
  c.mtn.D = 16;
  c.mtn.attention_norm = AttentionNorm::row_softmax;
  c.classifier.layer_widths = {10, 5, 1};
  c.classifier.dropout_rate = 0.25;
  const ModelParams p = ModelParams::xavier(c, 3);
  io::save_checkpoint(dir_ / "ck.rtfm", p);
  const ModelParams q = io::load_checkpoint(dir_ / "ck.rtfm");
  EXPECT_EQ(q, p);
  EXPECT_EQ(q.config().mtn.T, 8u);
  EXPECT_EQ(q.config().mtn.attention_norm, AttentionNorm::row_softmax);
  EXPECT_EQ(q.config().classifier.layer_widths, c.classifier.layer_widths);
  EXPECT_EQ(q.config().classifier.dropout_rate, 0.25);
}

TEST_F(TempDir, CheckpointContainerLayout) {
  io::NamedArrays arrays{{"w", Tensor::matrix(1, 2, {1.0, -2.0})}};
  io::write_arrays(dir_ / "a.bin", arrays);
  const auto bytes = slurp(dir_ / "a.bin");
  // magic(8) version(1) count(4) name_len(4) name(1) rank(4) extents(8) values(16)
  ASSERT_EQ(bytes.size(), 8u + 1 + 4 + 4 + 1 + 4 + 8 + 16);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "RTFMCKPT");
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[9], 1);   // count, little-endian
  EXPECT_EQ(bytes[17], 'w');
  EXPECT_EQ(bytes[18], 2);  // rank
  double v;
  std::memcpy(&v, bytes.data() + 38, 8);
  EXPECT_EQ(v, -2.0);
  EXPECT_EQ(io::read_arrays(dir_ / "a.bin"), arrays);
}

TEST_F(TempDir, CorruptCheckpointsRejected) {
  io::write_arrays(dir_ / "a.bin", {{"w", Tensor::vector({1.0, 2.0})}});
  auto bytes = slurp(dir_ / "a.bin");
  auto truncated = bytes;
  truncated.resize(bytes.size() - 1);
  dump(dir_ / "t.bin", truncated);
  EXPECT_THROW(io::read_arrays(dir_ / "t.bin"), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  dump(dir_ / "m.bin", magic);
  EXPECT_THROW(io::read_arrays(dir_ / "m.bin"), FormatError);
  EXPECT_THROW(io::load_checkpoint(dir_ / "a.bin"), ValidationError);
}

}  // namespace
}  // namespace rtfm
