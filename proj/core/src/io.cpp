#include "rtfm/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rtfm/errors.hpp"

namespace rtfm::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr char kFeatureMagic[4] = {'R', 'T', 'F', 'M'};
constexpr char kCheckpointMagic[8] = {'R', 'T', 'F', 'M', 'C', 'K', 'P', 'T'};

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& in) : in_(in) {}

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw FormatError(std::string("truncated file while reading ") + what, pos_);
    }
  }
  void expect(const char* magic, std::size_t n) {
    need(n, "magic");
    if (std::memcmp(in_.data() + pos_, magic, n) != 0) {
      throw FormatError("bad magic bytes", pos_);
    }
    pos_ += n;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("write failed for " + path.string());
}

std::string join_labels(const std::vector<int>& labels) {
  std::string s;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) s += ',';
    s += labels[i] ? '1' : '0';
  }
  return s;
}

std::vector<int> split_labels(const std::string& text, std::size_t line) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "0" || tok == "1") {
      out.push_back(tok == "1");
    } else {
      throw ValidationError("manifest line " + std::to_string(line) +
                            ": snippet label '" + tok + "' is not 0 or 1");
    }
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_features(const Tensor& features) {
  if (features.rank() != 2) throw DimensionError("features must be a [T x D] matrix");
  require_finite(features, "write_features");
  ByteWriter w;
  w.bytes(kFeatureMagic, 4);
  w.u8(kFeatureVersion);
  w.u32(static_cast<std::uint32_t>(features.rows()));
  w.u32(static_cast<std::uint32_t>(features.cols()));
  for (double v : features.values()) w.f32(static_cast<float>(v));
  return std::move(w.data());
}

Tensor decode_features(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  if (bytes.empty()) throw FormatError("empty feature file", 0);
  r.expect(kFeatureMagic, 4);
  const std::size_t vpos = r.pos();
  const auto version = r.u8("version");
  if (version != kFeatureVersion) {
    throw FormatError("unsupported feature version " + std::to_string(version), vpos);
  }
  const std::size_t tpos = r.pos();
  const std::size_t T = r.u32("T");
  const std::size_t D = r.u32("D");
  if (T == 0 || D == 0) throw FormatError("zero extent in feature header", tpos);
  if (T * D > bytes.size()) throw FormatError("truncated feature payload", r.pos());
  r.need(T * D * 4, "feature payload");
  std::vector<double> values(T * D);
  for (auto& v : values) v = r.f32("feature payload");
  if (!r.done()) throw FormatError("trailing bytes after feature payload", r.pos());
  Tensor t = Tensor::matrix(T, D, std::move(values));
  if (!t.all_finite()) throw FormatError("non-finite feature value", kFeatureHeaderSize);
  return t;
}

void write_features(const fs::path& path, const Tensor& features) {
  spit(path, encode_features(features));
}

Tensor read_features(const fs::path& path) { return decode_features(slurp(path)); }

std::pair<std::size_t, std::size_t> read_feature_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<std::uint8_t> head(kFeatureHeaderSize);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  ByteReader r(head);
  if (head.empty()) throw FormatError("empty feature file", 0);
  r.expect(kFeatureMagic, 4);
  const std::size_t vpos = r.pos();
  if (r.u8("version") != kFeatureVersion) throw FormatError("unsupported feature version", vpos);
  const std::size_t T = r.u32("T");
  const std::size_t D = r.u32("D");
  return {T, D};
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  std::ostringstream os;
  os << json{{"format", "rtfm-manifest"},
             {"version", manifest.version},
             {"T", manifest.T},
             {"D", manifest.D}}
            .dump()
     << '\n';
  for (const auto& e : manifest.entries) {
    json rec{{"id", e.id}, {"path", e.path}, {"label", e.label}, {"split", e.split}};
    if (e.snippet_labels) rec["snippet_labels"] = join_labels(*e.snippet_labels);
    os << rec.dump() << '\n';
  }
  const std::string s = os.str();
  spit(path, std::vector<std::uint8_t>(s.begin(), s.end()));
}

DatasetManifest read_manifest(const fs::path& path, bool probe_files) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest " + path.string());
  DatasetManifest m;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      if (!have_header) {
        if (rec.value("format", "") != "rtfm-manifest") {
          throw ValidationError("manifest line 1 is not an rtfm-manifest header");
        }
        m.version = rec.at("version").get<int>();
        if (m.version != 1) {
          throw ValidationError("unsupported manifest version " + std::to_string(m.version));
        }
        m.T = rec.at("T").get<std::size_t>();
        m.D = rec.at("D").get<std::size_t>();
        have_header = true;
        continue;
      }
      ManifestEntry e;
      e.id = rec.at("id").get<std::string>();
      e.path = rec.at("path").get<std::string>();
      e.label = rec.at("label").get<int>();
      e.split = rec.value("split", std::string(kTrainSplit));
      if (rec.contains("snippet_labels")) {
        e.snippet_labels = split_labels(rec.at("snippet_labels").get<std::string>(), lineno);
      }
      for (const auto& [key, _] : rec.items()) {
        if (key != "id" && key != "path" && key != "label" && key != "split" &&
            key != "snippet_labels") {
          throw ValidationError("manifest line " + std::to_string(lineno) +
                                ": unknown key '" + key + "'");
        }
      }
      m.entries.push_back(std::move(e));
    } catch (const json::exception& e) {
      throw ValidationError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw ValidationError("manifest " + path.string() + " has no header");

  std::vector<std::string> problems;
  for (const auto& e : m.entries) {
    if (e.label != 0 && e.label != 1) {
      problems.push_back(e.id + ": label must be 0 or 1");
      continue;
    }
    if (e.split != kTrainSplit && e.split != kTestSplit) {
      problems.push_back(e.id + ": split must be train or test");
    }
    if (e.split == kTestSplit && !e.snippet_labels) {
      problems.push_back(e.id + ": evaluation entry without snippet labels");
    }
    if (e.snippet_labels) {
      const auto& s = *e.snippet_labels;
      int positives = 0;
      for (int v : s) positives += v;
      if (s.size() != m.T) {
        problems.push_back(e.id + ": " + std::to_string(s.size()) + " snippet labels, T=" +
                           std::to_string(m.T));
      } else if (e.label == 1 && positives == 0) {
        problems.push_back(e.id + ": abnormal video without abnormal snippets");
      } else if (e.label == 0 && positives != 0) {
        problems.push_back(e.id + ": normal video with abnormal snippets");
      }
    }
  }
  if (probe_files) {
    const fs::path base = path.parent_path();
    for (const auto& e : m.entries) {
      try {
        const auto [T, D] = read_feature_header(base / e.path);
        if (T != m.T || D != m.D) {
          problems.push_back(e.id + ": features are [" + std::to_string(T) + "x" +
                             std::to_string(D) + "], manifest says [" + std::to_string(m.T) +
                             "x" + std::to_string(m.D) + "]");
        }
      } catch (const Error& err) {
        problems.push_back(e.id + ": " + err.what());
      }
    }
  }
  if (!problems.empty()) {
    std::string msg = "manifest validation failed:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
  return m;
}

void write_arrays(const fs::path& path, const NamedArrays& arrays) {
  ByteWriter w;
  w.bytes(kCheckpointMagic, 8);
  w.u8(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, t] : arrays) {
    require_finite(t, "checkpoint array");
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
    for (double v : t.values()) w.f64(v);
  }
  spit(path, w.data());
}

NamedArrays read_arrays(const fs::path& path) {
  const auto bytes = slurp(path);
  if (bytes.empty()) throw FormatError("empty checkpoint file", 0);
  ByteReader r(bytes);
  r.expect(kCheckpointMagic, 8);
  const std::size_t vpos = r.pos();
  const auto version = r.u8("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), vpos);
  }
  const std::size_t count = r.u32("array count");
  NamedArrays out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t len = r.u32("name length");
    std::string name = r.str(len, "name");
    const std::size_t rpos = r.pos();
    const std::size_t rank = r.u32("rank");
    if (rank > 8) throw FormatError("implausible rank " + std::to_string(rank), rpos);
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& e : shape) {
      const std::size_t epos = r.pos();
      e = r.u32("extent");
      if (e == 0) throw FormatError("zero extent", epos);
      n *= e;
      if (n > bytes.size()) throw FormatError("array larger than file", epos);
    }
    r.need(n * 8, "array values");
    std::vector<double> values(n);
    for (auto& v : values) v = r.f64("array values");
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint arrays", r.pos());
  return out;
}

void save_checkpoint(const fs::path& path, const ModelParams& params) {
  const auto& c = params.config();
  NamedArrays arrays;
  arrays.emplace_back(
      "config.mtn",
      Tensor::vector({static_cast<double>(c.mtn.T), static_cast<double>(c.mtn.D),
                      static_cast<double>(c.mtn.dilation_rates[0]),
                      static_cast<double>(c.mtn.dilation_rates[1]),
                      static_cast<double>(c.mtn.dilation_rates[2]),
                      static_cast<double>(static_cast<int>(c.mtn.attention_norm))}));
  std::vector<double> cls{c.classifier.dropout_rate};
  for (auto w : c.classifier.layer_widths) cls.push_back(static_cast<double>(w));
  arrays.emplace_back("config.classifier", Tensor::vector(std::move(cls)));
  for (const auto& [name, t] : params.entries()) {
    arrays.emplace_back(name, Tensor(t.shape(), {t.values().begin(), t.values().end()}));
  }
  write_arrays(path, arrays);
}

ModelParams load_checkpoint(const fs::path& path) {
  auto arrays = read_arrays(path);
  if (arrays.size() < 2 || arrays[0].first != "config.mtn" ||
      arrays[1].first != "config.classifier") {
    throw ValidationError("checkpoint " + path.string() + " lacks configuration arrays");
  }
  const auto& mtn = arrays[0].second;
  const auto& cls = arrays[1].second;
  if (mtn.size() != 6 || cls.size() < 2) {
    throw ValidationError("checkpoint " + path.string() + " has malformed configuration");
  }
  ModelConfig c;
  c.mtn.T = static_cast<std::size_t>(mtn[0]);
  c.mtn.D = static_cast<std::size_t>(mtn[1]);
  c.mtn.dilation_rates = {static_cast<std::size_t>(mtn[2]), static_cast<std::size_t>(mtn[3]),
                          static_cast<std::size_t>(mtn[4])};
  const int norm = static_cast<int>(mtn[5]);
  if (norm < 0 || norm > 2) throw ValidationError("checkpoint has unknown attention_norm");
  c.mtn.attention_norm = static_cast<AttentionNorm>(norm);
  c.classifier.dropout_rate = cls[0];
  c.classifier.layer_widths.clear();
  for (std::size_t i = 1; i < cls.size(); ++i) {
    c.classifier.layer_widths.push_back(static_cast<std::size_t>(cls[i]));
  }
  arrays.erase(arrays.begin(), arrays.begin() + 2);
  return ModelParams::from_entries(c, std::move(arrays));
}

}  // namespace rtfm::io
