#include "rtfm/model.hpp"

#include <algorithm>
#include <cmath>

#include "rtfm/errors.hpp"
#include "rtfm/ops.hpp"

namespace rtfm {

std::string to_string(AttentionNorm norm) {
  switch (norm) {
    case AttentionNorm::none: return "none";
    case AttentionNorm::scale_by_T: return "scale_by_T";
    case AttentionNorm::row_softmax: return "row_softmax";
  }
  return "none";
}

AttentionNorm parse_attention_norm(std::string_view text) {
  if (text == "none") return AttentionNorm::none;
  if (text == "scale_by_T") return AttentionNorm::scale_by_T;
  if (text == "row_softmax") return AttentionNorm::row_softmax;
  throw ValidationError("unknown attention_norm '" + std::string(text) +
                        "' (expected none, scale_by_T or row_softmax)");
}

void MtnConfig::validate() const {
  if (T < 1) throw ValidationError("MTN: T must be >= 1");
  if (D < 4 || D % 4 != 0) {
    throw ValidationError("MTN: D must be a positive multiple of 4, got " +
                          std::to_string(D));
  }
  if (dilation_rates.size() != 3) {
    throw ValidationError("MTN: exactly three dilation rates are required");
  }
  for (auto r : dilation_rates) {
    if (r < 1) throw ValidationError("MTN: dilation rates must be positive");
  }
}

void ClassifierConfig::validate() const {
  if (layer_widths.empty() || layer_widths.back() != 1) {
    throw ValidationError("classifier: final layer width must be 1");
  }
  for (auto w : layer_widths) {
    if (w < 1) throw ValidationError("classifier: layer widths must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ValidationError("classifier: dropout_rate must lie in [0, 1)");
  }
}

void ModelConfig::validate() const {
  mtn.validate();
  classifier.validate();
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& config) {
  config.validate();
  const std::size_t D = config.mtn.D, B = config.mtn.branch_width();
  std::vector<std::pair<std::string, Shape>> layout;
  for (int l = 0; l < 3; ++l) {
    const std::string p = "pdc." + std::to_string(l);
    layout.emplace_back(p + ".weight", Shape{B, D, 3});
    layout.emplace_back(p + ".bias", Shape{B});
  }
  layout.emplace_back("tsa.reduce.weight", Shape{B, D, 1});
  layout.emplace_back("tsa.reduce.bias", Shape{B});
  for (int i = 1; i <= 4; ++i) {
    const std::string p = "tsa.c" + std::to_string(i);
    layout.emplace_back(p + ".weight", Shape{B, B, 1});
    layout.emplace_back(p + ".bias", Shape{B});
  }
  std::size_t in = D;
  const auto& widths = config.classifier.layer_widths;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string p = "fc." + std::to_string(i);
    layout.emplace_back(p + ".weight", Shape{in, widths[i]});
    layout.emplace_back(p + ".bias", Shape{widths[i]});
    in = widths[i];
  }
  return layout;
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
  ModelParams p;
  p.config_ = config;
  for (auto& [name, shape] : parameter_layout(config)) {
    p.entries_.emplace_back(name, Tensor(shape, 0.0));
  }
  return p;
}

ModelParams ModelParams::xavier(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = zeros(config);
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : p.entries_) {
    if (t.rank() == 1) continue;  // bias
    std::size_t fan_in = 0, fan_out = 0;
    if (t.rank() == 3) {
      fan_in = t.dim(1) * t.dim(2);
      fan_out = t.dim(0) * t.dim(2);
    } else {
      fan_in = t.dim(0);
      fan_out = t.dim(1);
    }
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-a, a);
    for (auto& v : t.values()) v = u(rng);
  }
  return p;
}

ModelParams ModelParams::from_entries(const ModelConfig& config, std::vector<Entry> entries) {
  const auto layout = parameter_layout(config);
  if (entries.size() != layout.size()) {
    throw ValidationError("parameter set has " + std::to_string(entries.size()) +
                          " tensors, configuration expects " +
                          std::to_string(layout.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (entries[i].first != layout[i].first || entries[i].second.shape() != layout[i].second) {
      throw ValidationError("parameter '" + entries[i].first + "' " +
                            shape_string(entries[i].second.shape()) + " does not match expected '" +
                            layout[i].first + "' " + shape_string(layout[i].second));
    }
    if (!entries[i].second.all_finite()) {
      throw ValidationError("parameter '" + entries[i].first + "' has non-finite values");
    }
  }
  ModelParams p;
  p.config_ = config;
  p.entries_ = std::move(entries);
  return p;
}

Tensor& ModelParams::at(std::string_view name) {
  for (auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ParameterError("no parameter named '" + std::string(name) + "'");
}

const Tensor& ModelParams::at(std::string_view name) const {
  return const_cast<ModelParams*>(this)->at(name);
}

std::vector<ad::NamedParam> ModelParams::named() {
  std::vector<ad::NamedParam> out;
  for (auto& [n, t] : entries_) out.push_back({n, &t});
  return out;
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out;
  for (auto& e : entries_) out.push_back(&e.second);
  return out;
}

void ModelParams::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

void ModelParams::set_all(double value) {
  for (auto& e : entries_) std::fill(e.second.values().begin(), e.second.values().end(), value);
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  return a.entries_ == b.entries_;
}

namespace {

template <class Params, class BindFn>
BoundModel bind_with(const ModelConfig& config, Params& params, BindFn leaf) {
  BoundModel m;
  m.config = &config;
  for (int l = 0; l < 3; ++l) {
    const std::string p = "pdc." + std::to_string(l);
    m.pdc_weight[l] = leaf(params.at(p + ".weight"));
    m.pdc_bias[l] = leaf(params.at(p + ".bias"));
  }
  m.reduce_weight = leaf(params.at("tsa.reduce.weight"));
  m.reduce_bias = leaf(params.at("tsa.reduce.bias"));
  for (int i = 0; i < 3; ++i) {
    const std::string p = "tsa.c" + std::to_string(i + 1);
    m.proj_weight[i] = leaf(params.at(p + ".weight"));
    m.proj_bias[i] = leaf(params.at(p + ".bias"));
  }
  m.out_weight = leaf(params.at("tsa.c4.weight"));
  m.out_bias = leaf(params.at("tsa.c4.bias"));
  for (std::size_t i = 0; i < config.classifier.layer_widths.size(); ++i) {
    const std::string p = "fc." + std::to_string(i);
    m.fc_weight.push_back(leaf(params.at(p + ".weight")));
    m.fc_bias.push_back(leaf(params.at(p + ".bias")));
  }
  return m;
}

void check_features(ad::Var x, const BoundModel& model) {
  if (model.config == nullptr) throw ContractError("unbound model");
  const auto& s = x.shape();
  const auto& c = model.config->mtn;
  if (s.size() != 2 || s[0] != c.T || s[1] != c.D) {
    throw DimensionError("features " + shape_string(s) + " do not match model [" +
                         std::to_string(c.T) + "x" + std::to_string(c.D) + "]");
  }
}

ad::Var conv1x1(ad::Var x, ad::Var w, ad::Var b) {
  return ad::add_row_bias(ad::conv1d_dilated(x, w, 1), b);
}

}  // namespace

BoundModel bind(ad::Graph& graph, ModelParams& params) {
  return bind_with(params.config(), params, [&](Tensor& t) { return graph.parameter(t); });
}

BoundModel bind_const(ad::Graph& graph, const ModelParams& params) {
  return bind_with(params.config(), params,
                   [&](const Tensor& t) { return graph.constant_ref(t); });
}

std::array<ad::Var, 3> pdc_forward(ad::Var features, const BoundModel& model) {
  check_features(features, model);
  std::array<ad::Var, 3> out;
  for (std::size_t l = 0; l < 3; ++l) {
    out[l] = ad::add_row_bias(
        ad::conv1d_dilated(features, model.pdc_weight[l], model.config->mtn.dilation_rates[l]),
        model.pdc_bias[l]);
  }
  return out;
}

ad::Var tsa_forward(ad::Var features, const BoundModel& model) {
  check_features(features, model);
  ad::Var reduced = conv1x1(features, model.reduce_weight, model.reduce_bias);
  ad::Var q = conv1x1(reduced, model.proj_weight[0], model.proj_bias[0]);
  ad::Var k = conv1x1(reduced, model.proj_weight[1], model.proj_bias[1]);
  ad::Var v = conv1x1(reduced, model.proj_weight[2], model.proj_bias[2]);
  ad::Var attn = ad::matmul(q, ad::transpose(k));
  switch (model.config->mtn.attention_norm) {
    case AttentionNorm::none: break;
    case AttentionNorm::scale_by_T:
      attn = ad::scale(attn, 1.0 / static_cast<double>(model.config->mtn.T));
      break;
    case AttentionNorm::row_softmax: attn = ad::row_softmax(attn); break;
  }
  ad::Var context = conv1x1(ad::matmul(attn, v), model.out_weight, model.out_bias);
  return ad::add(context, reduced);
}

ad::Var mtn_forward(ad::Var features, const BoundModel& model) {
  auto pdc = pdc_forward(features, model);
  ad::Var tsa = tsa_forward(features, model);
  ad::Var fused = ad::concat_cols({pdc[0], pdc[1], pdc[2], tsa});
  if (fused.shape() != features.shape()) {
    throw DimensionError("MTN branch widths do not sum to D");
  }
  return ad::add(fused, features);
}

ad::Var classify_snippets(ad::Var embeddings, const BoundModel& model,
                          std::mt19937_64* dropout_rng) {
  check_features(embeddings, model);
  const auto& cls = model.config->classifier;
  ad::Var h = embeddings;
  const std::size_t layers = model.fc_weight.size();
  for (std::size_t i = 0; i < layers; ++i) {
    h = ad::add_row_bias(ad::matmul(h, model.fc_weight[i]), model.fc_bias[i]);
    if (i + 1 == layers) break;
    h = ad::relu(h);
    if (dropout_rng != nullptr && cls.dropout_rate > 0.0) {
      h = ad::dropout(h, ad::make_dropout_mask(h.shape(), cls.dropout_rate, *dropout_rng));
    }
  }
  h = ad::sigmoid(h);
  return ad::reshape(h, Shape{h.shape()[0]});
}

Tensor mtn_forward(const ModelParams& params, const Tensor& features) {
  ad::Graph g;
  BoundModel m = bind_const(g, params);
  return mtn_forward(g.constant_ref(features), m).value();
}

Tensor classify_snippets(const ModelParams& params, const Tensor& embeddings) {
  ad::Graph g;
  BoundModel m = bind_const(g, params);
  return classify_snippets(g.constant_ref(embeddings), m, nullptr).value();
}

}  // namespace rtfm
