#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rtfm/grad_check.hpp"
#include "rtfm/graph.hpp"
#include "rtfm/tensor.hpp"

namespace rtfm {

/// Optional normalisation of the T x T temporal attention map.
enum class AttentionNorm { none, scale_by_T, row_softmax };

std::string to_string(AttentionNorm norm);
AttentionNorm parse_attention_norm(std::string_view text);

/// Multi-scale temporal network shape.
struct MtnConfig {
  std::size_t T = 32;
  std::size_t D = 64;
  std::vector<std::size_t> dilation_rates{1, 2, 4};
  AttentionNorm attention_norm = AttentionNorm::none;

  /// Width of each of the four concatenated branches.
  std::size_t branch_width() const { return D / 4; }
  void validate() const;
};

struct ClassifierConfig {
  std::vector<std::size_t> layer_widths{512, 128, 1};
  /// Probability of dropping a unit during training.
  double dropout_rate = 0.7;

  void validate() const;
};

struct ModelConfig {
  MtnConfig mtn;
  ClassifierConfig classifier;

  void validate() const;
};

/// All learnable tensors, kept in a fixed, named order:
///
///   pdc.{0,1,2}.weight   [D/4 x D x 3]     pdc.{0,1,2}.bias   [D/4]
///   tsa.reduce.weight    [D/4 x D x 1]     tsa.reduce.bias    [D/4]
///   tsa.c{1,2,3}.weight  [D/4 x D/4 x 1]   tsa.c{1,2,3}.bias  [D/4]
///   tsa.c4.weight        [D/4 x D/4 x 1]   tsa.c4.bias        [D/4]
///   fc.{i}.weight        [in x out]        fc.{i}.bias        [out]
class ModelParams {
 public:
  using Entry = std::pair<std::string, Tensor>;

  ModelParams() = default;

  /// Every weight and bias zero.
  static ModelParams zeros(const ModelConfig& config);
  /// Weights uniform in [-a, a], a = sqrt(6 / (fan_in + fan_out)); biases zero.
  static ModelParams xavier(const ModelConfig& config, std::uint64_t seed);
  /// Wraps loaded tensors; validates names and shapes against `config`.
  static ModelParams from_entries(const ModelConfig& config, std::vector<Entry> entries);

  const ModelConfig& config() const noexcept { return config_; }

  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;

  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  std::vector<ad::NamedParam> named();
  std::vector<Tensor*> tensors();
  void zero_grad();
  void set_all(double value);

  friend bool operator==(const ModelParams& a, const ModelParams& b);

 private:
  ModelConfig config_;
  std::vector<Entry> entries_;
};

/// Expected parameter names and shapes for a configuration, in storage order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& config);

/// Model parameters attached to one graph.
struct BoundModel {
  const ModelConfig* config = nullptr;
  std::array<ad::Var, 3> pdc_weight{}, pdc_bias{};
  ad::Var reduce_weight{}, reduce_bias{};
  std::array<ad::Var, 3> proj_weight{}, proj_bias{};
  ad::Var out_weight{}, out_bias{};
  std::vector<ad::Var> fc_weight, fc_bias;
};

/// Binds parameters as trainable leaves (gradients land in each Tensor::grad).
BoundModel bind(ad::Graph& graph, ModelParams& params);
/// Binds parameters as constants for inference.
BoundModel bind_const(ad::Graph& graph, const ModelParams& params);

/// Three dilated-convolution branches, each [T x D/4].
std::array<ad::Var, 3> pdc_forward(ad::Var features, const BoundModel& model);

/// Temporal self-attention branch with its internal skip, [T x D/4].
ad::Var tsa_forward(ad::Var features, const BoundModel& model);

/// X = concat(PDC_1, PDC_2, PDC_3, TSA) + F, same shape as F.
ad::Var mtn_forward(ad::Var features, const BoundModel& model);

/// Per-snippet anomaly scores in [0,1], shape [T]. Dropout is applied after
/// each hidden ReLU only when `dropout_rng` is non-null.
ad::Var classify_snippets(ad::Var embeddings, const BoundModel& model,
                          std::mt19937_64* dropout_rng);

// Inference-only conveniences over plain tensors.
Tensor mtn_forward(const ModelParams& params, const Tensor& features);
Tensor classify_snippets(const ModelParams& params, const Tensor& embeddings);

}  // namespace rtfm
