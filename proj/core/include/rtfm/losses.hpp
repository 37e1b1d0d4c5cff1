#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "rtfm/graph.hpp"
#include "rtfm/model.hpp"
#include "rtfm/tensor.hpp"

namespace rtfm {

struct LossConfig {
  std::size_t k = 3;
  double margin = 100.0;
  double smoothness_weight = 8e-5;
  double sparsity_weight = 8e-5;
  /// Scores are clamped to [eps, 1 - eps] before the log in the BCE term.
  double bce_eps = 1e-7;

  void validate() const;
};

struct SeparabilityResult {
  double g_abnormal = 0.0;
  double g_normal = 0.0;
  double d = 0.0;
};

/// Mean L2 norm of the k largest-norm rows of X.
double topk_mean_magnitude(const Tensor& x, std::size_t k);
SeparabilityResult separability(const Tensor& x_abnormal, const Tensor& x_normal, std::size_t k);

struct TopkMagnitude {
  ad::Var value;                      // scalar g
  std::vector<std::size_t> selected;  // the top-k row set
};

/// Differentiable top-k mean magnitude; gradient reaches only selected rows.
TopkMagnitude topk_mean_magnitude(ad::Var x, std::size_t k);

/// Hinge on the separability of an (abnormal, normal) pair; zero otherwise.
ad::Var magnitude_loss(ad::Var x_i, ad::Var x_j, int y_i, int y_j, const LossConfig& config);
/// Same hinge from precomputed top-k magnitudes g_i, g_j.
ad::Var magnitude_hinge(ad::Var g_i, ad::Var g_j, int y_i, int y_j, const LossConfig& config);

/// Binary cross-entropy summed over the k largest-magnitude snippets of X,
/// each labelled with the video label y. `selected` receives that index set.
ad::Var classifier_loss(ad::Var scores, ad::Var x, int y, const LossConfig& config,
                        std::vector<std::size_t>* selected = nullptr);

/// Sum of squared differences of neighbouring scores (0 for T < 2).
ad::Var smoothness(ad::Var scores);
/// Sum of absolute scores.
ad::Var sparsity(ad::Var scores);

struct VideoSample {
  const Tensor* features = nullptr;
  int label = 0;
};

struct LossTerms {
  ad::Var total;
  double separability_loss = 0.0;  // mean hinge over (abnormal, normal) pairs
  double classifier_loss = 0.0;    // mean BCE term over videos
  double regularizer = 0.0;        // mean weighted smoothness + sparsity
  double g_abnormal = 0.0;         // mean top-k magnitude over abnormal videos
  double g_normal = 0.0;
  /// Per video: the snippet indices used by both the magnitude and BCE terms.
  std::vector<std::vector<std::size_t>> selected;
};

/// Joint objective over a mini-batch:
///   mean over ordered (abnormal i, normal j) pairs of the magnitude hinge
/// + mean over videos of [BCE_topk + (abnormal ? l1*smooth + l2*sparse : 0)].
/// Dropout in the classifier is active iff `dropout_rng` is non-null.
LossTerms total_loss(ad::Graph& graph, const BoundModel& model,
                     std::span<const VideoSample> batch, const LossConfig& config,
                     std::mt19937_64* dropout_rng);

}  // namespace rtfm
