#include "rtfm/losses.hpp"

#include <cmath>
#include <numeric>

#include "rtfm/errors.hpp"
#include "rtfm/ops.hpp"

namespace rtfm {

void LossConfig::validate() const {
  if (k < 1) throw ValidationError("loss: k must be >= 1");
  if (!(margin > 0.0)) throw ValidationError("loss: margin must be positive");
  if (smoothness_weight < 0.0 || sparsity_weight < 0.0) {
    throw ValidationError("loss: regulariser weights must be non-negative");
  }
  if (!(bce_eps > 0.0 && bce_eps < 0.5)) throw ValidationError("loss: bce_eps out of range");
}

namespace {

void check_label(int y) {
  if (y != 0 && y != 1) throw ParameterError("labels must be 0 or 1, got " + std::to_string(y));
}

}  // namespace

double topk_mean_magnitude(const Tensor& x, std::size_t k) {
  const auto norms = ad::row_l2_norms(x);
  double s = 0.0;
  for (auto i : ad::topk_rows_by_l2(x, k)) s += norms[i];
  return s / static_cast<double>(k);
}

SeparabilityResult separability(const Tensor& x_abnormal, const Tensor& x_normal,
                                std::size_t k) {
  SeparabilityResult r;
  r.g_abnormal = topk_mean_magnitude(x_abnormal, k);
  r.g_normal = topk_mean_magnitude(x_normal, k);
  r.d = r.g_abnormal - r.g_normal;
  return r;
}

TopkMagnitude topk_mean_magnitude(ad::Var x, std::size_t k) {
  TopkMagnitude out;
  out.selected = ad::topk_rows_by_l2(x.value(), k);
  out.value = ad::mean(ad::gather_rows(ad::row_norms(x), out.selected));
  return out;
}

ad::Var magnitude_hinge(ad::Var g_i, ad::Var g_j, int y_i, int y_j, const LossConfig& config) {
  check_label(y_i);
  check_label(y_j);
  if (!(y_i == 1 && y_j == 0)) return g_i.graph->constant(Tensor::scalar(0.0));
  // max(0, m - d)
  return ad::relu(ad::add_scalar(ad::scale(ad::sub(g_i, g_j), -1.0), config.margin));
}

ad::Var magnitude_loss(ad::Var x_i, ad::Var x_j, int y_i, int y_j, const LossConfig& config) {
  check_label(y_i);
  check_label(y_j);
  if (!(y_i == 1 && y_j == 0)) return x_i.graph->constant(Tensor::scalar(0.0));
  auto gi = topk_mean_magnitude(x_i, config.k);
  auto gj = topk_mean_magnitude(x_j, config.k);
  return magnitude_hinge(gi.value, gj.value, y_i, y_j, config);
}

ad::Var classifier_loss(ad::Var scores, ad::Var x, int y, const LossConfig& config,
                        std::vector<std::size_t>* selected) {
  check_label(y);
  if (scores.shape().size() != 1 || scores.shape()[0] != x.value().rows()) {
    throw DimensionError("classifier_loss: scores " + shape_string(scores.shape()) +
                         " do not match features " + shape_string(x.shape()));
  }
  auto idx = ad::topk_rows_by_l2(x.value(), config.k);
  ad::Var f = ad::clamp(ad::gather_rows(scores, idx), config.bce_eps, 1.0 - config.bce_eps);
  if (selected != nullptr) *selected = idx;
  ad::Var p = (y == 1) ? f : ad::add_scalar(ad::scale(f, -1.0), 1.0);
  return ad::scale(ad::sum(ad::log(p)), -1.0);
}

ad::Var smoothness(ad::Var scores) {
  const std::size_t T = scores.shape().at(0);
  if (T < 2) return scores.graph->constant(Tensor::scalar(0.0));
  ad::Var diff = ad::sub(ad::slice_rows(scores, 1, T), ad::slice_rows(scores, 0, T - 1));
  return ad::sum(ad::square(diff));
}

ad::Var sparsity(ad::Var scores) { return ad::sum(ad::abs(scores)); }

LossTerms total_loss(ad::Graph& graph, const BoundModel& model,
                     std::span<const VideoSample> batch, const LossConfig& config,
                     std::mt19937_64* dropout_rng) {
  config.validate();
  std::vector<std::size_t> abnormal, normal;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    check_label(batch[i].label);
    (batch[i].label == 1 ? abnormal : normal).push_back(i);
  }
  if (abnormal.empty() || normal.empty()) {
    throw ContractError("total_loss needs at least one abnormal and one normal video");
  }

  LossTerms terms;
  std::vector<ad::Var> g(batch.size());
  std::vector<ad::Var> per_video;
  double cls_sum = 0.0, reg_sum = 0.0;
  terms.selected.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ad::Var f = graph.constant_ref(*batch[i].features);
    ad::Var x = mtn_forward(f, model);
    auto top = topk_mean_magnitude(x, config.k);
    g[i] = top.value;
    ad::Var scores = classify_snippets(x, model, dropout_rng);
    std::vector<std::size_t> sel;
    ad::Var term = classifier_loss(scores, x, batch[i].label, config, &sel);
    cls_sum += term.value().item();
    if (sel != top.selected) throw ContractError("top-k selection mismatch");
    terms.selected[i] = std::move(sel);
    if (batch[i].label == 1) {
      ad::Var reg = ad::add(ad::scale(smoothness(scores), config.smoothness_weight),
                            ad::scale(sparsity(scores), config.sparsity_weight));
      reg_sum += reg.value().item();
      term = ad::add(term, reg);
      terms.g_abnormal += g[i].value().item();
    } else {
      terms.g_normal += g[i].value().item();
    }
    per_video.push_back(term);
  }

  std::vector<ad::Var> hinges;
  hinges.reserve(abnormal.size() * normal.size());
  for (auto i : abnormal)
    for (auto j : normal) hinges.push_back(magnitude_hinge(g[i], g[j], 1, 0, config));

  auto mean_of = [&](const std::vector<ad::Var>& vars) {
    ad::Var acc = vars[0];
    for (std::size_t i = 1; i < vars.size(); ++i) acc = ad::add(acc, vars[i]);
    return ad::scale(acc, 1.0 / static_cast<double>(vars.size()));
  };
  ad::Var ls = mean_of(hinges);
  ad::Var lf = mean_of(per_video);
  terms.total = ad::add(ls, lf);

  const double nv = static_cast<double>(batch.size());
  terms.separability_loss = ls.value().item();
  terms.classifier_loss = cls_sum / nv;
  terms.regularizer = reg_sum / nv;
  terms.g_abnormal /= static_cast<double>(abnormal.size());
  terms.g_normal /= static_cast<double>(normal.size());
  return terms;
}

}  // namespace rtfm
