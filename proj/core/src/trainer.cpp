#include "rtfm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "rtfm/errors.hpp"
#include "rtfm/metrics.hpp"

namespace rtfm {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("train: learning_rate must be positive");
  if (weight_decay < 0.0) throw ValidationError("train: weight_decay must be >= 0");
  if (batch_abnormal < 1 || batch_normal < 1) {
    throw ValidationError("train: batch_abnormal and batch_normal must be >= 1");
  }
  if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
  loss.validate();
}

void adam_step(std::span<Tensor* const> params, OptimState& state, double learning_rate,
               double weight_decay) {
  if (state.first_moment.empty()) {
    for (const Tensor* p : params) {
      state.first_moment.emplace_back(p->size(), 0.0);
      state.second_moment.emplace_back(p->size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: optimiser state tracks a different parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& p = *params[i];
    if (state.first_moment[i].size() != p.size()) {
      throw DimensionError("adam_step: moment shape differs from parameter shape");
    }
    if (!p.has_grad()) continue;
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient rejected");
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double decay = 1.0 - learning_rate * weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto grad = p.grad();
    auto values = p.values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      values[j] = values[j] * decay - learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

BatchSampler::BatchSampler(std::vector<std::size_t> abnormal, std::vector<std::size_t> normal,
                           std::size_t batch_abnormal, std::size_t batch_normal,
                           std::uint64_t seed)
    : batch_abnormal_(batch_abnormal), batch_normal_(batch_normal), rng_(seed) {
  if (abnormal.size() < batch_abnormal || normal.size() < batch_normal) {
    throw ValidationError("dataset has " + std::to_string(abnormal.size()) + " abnormal and " +
                          std::to_string(normal.size()) + " normal videos; batches need " +
                          std::to_string(batch_abnormal) + " and " +
                          std::to_string(batch_normal));
  }
  abnormal_.items = std::move(abnormal);
  normal_.items = std::move(normal);
  std::shuffle(abnormal_.items.begin(), abnormal_.items.end(), rng_);
  std::shuffle(normal_.items.begin(), normal_.items.end(), rng_);
}

void BatchSampler::draw(Pool& pool, std::size_t count, std::vector<std::size_t>& out) {
  const std::size_t first = out.size();
  for (std::size_t n = 0; n < count; ++n) {
    if (pool.cursor == pool.items.size()) {
      std::shuffle(pool.items.begin(), pool.items.end(), rng_);
      pool.cursor = 0;
      // Keep the current batch free of duplicates across the reshuffle.
      auto taken = [&](std::size_t v) {
        return std::find(out.begin() + static_cast<std::ptrdiff_t>(first), out.end(), v) !=
               out.end();
      };
      std::stable_partition(pool.items.begin(), pool.items.end(),
                            [&](std::size_t v) { return !taken(v); });
    }
    out.push_back(pool.items[pool.cursor++]);
  }
}

std::vector<std::size_t> BatchSampler::next() {
  std::vector<std::size_t> out;
  out.reserve(batch_abnormal_ + batch_normal_);
  draw(abnormal_, batch_abnormal_, out);
  draw(normal_, batch_normal_, out);
  return out;
}

std::size_t BatchSampler::steps_per_epoch() const {
  auto ceil_div = [](std::size_t a, std::size_t b) { return (a + b - 1) / b; };
  return std::max(ceil_div(abnormal_.items.size(), batch_abnormal_),
                  ceil_div(normal_.items.size(), batch_normal_));
}

namespace {

// Independent RNG streams derived from the run seed.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

constexpr std::uint64_t kSamplerStream = 1;
constexpr std::uint64_t kDropoutStream = 2;

}  // namespace

BatchSampler make_sampler(std::span<const Video* const> videos, const TrainConfig& config) {
  std::vector<std::size_t> abnormal, normal;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    (videos[i]->label == 1 ? abnormal : normal).push_back(i);
  }
  return BatchSampler(std::move(abnormal), std::move(normal), config.batch_abnormal,
                      config.batch_normal, stream_seed(config.seed, kSamplerStream));
}

void write_log_header(std::ostream& out) {
  out << "epoch,step,loss_total,loss_s,loss_f,g_abn,g_norm,val_auc\n";
}

double snippet_auc(const ModelParams& params, std::span<const Video* const> videos) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const Video* v : videos) {
    if (v->snippet_labels.empty()) continue;
    Tensor s = classify_snippets(params, mtn_forward(params, v->features));
    scores.insert(scores.end(), s.values().begin(), s.values().end());
    labels.insert(labels.end(), v->snippet_labels.begin(), v->snippet_labels.end());
  }
  const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
  if (!has_pos || !has_neg) return std::numeric_limits<double>::quiet_NaN();
  return auc(scores, labels);
}

TrainResult train(std::span<const Video* const> train_set, std::span<const Video* const> val_set,
                  ModelParams params, const TrainConfig& config, std::ostream* log_csv) {
  config.validate();
  const auto& mc = params.config();
  for (const Video* v : train_set) {
    if (v->features.rows() != mc.mtn.T || v->features.cols() != mc.mtn.D) {
      throw ValidationError("video " + v->id + " has features " +
                            shape_string(v->features.shape()) + ", model expects [" +
                            std::to_string(mc.mtn.T) + "x" + std::to_string(mc.mtn.D) + "]");
    }
  }
  if (config.loss.k > mc.mtn.T) {
    throw ValidationError("train: k=" + std::to_string(config.loss.k) + " exceeds T=" +
                          std::to_string(mc.mtn.T));
  }

  BatchSampler sampler = make_sampler(train_set, config);
  std::mt19937_64 dropout_rng(stream_seed(config.seed, kDropoutStream));
  OptimState state;
  const auto tensors = params.tensors();

  TrainResult result;
  std::size_t global_step = 0;
  // Parameters that last produced a finite loss.
  ModelParams last_good = params;
  auto diverge = [&](std::size_t epoch, std::size_t step, const std::string& what) {
    params = last_good;
    if (result.diverged) return;
    result.diverged = true;
    result.message = "diverged at epoch " + std::to_string(epoch) + " step " +
                     std::to_string(step) + ": " + what;
  };
  auto validate_epoch = [&](std::size_t epoch) {
    try {
      return snippet_auc(params, val_set);
    } catch (const NumericError& e) {
      diverge(epoch, global_step, std::string("validation: ") + e.what());
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  const std::size_t steps = sampler.steps_per_epoch();

  for (std::size_t epoch = 1; epoch <= config.epochs && !result.diverged; ++epoch) {
    EpochLog ep;
    ep.epoch = epoch;
    std::size_t done = 0;
    for (std::size_t s = 0; s < steps; ++s) {
      const auto batch_idx = sampler.next();
      std::vector<VideoSample> batch;
      batch.reserve(batch_idx.size());
      for (auto i : batch_idx) batch.push_back({&train_set[i]->features, train_set[i]->label});

      StepLog log;
      try {
        params.zero_grad();
        ad::Graph graph;
        BoundModel model = bind(graph, params);
        LossTerms terms = total_loss(graph, model, batch, config.loss, &dropout_rng);
        log.loss_total = terms.total.value().item();
        if (!std::isfinite(log.loss_total)) throw NumericError("non-finite loss");
        graph.backward(terms.total);
        last_good = params;
        adam_step(tensors, state, config.learning_rate, config.weight_decay);
        log.loss_s = terms.separability_loss;
        log.loss_f = terms.classifier_loss;
        log.g_abnormal = terms.g_abnormal;
        log.g_normal = terms.g_normal;
        for (Tensor* t : tensors) {
          if (!t->all_finite()) throw NumericError("parameters became non-finite");
        }
      } catch (const NumericError& e) {
        diverge(epoch, global_step + 1, e.what());
        break;
      }
      ++global_step;
      ++done;
      log.epoch = epoch;
      log.step = global_step;
      ep.loss_total += log.loss_total;
      ep.loss_s += log.loss_s;
      ep.loss_f += log.loss_f;
      ep.g_abnormal += log.g_abnormal;
      ep.g_normal += log.g_normal;
      result.steps.push_back(log);

      if (log_csv != nullptr) {
        *log_csv << log.epoch << ',' << log.step << ',' << log.loss_total << ',' << log.loss_s
                 << ',' << log.loss_f << ',' << log.g_abnormal << ',' << log.g_normal << ',';
        if (s + 1 == steps) {
          ep.val_auc = validate_epoch(epoch);
          *log_csv << ep.val_auc;
        }
        *log_csv << '\n';
      } else if (s + 1 == steps) {
        ep.val_auc = validate_epoch(epoch);
      }
    }
    if (done == 0) break;
    const double n = static_cast<double>(done);
    ep.loss_total /= n;
    ep.loss_s /= n;
    ep.loss_f /= n;
    ep.g_abnormal /= n;
    ep.g_normal /= n;
    if (done != steps) ep.val_auc = validate_epoch(epoch);
    result.epochs.push_back(ep);
  }
  for (Tensor* t : params.tensors()) t->clear_grad();
  result.params = std::move(params);
  return result;
}

}  // namespace rtfm
