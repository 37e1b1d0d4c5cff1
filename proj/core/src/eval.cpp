#include "rtfm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>

#include "rtfm/errors.hpp"
#include "rtfm/losses.hpp"
#include "rtfm/metrics.hpp"
#include "rtfm/ops.hpp"

namespace rtfm {

ScoredSequence score_video(const ModelParams& params, const Video& video) {
  const auto& c = params.config().mtn;
  if (video.features.rank() != 2 || video.features.rows() != c.T ||
      video.features.cols() != c.D) {
    throw DimensionError("video " + video.id + " has features " +
                         shape_string(video.features.shape()) + ", model expects [" +
                         std::to_string(c.T) + "x" + std::to_string(c.D) + "]");
  }
  const Tensor x = mtn_forward(params, video.features);
  const Tensor s = classify_snippets(params, x);
  ScoredSequence seq;
  seq.video_id = video.id;
  seq.scores.assign(s.values().begin(), s.values().end());
  seq.magnitudes = ad::row_l2_norms(x);
  seq.labels = video.snippet_labels;
  return seq;
}

void expand_to_frames(std::vector<double>& scores, std::vector<int>& labels, std::size_t factor) {
  if (factor < 1) throw ParameterError("frame expansion factor must be >= 1");
  if (factor == 1) return;
  std::vector<double> s;
  std::vector<int> l;
  s.reserve(scores.size() * factor);
  l.reserve(labels.size() * factor);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    s.insert(s.end(), factor, scores[i]);
    l.insert(l.end(), factor, labels[i]);
  }
  scores = std::move(s);
  labels = std::move(l);
}

EvalReport evaluate(const ModelParams& params, std::span<const Video* const> videos,
                    std::size_t k, std::size_t frame_expansion) {
  EvalReport r;
  std::vector<double> scores;
  std::vector<int> labels;
  double abn_mag = 0.0, norm_mag = 0.0, abn_score = 0.0, norm_score = 0.0;
  std::size_t n_abn = 0, n_norm = 0, s_abn = 0, s_norm = 0;
  for (const Video* v : videos) {
    ScoredSequence seq = score_video(params, *v);
    // Top-k mean of the magnitudes, same selection rule as training.
    std::vector<double> mags = seq.magnitudes;
    if (k < 1 || k > mags.size()) throw ParameterError("evaluate: k out of range");
    std::partial_sort(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k), mags.end(),
                      std::greater<>());
    double g = 0.0;
    for (std::size_t i = 0; i < k; ++i) g += mags[i];
    g /= static_cast<double>(k);
    if (v->label == 1) {
      abn_mag += g;
      ++n_abn;
    } else {
      norm_mag += g;
      ++n_norm;
    }
    if (!seq.labels.empty()) {
      for (std::size_t t = 0; t < seq.scores.size(); ++t) {
        if (seq.labels[t] == 1) {
          abn_score += seq.scores[t];
          ++s_abn;
        } else {
          norm_score += seq.scores[t];
          ++s_norm;
        }
      }
      scores.insert(scores.end(), seq.scores.begin(), seq.scores.end());
      labels.insert(labels.end(), seq.labels.begin(), seq.labels.end());
    }
    r.sequences.push_back(std::move(seq));
  }
  const double nan = std::nan("");
  r.videos = videos.size();
  r.snippets = scores.size();
  r.topk_magnitude_abnormal = n_abn ? abn_mag / static_cast<double>(n_abn) : nan;
  r.topk_magnitude_normal = n_norm ? norm_mag / static_cast<double>(n_norm) : nan;
  r.mean_score_abnormal_snippets = s_abn ? abn_score / static_cast<double>(s_abn) : nan;
  r.mean_score_normal_snippets = s_norm ? norm_score / static_cast<double>(s_norm) : nan;
  expand_to_frames(scores, labels, frame_expansion);
  r.auc = auc(scores, labels);
  r.ap = average_precision(scores, labels);
  return r;
}

void write_score_csv(std::ostream& out, const ScoredSequence& seq) {
  out << "t,score,magnitude,label\n";
  out.precision(10);
  for (std::size_t t = 0; t < seq.scores.size(); ++t) {
    out << t << ',' << seq.scores[t] << ',' << seq.magnitudes[t] << ',';
    if (t < seq.labels.size()) out << seq.labels[t];
    out << '\n';
  }
}

std::vector<SweepRow> sweep(std::span<const Video* const> train_set,
                            std::span<const Video* const> eval_set, const ModelConfig& model,
                            const TrainConfig& base, SweepAxis axis,
                            std::span<const double> values) {
  if (values.empty()) throw ParameterError("sweep: no values given");
  std::vector<SweepRow> rows;
  for (double value : values) {
    TrainConfig cfg = base;
    if (axis == SweepAxis::k) {
      if (value < 1.0 || value != std::floor(value)) {
        throw ValidationError("sweep: k values must be positive integers");
      }
      cfg.loss.k = static_cast<std::size_t>(value);
    } else {
      cfg.loss.margin = value;
    }
    auto result = train(train_set, eval_set, ModelParams::xavier(model, base.seed), cfg);
    SweepRow row;
    row.value = value;
    row.diverged = result.diverged;
    row.auc = evaluate(result.params, eval_set, cfg.loss.k).auc;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace rtfm
