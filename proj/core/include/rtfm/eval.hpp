#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rtfm/dataset.hpp"
#include "rtfm/model.hpp"
#include "rtfm/trainer.hpp"

namespace rtfm {

/// Inference trace of one video: classifier scores, feature magnitudes of the
/// temporal embeddings, and ground truth (empty if unknown).
struct ScoredSequence {
  std::string video_id;
  std::vector<double> scores;
  std::vector<double> magnitudes;
  std::vector<int> labels;
};

/// Runs the temporal network and the classifier in inference mode.
ScoredSequence score_video(const ModelParams& params, const Video& video);

struct EvalReport {
  double auc = 0.0;
  double ap = 0.0;
  std::size_t videos = 0;
  std::size_t snippets = 0;
  /// Mean top-k magnitude over abnormal and normal videos.
  double topk_magnitude_abnormal = 0.0;
  double topk_magnitude_normal = 0.0;
  /// Mean score over abnormal and normal ground-truth snippets.
  double mean_score_abnormal_snippets = 0.0;
  double mean_score_normal_snippets = 0.0;
  std::vector<ScoredSequence> sequences;
};

/// Repeats each snippet's score and label `factor` times (snippet -> frame).
void expand_to_frames(std::vector<double>& scores, std::vector<int>& labels, std::size_t factor);

/// Pools per-snippet scores of labelled videos and computes AUC and AP.
EvalReport evaluate(const ModelParams& params, std::span<const Video* const> videos,
                    std::size_t k, std::size_t frame_expansion = 1);

/// CSV with columns t, score, magnitude, label.
void write_score_csv(std::ostream& out, const ScoredSequence& seq);

enum class SweepAxis { k, margin };

struct SweepRow {
  double value = 0.0;
  double auc = 0.0;
  bool diverged = false;
};

/// Trains one model per value (same seed and initialisation) and reports the
/// evaluation AUC on `eval_set`.
std::vector<SweepRow> sweep(std::span<const Video* const> train_set,
                            std::span<const Video* const> eval_set, const ModelConfig& model,
                            const TrainConfig& base, SweepAxis axis,
                            std::span<const double> values);

}  // namespace rtfm
