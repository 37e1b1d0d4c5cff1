#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "options.hpp"
#include "rtfm/dataset.hpp"
#include "rtfm/errors.hpp"
#include "rtfm/eval.hpp"
#include "rtfm/grad_check.hpp"
#include "rtfm/io.hpp"
#include "rtfm/losses.hpp"
#include "rtfm/model.hpp"
#include "rtfm/theorem_sim.hpp"
#include "rtfm/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace rtfm::cli {
namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

// Runtime failure that is not an exception of the library (failed check).
struct CheckFailed {
  std::string message;
};

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = "out";
};

void add_common(CLI::App& cmd, Options& opts, Common& c) {
  cmd.add_option("--config", c.config, "JSON config file; flags override its keys");
  opts.add("seed", &c.seed, "RNG seed");
  opts.add("out", &c.out, "output directory");
}

fs::path prepare(Options& opts, const Common& c) {
  fs::path out(c.out);
  fs::create_directories(out);
  write_json(out / "resolved_config.json", opts.snapshot());
  return out;
}

void resolve(Options& opts, const Common& c) {
  if (!c.config.empty()) opts.apply_config(c.config);
}

// Model and training keys shared by train, sweep and gradcheck.
struct ModelKeys {
  std::size_t T = 32;
  std::size_t D = 64;
  std::vector<std::size_t> dilation_rates{1, 2, 4};
  std::string attention_norm = "none";
  std::vector<std::size_t> layer_widths{512, 128, 1};
  double dropout_rate = 0.7;

  ModelConfig resolve() const {
    ModelConfig m;
    m.mtn.T = T;
    m.mtn.D = D;
    m.mtn.dilation_rates = dilation_rates;
    m.mtn.attention_norm = parse_attention_norm(attention_norm);
    m.classifier.layer_widths = layer_widths;
    m.classifier.dropout_rate = dropout_rate;
    m.validate();
    return m;
  }
};

void add_model_keys(Options& opts, ModelKeys& m, bool with_shape) {
  if (with_shape) {
    opts.add("T", &m.T, "snippets per video");
    opts.add("D", &m.D, "feature dimension");
  }
  opts.add("dilation_rates", &m.dilation_rates, "PDC dilation rates");
  opts.add("attention_norm", &m.attention_norm, "none | scale_by_T | row_softmax");
  opts.add("layer_widths", &m.layer_widths, "classifier layer widths, last must be 1");
  opts.add("dropout_rate", &m.dropout_rate, "classifier dropout probability");
}

void add_loss_keys(Options& opts, LossConfig& l) {
  opts.add("k", &l.k, "top-k snippets per video");
  opts.add("margin", &l.margin, "hinge margin m");
  opts.add("smoothness_weight", &l.smoothness_weight, "lambda_1");
  opts.add("sparsity_weight", &l.sparsity_weight, "lambda_2");
}

void add_train_keys(Options& opts, TrainConfig& t) {
  opts.add("learning_rate", &t.learning_rate, "Adam learning rate");
  opts.add("weight_decay", &t.weight_decay, "decoupled weight decay");
  opts.add("batch_abnormal", &t.batch_abnormal, "abnormal videos per batch");
  opts.add("batch_normal", &t.batch_normal, "normal videos per batch");
  opts.add("epochs", &t.epochs, "training epochs");
  add_loss_keys(opts, t.loss);
}

struct LoadedData {
  DatasetManifest manifest;
  std::vector<Video> videos;
};

LoadedData load(const std::string& manifest_path) {
  if (manifest_path.empty()) throw ValidationError("--manifest is required");
  LoadedData d;
  d.manifest = io::read_manifest(manifest_path);
  d.videos = load_videos(d.manifest, manifest_path);
  return d;
}

void check_model_matches(const ModelConfig& m, const DatasetManifest& data) {
  if (data.entries.empty()) return;
  if (m.mtn.T != data.T || m.mtn.D != data.D) {
    throw ValidationError("model expects T=" + std::to_string(m.mtn.T) + ", D=" +
                          std::to_string(m.mtn.D) + " but dataset has T=" +
                          std::to_string(data.T) + ", D=" + std::to_string(data.D));
  }
}

json nan_safe(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

// ---- gen

void register_gen(CLI::App& app, std::function<void()>& run) {
  auto* cmd = app.add_subcommand("gen", "generate a synthetic dataset");
  auto opts = std::make_shared<Options>(*cmd);
  auto c = std::make_shared<Common>();
  auto s = std::make_shared<SyntheticSpec>();
  add_common(*cmd, *opts, *c);
  opts->add("n_normal", &s->n_normal, "normal training videos");
  opts->add("n_abnormal", &s->n_abnormal, "abnormal training videos");
  opts->add("n_test_normal", &s->n_test_normal, "normal test videos");
  opts->add("n_test_abnormal", &s->n_test_abnormal, "abnormal test videos");
  opts->add("T", &s->T, "snippets per video");
  opts->add("D", &s->D, "feature dimension");
  opts->add("mu", &s->mu, "abnormal snippets per abnormal video");
  opts->add("base_mean", &s->base_mean, "per-component mean of snippet features");
  opts->add("base_stddev", &s->base_stddev, "per-component stddev of snippet features");
  opts->add("noise_stddev", &s->noise_stddev, "stddev of the per-video feature offset");
  opts->add("perturbation", &s->perturbation, "length of the abnormal perturbation");
  opts->add("direction", &s->direction, "perturbation direction (empty: random)");
  cmd->callback([&run, opts, c, s] {
    run = [opts, c, s] {
      resolve(*opts, *c);
      s->seed = c->seed;
      s->validate();
      const fs::path out = prepare(*opts, *c);
      auto ds = generate_synthetic_dataset(*s);
      write_dataset(ds.videos, out);
      std::cout << "wrote " << ds.videos.size() << " videos to " << (out / "manifest.jsonl")
                << '\n';
    };
  });
}

// ---- train

void register_train(CLI::App& app, std::function<void()>& run) {
  auto* cmd = app.add_subcommand("train", "train a model on a dataset manifest");
  auto opts = std::make_shared<Options>(*cmd);
  auto c = std::make_shared<Common>();
  auto manifest = std::make_shared<std::string>();
  auto m = std::make_shared<ModelKeys>();
  auto t = std::make_shared<TrainConfig>();
  add_common(*cmd, *opts, *c);
  opts->add("manifest", manifest.get(), "dataset manifest path");
  add_model_keys(*opts, *m, false);
  add_train_keys(*opts, *t);
  cmd->callback([&run, opts, c, manifest, m, t] {
    run = [opts, c, manifest, m, t] {
      resolve(*opts, *c);
      t->seed = c->seed;
      t->validate();
      auto data = load(*manifest);
      m->T = data.manifest.T;
      m->D = data.manifest.D;
      const ModelConfig model = m->resolve();
      const fs::path out = prepare(*opts, *c);
      auto train_set = select_split(data.videos, kTrainSplit);
      auto val_set = select_split(data.videos, kTestSplit);
      std::ofstream log(out / "train_log.csv");
      write_log_header(log);
      auto result = train(train_set, val_set, ModelParams::xavier(model, t->seed), *t, &log);
      io::save_checkpoint(out / "checkpoint.rtfm", result.params);
      if (!result.epochs.empty()) {
        const auto& last = result.epochs.back();
        std::cout << "epochs " << result.epochs.size() << ", steps " << result.steps.size()
                  << ", final loss " << last.loss_total << ", val_auc " << last.val_auc << '\n';
      }
      if (result.diverged) throw CheckFailed{result.message + " (last good checkpoint saved)"};
    };
  });
}

// ---- eval

void register_eval(CLI::App& app, std::function<void()>& run) {
  auto* cmd = app.add_subcommand("eval", "score a dataset split with a checkpoint");
  auto opts = std::make_shared<Options>(*cmd);
  auto c = std::make_shared<Common>();
  struct Keys {
    std::string manifest, checkpoint, split = kTestSplit;
    std::size_t k = 3, frame_expansion = 1;
  };
  auto k = std::make_shared<Keys>();
  add_common(*cmd, *opts, *c);
  opts->add("manifest", &k->manifest, "dataset manifest path");
  opts->add("checkpoint", &k->checkpoint, "checkpoint path");
  opts->add("split", &k->split, "split to evaluate (train | test)");
  opts->add("k", &k->k, "top-k for magnitude statistics");
  opts->add("frame_expansion", &k->frame_expansion, "repeat each snippet score this many times");
  cmd->callback([&run, opts, c, k] {
    run = [opts, c, k] {
      resolve(*opts, *c);
      if (k->checkpoint.empty()) throw ValidationError("--checkpoint is required");
      if (k->split != kTrainSplit && k->split != kTestSplit) {
        throw ValidationError("split must be 'train' or 'test'");
      }
      auto data = load(k->manifest);
      const ModelParams params = io::load_checkpoint(k->checkpoint);
      check_model_matches(params.config(), data.manifest);
      const fs::path out = prepare(*opts, *c);
      auto videos = select_split(data.videos, k->split);
      const EvalReport r = evaluate(params, videos, k->k, k->frame_expansion);
      fs::create_directories(out / "scores");
      for (const auto& seq : r.sequences) {
        std::ofstream f(out / "scores" / (seq.video_id + ".csv"));
        write_score_csv(f, seq);
      }
      json j = {{"auc", r.auc},
                {"ap", r.ap},
                {"videos", r.videos},
                {"snippets", r.snippets},
                {"frame_expansion", k->frame_expansion},
                {"topk_magnitude_abnormal", nan_safe(r.topk_magnitude_abnormal)},
                {"topk_magnitude_normal", nan_safe(r.topk_magnitude_normal)},
                {"mean_score_abnormal_snippets", nan_safe(r.mean_score_abnormal_snippets)},
                {"mean_score_normal_snippets", nan_safe(r.mean_score_normal_snippets)}};
      write_json(out / "metrics.json", j);
      std::cout << "auc " << r.auc << ", ap " << r.ap << '\n';
    };
  });
}

// ---- simulate

void register_simulate(CLI::App& app, std::function<void()>& run) {
  auto* cmd = app.add_subcommand("simulate", "expected-separability curve over k");
  auto opts = std::make_shared<Options>(*cmd);
  auto c = std::make_shared<Common>();
  auto s = std::make_shared<sim::SimSpec>();
  auto slack = std::make_shared<double>(3.0);
  add_common(*cmd, *opts, *c);
  opts->add("T", &s->T, "snippets per bag");
  opts->add("mu", &s->mu, "abnormal snippets per abnormal bag");
  opts->add("epsilon", &s->epsilon, "epsilon in min(mu,k)/(k+epsilon)");
  opts->add("k_min", &s->k_min, "smallest k");
  opts->add("k_max", &s->k_max, "largest k");
  opts->add("trials", &s->trials, "Monte-Carlo trials");
  opts->add("abnormal_mean", &s->abnormal.mean, "abnormal magnitude mean");
  opts->add("abnormal_stddev", &s->abnormal.stddev, "abnormal magnitude stddev");
  opts->add("normal_mean", &s->normal.mean, "normal magnitude mean");
  opts->add("normal_stddev", &s->normal.stddev, "normal magnitude stddev");
  opts->add("se_slack", slack.get(), "standard errors tolerated by the shape check");
  cmd->callback([&run, opts, c, s, slack] {
    run = [opts, c, s, slack] {
      resolve(*opts, *c);
      s->seed = c->seed;
      s->validate();
      const fs::path out = prepare(*opts, *c);
      const auto curve = sim::simulate_separability(*s);
      {
        std::ofstream f(out / "curve.csv");
        sim::write_curve_csv(f, curve);
      }
      const bool covered = s->k_min == 1 && s->k_max >= s->mu + 3;
      json j = {{"covered", covered}};
      bool ok = true;
      if (covered) {
        for (auto col : {sim::Column::empirical, sim::Column::analytic}) {
          const auto rep = sim::check_monotonicity(curve, s->mu, col, *slack);
          const char* name = col == sim::Column::empirical ? "empirical" : "analytic";
          j[name] = {{"rising", sim::to_string(rep.rising)},
                     {"falling", sim::to_string(rep.falling)},
                     {"passed", rep.passed()},
                     {"detail", rep.detail}};
          std::cout << name << ": rising " << sim::to_string(rep.rising) << ", falling "
                    << sim::to_string(rep.falling) << '\n';
          if (!rep.detail.empty()) std::cout << "  " << rep.detail << '\n';
          ok = ok && rep.passed();
        }
      } else {
        std::cout << "k range does not cover 1..mu+3; shape check skipped\n";
      }
      j["passed"] = ok;
      write_json(out / "simulate_report.json", j);
      if (!ok) throw CheckFailed{"separability curve does not have the expected shape"};
    };
  });
}

// ---- gradcheck

void register_gradcheck(CLI::App& app, std::function<void()>& run) {
  auto* cmd = app.add_subcommand("gradcheck", "finite-difference check of the total loss");
  auto opts = std::make_shared<Options>(*cmd);
  auto c = std::make_shared<Common>();
  auto m = std::make_shared<ModelKeys>();
  m->T = 8;
  m->D = 16;
  auto loss = std::make_shared<LossConfig>();
  struct Keys {
    std::size_t n_abnormal = 2, n_normal = 2, max_entries = 64;
    double step = 1e-4, tol = 1e-4;
  };
  auto k = std::make_shared<Keys>();
  add_common(*cmd, *opts, *c);
  add_model_keys(*opts, *m, true);
  add_loss_keys(*opts, *loss);
  opts->add("n_abnormal", &k->n_abnormal, "abnormal videos in the micro-batch");
  opts->add("n_normal", &k->n_normal, "normal videos in the micro-batch");
  opts->add("step", &k->step, "central-difference step");
  opts->add("tol", &k->tol, "maximum relative error");
  opts->add("max_entries", &k->max_entries, "entries checked per tensor (0: all)");
  cmd->callback([&run, opts, c, m, loss, k] {
    run = [opts, c, m, loss, k] {
      resolve(*opts, *c);
      const ModelConfig model = m->resolve();
      loss->validate();
      const fs::path out = prepare(*opts, *c);
      SyntheticSpec spec;
      spec.T = model.mtn.T;
      spec.D = model.mtn.D;
      spec.mu = std::min<std::size_t>(3, spec.T);
      spec.n_abnormal = k->n_abnormal;
      spec.n_normal = k->n_normal;
      spec.n_test_abnormal = spec.n_test_normal = 0;
      spec.seed = c->seed;
      const auto ds = generate_synthetic_dataset(spec);
      std::vector<VideoSample> batch;
      for (const auto& v : ds.videos) batch.push_back({&v.features, v.label});
      ModelParams params = ModelParams::xavier(model, c->seed);
      const LossConfig lc = *loss;
      auto program = [&](ad::Graph& g) {
        BoundModel bm = bind(g, params);
        return total_loss(g, bm, batch, lc, nullptr).total;
      };
      ad::GradCheckOptions o;
      o.step = k->step;
      o.tol = k->tol;
      o.max_entries_per_tensor = k->max_entries;
      o.seed = c->seed;
      const auto named = params.named();
      const auto report = ad::grad_check(program, named, o);
      const std::string text = ad::format_report(report);
      std::ofstream(out / "gradcheck_report.txt") << text;
      std::cout << text;
      if (!report.passed) throw CheckFailed{"gradient check failed: " + report.failure};
    };
  });
}

// ---- sweep

void register_sweep(CLI::App& app, std::function<void()>& run) {
  auto* cmd = app.add_subcommand("sweep", "train once per value of k or margin");
  auto opts = std::make_shared<Options>(*cmd);
  auto c = std::make_shared<Common>();
  auto manifest = std::make_shared<std::string>();
  auto m = std::make_shared<ModelKeys>();
  auto t = std::make_shared<TrainConfig>();
  auto axis = std::make_shared<std::string>("k");
  auto values = std::make_shared<std::vector<double>>(std::vector<double>{1, 3, 8});
  add_common(*cmd, *opts, *c);
  opts->add("manifest", manifest.get(), "dataset manifest path");
  add_model_keys(*opts, *m, false);
  add_train_keys(*opts, *t);
  opts->add("axis", axis.get(), "swept parameter: k | margin");
  opts->add("values", values.get(), "values of the swept parameter");
  cmd->callback([&run, opts, c, manifest, m, t, axis, values] {
    run = [opts, c, manifest, m, t, axis, values] {
      resolve(*opts, *c);
      SweepAxis ax;
      if (*axis == "k") {
        ax = SweepAxis::k;
      } else if (*axis == "margin") {
        ax = SweepAxis::margin;
      } else {
        throw ValidationError("axis must be 'k' or 'margin', got '" + *axis + "'");
      }
      t->seed = c->seed;
      t->validate();
      auto data = load(*manifest);
      m->T = data.manifest.T;
      m->D = data.manifest.D;
      const ModelConfig model = m->resolve();
      const fs::path out = prepare(*opts, *c);
      auto rows = sweep(select_split(data.videos, kTrainSplit),
                        select_split(data.videos, kTestSplit), model, *t, ax, *values);
      std::ofstream f(out / "sweep.csv");
      f.precision(17);
      f << *axis << ",auc,diverged\n";
      for (const auto& r : rows) {
        f << r.value << ',' << r.auc << ',' << (r.diverged ? 1 : 0) << '\n';
        std::cout << *axis << '=' << r.value << " auc " << r.auc << (r.diverged ? " (diverged)" : "")
                  << '\n';
      }
    };
  });
}

}  // namespace
}  // namespace rtfm::cli

int main(int argc, char** argv) {
  using namespace rtfm::cli;
  CLI::App app{"rtfm: magnitude-based weakly supervised anomaly detection"};
  app.require_subcommand(1);
  std::function<void()> run;
  register_gen(app, run);
  register_train(app, run);
  register_eval(app, run);
  register_simulate(app, run);
  register_gradcheck(app, run);
  register_sweep(app, run);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }
  try {
    run();
  } catch (const rtfm::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const rtfm::ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const rtfm::DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const CheckFailed& e) {
    std::cerr << "failed: " << e.message << '\n';
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
