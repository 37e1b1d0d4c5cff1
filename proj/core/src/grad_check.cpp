#include "rtfm/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>

#include "rtfm/errors.hpp"

namespace rtfm::ad {

namespace {

struct Evaluation {
  double value;
  std::uint64_t branches;
};

Evaluation evaluate(const ScalarProgram& fn) {
  Graph g;
  Var loss = fn(g);
  return {loss.value().item(), g.branch_fingerprint()};
}

std::vector<std::size_t> pick_entries(std::size_t n, std::size_t limit,
                                      std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (limit == 0 || limit >= n) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport grad_check(const ScalarProgram& fn, std::span<const NamedParam> params,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  if (!(options.step > 0.0)) throw ParameterError("grad_check: step must be positive");

  std::vector<std::vector<double>> analytic;
  double base = 0.0;
  std::uint64_t base_branches = 0;
  try {
    for (const auto& p : params) p.tensor->zero_grad();
    Graph g;
    Var loss = fn(g);
    base = loss.value().item();
    base_branches = g.branch_fingerprint();
    g.backward(loss);
    for (const auto& p : params) {
      analytic.emplace_back(p.tensor->grad().begin(), p.tensor->grad().end());
    }
    const Evaluation again = evaluate(fn);
    if (again.value != base || again.branches != base_branches) {
      report.failure = "function is not deterministic";
      return report;
    }
  } catch (const NumericError& e) {
    report.failure = std::string("non-finite loss or gradient: ") + e.what();
    return report;
  }
  if (!std::isfinite(base)) {
    report.failure = "non-finite loss";
    return report;
  }

  std::mt19937_64 rng(options.seed);
  double total = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& tensor = *params[pi].tensor;
    TensorGradReport tr;
    tr.name = params[pi].name;
    double sum = 0.0;
    for (std::size_t i : pick_entries(tensor.size(), options.max_entries_per_tensor, rng)) {
      const double orig = tensor[i];
      Evaluation plus{}, minus{};
      try {
        tensor[i] = orig + options.step;
        plus = evaluate(fn);
        tensor[i] = orig - options.step;
        minus = evaluate(fn);
      } catch (const NumericError& e) {
        tensor[i] = orig;
        report.failure = "non-finite loss while perturbing " + tr.name + "[" +
                         std::to_string(i) + "]: " + e.what();
        return report;
      }
      tensor[i] = orig;
      if (plus.branches != base_branches || minus.branches != base_branches) {
        ++tr.skipped;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * options.step);
      const double a = analytic[pi][i];
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        report.failure = "non-finite gradient for " + tr.name;
        return report;
      }
      const double denom = std::max({std::fabs(a), std::fabs(numeric), options.floor});
      const double rel = std::fabs(a - numeric) / denom;
      if (tr.checked == 0 || rel > tr.max_rel_error) {
        tr.max_rel_error = rel;
        tr.worst_index = i;
        tr.worst_analytic = a;
        tr.worst_numeric = numeric;
      }
      sum += rel;
      ++tr.checked;
    }
    tr.mean_rel_error = tr.checked ? sum / static_cast<double>(tr.checked) : 0.0;
    report.max_rel_error = std::max(report.max_rel_error, tr.max_rel_error);
    report.checked += tr.checked;
    report.skipped += tr.skipped;
    total += sum;
    report.tensors.push_back(std::move(tr));
  }
  report.mean_rel_error =
      report.checked ? total / static_cast<double>(report.checked) : 0.0;
  report.passed = report.checked > 0 && report.max_rel_error < options.tol;
  return report;
}

std::string format_report(const GradCheckReport& report) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific;
  if (!report.failure.empty()) {
    os << "gradcheck FAILED: " << report.failure << '\n';
    return os.str();
  }
  for (const auto& t : report.tensors) {
    os << "  " << t.name << ": checked " << t.checked << ", max rel err "
       << t.max_rel_error << ", mean " << t.mean_rel_error;
    if (t.skipped) os << ", skipped " << t.skipped << " at non-smooth points";
    os << '\n';
  }
  os << "gradcheck " << (report.passed ? "PASSED" : "FAILED") << ": " << report.checked
     << " entries, max rel err " << report.max_rel_error << ", mean "
     << report.mean_rel_error << ", skipped " << report.skipped << '\n';
  return os.str();
}

}  // namespace rtfm::ad
