#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rtfm/graph.hpp"
#include "rtfm/tensor.hpp"

namespace rtfm::ad {

/// Builds a scalar loss on a fresh graph. Must bind the checked tensors via
/// Graph::parameter and must be deterministic.
using ScalarProgram = std::function<Var(Graph&)>;

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

struct GradCheckOptions {
  double step = 1e-4;
  double tol = 1e-4;
  /// Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  /// Entries checked per tensor; 0 checks all of them. Larger tensors are
  /// subsampled with `seed`.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct TensorGradReport {
  std::string name;
  std::size_t checked = 0;
  /// Entries whose +-step stencil crosses a non-smooth point (a ReLU or clamp
  /// boundary, a change of top-k set); central differences do not apply there.
  std::size_t skipped = 0;
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  /// Worst entry.
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckReport {
  bool passed = false;
  /// Empty unless the check itself failed (non-finite or non-deterministic).
  std::string failure;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  std::vector<TensorGradReport> tensors;
};

/// Compares reverse-mode gradients against central finite differences.
/// Never throws for numeric trouble inside `fn`; that is reported instead.
/// Entries whose stencil changes the graph's branch fingerprint are counted
/// as skipped rather than compared. Passes iff at least one entry was
/// compared and the max relative error is below tol.
GradCheckReport grad_check(const ScalarProgram& fn, std::span<const NamedParam> params,
                           const GradCheckOptions& options = {});

std::string format_report(const GradCheckReport& report);

}  // namespace rtfm::ad
