#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace rtfm::sim {

/// Scalar magnitude distribution: Gaussian truncated at zero.
struct MagnitudeDist {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Setup for the expected-separability experiment. An abnormal bag holds
/// `mu` abnormal and T - mu normal snippet magnitudes; a normal bag holds T
/// normal magnitudes.
struct SimSpec {
  std::size_t T = 32;
  std::size_t mu = 3;
  double epsilon = 0.4;
  std::size_t k_min = 1;
  std::size_t k_max = 16;
  std::size_t trials = 10000;
  MagnitudeDist abnormal{8.0, 0.0};
  MagnitudeDist normal{3.0, 0.0};
  std::uint64_t seed = 0;

  void validate() const;
};

struct CurvePoint {
  std::size_t k = 0;
  double empirical_mean = 0.0;
  double empirical_se = 0.0;
  double analytic = 0.0;
};

struct SeparabilityCurve {
  std::size_t mu = 0;
  std::vector<CurvePoint> points;  // ascending k
};

/// Probability that a top-k snippet of an abnormal bag is abnormal,
/// min(mu, k) / (k + epsilon).
double abnormal_topk_probability(std::size_t mu, std::size_t k, double epsilon);

/// p_k * E|x+| + (1 - p_k) * E|x-| - E|x-|, i.e. p_k * (E|x+| - E|x-|).
double analytic_expected_separability(const SimSpec& spec, std::size_t k);

/// Monte-Carlo estimate of E[g_k(X+) - g_k(X-)] using true top-k selection,
/// alongside the analytic column.
SeparabilityCurve simulate_separability(const SimSpec& spec);

enum class Verdict { pass, fail, not_applicable };
std::string to_string(Verdict v);

struct MonotonicityReport {
  Verdict rising = Verdict::fail;   // nondecreasing on k in [1, mu]
  Verdict falling = Verdict::fail;  // value at mu exceeds every k >= mu + 3
  bool passed() const;
  std::string detail;
};

/// Which column of the curve a check reads.
enum class Column { empirical, analytic };

/// Checks both clauses of the theorem's shape on one column. Empirical
/// comparisons allow `se_slack` combined standard errors; the analytic
/// column is compared exactly. The falling clause is not applicable when the
/// curve is identically zero (equal means).
MonotonicityReport check_monotonicity(const SeparabilityCurve& curve, std::size_t mu,
                                      Column column = Column::empirical, double se_slack = 3.0);

void write_curve_csv(std::ostream& out, const SeparabilityCurve& curve);

}  // namespace rtfm::sim
