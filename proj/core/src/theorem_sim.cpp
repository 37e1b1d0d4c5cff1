#include "rtfm/theorem_sim.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <random>
#include <sstream>

#include "rtfm/errors.hpp"

namespace rtfm::sim {

void SimSpec::validate() const {
  if (T < 1) throw ValidationError("simulate: T must be >= 1");
  if (mu < 1 || mu > T) throw ValidationError("simulate: mu must satisfy 1 <= mu <= T");
  if (!(epsilon > 0.0)) throw ValidationError("simulate: epsilon must be positive");
  if (k_min < 1 || k_min > k_max || k_max > T) {
    throw ValidationError("simulate: k range must satisfy 1 <= k_min <= k_max <= T");
  }
  if (trials < 2) throw ValidationError("simulate: need at least 2 trials");
  if (abnormal.mean < 0.0 || normal.mean < 0.0 || abnormal.stddev < 0.0 || normal.stddev < 0.0) {
    throw ValidationError("simulate: magnitude means and stddevs must be non-negative");
  }
  if (abnormal.mean < normal.mean) {
    throw ValidationError(
        "simulate: hypothesis violated, abnormal mean magnitude must be >= normal mean");
  }
}

double abnormal_topk_probability(std::size_t mu, std::size_t k, double epsilon) {
  if (k < 1) throw ParameterError("k must be >= 1");
  return static_cast<double>(std::min(mu, k)) / (static_cast<double>(k) + epsilon);
}

double analytic_expected_separability(const SimSpec& spec, std::size_t k) {
  const double p = abnormal_topk_probability(spec.mu, k, spec.epsilon);
  const double ea = spec.abnormal.mean, en = spec.normal.mean;
  return p * ea + (1.0 - p) * en - en;
}

namespace {

double draw_magnitude(const MagnitudeDist& d, std::mt19937_64& rng) {
  if (d.stddev == 0.0) return std::max(d.mean, 0.0);
  std::normal_distribution<double> n(d.mean, d.stddev);
  for (int i = 0; i < 1000; ++i) {
    const double v = n(rng);
    if (v >= 0.0) return v;
  }
  return 0.0;
}

}  // namespace

SeparabilityCurve simulate_separability(const SimSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const std::size_t nk = spec.k_max - spec.k_min + 1;
  std::vector<double> mean(nk, 0.0), m2(nk, 0.0);
  std::vector<double> pos(spec.T), neg(spec.T);

  for (std::size_t trial = 0; trial < spec.trials; ++trial) {
    for (std::size_t t = 0; t < spec.T; ++t) {
      pos[t] = draw_magnitude(t < spec.mu ? spec.abnormal : spec.normal, rng);
    }
    for (std::size_t t = 0; t < spec.T; ++t) neg[t] = draw_magnitude(spec.normal, rng);
    std::sort(pos.begin(), pos.end(), std::greater<>());
    std::sort(neg.begin(), neg.end(), std::greater<>());
    double sp = 0.0, sn = 0.0;
    for (std::size_t k = 1; k <= spec.k_max; ++k) {
      sp += pos[k - 1];
      sn += neg[k - 1];
      if (k < spec.k_min) continue;
      const double d = (sp - sn) / static_cast<double>(k);
      const std::size_t i = k - spec.k_min;
      // Welford update.
      const double delta = d - mean[i];
      mean[i] += delta / static_cast<double>(trial + 1);
      m2[i] += delta * (d - mean[i]);
    }
  }

  SeparabilityCurve curve;
  curve.mu = spec.mu;
  const double n = static_cast<double>(spec.trials);
  for (std::size_t i = 0; i < nk; ++i) {
    CurvePoint p;
    p.k = spec.k_min + i;
    p.empirical_mean = mean[i];
    p.empirical_se = std::sqrt(m2[i] / (n - 1.0)) / std::sqrt(n);
    p.analytic = analytic_expected_separability(spec, p.k);
    curve.points.push_back(p);
  }
  return curve;
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::not_applicable: return "n/a";
  }
  return "fail";
}

bool MonotonicityReport::passed() const {
  return rising != Verdict::fail && falling != Verdict::fail;
}

MonotonicityReport check_monotonicity(const SeparabilityCurve& curve, std::size_t mu,
                                      Column column, double se_slack) {
  if (mu < 1) throw ParameterError("check_monotonicity: mu must be >= 1");
  // Values indexed by k.
  std::vector<double> v(mu + 4, 0.0), se(mu + 4, 0.0);
  std::vector<bool> have(mu + 4, false);
  std::size_t k_top = 0;
  for (const auto& p : curve.points) {
    if (p.k >= v.size()) {
      v.resize(p.k + 1, 0.0);
      se.resize(p.k + 1, 0.0);
      have.resize(p.k + 1, false);
    }
    v[p.k] = column == Column::empirical ? p.empirical_mean : p.analytic;
    se[p.k] = column == Column::empirical ? p.empirical_se : 0.0;
    have[p.k] = true;
    k_top = std::max(k_top, p.k);
  }
  for (std::size_t k = 1; k <= mu + 3; ++k) {
    if (!have[k]) {
      throw ParameterError("check_monotonicity: curve must cover k = 1.." + std::to_string(mu + 3));
    }
  }
  auto slack = [&](std::size_t a, std::size_t b) {
    return se_slack * std::sqrt(se[a] * se[a] + se[b] * se[b]);
  };

  MonotonicityReport r;
  std::ostringstream detail;
  r.rising = Verdict::pass;
  for (std::size_t k = 1; k < mu; ++k) {
    if (v[k + 1] < v[k] - slack(k, k + 1)) {
      r.rising = Verdict::fail;
      detail << "E[d] drops from k=" << k << " (" << v[k] << ") to k=" << k + 1 << " ("
             << v[k + 1] << "); ";
    }
  }

  bool flat = true;
  for (std::size_t k = 1; k <= k_top; ++k) {
    if (have[k] && std::fabs(v[k]) > se_slack * se[k]) flat = false;
  }
  if (flat) {
    r.falling = Verdict::not_applicable;
    detail << "curve indistinguishable from zero; decrease clause not applicable; ";
  } else {
    r.falling = Verdict::pass;
    for (std::size_t k = mu + 3; k <= k_top; ++k) {
      if (!have[k]) continue;
      if (!(v[mu] - v[k] > -slack(mu, k))) {
        r.falling = Verdict::fail;
        detail << "E[d] at k=" << k << " (" << v[k] << ") is not below k=mu (" << v[mu] << "); ";
      }
    }
  }
  r.detail = detail.str();
  return r;
}

void write_curve_csv(std::ostream& out, const SeparabilityCurve& curve) {
  out << "k,empirical_mean,empirical_se,analytic\n";
  out.precision(17);
  for (const auto& p : curve.points) {
    out << p.k << ',' << p.empirical_mean << ',' << p.empirical_se << ',' << p.analytic << '\n';
  }
}

}  // namespace rtfm::sim
