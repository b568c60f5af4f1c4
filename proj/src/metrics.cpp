#include "smcmc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace smcmc {

double StageCounter::rate_percent() const {
  if (proposed == 0) return std::numeric_limits<double>::quiet_NaN();
  return 100.0 * static_cast<double>(accepted) / static_cast<double>(proposed);
}

StageCounter& StageCounter::operator+=(const StageCounter& other) {
  accepted += other.accepted;
  proposed += other.proposed;
  return *this;
}

double StepDiagnostics::consumed_fraction() const {
  if (subsample_decisions == 0) return std::numeric_limits<double>::quiet_NaN();
  return consumed_fraction_sum / static_cast<double>(subsample_decisions);
}

StepDiagnostics& StepDiagnostics::operator+=(const StepDiagnostics& other) {
  joint += other.joint;
  refine_prev += other.refine_prev;
  refine_current += other.refine_current;
  likelihood_evals += other.likelihood_evals;
  gradient_evals += other.gradient_evals;
  subsample_decisions += other.subsample_decisions;
  consumed_fraction_sum += other.consumed_fraction_sum;
  prev_fallbacks += other.prev_fallbacks;
  wall_ms += other.wall_ms;
  return *this;
}

namespace {

std::vector<double> sorted_copy(std::span<const double> samples) {
  require(!samples.empty(), "KS statistic needs at least one sample");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace

double ks_statistic(std::span<const double> samples, const std::function<double(double)>& oracle_cdf) {
  const auto s = sorted_copy(samples);
  const double n = static_cast<double>(s.size());
  double best = 0.0;
  // Walk groups of tied values; the empirical cdf jumps from lo/n to hi/n.
  for (std::size_t lo = 0; lo < s.size();) {
    std::size_t hi = lo + 1;
    while (hi < s.size() && s[hi] == s[lo]) ++hi;
    const double g = oracle_cdf(s[lo]);
    best = std::max({best, static_cast<double>(hi) / n - g, g - static_cast<double>(lo) / n});
    lo = hi;
  }
  return best;
}

double ks_statistic_one_sided(std::span<const double> samples,
                              const std::function<double(double)>& oracle_cdf) {
  const auto s = sorted_copy(samples);
  const double n = static_cast<double>(s.size());
  double best = 0.0;
  for (std::size_t lo = 0; lo < s.size();) {
    std::size_t hi = lo + 1;
    while (hi < s.size() && s[hi] == s[lo]) ++hi;
    best = std::max(best, static_cast<double>(hi) / n - oracle_cdf(s[lo]));
    lo = hi;
  }
  return best;
}

double rmse_position(const StateVector& estimate, const StateVector& truth, std::span<const Index> dims) {
  require(estimate.size() == truth.size(), "estimate/truth dimension mismatch");
  require(!dims.empty(), "no position dimensions");
  double acc = 0.0;
  for (Index d : dims) {
    require(d >= 0 && d < truth.size(), "position dimension out of range");
    const double e = estimate(d) - truth(d);
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(dims.size()));
}

std::vector<double> rmse_positions(std::span<const StateVector> estimates,
                                   std::span<const StateVector> truth, std::span<const Index> dims) {
  require(estimates.size() == truth.size(), "estimate/truth length mismatch");
  std::vector<double> out;
  out.reserve(truth.size());
  for (std::size_t k = 0; k < truth.size(); ++k) out.push_back(rmse_position(estimates[k], truth[k], dims));
  return out;
}

AcceptanceSummary acceptance_summary(std::span<const double> rates) {
  require(!rates.empty(), "acceptance summary needs at least one rate");
  std::vector<double> s(rates.begin(), rates.end());
  std::sort(s.begin(), s.end());
  AcceptanceSummary out;
  out.min = s.front();
  out.max = s.back();
  const std::size_t n = s.size();
  out.median = n % 2 == 1 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
  double acc = 0.0;
  for (double v : s) acc += v;
  out.mean = acc / static_cast<double>(n);
  return out;
}

}  // namespace smcmc
