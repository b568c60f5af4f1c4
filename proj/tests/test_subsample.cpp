#include "smcmc/lin_gauss.hpp"
#include "smcmc/mtt.hpp"
#include "smcmc/subsample.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace smcmc;
using smcmc::testing::scalar_batch;
using smcmc::testing::vec;

namespace {

/// Exact mean log-likelihood ratio over the whole batch, computed directly from the model.
double exact_lambda(const StateSpaceModel& m, const MeasurementBatch& b, const StateVector& from,
                    const StateVector& to) {
  double s = 0.0;
  for (Index i = 0; i < b.size(); ++i) s += m.log_lik(b[i], to) - m.log_lik(b[i], from);
  return s / static_cast<double>(b.size());
}

/// Exact proxy-corrected mean, from independently computed gradients.
double exact_corrected_lambda(const StateSpaceModel& m, const MeasurementBatch& b, const StateVector& xp,
                              const StateVector& from, const StateVector& to) {
  double s = 0.0;
  for (Index i = 0; i < b.size(); ++i)
    s += m.log_lik(b[i], to) - m.log_lik(b[i], from) - m.grad_log_lik(b[i], xp).dot(to - from);
  return s / static_cast<double>(b.size());
}

struct MttFixture {
  MttParams p;
  std::unique_ptr<MttModel> m;
  MttScenario sc;

  explicit MttFixture(std::uint64_t seed, double lx = 100, double lc = 400) {
    p.target_rate = lx;
    p.clutter_rate = lc;
    m = std::make_unique<MttModel>(p);
    Rng rng(seed);
    sc = mtt_simulate(p, 1, rng);
  }
  const MeasurementBatch& batch() const { return sc.batches[0]; }
  StateVector near_truth(double sd, Rng& rng) const {
    StateVector x = sc.truth[1];
    for (Index d : m->likelihood_dims()) x(d) += sd * standard_normal(rng);
    return x;
  }
};

}  // namespace

TEST(SubsampleParams, Validation) {
  EXPECT_NO_THROW(SubsampleParams{}.validate());
  EXPECT_THROW((SubsampleParams{1.0, 0.1, 2.0}.validate()), ContractViolation);
  EXPECT_THROW((SubsampleParams{1.2, 1.5, 2.0}.validate()), ContractViolation);
  EXPECT_THROW((SubsampleParams{1.2, 0.0, 2.0}.validate()), ContractViolation);
  EXPECT_THROW((SubsampleParams{1.2, 0.1, 1.0}.validate()), ContractViolation);
}

TEST(BernsteinRadius, DirectEvaluation) {
  EXPECT_NEAR(bernstein_radius(0.0, 1.0, 10, 0.3), 3.0 * std::log(10.0) / 10.0, 1e-12);
  EXPECT_NEAR(bernstein_radius(0.0, 1.0, 10, 0.3), 0.69078, 1e-5);
  EXPECT_NEAR(bernstein_radius(1.0, 0.0, 10, 0.3), std::sqrt(2.0 * std::log(10.0) / 10.0), 1e-12);
  EXPECT_NEAR(bernstein_radius(1.0, 0.0, 10, 0.3), 0.678614, 1e-6);
}

TEST(BernsteinRadius, DecreasesInSampleSize) {
  double prev = bernstein_radius(0.7, 0.4, 1, 0.05);
  for (Index s = 2; s < 100000; s *= 2) {
    const double c = bernstein_radius(0.7, 0.4, s, 0.05);
    EXPECT_LT(c, prev);
    prev = c;
  }
  EXPECT_LT(prev, 0.01);
}

TEST(BernsteinRadius, RejectsBadDelta) {
  EXPECT_THROW(bernstein_radius(1.0, 1.0, 5, 0.0), ContractViolation);
  EXPECT_THROW(bernstein_radius(1.0, 1.0, 5, 1.0), ContractViolation);
  EXPECT_THROW(bernstein_radius(1.0, 1.0, 0, 0.5), ContractViolation);
}

TEST(DeltaSchedule, DirectEvaluation) {
  EXPECT_NEAR(delta_schedule(1, 2.0, 0.1), 0.05, 1e-15);
  EXPECT_NEAR(delta_schedule(2, 2.0, 0.1), 0.0125, 1e-15);
  EXPECT_THROW(delta_schedule(0, 2.0, 0.1), ContractViolation);
}

TEST(DeltaSchedule, SumsBelowBudget) {
  for (double p : {1.05, 1.5, 2.0, 3.0}) {
    double s = 0.0;
    const int n = 1000000;
    for (int w = 1; w <= n; ++w) s += delta_schedule(w, p, 0.1);
    // Tail bound: sum over w > n of w^-p <= n^(1-p) / (p - 1).
    const double tail = (p - 1.0) / p * 0.1 * std::pow(static_cast<double>(n), 1.0 - p) / (p - 1.0);
    EXPECT_LE(s + tail, 0.1) << "p = " << p;
  }
  double s = 0.0;
  for (int w = 1; w <= 1000000; ++w) s += delta_schedule(w, 2.0, 0.1);
  EXPECT_NEAR(s, 0.05 * std::numbers::pi * std::numbers::pi / 6.0, 1e-6);
}

TEST(Proxy, LinGaussExample) {
  LinGaussModel m(LinGaussParams::scalar());
  const auto batch = scalar_batch({1.0});
  BatchLikelihood lik(m, batch);
  const auto proxy = build_proxy(lik, vec({0.0}));
  EXPECT_EQ(lik.gradient_evals(), 1);
  EXPECT_NEAR(proxy.gradients()(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(proxy_eval(proxy, 0, vec({0.0}), vec({1.0})), 0.5, 1e-15);
  const double exact = m.log_lik(batch[0], vec({1.0})) - m.log_lik(batch[0], vec({0.0}));
  EXPECT_NEAR(exact, 0.25, 1e-12);
  EXPECT_LE(std::abs(exact - 0.5), m.hessian_bound() * (1.0 + 0.0) / 2.0 + 1e-15);
  EXPECT_NEAR(range_bound(proxy, vec({0.0}), vec({1.0})), 0.5, 1e-15);
  EXPECT_EQ(range_bound(proxy, vec({0.0}), vec({0.0})), 0.0);
}

TEST(Proxy, EmptyBatch) {
  LinGaussModel m(LinGaussParams::scalar());
  const MeasurementBatch batch(1, 0);
  BatchLikelihood lik(m, batch);
  const auto proxy = build_proxy(lik, vec({0.3}));
  EXPECT_EQ(proxy.size(), 0);
  EXPECT_EQ(proxy.mean_eval(vec({0.0}), vec({1.0})), 0.0);
}

TEST(Proxy, MeanGradientIsScaledTotalGradient) {
  MttFixture f(1);
  Rng rng(2);
  const StateVector xp = f.near_truth(0.3, rng);
  BatchLikelihood lik(*f.m, f.batch());
  const auto proxy = build_proxy(lik, xp);
  StateVector total = StateVector::Zero(xp.size());
  for (Index i = 0; i < f.batch().size(); ++i) total += f.m->grad_log_lik(f.batch()[i], xp);
  EXPECT_LT((proxy.mean_gradient() - total / static_cast<double>(f.batch().size())).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Proxy, AntisymmetricAndZeroOnDiagonal) {
  MttFixture f(3);
  Rng rng(4);
  BatchLikelihood lik(*f.m, f.batch());
  const auto proxy = build_proxy(lik, f.near_truth(0.2, rng));
  for (int t = 0; t < 50; ++t) {
    const StateVector a = f.near_truth(0.5, rng), b = f.near_truth(0.5, rng);
    const Index i = static_cast<Index>(uniform_index(static_cast<std::size_t>(f.batch().size()), rng));
    EXPECT_EQ(proxy_eval(proxy, i, a, a), 0.0);
    EXPECT_EQ(proxy_eval(proxy, i, a, b), -proxy_eval(proxy, i, b, a));
  }
}

TEST(Proxy, RangeBoundDominatesCorrectedTerms) {
  // Lin-Gauss: the corrected terms coincide, so the range is zero.
  LinGaussModel lg(LinGaussParams::scalar());
  Rng rng(5);
  for (int t = 0; t < 1000; ++t) {
    const auto batch = lg.simulate_measurements(vec({standard_normal(rng)}), 20, rng);
    BatchLikelihood lik(lg, batch);
    const StateVector xp = vec({standard_normal(rng)}), from = vec({standard_normal(rng)}),
                      to = vec({standard_normal(rng)});
    const auto proxy = build_proxy(lik, xp);
    double lo = 1e300, hi = -1e300;
    for (Index i = 0; i < batch.size(); ++i) {
      const double term = lg.log_lik(batch[i], to) - lg.log_lik(batch[i], from) - proxy.eval(i, from, to);
      lo = std::min(lo, term);
      hi = std::max(hi, term);
    }
    EXPECT_LE(hi - lo, range_bound(proxy, from, to) + 1e-9);
    EXPECT_LT(hi - lo, 1e-9);
  }
  // MTT: genuinely different terms.
  MttFixture f(6);
  for (int t = 0; t < 200; ++t) {
    BatchLikelihood lik(*f.m, f.batch());
    const auto proxy = build_proxy(lik, f.near_truth(0.5, rng));
    const StateVector from = f.near_truth(0.5, rng), to = f.near_truth(0.5, rng);
    double lo = 1e300, hi = -1e300;
    for (Index i = 0; i < f.batch().size(); ++i) {
      const double term = f.m->log_lik(f.batch()[i], to) - f.m->log_lik(f.batch()[i], from) - proxy.eval(i, from, to);
      lo = std::min(lo, term);
      hi = std::max(hi, term);
    }
    EXPECT_LE(hi - lo, range_bound(proxy, from, to));
  }
}

TEST(AdaptiveDecide, EmptyBatchIsVacuous) {
  LinGaussModel m(LinGaussParams::scalar());
  const MeasurementBatch batch(1, 0);
  BatchLikelihood lik(m, batch);
  const ProxyCache proxy;
  Rng rng(7);
  EXPECT_TRUE(adaptive_decide(vec({0.0}), vec({1.0}), lik, proxy, -0.1, {}, rng).accept);
  EXPECT_FALSE(adaptive_decide(vec({0.0}), vec({1.0}), lik, proxy, 0.1, {}, rng).accept);
  EXPECT_EQ(lik.likelihood_evals(), 0);
}

TEST(AdaptiveDecide, SingleMeasurementIsExact) {
  LinGaussModel m(LinGaussParams::scalar());
  const auto batch = scalar_batch({0.7});
  Rng rng(8);
  for (int t = 0; t < 500; ++t) {
    BatchLikelihood lik(m, batch);
    const auto proxy = build_proxy(lik, vec({standard_normal(rng)}));
    const StateVector from = vec({standard_normal(rng)}), to = vec({standard_normal(rng)});
    const double psi = 0.5 * standard_normal(rng);
    const auto out = adaptive_decide(from, to, lik, proxy, psi, {}, rng);
    EXPECT_EQ(out.consumed, 1);
    EXPECT_EQ(out.accept, exact_lambda(m, batch, from, to) > psi);
  }
}

TEST(AdaptiveDecide, QuadraticModelStopsEarly) {
  LinGaussModel m(LinGaussParams::scalar());
  Rng rng(9);
  const auto batch = m.simulate_measurements(vec({0.4}), 500, rng);
  BatchLikelihood lik(m, batch);
  const auto proxy = build_proxy(lik, vec({0.4}));
  // A clear gap between the exact ratio and the threshold.
  const StateVector from = vec({0.41}), to = vec({0.9});
  const double lambda = exact_lambda(m, batch, from, to);
  const auto out = adaptive_decide(from, to, lik, proxy, lambda + 0.05, {}, rng);
  EXPECT_LT(out.consumed, batch.size() / 4);
  EXPECT_FALSE(out.accept);
  EXPECT_NEAR(out.lambda + out.proxy_mean, lambda, 1e-10);
}

TEST(AdaptiveDecide, SamplesWithoutReplacementAndBoundsLoops) {
  MttFixture f(10);
  Rng rng(11);
  const Index M = f.batch().size();
  const int max_loops = static_cast<int>(std::ceil(std::log(static_cast<double>(M)) / std::log(1.2))) + 1;
  for (int t = 0; t < 300; ++t) {
    BatchLikelihood lik(*f.m, f.batch());
    const auto proxy = build_proxy(lik, f.near_truth(0.1, rng));
    const StateVector from = f.near_truth(0.1, rng), to = f.near_truth(0.1, rng);
    const double psi = std::log(uniform01(rng)) / static_cast<double>(M);
    const auto out = adaptive_decide(from, to, lik, proxy, psi, {}, rng);
    // Without a workspace every consumed index costs exactly two evaluations.
    EXPECT_EQ(lik.likelihood_evals(), 2 * out.consumed);
    EXPECT_GE(out.consumed, 1);
    EXPECT_LE(out.consumed, M);
    EXPECT_LE(out.loops, max_loops);
  }
}

TEST(AdaptiveDecide, ExhaustedBatchMatchesExactDecision) {
  MttFixture f(12);
  Rng rng(13);
  const SubsampleParams exhaustive{1.2, 1e-300, 2.0};
  const Index M = f.batch().size();
  for (int t = 0; t < 300; ++t) {
    BatchLikelihood lik(*f.m, f.batch());
    const auto proxy = build_proxy(lik, f.near_truth(0.1, rng));
    const StateVector from = f.near_truth(0.1, rng), to = f.near_truth(0.1, rng);
    const double psi = std::log(uniform01(rng)) / static_cast<double>(M);
    const auto out = adaptive_decide(from, to, lik, proxy, psi, exhaustive, rng);
    ASSERT_EQ(out.consumed, M);
    const double lambda = exact_lambda(*f.m, f.batch(), from, to);
    if (std::abs(lambda - psi) > 1e-12) EXPECT_EQ(out.accept, lambda > psi);
  }
}

TEST(AdaptiveDecide, DisagreementAndCoverage) {
  // Lin-Gauss M = 500 and MTT: decision disagreement <= delta_s, and
  // |Lambda_S - Lambda_M| <= c_S on early-stopped decisions >= 1 - delta_s.
  const SubsampleParams params;
  Rng rng(14);
  {
    LinGaussModel m(LinGaussParams::scalar());
    const auto batch = m.simulate_measurements(vec({0.0}), 500, rng);
    int disagree = 0;
    for (int t = 0; t < 1000; ++t) {
      BatchLikelihood lik(m, batch);
      const StateVector from = vec({0.06 * standard_normal(rng)});
      const auto proxy = build_proxy(lik, from);
      const StateVector to = from + vec({0.1 * standard_normal(rng)});
      const double psi = std::log(uniform01(rng)) / 500.0;
      disagree += adaptive_decide(from, to, lik, proxy, psi, params, rng).accept != (exact_lambda(m, batch, from, to) > psi);
    }
    EXPECT_LE(disagree / 1000.0, params.delta);
  }
  MttFixture f(15);
  const Index M = f.batch().size();
  int decisions = 0, disagree = 0, early = 0, covered = 0;
  while (early < 1000 && decisions < 20000) {
    BatchLikelihood lik(*f.m, f.batch());
    // Single-target moves, as in the block kernel.
    const StateVector from = f.near_truth(0.05, rng), xp = from;
    StateVector to = from;
    const int j = static_cast<int>(uniform_index(static_cast<std::size_t>(f.p.num_targets), rng));
    to(f.p.pos_x(j)) += 0.1 * standard_normal(rng);
    to(f.p.pos_y(j)) += 0.1 * standard_normal(rng);
    const auto proxy = build_proxy(lik, xp);
    const double psi = std::log(uniform01(rng)) / static_cast<double>(M);
    const auto out = adaptive_decide(from, to, lik, proxy, psi, params, rng);
    ++decisions;
    disagree += out.accept != (exact_lambda(*f.m, f.batch(), from, to) > psi);
    if (out.consumed < M) {
      ++early;
      covered += std::abs(out.lambda - exact_corrected_lambda(*f.m, f.batch(), xp, from, to)) <= out.radius;
    }
  }
  ASSERT_GE(early, 1000);
  EXPECT_LE(disagree / static_cast<double>(decisions), params.delta);
  EXPECT_GE(covered / static_cast<double>(early), 1.0 - params.delta);
}

namespace {

ParticleApproximation scalar_normal(int n, Rng& rng) {
  ParticleApproximation p;
  for (int i = 0; i < n; ++i) p.particles.push_back(vec({standard_normal(rng)}));
  return p;
}

}  // namespace

TEST(AsFilterStep, NegligibleBudgetReproducesExactFilter) {
  LinGaussModel m(LinGaussParams::scalar());
  Rng sim(16);
  const auto prev = scalar_normal(200, sim);
  const auto batch = m.simulate_measurements(vec({0.3}), 100, sim);
  for (auto stages : std::vector<std::vector<Stage>>{{Stage::kRefinePrev, Stage::kRefineCurrent},
                                                     {Stage::kJointDraw, Stage::kRefineCurrent}}) {
    KernelConfig cfg;
    cfg.num_samples = 300;
    cfg.burn_in = 30;
    cfg.stages = stages;
    cfg.current_proposal = CurrentProposal::kRandomWalk;
    cfg.rw_variance = 0.01;
    Rng a(17), b(17);
    const auto plain = run_filter_step(prev, batch, m, cfg, a);
    const auto as = as_filter_step(prev, batch, m, cfg, SubsampleParams{1.2, 1e-300, 2.0}, b);
    for (std::size_t i = 0; i < 300; ++i) EXPECT_EQ(plain.particles.particles[i](0), as.particles.particles[i](0));
    // Corrected terms are constant here, so early stopping stays exact.
    EXPECT_LE(as.diagnostics.likelihood_evals, plain.diagnostics.likelihood_evals);
    EXPECT_EQ(as.diagnostics.gradient_evals, 2 * batch.size());
    EXPECT_EQ(as.diagnostics.refine_current.accepted, plain.diagnostics.refine_current.accepted);
  }
}

TEST(AsFilterStep, NegligibleBudgetReproducesExactFilterOnMtt) {
  MttFixture f(18, 30, 60);
  Rng rng(19);
  ParticleApproximation prev;
  for (int i = 0; i < 100; ++i) prev.particles.push_back(f.sc.truth[0] + 0.3 * standard_normal_vector(12, rng));
  KernelConfig cfg;
  cfg.num_samples = 100;
  cfg.burn_in = 10;
  cfg.stages = {Stage::kJointDraw, Stage::kRefineCurrent};
  cfg.current_proposal = CurrentProposal::kRandomWalk;
  for (int t = 0; t < 3; ++t) cfg.blocks.push_back({f.p.pos_x(t), f.p.pos_y(t), f.p.vel_x(t), f.p.vel_y(t)});
  Rng a(20), b(20);
  const auto plain = run_filter_step(prev, f.batch(), *f.m, cfg, a);
  const auto as = as_filter_step(prev, f.batch(), *f.m, cfg, SubsampleParams{1.2, 1e-300, 2.0}, b);
  EXPECT_EQ(as.diagnostics.likelihood_evals, plain.diagnostics.likelihood_evals);
  EXPECT_DOUBLE_EQ(as.diagnostics.consumed_fraction(), 1.0);
  EXPECT_EQ(as.diagnostics.joint.accepted, plain.diagnostics.joint.accepted);
  EXPECT_EQ(as.diagnostics.refine_current.accepted, plain.diagnostics.refine_current.accepted);
  for (std::size_t i = 0; i < 100; ++i)
    EXPECT_LT((plain.particles.particles[i] - as.particles.particles[i]).norm(), 1e-12);
}

TEST(AsFilterStep, SavesEvaluationsAndRecordsConsumption) {
  LinGaussModel m(LinGaussParams::scalar());
  Rng sim(21);
  const auto prev = scalar_normal(300, sim);
  KernelConfig cfg;
  cfg.num_samples = 300;
  cfg.burn_in = 30;
  cfg.stages = {Stage::kRefinePrev, Stage::kRefineCurrent};
  double frac[2];
  const Index sizes[2] = {500, 5000};
  for (int s = 0; s < 2; ++s) {
    const auto batch = m.simulate_measurements(vec({0.3}), sizes[s], sim);
    Rng a(22), b(22);
    const auto plain = run_filter_step(prev, batch, m, cfg, a);
    const auto as = as_filter_step(prev, batch, m, cfg, SubsampleParams{}, b);
    EXPECT_LT(as.diagnostics.likelihood_evals, plain.diagnostics.likelihood_evals);
    EXPECT_EQ(as.diagnostics.subsample_decisions, 330);
    EXPECT_EQ(as.particles.size(), 300u);
    frac[s] = as.diagnostics.consumed_fraction();
    EXPECT_GT(frac[s], 0.0);
    EXPECT_LE(frac[s], 1.0);
  }
  EXPECT_LT(frac[1], frac[0]);
}

TEST(AsFilterStep, EmptyBatchAcceptsEverything) {
  LinGaussModel m(LinGaussParams::scalar());
  Rng rng(23);
  const auto prev = scalar_normal(20, rng);
  KernelConfig cfg;
  cfg.num_samples = 100;
  cfg.burn_in = 0;
  cfg.stages = {Stage::kJointDraw, Stage::kRefineCurrent};
  const auto r = as_filter_step(prev, MeasurementBatch(1, 0), m, cfg, SubsampleParams{}, rng);
  EXPECT_EQ(r.diagnostics.joint.accepted, 100);
  EXPECT_EQ(r.diagnostics.refine_current.accepted, 100);
  EXPECT_EQ(r.diagnostics.likelihood_evals, 0);
  EXPECT_TRUE(std::isnan(r.diagnostics.consumed_fraction()));
}
