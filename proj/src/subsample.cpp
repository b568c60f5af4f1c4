#include "smcmc/subsample.hpp"

#include "chain_runner.hpp"

#include <algorithm>
#include <cmath>

namespace smcmc {

void SubsampleParams::validate() const {
  require(std::isfinite(gamma) && gamma > 1.0, "subsample.gamma_s must be > 1");
  require(std::isfinite(delta) && delta > 0.0 && delta < 1.0, "subsample.delta_s must be in (0, 1)");
  require(std::isfinite(p) && p > 1.0, "subsample.p_s must be > 1");
}

ProxyCache::ProxyCache(StateVector expansion_point, Matrix gradients, double hessian_bound,
                       std::vector<Index> likelihood_dims)
    : expansion_point_(std::move(expansion_point)),
      gradients_(std::move(gradients)),
      hessian_bound_(hessian_bound),
      dims_(std::move(likelihood_dims)) {
  require(gradients_.rows() == expansion_point_.size(), "ProxyCache: gradient dimension mismatch");
  require(hessian_bound_ >= 0.0, "ProxyCache: negative Hessian bound");
  mean_gradient_ = gradients_.cols() > 0 ? Vector(gradients_.rowwise().mean())
                                         : Vector::Zero(expansion_point_.size());
}

double ProxyCache::eval(Index i, const StateVector& from, const StateVector& to) const {
  return gradients_.col(i).dot(to - from);
}

double ProxyCache::mean_eval(const StateVector& from, const StateVector& to) const {
  return mean_gradient_.dot(to - from);
}

double ProxyCache::range_bound(const StateVector& from, const StateVector& to) const {
  double a = 0.0, b = 0.0;
  for (Index d : dims_) {
    const double u = from(d) - expansion_point_(d);
    const double v = to(d) - expansion_point_(d);
    a += u * u;
    b += v * v;
  }
  return hessian_bound_ * (a + b);
}

ProxyCache build_proxy(BatchLikelihood& lik, const StateVector& x_plus) {
  Matrix g;
  lik.gradients(x_plus, g);
  return ProxyCache(x_plus, std::move(g), lik.model().hessian_bound(), lik.model().likelihood_dims());
}

double proxy_eval(const ProxyCache& proxy, Index i, const StateVector& from, const StateVector& to) {
  return proxy.eval(i, from, to);
}

double range_bound(const ProxyCache& proxy, const StateVector& from, const StateVector& to) {
  return proxy.range_bound(from, to);
}

double bernstein_radius(double variance, double range, Index sample_size, double delta) {
  require(sample_size >= 1, "bernstein_radius: sample size must be >= 1");
  require(delta > 0.0 && delta < 1.0, "bernstein_radius: delta must be in (0, 1)");
  const double s = static_cast<double>(sample_size);
  const double l = std::log(3.0 / delta);
  return std::sqrt(2.0 * std::max(variance, 0.0) * l / s) + 3.0 * range * l / s;
}

double delta_schedule(int w, double p, double delta) {
  require(w >= 1, "delta_schedule: w must be >= 1");
  return (p - 1.0) / (p * std::pow(static_cast<double>(w), p)) * delta;
}

SubsampleWorkspace::SubsampleWorkspace(Index batch_size) { reset(batch_size); }

void SubsampleWorkspace::reset(Index batch_size) {
  const auto m = static_cast<std::size_t>(batch_size);
  perm_.resize(m);
  for (std::size_t i = 0; i < m; ++i) perm_[i] = static_cast<Index>(i);
  current_.assign(m, 0.0);
  stamp_.assign(m, 0);
  epoch_ = 1;
}

SubsampleOutcome adaptive_decide(const StateVector& from, const StateVector& to, BatchLikelihood& lik,
                                 const ProxyCache& proxy, double psi, const SubsampleParams& params,
                                 Rng& rng, SubsampleWorkspace* workspace) {
  const Index M = lik.size();
  SubsampleOutcome out;
  if (M == 0) {
    out.accept = 0.0 > psi;
    return out;
  }
  require(proxy.size() == M, "adaptive_decide: proxy does not match the batch");

  SubsampleWorkspace local;
  SubsampleWorkspace& ws = workspace ? *workspace : local;
  if (ws.batch_size() != M) ws.reset(M);

  const Vector step = to - from;
  const double proxy_mean = proxy.mean_gradient().dot(step);
  const double range = proxy.range_bound(from, to);
  const auto& g = proxy.gradients();

  ws.to_values_.resize(static_cast<std::size_t>(M));
  Index S = 0, b = 1;
  int w = 0;
  double mean = 0.0, m2 = 0.0;
  while (true) {
    ++w;
    // Extend the uniform without-replacement prefix perm_[0, b).
    for (Index i = S; i < b; ++i) {
      const auto j = static_cast<Index>(uniform_index(static_cast<std::size_t>(M - i), rng)) + i;
      std::swap(ws.perm_[static_cast<std::size_t>(i)], ws.perm_[static_cast<std::size_t>(j)]);
    }
    const std::span<const Index> fresh(ws.perm_.data() + S, static_cast<std::size_t>(b - S));
    const std::size_t n = fresh.size();

    const std::span<double> to_values(ws.to_values_.data() + S, n);
    lik.eval(fresh, to, to_values);

    ws.from_values_.resize(n);
    ws.misses_.clear();
    for (std::size_t t = 0; t < n; ++t) {
      const auto i = static_cast<std::size_t>(fresh[t]);
      if (ws.stamp_[i] == ws.epoch_) {
        ws.from_values_[t] = ws.current_[i];
      } else {
        ws.misses_.push_back(fresh[t]);
      }
    }
    if (!ws.misses_.empty()) {
      ws.miss_values_.resize(ws.misses_.size());
      lik.eval(ws.misses_, from, ws.miss_values_);
      std::size_t k = 0;
      for (std::size_t t = 0; t < n; ++t) {
        const auto i = static_cast<std::size_t>(fresh[t]);
        if (ws.stamp_[i] != ws.epoch_) {
          ws.from_values_[t] = ws.miss_values_[k++];
          ws.current_[i] = ws.from_values_[t];
          ws.stamp_[i] = ws.epoch_;
        }
      }
    }

    for (std::size_t t = 0; t < n; ++t) {
      const double term = (to_values[t] - ws.from_values_[t]) - g.col(fresh[t]).dot(step);
      ++S;
      const double d = term - mean;
      mean += d / static_cast<double>(S);
      m2 += d * (term - mean);
    }
    const double variance = S > 1 ? m2 / static_cast<double>(S - 1) : 0.0;
    out.radius = bernstein_radius(variance, range, S, delta_schedule(w, params.p, params.delta));
    if (std::abs(mean + proxy_mean - psi) >= out.radius || S == M) break;
    b = std::min(M, std::max(S + 1, static_cast<Index>(std::ceil(params.gamma * static_cast<double>(S)))));
  }

  out.lambda = mean;
  out.proxy_mean = proxy_mean;
  out.consumed = S;
  out.loops = w;
  out.accept = mean + proxy_mean > psi;
  if (out.accept && workspace) {
    // The chain moves to `to`: only the values just computed there stay valid.
    ++ws.epoch_;
    for (Index t = 0; t < S; ++t) {
      const auto i = static_cast<std::size_t>(ws.perm_[static_cast<std::size_t>(t)]);
      ws.current_[i] = ws.to_values_[static_cast<std::size_t>(t)];
      ws.stamp_[i] = ws.epoch_;
    }
  }
  return out;
}

namespace {

void move_chain(ChainState& chain, Proposal& p) {
  chain.x = std::move(p.candidate.x);
  chain.x_prev = std::move(p.candidate.x_prev);
  chain.log_lik.reset();
}

}  // namespace

FilterStepResult as_filter_step(const ParticleApproximation& prev, const MeasurementBatch& batch,
                                const StateSpaceModel& model, const KernelConfig& cfg,
                                const SubsampleParams& params, Rng& rng) {
  const StepTarget target(model, prev);
  return as_filter_step(target, batch, cfg, params, rng);
}

FilterStepResult as_filter_step(const StepTarget& target, const MeasurementBatch& batch,
                                const KernelConfig& cfg, const SubsampleParams& params, Rng& rng,
                                const ChainState* warm_start) {
  detail::validate_step(target, batch, cfg);
  params.validate();
  BatchLikelihood lik(target.model(), batch);
  const Index M = batch.size();
  SubsampleWorkspace ws(M);
  ProxyCache proxy;

  auto decide = [&](ChainState& chain, Proposal p, StepDiagnostics& diag) {
    // Same kernel-stream consumption as the exact decision: one uniform.
    const double log_u = std::log(uniform01(rng));
    if (M == 0) {
      const bool accept = log_u < p.log_correction;
      if (accept) move_chain(chain, p);
      return accept;
    }
    Rng sub = fork_without_advance(rng, StreamTag::kSubsample);
    const double psi = (log_u - p.log_correction) / static_cast<double>(M);
    const auto out = adaptive_decide(chain.x, p.candidate.x, lik, proxy, psi, params, sub, &ws);
    ++diag.subsample_decisions;
    diag.consumed_fraction_sum += static_cast<double>(out.consumed) / static_cast<double>(M);
    if (out.accept) move_chain(chain, p);
    return out.accept;
  };
  auto before_sweep = [&](int m, const ChainState& chain) {
    if (M > 0 && (m == 1 || m == cfg.burn_in)) proxy = build_proxy(lik, chain.x);
  };
  auto result = detail::run_chain(target, lik, cfg, rng, warm_start, decide, before_sweep);
  result.particles.k = target.prev().k + 1;
  return result;
}

}  // namespace smcmc
