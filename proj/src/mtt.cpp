#include "smcmc/mtt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace smcmc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Matrix mtt_transition_matrix(const MttParams& p) {
  const Index n = p.state_dim();
  Matrix A = Matrix::Identity(n, n);
  for (int t = 0; t < p.num_targets; ++t) {
    A(p.pos_x(t), p.vel_x(t)) = p.sampling_interval;
    A(p.pos_y(t), p.vel_y(t)) = p.sampling_interval;
  }
  return A;
}

Matrix mtt_process_noise(const MttParams& p) {
  const Index n = p.state_dim();
  const double ts = p.sampling_interval;
  const double s2 = p.motion_noise_std * p.motion_noise_std;
  Matrix Q = Matrix::Zero(n, n);
  for (int t = 0; t < p.num_targets; ++t) {
    for (auto [pos, vel] : {std::pair{p.pos_x(t), p.vel_x(t)}, std::pair{p.pos_y(t), p.vel_y(t)}}) {
      Q(pos, pos) = s2 * ts * ts * ts / 3.0;
      Q(pos, vel) = s2 * ts * ts / 2.0;
      Q(vel, pos) = s2 * ts * ts / 2.0;
      Q(vel, vel) = s2 * ts;
    }
  }
  return Q;
}

}  // namespace

void MttParams::validate() const {
  require(num_targets >= 1, "num_targets must be >= 1");
  require(sampling_interval > 0.0, "sampling_interval must be > 0");
  require(motion_noise_std >= 0.0, "motion_noise_std must be >= 0");
  require(target_rate >= 0.0 && clutter_rate >= 0.0, "rates must be >= 0");
  require(region_x > 0.0 && region_y > 0.0, "clutter area must be > 0");
  require(std::abs(meas_cov(0, 1) - meas_cov(1, 0)) <= 1e-12, "meas_cov must be symmetric");
  Eigen::LLT<Eigen::Matrix2d> llt(meas_cov);
  require(llt.info() == Eigen::Success, "meas_cov must be positive definite");
}

std::vector<Eigen::Vector2d> target_positions(const MttParams& params, const StateVector& x) {
  require(x.size() == params.state_dim(), "state dimension mismatch");
  std::vector<Eigen::Vector2d> out;
  out.reserve(static_cast<std::size_t>(params.num_targets));
  for (int t = 0; t < params.num_targets; ++t) out.emplace_back(x(params.pos_x(t)), x(params.pos_y(t)));
  return out;
}

Matrix mtt_hessian(const MttParams& params, const Eigen::Vector2d& z,
                   const std::vector<Eigen::Vector2d>& positions) {
  const int nt = params.num_targets;
  require(static_cast<int>(positions.size()) == nt, "one position per target required");
  Matrix H = Matrix::Zero(2 * nt, 2 * nt);
  if (params.target_rate == 0.0) return H;

  const Eigen::Matrix2d ci = params.meas_cov.inverse();
  const double log_target =
      std::log(params.target_rate) - std::log(2.0 * std::numbers::pi) - 0.5 * std::log(params.meas_cov.determinant());
  const double log_clutter =
      params.clutter_rate > 0.0 ? std::log(params.clutter_rate / params.clutter_area()) : kNegInf;

  std::vector<double> logs(static_cast<std::size_t>(nt));
  std::vector<Eigen::Vector2d> g(static_cast<std::size_t>(nt));
  double top = log_clutter;
  for (int l = 0; l < nt; ++l) {
    const Eigen::Vector2d d = z - positions[l];
    g[l] = ci * d;
    logs[l] = log_target - 0.5 * d.dot(g[l]);
    top = std::max(top, logs[l]);
  }
  double total = log_clutter == kNegInf ? 0.0 : std::exp(log_clutter - top);
  for (double v : logs) total += std::exp(v - top);
  std::vector<double> w(static_cast<std::size_t>(nt));
  for (int l = 0; l < nt; ++l) w[l] = std::exp(logs[l] - top) / total;

  // H_ll = -w_l Sigma^-1 + w_l (1 - w_l) g_l g_l^T;  H_lj = -w_l w_j g_l g_j^T.
  for (int l = 0; l < nt; ++l) {
    for (int j = 0; j < nt; ++j) {
      Eigen::Matrix2d block;
      if (l == j)
        block = -w[l] * ci + w[l] * (1.0 - w[l]) * g[l] * g[l].transpose();
      else
        block = -w[l] * w[j] * g[l] * g[j].transpose();
      H.block<2, 2>(2 * l, 2 * j) = block;
    }
  }
  return H;
}

double mtt_hessian_bound(const MttParams& params) {
  if (params.target_rate == 0.0) return 0.0;
  const Eigen::Matrix2d ci = params.meas_cov.inverse();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig_cov(params.meas_cov);
  const double s = std::sqrt(eig_cov.eigenvalues().maxCoeff());
  const double lambda_max_inv = 1.0 / eig_cov.eigenvalues().minCoeff();
  const double peak = params.target_rate / (2.0 * std::numbers::pi * std::sqrt(params.meas_cov.determinant()));
  const double clutter = params.clutter_rate / params.clutter_area();

  auto weight = [&](const Eigen::Vector2d& d) {
    const double t = peak * std::exp(-0.5 * d.dot(ci * d));
    return clutter > 0.0 ? t / (t + clutter) : 1.0;
  };
  auto phi = [&](double dx, double dy) {
    const Eigen::Vector2d d(dx, dy);
    return weight(d) * (ci * d).squaredNorm();
  };

  const double half = 6.0 * s;
  constexpr int kGrid = 241;
  double step = 2.0 * half / (kGrid - 1);
  double best = 0.0;
  double bx = 0.0;
  double by = 0.0;
  for (int i = 0; i < kGrid; ++i) {
    for (int j = 0; j < kGrid; ++j) {
      const double dx = -half + i * step;
      const double dy = -half + j * step;
      const double v = phi(dx, dy);
      if (v > best) {
        best = v;
        bx = dx;
        by = dy;
      }
    }
  }
  constexpr int kRefine = 21;
  for (int round = 0; round < 4; ++round) {
    const double cx = bx;
    const double cy = by;
    const double sub = 2.0 * step / (kRefine - 1);
    for (int i = 0; i < kRefine; ++i) {
      for (int j = 0; j < kRefine; ++j) {
        const double dx = std::clamp(cx - step + i * sub, -half, half);
        const double dy = std::clamp(cy - step + j * sub, -half, half);
        const double v = phi(dx, dy);
        if (v > best) {
          best = v;
          bx = dx;
          by = dy;
        }
      }
    }
    step = sub;
  }
  return 1.1 * (lambda_max_inv * weight(Eigen::Vector2d::Zero()) + best);
}

MttModel::MttModel(MttParams params) : params_(std::move(params)) {
  params_.validate();
  transition_ = GaussianTransition(mtt_transition_matrix(params_), mtt_process_noise(params_));
  cov_inv_ = params_.meas_cov.inverse();
  log_clutter_ = params_.clutter_rate > 0.0 ? std::log(params_.clutter_rate / params_.clutter_area())
                                            : kNegInf;
  log_target_norm_ = params_.target_rate > 0.0
                         ? std::log(params_.target_rate) - std::log(2.0 * std::numbers::pi) -
                               0.5 * std::log(params_.meas_cov.determinant())
                         : kNegInf;
  hessian_bound_ = mtt_hessian_bound(params_);
}

std::vector<Index> MttModel::likelihood_dims() const {
  std::vector<Index> dims;
  for (int t = 0; t < params_.num_targets; ++t) dims.push_back(params_.pos_x(t));
  for (int t = 0; t < params_.num_targets; ++t) dims.push_back(params_.pos_y(t));
  return dims;
}

double MttModel::log_lik_raw(double zx, double zy, const double* px, const double* py) const {
  // Streaming log-sum-exp over the clutter term and one term per target.
  double top = log_clutter_;
  double s = log_clutter_ == kNegInf ? 0.0 : 1.0;
  if (log_target_norm_ != kNegInf) {
    for (int j = 0; j < params_.num_targets; ++j) {
      const double dx = zx - px[j];
      const double dy = zy - py[j];
      const double q = dx * (cov_inv_(0, 0) * dx + cov_inv_(0, 1) * dy) +
                       dy * (cov_inv_(1, 0) * dx + cov_inv_(1, 1) * dy);
      const double v = log_target_norm_ - 0.5 * q;
      if (v > top) {
        s = (top == kNegInf ? 0.0 : s * std::exp(top - v)) + 1.0;
        top = v;
      } else {
        s += std::exp(v - top);
      }
    }
  }
  if (top == kNegInf) return kNegInf;
  return top + std::log(s);
}

void MttModel::mixture_weights(double zx, double zy, const double* px, const double* py,
                               double* w) const {
  const int nt = params_.num_targets;
  if (log_target_norm_ == kNegInf) {
    for (int j = 0; j < nt; ++j) w[j] = 0.0;
    return;
  }
  double top = log_clutter_;
  for (int j = 0; j < nt; ++j) {
    const double dx = zx - px[j];
    const double dy = zy - py[j];
    const double q = dx * (cov_inv_(0, 0) * dx + cov_inv_(0, 1) * dy) +
                     dy * (cov_inv_(1, 0) * dx + cov_inv_(1, 1) * dy);
    w[j] = log_target_norm_ - 0.5 * q;
    top = std::max(top, w[j]);
  }
  double s = log_clutter_ == kNegInf ? 0.0 : std::exp(log_clutter_ - top);
  for (int j = 0; j < nt; ++j) {
    w[j] = std::exp(w[j] - top);
    s += w[j];
  }
  for (int j = 0; j < nt; ++j) w[j] /= s;
}

double MttModel::log_lik(MeasurementView z, const StateVector& x) const {
  check_measurement(z);
  check_state(x);
  const int nt = params_.num_targets;
  return log_lik_raw(z(0), z(1), x.data(), x.data() + nt);
}

void MttModel::log_lik_many(const MeasurementBatch& batch, std::span<const Index> indices,
                            const StateVector& x, std::span<double> out) const {
  check_state(x);
  require(batch.empty() || batch.dim() == 2, "measurement dimension mismatch");
  const int nt = params_.num_targets;
  const double* z = batch.data().data();
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const Index i = indices[j];
    out[j] = log_lik_raw(z[2 * i], z[2 * i + 1], x.data(), x.data() + nt);
  }
}

double MttModel::log_lik_sum(const MeasurementBatch& batch, const StateVector& x) const {
  check_state(x);
  require(batch.empty() || batch.dim() == 2, "measurement dimension mismatch");
  const int nt = params_.num_targets;
  const double* z = batch.data().data();
  double s = 0.0;
  for (Index i = 0; i < batch.size(); ++i) s += log_lik_raw(z[2 * i], z[2 * i + 1], x.data(), x.data() + nt);
  return s;
}

StateVector MttModel::grad_log_lik(MeasurementView z, const StateVector& x) const {
  check_measurement(z);
  check_state(x);
  const int nt = params_.num_targets;
  StateVector g = StateVector::Zero(state_dim());
  std::vector<double> w(static_cast<std::size_t>(nt));
  mixture_weights(z(0), z(1), x.data(), x.data() + nt, w.data());
  for (int j = 0; j < nt; ++j) {
    const Eigen::Vector2d d(z(0) - x(params_.pos_x(j)), z(1) - x(params_.pos_y(j)));
    const Eigen::Vector2d gj = w[j] * (cov_inv_ * d);
    g(params_.pos_x(j)) = gj(0);
    g(params_.pos_y(j)) = gj(1);
  }
  return g;
}

void MttModel::grad_log_lik_all(const MeasurementBatch& batch, const StateVector& x,
                                Matrix& out) const {
  check_state(x);
  const int nt = params_.num_targets;
  out.setZero(state_dim(), batch.size());
  std::vector<double> w(static_cast<std::size_t>(nt));
  for (Index i = 0; i < batch.size(); ++i) {
    const double zx = batch.data()(0, i);
    const double zy = batch.data()(1, i);
    mixture_weights(zx, zy, x.data(), x.data() + nt, w.data());
    for (int j = 0; j < nt; ++j) {
      const double dx = zx - x(params_.pos_x(j));
      const double dy = zy - x(params_.pos_y(j));
      out(params_.pos_x(j), i) = w[j] * (cov_inv_(0, 0) * dx + cov_inv_(0, 1) * dy);
      out(params_.pos_y(j), i) = w[j] * (cov_inv_(1, 0) * dx + cov_inv_(1, 1) * dy);
    }
  }
}

StateVector mtt_initial_state(const MttParams& params, Rng& rng) {
  StateVector x(params.state_dim());
  for (int t = 0; t < params.num_targets; ++t) {
    x(params.pos_x(t)) = (uniform01(rng) - 0.5) * params.region_x / 2.0;
    x(params.pos_y(t)) = (uniform01(rng) - 0.5) * params.region_y / 2.0;
    x(params.vel_x(t)) = 2.0 * uniform01(rng) - 1.0;
    x(params.vel_y(t)) = 2.0 * uniform01(rng) - 1.0;
  }
  return x;
}

MttScenario mtt_simulate(const MttParams& params, int steps, Rng& rng) {
  const StateVector initial = mtt_initial_state(params, rng);
  return mtt_simulate_from(params, initial, steps, rng);
}

MttScenario mtt_simulate_from(const MttParams& params, const StateVector& initial, int steps,
                              Rng& rng) {
  params.validate();
  require(steps >= 1, "steps must be >= 1");
  require(initial.size() == params.state_dim(), "state dimension mismatch");
  const GaussianTransition transition(mtt_transition_matrix(params), mtt_process_noise(params));
  const Eigen::Matrix2d chol = params.meas_cov.llt().matrixL();

  MttScenario out;
  out.truth.push_back(initial);
  std::poisson_distribution<long> target_count(params.target_rate);
  std::poisson_distribution<long> clutter_count(params.clutter_rate);

  for (int k = 1; k <= steps; ++k) {
    StateVector x = transition.sample(out.truth.back(), rng);
    std::vector<Eigen::Vector2d> points;
    std::vector<int> origin;
    for (int t = 0; t < params.num_targets; ++t) {
      const long n = params.target_rate > 0.0 ? target_count(rng) : 0;
      const Eigen::Vector2d p(x(params.pos_x(t)), x(params.pos_y(t)));
      for (long i = 0; i < n; ++i) {
        const Eigen::Vector2d e(standard_normal(rng), standard_normal(rng));
        points.push_back(p + chol * e);
        origin.push_back(t);
      }
    }
    const long nc = params.clutter_rate > 0.0 ? clutter_count(rng) : 0;
    for (long i = 0; i < nc; ++i) {
      points.emplace_back((uniform01(rng) - 0.5) * params.region_x, (uniform01(rng) - 0.5) * params.region_y);
      origin.push_back(-1);
    }
    // Fisher-Yates so the batch order carries no origin information.
    for (std::size_t i = points.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i, rng);
      std::swap(points[i - 1], points[j]);
      std::swap(origin[i - 1], origin[j]);
    }
    Matrix z(2, static_cast<Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) z.col(static_cast<Index>(i)) = points[i];
    out.truth.push_back(std::move(x));
    out.batches.emplace_back(std::move(z));
    out.origins.push_back(std::move(origin));
  }
  return out;
}

}  // namespace smcmc
