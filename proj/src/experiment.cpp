#include "smcmc/experiment.hpp"

#include "smcmc/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <thread>

namespace smcmc {

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return {};
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double rate(const StageCounter& c) { return c.rate_percent(); }

ParticleApproximation gaussian_particles(const Vector& mean, const Matrix& cov, int count, Rng& rng) {
  Eigen::LLT<Matrix> llt(cov);
  require(llt.info() == Eigen::Success, "initial covariance is not positive definite");
  ParticleApproximation p;
  p.k = 0;
  p.particles.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    p.particles.push_back(mean + llt.matrixL() * standard_normal_vector(mean.size(), rng));
  return p;
}

/// Simulated truth and measurements for one replication.
struct Scenario {
  std::vector<StateVector> truth;  // truth[0] initial
  std::vector<MeasurementBatch> batches;
  Vector init_mean;
  Matrix init_cov;
};

Scenario simulate(const ExperimentConfig& cfg, const StateSpaceModel& model, int run_id) {
  Rng rng = StreamKey{cfg.seed, static_cast<std::uint64_t>(run_id), 0}.stream(StreamTag::kSimulation);
  Scenario s;
  const Index n = model.state_dim();
  if (cfg.model == ModelKind::kLinGauss) {
    const auto& lg = static_cast<const LinGaussModel&>(model);
    s.init_mean = Vector::Constant(n, cfg.lin_gauss_init_mean);
    s.init_cov = cfg.lin_gauss_init_var * Matrix::Identity(n, n);
    StateVector x = s.init_mean + std::sqrt(cfg.lin_gauss_init_var) * standard_normal_vector(n, rng);
    s.truth.push_back(x);
    for (int k = 1; k <= cfg.T; ++k) {
      x = model.sample_transition(x, rng);
      s.truth.push_back(x);
      s.batches.push_back(lg.simulate_measurements(x, cfg.M, rng));
    }
  } else {
    const StateVector x0 = mtt_initial_state(cfg.mtt, rng);
    auto sc = mtt_simulate_from(cfg.mtt, x0, cfg.T, rng);
    s.truth = std::move(sc.truth);
    s.batches = std::move(sc.batches);
    s.init_mean = x0;
    const double v = std::max(cfg.mtt_init_std * cfg.mtt_init_std, 1e-300);
    s.init_cov = v * Matrix::Identity(n, n);
  }
  return s;
}

std::vector<Index> position_dims(const ExperimentConfig& cfg) {
  std::vector<Index> dims;
  for (int t = 0; t < cfg.mtt.num_targets; ++t) dims.push_back(cfg.mtt.pos_x(t));
  for (int t = 0; t < cfg.mtt.num_targets; ++t) dims.push_back(cfg.mtt.pos_y(t));
  return dims;
}

}  // namespace

ReplicationResult run_replication(const ExperimentConfig& cfg, int run_id, const StepObserver& observer) {
  std::unique_ptr<StateSpaceModel> model;
  if (cfg.model == ModelKind::kLinGauss) model = std::make_unique<LinGaussModel>(cfg.lin_gauss);
  else model = std::make_unique<MttModel>(cfg.mtt);
  const auto run = static_cast<std::uint64_t>(run_id);

  const Scenario sc = simulate(cfg, *model, run_id);
  const bool ep = cfg.algorithm == Algorithm::kEpSmcmc;
  const int nodes = ep ? cfg.ep.nodes : 1;
  const int per_node = ep ? cfg.ep.num_samples : cfg.kernel.num_samples;

  std::vector<ParticleApproximation> particles;
  for (int d = 0; d < nodes; ++d) {
    Rng rng = StreamKey{cfg.seed, run, 0}.stream(StreamTag::kInitialParticles, 0, static_cast<std::uint64_t>(d));
    particles.push_back(gaussian_particles(sc.init_mean, sc.init_cov, per_node, rng));
  }

  std::optional<GaussianBelief> kalman;
  if (cfg.model == ModelKind::kLinGauss) kalman = GaussianBelief{sc.init_mean, sc.init_cov};
  const auto pos_dims = position_dims(cfg);

  ReplicationResult out;
  for (int k = 1; k <= cfg.T; ++k) {
    const MeasurementBatch& batch = sc.batches[static_cast<std::size_t>(k - 1)];
    const StreamKey key{cfg.seed, run, static_cast<std::uint64_t>(k)};
    StepDiagnostics diag;
    StateVector mean;

    if (ep) {
      auto r = ep_filter_step(particles, batch, *model, cfg.ep, cfg.kernel, key);
      particles = std::move(r.node_particles);
      for (auto& p : particles) p.k = k;
      diag = r.diagnostics;
      mean = r.pooled_mean;
      if (cfg.log_messages)
        for (const auto& m : r.messages) out.messages.push_back("run=" + std::to_string(run_id) + " " + format_message(m));
    } else {
      Rng rng = key.stream(StreamTag::kKernel);
      auto r = cfg.algorithm == Algorithm::kAsSmcmc
                   ? as_filter_step(particles[0], batch, *model, cfg.kernel, cfg.subsample, rng)
                   : run_filter_step(particles[0], batch, *model, cfg.kernel, rng);
      particles[0] = std::move(r.particles);
      diag = r.diagnostics;
      mean = particles[0].mean();
    }

    StepRecord row;
    row.run_id = run_id;
    row.k = k;
    row.algo = cfg.algorithm;
    row.est_mean = mean;
    row.acc_joint = rate(diag.joint);
    row.acc_ref_prev = rate(diag.refine_prev);
    row.acc_ref_curr = rate(diag.refine_current);
    row.lik_evals = diag.likelihood_evals;
    row.consumed_frac = diag.consumed_fraction();
    if (cfg.timing) row.wall_ms = diag.wall_ms;

    const StateVector& truth = sc.truth[static_cast<std::size_t>(k)];
    if (kalman) {
      kalman = kalman_step(*kalman, cfg.lin_gauss, batch);
      std::vector<double> xs;
      for (const auto& p : particles)
        for (const auto& s : p.particles) xs.push_back(s(0));
      const auto cdf = [&](double v) { return kalman->marginal_cdf(0, v); };
      row.ks_two_sided = ks_statistic(xs, cdf);
      row.ks_one_sided = ks_statistic_one_sided(xs, cdf);
    } else {
      row.rmse = rmse_position(mean, truth, pos_dims);
    }
    if (observer) observer(StepContext{run_id, k, particles, truth, kalman ? &*kalman : nullptr, diag, batch});
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::string csv_header(Index state_dim) {
  std::string h = "run_id,k,algo";
  for (Index d = 0; d < state_dim; ++d) h += ",est_mean_" + std::to_string(d);
  h += ",ks_two_sided,ks_one_sided,rmse,acc_joint,acc_ref_prev,acc_ref_curr,lik_evals,consumed_frac,wall_ms";
  return h;
}

std::string csv_row(const StepRecord& r) {
  std::string s = std::to_string(r.run_id) + "," + std::to_string(r.k) + "," + std::string(algorithm_name(r.algo));
  for (Index d = 0; d < r.est_mean.size(); ++d) s += "," + fmt(r.est_mean(d));
  for (double v : {r.ks_two_sided, r.ks_one_sided, r.rmse, r.acc_joint, r.acc_ref_prev, r.acc_ref_curr})
    s += "," + fmt(v);
  s += "," + std::to_string(r.lik_evals);
  s += "," + fmt(r.consumed_frac);
  s += "," + fmt(r.wall_ms);
  return s;
}

nlohmann::json summarize(const ExperimentConfig& cfg, const std::vector<StepRecord>& rows) {
  using nlohmann::json;
  auto collect = [&](auto field) {
    std::vector<double> v;
    for (const auto& r : rows)
      if (const double x = field(r); !std::isnan(x)) v.push_back(x);
    return v;
  };
  auto mean_or_null = [](const std::vector<double>& v) -> json {
    if (v.empty()) return nullptr;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto acc = [&](auto field) -> json {
    const auto v = collect(field);
    if (v.empty()) return nullptr;
    const auto a = acceptance_summary(v);
    return json{{"min", a.min}, {"median", a.median}, {"mean", a.mean}, {"max", a.max}};
  };

  std::int64_t evals = 0;
  for (const auto& r : rows) evals += r.lik_evals;

  json j;
  j["model"] = std::string(model_name(cfg.model));
  j["algo"] = std::string(algorithm_name(cfg.algorithm));
  j["runs"] = cfg.runs;
  j["T"] = cfg.T;
  j["seed"] = cfg.seed;
  j["rows"] = rows.size();
  j["acceptance"] = {
      {"joint", acc([](const StepRecord& r) { return r.acc_joint; })},
      {"refine_prev", acc([](const StepRecord& r) { return r.acc_ref_prev; })},
      {"refine_current", acc([](const StepRecord& r) { return r.acc_ref_curr; })},
  };
  j["mean_ks_two_sided"] = mean_or_null(collect([](const StepRecord& r) { return r.ks_two_sided; }));
  j["mean_ks_one_sided"] = mean_or_null(collect([](const StepRecord& r) { return r.ks_one_sided; }));
  j["mean_rmse"] = mean_or_null(collect([](const StepRecord& r) { return r.rmse; }));
  j["mean_consumed_frac"] = mean_or_null(collect([](const StepRecord& r) { return r.consumed_frac; }));
  j["total_lik_evals"] = evals;
  return j;
}

int run_experiment(const ExperimentConfig& cfg, bool emit_summary,
                   const std::function<void(const std::string&)>& progress) {
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path dir(cfg.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir.string() + "': " + ec.message());

  std::vector<ReplicationResult> results(static_cast<std::size_t>(cfg.runs));
  const int workers = std::max(1, std::min(cfg.runs, cfg.threads > 0 ? cfg.threads
                                                                      : static_cast<int>(std::thread::hardware_concurrency())));
  std::atomic<int> next{0};
  std::mutex log_mutex;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  auto work = [&](int w) {
    try {
      for (int r = next++; r < cfg.runs; r = next++) {
        results[static_cast<std::size_t>(r)] = run_replication(cfg, r);
        if (progress) {
          std::lock_guard lock(log_mutex);
          progress("run " + std::to_string(r) + " done");
        }
      }
    } catch (...) {
      errors[static_cast<std::size_t>(w)] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  const Index dim = cfg.model == ModelKind::kLinGauss ? cfg.lin_gauss.state_dim() : cfg.mtt.state_dim();
  const fs::path csv = dir / "steps.csv";
  std::ofstream f(csv, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + csv.string() + "'");
  f << csv_header(dim) << '\n';
  std::vector<StepRecord> all;
  for (const auto& res : results)
    for (const auto& row : res.rows) {
      f << csv_row(row) << '\n';
      all.push_back(row);
    }
  if (!f) throw std::runtime_error("write failed for '" + csv.string() + "'");

  if (cfg.log_messages && cfg.algorithm == Algorithm::kEpSmcmc) {
    const fs::path mp = dir / "messages.txt";
    std::ofstream m(mp, std::ios::binary);
    if (!m) throw std::runtime_error("cannot write '" + mp.string() + "'");
    for (const auto& res : results)
      for (const auto& line : res.messages) m << line << '\n';
  }
  if (emit_summary) {
    const fs::path sp = dir / "summary.json";
    std::ofstream s(sp, std::ios::binary);
    if (!s) throw std::runtime_error("cannot write '" + sp.string() + "'");
    s << summarize(cfg, all).dump(2) << '\n';
  }
  return 0;
}

}  // namespace smcmc
