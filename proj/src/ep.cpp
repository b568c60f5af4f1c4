#include "smcmc/ep.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <numeric>
#include <sstream>
#include <thread>

namespace smcmc {

void EpConfig::validate() const {
  require(nodes >= 1, "ep.D must be >= 1");
  require(rounds >= 1, "ep.L must be >= 1");
  require(num_samples >= 1, "ep.N must be >= 1");
  require(burn_in >= 0, "ep.N_b must be >= 0");
  require(pd_floor_rel > 0.0, "ep.pd_floor_rel must be > 0");
}

std::vector<std::vector<Index>> partition_indices(Index batch_size, int nodes, Rng& rng) {
  require(nodes >= 1, "partition: D must be >= 1");
  std::vector<Index> perm(static_cast<std::size_t>(batch_size));
  std::iota(perm.begin(), perm.end(), Index{0});
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(i, rng)]);

  std::vector<std::vector<Index>> shards(static_cast<std::size_t>(nodes));
  const Index base = batch_size / nodes;
  const Index extra = batch_size % nodes;
  std::size_t pos = 0;
  for (int d = 0; d < nodes; ++d) {
    const Index size = base + (d < extra ? 1 : 0);
    auto& s = shards[static_cast<std::size_t>(d)];
    s.assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
             perm.begin() + static_cast<std::ptrdiff_t>(pos + static_cast<std::size_t>(size)));
    std::sort(s.begin(), s.end());
    pos += static_cast<std::size_t>(size);
  }
  return shards;
}

std::vector<MeasurementBatch> partition_measurements(const MeasurementBatch& batch, int nodes, Rng& rng) {
  std::vector<MeasurementBatch> out;
  for (const auto& idx : partition_indices(batch.size(), nodes, rng)) out.push_back(batch.subset(idx));
  return out;
}

std::string format_message(const MessageRecord& r) {
  const Index n = r.eta.dim();
  std::string line = "k=" + std::to_string(r.k) + " round=" + std::to_string(r.round) +
                     " node=" + std::to_string(r.node) + " dim=" + std::to_string(n);
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, " %.17g", v);
    line += buf;
  };
  line += " h";
  for (Index i = 0; i < n; ++i) put(r.eta.h(i));
  line += " J";
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j <= i; ++j) put(r.eta.J(i, j));
  return line;
}

MessageRecord parse_message(std::string_view line) {
  std::istringstream in{std::string(line)};
  MessageRecord r;
  auto field = [&](const char* name) {
    std::string tok;
    in >> tok;
    const std::string prefix = std::string(name) + "=";
    require(tok.rfind(prefix, 0) == 0, "message: expected " + prefix);
    return std::stoi(tok.substr(prefix.size()));
  };
  r.k = field("k");
  r.round = field("round");
  r.node = field("node");
  const int n = field("dim");
  require(n >= 0, "message: negative dimension");
  r.eta = GaussianNaturalParams::zero(n);
  std::string tag;
  in >> tag;
  require(tag == "h", "message: expected h");
  for (Index i = 0; i < n; ++i) require(static_cast<bool>(in >> r.eta.h(i)), "message: short h");
  in >> tag;
  require(tag == "J", "message: expected J");
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j <= i; ++j) {
      require(static_cast<bool>(in >> r.eta.J(i, j)), "message: short J");
      r.eta.J(j, i) = r.eta.J(i, j);
    }
  std::string rest;
  require(!(in >> rest), "message: trailing tokens");
  return r;
}

namespace {

struct NodeOutput {
  FilterStepResult step;
  GaussianNaturalParams message;
};

template <class Fn>
void for_each_node(int nodes, bool parallel, Fn&& fn) {
  if (!parallel || nodes == 1) {
    for (int d = 0; d < nodes; ++d) fn(d);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nodes));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(nodes));
  for (int d = 0; d < nodes; ++d)
    threads.emplace_back([&, d] {
      try {
        fn(d);
      } catch (...) {
        errors[static_cast<std::size_t>(d)] = std::current_exception();
      }
    });
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

EpStepResult ep_filter_step(const std::vector<ParticleApproximation>& prev_per_node,
                            const MeasurementBatch& batch, const StateSpaceModel& model,
                            const EpConfig& ep, const KernelConfig& kernel, const StreamKey& key) {
  ep.validate();
  const int D = ep.nodes;
  const Index n = model.state_dim();
  require(static_cast<int>(prev_per_node.size()) == D, "ep: one previous particle set per node required");

  KernelConfig node_cfg = kernel;
  node_cfg.num_samples = ep.num_samples;
  node_cfg.burn_in = ep.burn_in;
  node_cfg.validate(n);

  Rng part_rng = key.stream(StreamTag::kPartition);
  const auto shards = partition_measurements(batch, D, part_rng);

  std::vector<Index> masked, kept;
  {
    std::vector<char> used(static_cast<std::size_t>(n), 0);
    for (Index d : model.likelihood_dims()) used[static_cast<std::size_t>(d)] = 1;
    for (Index d = 0; d < n; ++d) (used[static_cast<std::size_t>(d)] ? kept : masked).push_back(d);
  }

  std::vector<GaussianNaturalParams> messages(static_cast<std::size_t>(D), GaussianNaturalParams::zero(n));
  std::vector<NodeOutput> outputs(static_cast<std::size_t>(D));
  std::vector<ChainState> chains(static_cast<std::size_t>(D));
  EpStepResult result;

  for (int round = 1; round <= ep.rounds; ++round) {
    // Snapshot at the barrier: every node reads the same previous-round messages.
    const std::vector<GaussianNaturalParams> inbox = messages;
    StepDiagnostics round_diag;

    for_each_node(D, ep.parallel, [&](int d) {
      const auto ud = static_cast<std::size_t>(d);
      std::vector<GaussianNaturalParams> received;
      GaussianNaturalParams cavity = GaussianNaturalParams::zero(n);
      for (int i = 0; i < D; ++i)
        if (i != d) {
          received.push_back(inbox[static_cast<std::size_t>(i)]);
          cavity += inbox[static_cast<std::size_t>(i)];
        }
      std::optional<GaussianNaturalParams> cav;
      if (!cavity.is_zero()) cav = std::move(cavity);

      const StepTarget target(model, prev_per_node[ud], std::move(cav));
      Rng rng = key.stream(StreamTag::kKernel, static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(d));
      NodeOutput& out = outputs[ud];
      out.step = run_filter_step(target, shards[ud], node_cfg, rng, round > 1 ? &chains[ud] : nullptr);
      chains[ud] = out.step.last;

      try {
        // Fit on the marginal over the likelihood dimensions, embedded with
        // zeros elsewhere.
        auto fit = [&](std::span<const StateVector> samples) {
          std::vector<StateVector> sub;
          sub.reserve(samples.size());
          for (const auto& x : samples) sub.push_back(x(kept));
          const GaussianNaturalParams raw = np_from_samples(sub, 1e-300);
          const Vector mean = raw.J.ldlt().solve(raw.h);
          const Matrix J = pd_projection(raw.J, relative_pd_floor(raw.J, ep.pd_floor_rel));
          GaussianNaturalParams out = GaussianNaturalParams::zero(n);
          out.h(kept) = J * mean;
          out.J(kept, kept) = J;
          return out;
        };
        const GaussianNaturalParams post = fit(out.step.particles.particles);
        Rng pred_rng = key.stream(StreamTag::kPredictive, static_cast<std::uint64_t>(round),
                                  static_cast<std::uint64_t>(d));
        std::vector<StateVector> predictive;
        predictive.reserve(prev_per_node[ud].size());
        for (const auto& p : prev_per_node[ud].particles) predictive.push_back(model.sample_transition(p, pred_rng));
        const GaussianNaturalParams pred = fit(predictive);
        out.message = cavity_np_update(post, pred, received, masked, ep.pd_floor_rel);
      } catch (const DegenerateFit& e) {
        throw DegenerateFit("ep node " + std::to_string(d) + ", round " + std::to_string(round) + ": " + e.what());
      }
    });

    // Barrier: publish this round's messages.
    for (int d = 0; d < D; ++d) {
      const auto ud = static_cast<std::size_t>(d);
      messages[ud] = outputs[ud].message;
      result.messages.push_back({static_cast<int>(key.step), round, d, messages[ud]});
      round_diag += outputs[ud].step.diagnostics;
    }
    const StepDiagnostics prior = result.diagnostics;
    result.diagnostics = round_diag;
    result.diagnostics.likelihood_evals += prior.likelihood_evals;
    result.diagnostics.gradient_evals += prior.gradient_evals;
    result.diagnostics.wall_ms += prior.wall_ms;
    result.diagnostics.prev_fallbacks += prior.prev_fallbacks;
  }

  result.node_particles.reserve(static_cast<std::size_t>(D));
  result.pooled_mean = StateVector::Zero(n);
  for (auto& o : outputs) {
    result.pooled_mean += o.step.particles.mean();
    result.node_particles.push_back(std::move(o.step.particles));
  }
  result.pooled_mean /= static_cast<double>(D);
  return result;
}

}  // namespace smcmc
