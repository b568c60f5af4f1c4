#include "smcmc/config.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace smcmc {

std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kSmcmc: return "smcmc";
    case Algorithm::kAsSmcmc: return "as-smcmc";
    case Algorithm::kEpSmcmc: return "ep-smcmc";
  }
  return "?";
}

std::string_view model_name(ModelKind m) { return m == ModelKind::kLinGauss ? "lin_gauss" : "mtt"; }

Algorithm parse_algorithm(std::string_view text) {
  if (text == "smcmc") return Algorithm::kSmcmc;
  if (text == "as-smcmc" || text == "as_smcmc") return Algorithm::kAsSmcmc;
  if (text == "ep-smcmc" || text == "ep_smcmc") return Algorithm::kEpSmcmc;
  throw ConfigError("algorithm", "unknown algorithm '" + std::string(text) + "'");
}

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(d))
    throw ConfigError(key, "expected a finite number, got '" + v + "'");
  return d;
}

long long to_int(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long long i = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno == ERANGE)
    throw ConfigError(key, "expected an integer, got '" + v + "'");
  return i;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  if (!v.empty() && v[0] == '-') throw ConfigError(key, "expected a non-negative integer");
  const unsigned long long i = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno == ERANGE)
    throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  return i;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

std::vector<std::string> split(const std::string& v, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

std::vector<Stage> to_stages(const std::string& key, const std::string& v) {
  std::vector<Stage> out;
  for (const auto& s : split(v, ',')) {
    if (s == "joint" || s == "joint_draw") out.push_back(Stage::kJointDraw);
    else if (s == "refine_prev") out.push_back(Stage::kRefinePrev);
    else if (s == "refine_current") out.push_back(Stage::kRefineCurrent);
    else throw ConfigError(key, "unknown stage '" + s + "'");
  }
  if (out.empty()) throw ConfigError(key, "at least one stage is required");
  return out;
}

/// `all`, `per_target` (MTT), or explicit blocks such as `0,2;1,3`.
std::vector<std::vector<Index>> to_blocks(const std::string& key, const std::string& v,
                                          const ExperimentConfig& cfg) {
  if (v == "all") return {};
  if (v == "per_target") {
    if (cfg.model != ModelKind::kMtt) throw ConfigError(key, "per_target blocks need model = mtt");
    std::vector<std::vector<Index>> blocks;
    for (int p = 0; p < cfg.mtt.num_targets; ++p)
      blocks.push_back({cfg.mtt.pos_x(p), cfg.mtt.pos_y(p), cfg.mtt.vel_x(p), cfg.mtt.vel_y(p)});
    return blocks;
  }
  std::vector<std::vector<Index>> blocks;
  for (const auto& b : split(v, ';')) {
    std::vector<Index> block;
    for (const auto& i : split(b, ',')) block.push_back(static_cast<Index>(to_int(key, i)));
    blocks.push_back(std::move(block));
  }
  return blocks;
}

std::vector<std::vector<Index>> per_target_blocks(const MttParams& p) {
  std::vector<std::vector<Index>> blocks;
  for (int t = 0; t < p.num_targets; ++t) blocks.push_back({p.pos_x(t), p.pos_y(t), p.vel_x(t), p.vel_y(t)});
  return blocks;
}

template <class Fn>
void checked(const std::string& key, Fn&& fn) {
  try {
    fn();
  } catch (const ContractViolation& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace

ExperimentConfig default_config(ModelKind model) {
  ExperimentConfig c;
  c.model = model;
  c.kernel.num_samples = 4000;
  c.kernel.burn_in = 400;
  c.ep.nodes = 4;
  c.ep.rounds = 2;
  c.ep.num_samples = 500;
  c.ep.burn_in = 50;
  if (model == ModelKind::kLinGauss) {
    c.kernel.stages = {Stage::kRefinePrev, Stage::kRefineCurrent};
    c.kernel.prev_proposal = PrevProposal::kGibbs;
    c.kernel.current_proposal = CurrentProposal::kPrior;
  } else {
    c.kernel.stages = {Stage::kJointDraw, Stage::kRefineCurrent};
    c.kernel.current_proposal = CurrentProposal::kRandomWalk;
    c.kernel.rw_variance = 0.01;
    c.kernel.blocks = per_target_blocks(c.mtt);
  }
  return c;
}

void ExperimentConfig::validate() const {
  const Index dim = model == ModelKind::kLinGauss ? lin_gauss.state_dim() : mtt.state_dim();
  checked("lin_gauss", [&] { if (model == ModelKind::kLinGauss) lin_gauss.validate(); });
  checked("mtt", [&] { if (model == ModelKind::kMtt) mtt.validate(); });
  if (!(lin_gauss_init_var > 0.0)) throw ConfigError("lin_gauss.init_var", "must be > 0");
  if (!(mtt_init_std >= 0.0)) throw ConfigError("mtt.init_std", "must be >= 0");
  if (kernel.num_samples < 1) throw ConfigError("kernel.N", "must be >= 1");
  if (kernel.burn_in < 0) throw ConfigError("kernel.N_b", "must be >= 0");
  if (!(kernel.rw_variance > 0.0)) throw ConfigError("kernel.sigma_r", "must be > 0");
  checked("kernel", [&] { kernel.validate(dim); });
  if (!(subsample.gamma > 1.0)) throw ConfigError("subsample.gamma_s", "must be > 1");
  if (!(subsample.delta > 0.0 && subsample.delta < 1.0)) throw ConfigError("subsample.delta_s", "must be in (0, 1)");
  if (!(subsample.p > 1.0)) throw ConfigError("subsample.p_s", "must be > 1");
  if (ep.nodes < 1) throw ConfigError("ep.D", "must be >= 1");
  if (ep.rounds < 1) throw ConfigError("ep.L", "must be >= 1");
  if (ep.num_samples < 1) throw ConfigError("ep.N", "must be >= 1");
  if (ep.burn_in < 0) throw ConfigError("ep.N_b", "must be >= 0");
  if (!(ep.pd_floor_rel > 0.0)) throw ConfigError("ep.pd_floor_rel", "must be > 0");
  if (T < 1) throw ConfigError("experiment.T", "must be >= 1");
  if (M < 0) throw ConfigError("experiment.M", "must be >= 0");
  if (runs < 1) throw ConfigError("experiment.runs", "must be >= 1");
  if (threads < 0) throw ConfigError("experiment.threads", "must be >= 0");
  if (out.empty()) throw ConfigError("experiment.out", "must not be empty");
}

ExperimentConfig parse_config(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::map<std::string, int> line_of;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no), "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no), "empty key");
    if (!kv.emplace(key, value).second) throw ConfigError(key, "duplicate key");
    line_of[key] = line_no;
  }

  auto model_it = kv.find("model");
  if (model_it == kv.end()) throw ConfigError("model", "required key is missing");
  ModelKind model;
  if (model_it->second == "lin_gauss") model = ModelKind::kLinGauss;
  else if (model_it->second == "mtt") model = ModelKind::kMtt;
  else throw ConfigError("model", "expected lin_gauss or mtt, got '" + model_it->second + "'");
  kv.erase(model_it);

  ExperimentConfig c = default_config(model);
  const bool lg = model == ModelKind::kLinGauss;
  auto model_only = [&](const std::string& key, bool ok) {
    if (!ok) throw ConfigError(key, "not valid for model = " + std::string(model_name(model)));
  };
  auto scalar = [](double v) { return Matrix::Constant(1, 1, v); };

  // MTT shape keys come first so that per_target blocks see the final target count.
  std::optional<std::string> blocks_value;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"algorithm", [&](auto&, auto& v) { c.algorithm = parse_algorithm(v); }},
      {"lin_gauss.A", [&](auto& k, auto& v) { model_only(k, lg); c.lin_gauss.A = scalar(to_double(k, v)); }},
      {"lin_gauss.Q", [&](auto& k, auto& v) { model_only(k, lg); c.lin_gauss.Q = scalar(to_double(k, v)); }},
      {"lin_gauss.H", [&](auto& k, auto& v) { model_only(k, lg); c.lin_gauss.H = scalar(to_double(k, v)); }},
      {"lin_gauss.R", [&](auto& k, auto& v) { model_only(k, lg); c.lin_gauss.R_obs = scalar(to_double(k, v)); }},
      {"lin_gauss.init_mean", [&](auto& k, auto& v) { model_only(k, lg); c.lin_gauss_init_mean = to_double(k, v); }},
      {"lin_gauss.init_var", [&](auto& k, auto& v) { model_only(k, lg); c.lin_gauss_init_var = to_double(k, v); }},
      {"mtt.num_targets", [&](auto& k, auto& v) { model_only(k, !lg); c.mtt.num_targets = static_cast<int>(to_int(k, v)); }},
      {"mtt.sampling_interval", [&](auto& k, auto& v) { model_only(k, !lg); c.mtt.sampling_interval = to_double(k, v); }},
      {"mtt.motion_noise_std", [&](auto& k, auto& v) { model_only(k, !lg); c.mtt.motion_noise_std = to_double(k, v); }},
      {"mtt.meas_var", [&](auto& k, auto& v) { model_only(k, !lg); c.mtt.meas_cov = to_double(k, v) * Eigen::Matrix2d::Identity(); }},
      {"mtt.target_rate", [&](auto& k, auto& v) { model_only(k, !lg); c.mtt.target_rate = to_double(k, v); }},
      {"mtt.clutter_rate", [&](auto& k, auto& v) { model_only(k, !lg); c.mtt.clutter_rate = to_double(k, v); }},
      {"mtt.region_x", [&](auto& k, auto& v) { model_only(k, !lg); c.mtt.region_x = to_double(k, v); }},
      {"mtt.region_y", [&](auto& k, auto& v) { model_only(k, !lg); c.mtt.region_y = to_double(k, v); }},
      {"mtt.init_std", [&](auto& k, auto& v) { model_only(k, !lg); c.mtt_init_std = to_double(k, v); }},
      {"kernel.N", [&](auto& k, auto& v) { c.kernel.num_samples = static_cast<int>(to_int(k, v)); }},
      {"kernel.N_b", [&](auto& k, auto& v) { c.kernel.burn_in = static_cast<int>(to_int(k, v)); }},
      {"kernel.stages", [&](auto& k, auto& v) { c.kernel.stages = to_stages(k, v); }},
      {"kernel.prev_proposal",
       [&](auto& k, auto& v) {
         if (v == "gibbs") c.kernel.prev_proposal = PrevProposal::kGibbs;
         else if (v == "uniform") c.kernel.prev_proposal = PrevProposal::kUniform;
         else throw ConfigError(k, "expected gibbs or uniform");
       }},
      {"kernel.current_proposal",
       [&](auto& k, auto& v) {
         if (v == "prior") c.kernel.current_proposal = CurrentProposal::kPrior;
         else if (v == "random_walk") c.kernel.current_proposal = CurrentProposal::kRandomWalk;
         else throw ConfigError(k, "expected prior or random_walk");
       }},
      {"kernel.sigma_r", [&](auto& k, auto& v) { c.kernel.rw_variance = to_double(k, v); }},
      {"kernel.blocks", [&](auto&, auto& v) { blocks_value = v; }},
      {"subsample.gamma_s", [&](auto& k, auto& v) { c.subsample.gamma = to_double(k, v); }},
      {"subsample.delta_s", [&](auto& k, auto& v) { c.subsample.delta = to_double(k, v); }},
      {"subsample.p_s", [&](auto& k, auto& v) { c.subsample.p = to_double(k, v); }},
      {"ep.D", [&](auto& k, auto& v) { c.ep.nodes = static_cast<int>(to_int(k, v)); }},
      {"ep.L", [&](auto& k, auto& v) { c.ep.rounds = static_cast<int>(to_int(k, v)); }},
      {"ep.N", [&](auto& k, auto& v) { c.ep.num_samples = static_cast<int>(to_int(k, v)); }},
      {"ep.N_b", [&](auto& k, auto& v) { c.ep.burn_in = static_cast<int>(to_int(k, v)); }},
      {"ep.pd_floor_rel", [&](auto& k, auto& v) { c.ep.pd_floor_rel = to_double(k, v); }},
      {"ep.parallel", [&](auto& k, auto& v) { c.ep.parallel = to_bool(k, v); }},
      {"ep.log_messages", [&](auto& k, auto& v) { c.log_messages = to_bool(k, v); }},
      {"experiment.T", [&](auto& k, auto& v) { c.T = static_cast<int>(to_int(k, v)); }},
      {"experiment.M", [&](auto& k, auto& v) { model_only(k, lg); c.M = static_cast<Index>(to_int(k, v)); }},
      {"experiment.runs", [&](auto& k, auto& v) { c.runs = static_cast<int>(to_int(k, v)); }},
      {"experiment.seed", [&](auto& k, auto& v) { c.seed = to_u64(k, v); }},
      {"experiment.out", [&](auto&, auto& v) { c.out = v; }},
      {"experiment.threads", [&](auto& k, auto& v) { c.threads = static_cast<int>(to_int(k, v)); }},
  };

  for (const auto& [key, value] : kv) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(key, "unknown key");
    it->second(key, value);
  }
  // Burn-in defaults to a tenth of the retained sample count.
  if (kv.count("kernel.N") && !kv.count("kernel.N_b")) c.kernel.burn_in = c.kernel.num_samples / 10;
  if (kv.count("ep.N") && !kv.count("ep.N_b")) c.ep.burn_in = c.ep.num_samples / 10;
  if (!lg && c.mtt.num_targets >= 1) c.kernel.blocks = per_target_blocks(c.mtt);
  if (blocks_value) c.kernel.blocks = to_blocks("kernel.blocks", *blocks_value, c);

  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

}  // namespace smcmc
