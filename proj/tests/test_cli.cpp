#include "smcmc/config.hpp"
#include "smcmc/experiment.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace smcmc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("smcmc_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream f(p);
  std::string line;
  while (std::getline(f, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

ExperimentConfig tiny(Algorithm algo, const fs::path& out) {
  auto cfg = parse_config(
      "model = lin_gauss\n"
      "kernel.N = 60\n"
      "kernel.N_b = 10\n"
      "experiment.T = 3\n"
      "experiment.M = 40\n"
      "experiment.runs = 3\n"
      "experiment.seed = 5\n"
      "ep.N = 40\n"
      "ep.N_b = 5\n");
  cfg.algorithm = algo;
  cfg.out = out.string();
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SMCMC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(ParseConfig, MinimalSmcmcConfigIsValid) {
  const auto cfg = parse_config("model = lin_gauss\nalgorithm = smcmc\n");
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.algorithm, Algorithm::kSmcmc);
}

TEST(ParseConfig, ExampleOneDefaults) {
  const auto cfg = parse_config("# defaults only\nmodel = lin_gauss\n");
  EXPECT_EQ(cfg.lin_gauss.A(0, 0), 0.9);
  EXPECT_EQ(cfg.lin_gauss.Q(0, 0), 0.08);
  EXPECT_EQ(cfg.lin_gauss.H(0, 0), 1.0);
  EXPECT_EQ(cfg.lin_gauss.R_obs(0, 0), 2.0);
  EXPECT_EQ(cfg.M, 500);
  EXPECT_EQ(cfg.T, 20);
  EXPECT_EQ(cfg.kernel.num_samples, 4000);
  EXPECT_EQ(cfg.ep.nodes, 4);
  EXPECT_EQ(cfg.ep.rounds, 2);
  EXPECT_EQ(cfg.ep.num_samples, 500);
  EXPECT_EQ(cfg.subsample.gamma, 1.2);
  EXPECT_EQ(cfg.subsample.delta, 0.1);
  EXPECT_EQ(cfg.subsample.p, 2.0);
}

TEST(ParseConfig, ExampleTwoDefaults) {
  const auto cfg = parse_config("model = mtt\n");
  EXPECT_EQ(cfg.mtt.num_targets, 3);
  EXPECT_EQ(cfg.mtt.target_rate, 1500.0);
  EXPECT_EQ(cfg.mtt.clutter_rate, 4000.0);
  EXPECT_EQ(cfg.mtt.motion_noise_std, 0.5);
  EXPECT_EQ(cfg.kernel.rw_variance, 0.01);
  EXPECT_EQ(cfg.kernel.resolved_blocks(12).size(), 3u);
}

TEST(ParseConfig, ErrorsNameTheKey) {
  auto key_of = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return e.key();
    }
    return std::string("<no error>");
  };
  EXPECT_EQ(key_of("model = lin_gauss\nsubsample.delta_s = 1.5\n"), "subsample.delta_s");
  EXPECT_EQ(key_of("model = lin_gauss\nkernel.bogus = 1\n"), "kernel.bogus");
  EXPECT_EQ(key_of("algorithm = smcmc\n"), "model");
  EXPECT_EQ(key_of("model = lin_gauss\nexperiment.T = 0\n"), "experiment.T");
  EXPECT_EQ(key_of("model = lin_gauss\nexperiment.T = 2\nexperiment.T = 3\n"), "experiment.T");
  EXPECT_EQ(key_of("model = lin_gauss\nmtt.num_targets = 2\n"), "mtt.num_targets");
  EXPECT_EQ(key_of("model = lin_gauss\nkernel.stages = joint_draw,bogus\n"), "kernel.stages");
  EXPECT_EQ(key_of("model = lin_gauss\nalgorithm = nope\n"), "algorithm");
}

TEST(ParseConfig, BurnInFollowsSampleCount) {
  const auto cfg = parse_config("model = lin_gauss\nkernel.N = 1000\nep.N = 300\n");
  EXPECT_EQ(cfg.kernel.burn_in, 100);
  EXPECT_EQ(cfg.ep.burn_in, 30);
}

TEST(Experiment, SmallestRunHasOneRow) {
  auto cfg = parse_config("model = lin_gauss\nexperiment.runs = 1\nexperiment.T = 1\nkernel.N = 1\nkernel.N_b = 0\n");
  const auto out = scratch("one_row");
  cfg.out = out.string();
  ASSERT_EQ(run_experiment(cfg, true), 0);
  const auto rows = read_csv(out / "steps.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].size(), rows[1].size());
  EXPECT_EQ(rows[1][0], "0");
  EXPECT_EQ(rows[1][1], "1");
}

TEST(Experiment, CsvSchema) {
  EXPECT_EQ(csv_header(2),
            "run_id,k,algo,est_mean_0,est_mean_1,ks_two_sided,ks_one_sided,rmse,acc_joint,acc_ref_prev,"
            "acc_ref_curr,lik_evals,consumed_frac,wall_ms");
  StepRecord r;
  r.run_id = 3;
  r.k = 7;
  r.algo = Algorithm::kAsSmcmc;
  r.est_mean = StateVector::Constant(1, 0.1);
  r.ks_two_sided = 0.25;
  r.lik_evals = 12;
  EXPECT_EQ(csv_row(r), "3,7,as-smcmc,0.10000000000000001,0.25,,,,,,12,,");
}

TEST(Experiment, RowCountAndDeterminism) {
  for (auto algo : {Algorithm::kSmcmc, Algorithm::kAsSmcmc, Algorithm::kEpSmcmc}) {
    const auto a = scratch("det_a"), b = scratch("det_b");
    auto cfg = tiny(algo, a);
    cfg.ep.parallel = true;
    cfg.threads = 2;
    ASSERT_EQ(run_experiment(cfg, false), 0);
    cfg.out = b.string();
    cfg.threads = 1;
    ASSERT_EQ(run_experiment(cfg, false), 0);
    const auto text = slurp(a / "steps.csv");
    EXPECT_EQ(text, slurp(b / "steps.csv")) << algorithm_name(algo);
    EXPECT_EQ(read_csv(a / "steps.csv").size(), static_cast<std::size_t>(cfg.runs * cfg.T + 1));
  }
}

TEST(Experiment, ReplicationIndependentOfOtherRuns) {
  auto cfg = tiny(Algorithm::kSmcmc, scratch("indep"));
  const auto r2 = run_replication(cfg, 2);
  cfg.runs = 7;
  const auto again = run_replication(cfg, 2);
  ASSERT_EQ(r2.rows.size(), again.rows.size());
  for (std::size_t i = 0; i < r2.rows.size(); ++i) EXPECT_EQ(csv_row(r2.rows[i]), csv_row(again.rows[i]));
}

TEST(Experiment, SummaryMatchesCsv) {
  for (auto algo : {Algorithm::kSmcmc, Algorithm::kAsSmcmc, Algorithm::kEpSmcmc}) {
    const auto out = scratch("summary");
    const auto cfg = tiny(algo, out);
    ASSERT_EQ(run_experiment(cfg, true), 0);
    const auto rows = read_csv(out / "steps.csv");
    std::ifstream jf(out / "summary.json");
    const auto j = nlohmann::json::parse(jf);
    const auto& head = rows[0];
    auto column = [&](const std::string& name) {
      const auto at = static_cast<std::size_t>(std::find(head.begin(), head.end(), name) - head.begin());
      std::vector<double> v;
      for (std::size_t i = 1; i < rows.size(); ++i)
        if (!rows[i][at].empty()) v.push_back(std::stod(rows[i][at]));
      return v;
    };
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    EXPECT_EQ(j["rows"].get<std::size_t>(), rows.size() - 1);
    EXPECT_NEAR(j["mean_ks_two_sided"].get<double>(), mean(column("ks_two_sided")), 1e-9);
    EXPECT_NEAR(j["mean_ks_one_sided"].get<double>(), mean(column("ks_one_sided")), 1e-9);
    double evals = 0.0;
    for (double e : column("lik_evals")) evals += e;
    EXPECT_NEAR(j["total_lik_evals"].get<double>(), evals, 1e-9);
    const auto curr = column("acc_ref_curr");
    const auto a = acceptance_summary(curr);
    EXPECT_NEAR(j["acceptance"]["refine_current"]["mean"].get<double>(), a.mean, 1e-9);
    EXPECT_NEAR(j["acceptance"]["refine_current"]["median"].get<double>(), a.median, 1e-9);
    EXPECT_NEAR(j["acceptance"]["refine_current"]["min"].get<double>(), a.min, 1e-9);
    EXPECT_NEAR(j["acceptance"]["refine_current"]["max"].get<double>(), a.max, 1e-9);
    if (algo == Algorithm::kAsSmcmc)
      EXPECT_NEAR(j["mean_consumed_frac"].get<double>(), mean(column("consumed_frac")), 1e-9);
    else
      EXPECT_TRUE(j["mean_consumed_frac"].is_null());
    EXPECT_TRUE(j["mean_rmse"].is_null());
  }
}

TEST(Experiment, MttRowsCarryRmseNotKs) {
  auto cfg = parse_config(
      "model = mtt\nmtt.target_rate = 20\nmtt.clutter_rate = 40\nkernel.N = 40\n"
      "experiment.T = 2\nexperiment.runs = 1\n");
  const auto r = run_replication(cfg, 0);
  ASSERT_EQ(r.rows.size(), 2u);
  for (const auto& row : r.rows) {
    EXPECT_FALSE(std::isnan(row.rmse));
    EXPECT_TRUE(std::isnan(row.ks_two_sided));
    EXPECT_EQ(row.est_mean.size(), 12);
  }
}

TEST(Experiment, EpMessageLog) {
  const auto out = scratch("messages");
  auto cfg = tiny(Algorithm::kEpSmcmc, out);
  cfg.log_messages = true;
  ASSERT_EQ(run_experiment(cfg, false), 0);
  std::ifstream f(out / "messages.txt");
  std::string line;
  int n = 0;
  while (std::getline(f, line)) {
    ASSERT_EQ(line.rfind("run=", 0), 0u);
    const auto rec = parse_message(line.substr(line.find(' ') + 1));
    EXPECT_EQ(rec.eta.dim(), 1);
    ++n;
  }
  EXPECT_EQ(n, cfg.runs * cfg.T * cfg.ep.rounds * cfg.ep.nodes);
}

TEST(Cli, ExitStatusAndOverrides) {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  {
    std::ofstream c(dir / "run.cfg");
    c << "model = lin_gauss\nkernel.N = 30\nkernel.N_b = 5\nexperiment.T = 2\nexperiment.M = 20\n"
         "experiment.runs = 1\n";
  }
  const std::string cfg = (dir / "run.cfg").string();
  EXPECT_EQ(run_cli("--config " + cfg + " --out " + (dir / "a").string() + " --algo as-smcmc --seed 9 --emit-summary -q"), 0);
  const auto rows = read_csv(dir / "a" / "steps.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1][2], "as-smcmc");
  EXPECT_TRUE(fs::exists(dir / "a" / "summary.json"));
  EXPECT_EQ(run_cli("--config " + cfg + " --out " + (dir / "b").string() + " --algo as-smcmc --seed 9 -q"), 0);
  EXPECT_EQ(slurp(dir / "a" / "steps.csv"), slurp(dir / "b" / "steps.csv"));
  EXPECT_EQ(run_cli("--config " + cfg + " --out " + (dir / "c").string() + " --runs 2 -q"), 0);
  EXPECT_EQ(read_csv(dir / "c" / "steps.csv").size(), 5u);

  EXPECT_NE(run_cli("--config " + (dir / "missing.cfg").string()), 0);
  EXPECT_NE(run_cli("--config " + cfg + " --algo bogus"), 0);
  {
    std::ofstream c(dir / "bad.cfg");
    c << "model = lin_gauss\nsubsample.delta_s = 1.5\n";
  }
  EXPECT_NE(run_cli("--config " + (dir / "bad.cfg").string() + " --out " + (dir / "d").string()), 0);
}
