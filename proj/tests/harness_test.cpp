#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "reference_tables.hpp"
#include "scratch.hpp"
#include "tupre/harness.hpp"

using namespace tupre;

namespace {

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

ExperimentConfig small_experiment(const fs::path& dir) {
  ExperimentConfig cfg;
  cfg.problem.n = 512;
  cfg.noise_levels = {0.01, 0.1};
  cfg.runs = 3;
  cfg.output_dir = dir;
  cfg.seed = 77;
  cfg.workers = 2;
  return cfg;
}

}  // namespace

TEST(Quantile, MatchesReferenceImplementation) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t n : {1u, 2u, 3u, 7u, 100u, 101u}) {
    std::vector<double> x(n);
    for (auto& v : x) v = normal(rng);
    for (double p : {0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0})
      EXPECT_NEAR(quantile(x, p), oracle::quantile_type7(x, p), 1e-14) << n << " " << p;
  }
  EXPECT_DOUBLE_EQ(quantile({1.0, 2.0, 3.0, 4.0}, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile({1.0, 2.0, 3.0, 4.0}, 0.5), 2.5);
  EXPECT_THROW(quantile({}, 0.5), InputError);
  EXPECT_THROW(quantile({1.0}, 1.5), InputError);
}

TEST(Tables, ExamplesAndShape) {
  const auto dir = scratch_dir();
  cmd_tables(dir);
  const auto t1 = read_csv(dir / "table1.csv");
  const auto t2 = read_csv(dir / "table2.csv");
  ASSERT_EQ(t1.size(), 19u);
  ASSERT_EQ(t2.size(), 73u);
  EXPECT_EQ(t1[0], (std::vector<std::string>{"model", "tau", "eps", "r"}));
  auto find1 = [&](const std::string& model, double tau) {
    for (const auto& r : t1)
      if (r[0] == model && std::stod(r[1]) == tau) return std::stoll(r[3]);
    return -1LL;
  };
  auto find2 = [&](const std::string& model, double tau, double sigma) {
    for (const auto& r : t2)
      if (r[0] == model && std::stod(r[1]) == tau && std::stod(r[2]) == sigma) return std::stoll(r[3]);
    return -1LL;
  };
  EXPECT_EQ(find1("severe", 2.0), 50);
  EXPECT_EQ(find2("moderate", 2.0, 1e-2), 4);
  EXPECT_EQ(find2("severe", 1.25, 1e-8), 56);
  for (int s = 0; s < 4; ++s)
    for (int t = 0; t < 9; ++t) {
      EXPECT_LE(std::abs(find2("moderate", reference::kTaus[t], reference::kSigmas[s]) -
                         reference::kNoiseModerate[s][t]), 1);
      EXPECT_LE(std::abs(find2("severe", reference::kTaus[t], reference::kSigmas[s]) -
                         reference::kNoiseSevere[s][t]), 1);
    }
}

TEST(SweepAlpha, SingleRowAndRangeChecks) {
  const auto inst = generate_model_problem_canonical({DecayKind::moderate, 1.5}, 256, 0.5, 0.05, 1);
  const auto in = make_estimator_input(inst);
  const auto rows = sweep_alpha(in, {20}, Objective::upre);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].k, 20);
  EXPECT_GT(rows[0].alpha, 0.0);
  EXPECT_LE(rows[0].alpha, 1.0);
  EXPECT_EQ(rows[0].sigma_k, in.sigma[19]);
  EXPECT_THROW(sweep_alpha(in, {0}, Objective::upre), InputError);
  EXPECT_THROW(sweep_alpha(in, {257}, Objective::upre), InputError);
  EXPECT_THROW(sweep_alpha(in, {}, Objective::upre), InputError);
}

TEST(SweepAlpha, UpreAndGcvSequencesStabilize) {
  const auto inst = generate_model_problem_canonical({DecayKind::moderate, 1.5}, 1024, 0.5, 0.05, 1);
  const auto in = make_estimator_input(inst);
  const std::vector<Index> ks{10, 15, 20, 50, 100, 200, 400, 800};
  for (Objective obj : {Objective::upre, Objective::gcv}) {
    const auto rows = sweep_alpha(in, ks, obj);
    double lo = 1.0;
    double hi = 0.0;
    for (std::size_t j = rows.size() - 3; j < rows.size(); ++j) {
      lo = std::min(lo, rows[j].alpha);
      hi = std::max(hi, rows[j].alpha);
    }
    EXPECT_LT((hi - lo) / hi, 0.05) << to_string(obj);
    for (const auto& r : rows) {
      EXPECT_GT(r.alpha, 0.0);
      EXPECT_LE(r.alpha, 1.0);
    }
  }
}

TEST(CmdSweep, WritesTraceAndScript) {
  const auto dir = scratch_dir();
  ProblemSpec spec;
  spec.n = 256;
  cmd_sweep(spec, 0.05, 3, {10, 20, 50}, Objective::gcv, dir);
  const auto rows = read_csv(dir / "alpha_trace.csv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"k", "alpha_k", "value", "at_boundary", "sigma_k"}));
  EXPECT_TRUE(fs::exists(dir / "sweep.gp"));
}

TEST(CmdEstimate, ConvergesAtFivePercentAndIsDeterministic) {
  const auto dir = scratch_dir();
  ProblemSpec spec;
  spec.n = 4096;
  const auto res = cmd_estimate(spec, 0.05, 11, TupreConfig{}, dir / "a", true);
  EXPECT_EQ(res.terminated_by, Termination::tolerance);
  cmd_estimate(spec, 0.05, 11, TupreConfig{}, dir / "b");
  EXPECT_EQ(read_text_file(dir / "a" / "estimate.json"), read_text_file(dir / "b" / "estimate.json"));
  EXPECT_EQ(read_text_file(dir / "a" / "trace.csv"), read_text_file(dir / "b" / "trace.csv"));
  EXPECT_TRUE(fs::exists(dir / "a" / "instance" / "instance.json"));
  EXPECT_FALSE(fs::exists(dir / "b" / "instance"));

  const auto doc = json::parse(read_text_file(dir / "a" / "estimate.json"));
  EXPECT_EQ(doc.at("terminated_by"), "tolerance");
  EXPECT_EQ(doc.at("k_opt").get<Index>(), res.k_opt);
  EXPECT_EQ(doc.at("problem").at("tau").get<double>(), 1.5);
  EXPECT_EQ(read_csv(dir / "a" / "trace.csv").size(), res.trace.size() + 1);
}

TEST(CmdEstimate, SingleEvaluationConfig) {
  const auto dir = scratch_dir();
  ProblemSpec spec;
  spec.n = 256;
  TupreConfig cfg;
  cfg.k_max = cfg.k0;
  const auto res = cmd_estimate(spec, 0.05, 1, cfg, dir);
  EXPECT_EQ(res.trace.size(), 1u);
  EXPECT_EQ(res.terminated_by, Termination::k_max);
  const auto doc = json::parse(read_text_file(dir / "estimate.json"));
  EXPECT_TRUE(doc.at("c_hat").is_null());
}

TEST(CmdEstimate, BlurAndDenseProblems) {
  const auto dir = scratch_dir();
  ProblemSpec blur;
  blur.kind = ProblemKind::blur;
  blur.n_side = 32;
  const auto rb = cmd_estimate(blur, 0.01, 2, TupreConfig{}, dir / "blur");
  EXPECT_GE(rb.k_opt, 10);
  ProblemSpec dense;
  dense.n = 128;
  dense.basis = BasisKind::dense;
  const auto rd = cmd_estimate(dense, 0.05, 2, TupreConfig{}, dir / "dense");
  // The dense basis rotates the noise, so only validity is comparable.
  EXPECT_GE(rd.k_opt, 10);
  EXPECT_LE(rd.k_opt, 128);
  EXPECT_GT(rd.alpha_opt, 0.0);
  EXPECT_LE(rd.alpha_opt, 1.0);
  EXPECT_TRUE(fs::exists(dir / "dense" / "trace.csv"));
}

TEST(CmdPicard, RowsAndShape) {
  const auto dir = scratch_dir();
  ProblemSpec spec;
  spec.n = 512;
  cmd_picard(spec, 1e-12, 1, dir / "clean");
  auto rows = read_csv(dir / "clean" / "picard.csv");
  ASSERT_EQ(rows.size(), 513u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"i", "sigma", "abs_s", "ratio"}));
  std::vector<double> ratio;
  for (std::size_t i = 1; i < rows.size(); ++i) ratio.push_back(std::stod(rows[i][3]));
  auto moving = [](const std::vector<double>& r, std::size_t i) {
    double s = 0.0;
    for (std::size_t j = i; j < i + 5; ++j) s += r[j];
    return s / 5.0;
  };
  for (std::size_t i = 1; i + 5 <= ratio.size(); ++i) EXPECT_LE(moving(ratio, i), moving(ratio, i - 1));

  cmd_picard(spec, 0.01, 1, dir / "noisy");
  rows = read_csv(dir / "noisy" / "picard.csv");
  const auto inst = generate_model_problem_canonical(spec.model, spec.n, spec.nu, 0.01, 1);
  ratio.clear();
  for (std::size_t i = 1; i < rows.size(); ++i) ratio.push_back(std::stod(rows[i][3]));
  const auto l = static_cast<std::size_t>(inst.l_true);
  const double at_l = moving(ratio, l - 1);
  const double late = moving(ratio, ratio.size() - 5);
  EXPECT_GT(late, 10.0 * at_l);
  EXPECT_TRUE(fs::exists(dir / "noisy" / "picard.gp"));
}

TEST(RunSeed, Mapping) {
  EXPECT_EQ(run_seed(5, 0, 0), 5u);
  EXPECT_EQ(run_seed(5, 2, 7), 2012u);
}

TEST(ExperimentConfig, Validation) {
  ExperimentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.runs = 0;
  EXPECT_THROW(cfg.validate(), InputError);
  cfg.runs = 1001;
  EXPECT_THROW(cfg.validate(), InputError);
  cfg.runs = 5;
  cfg.noise_levels = {0.0};
  EXPECT_THROW(cfg.validate(), InputError);
  cfg.noise_levels = {};
  EXPECT_THROW(cfg.validate(), InputError);
}

TEST(Summarize, QuantilesMatchReferenceOnInjectedRecords) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unit(0.1, 1.0);
  std::vector<RunRecord> records;
  std::vector<double> k, ao, as, rt, rf;
  for (int r = 0; r < 37; ++r) {
    RunRecord rec;
    rec.level_index = 0;
    rec.k_opt = 10 + r * 3 % 17;
    rec.alpha_opt = unit(rng);
    rec.alpha_star = unit(rng);
    rec.rre_truncated = unit(rng);
    rec.rre_full = unit(rng);
    k.push_back(static_cast<double>(rec.k_opt));
    ao.push_back(rec.alpha_opt);
    as.push_back(rec.alpha_star);
    rt.push_back(rec.rre_truncated);
    rf.push_back(rec.rre_full);
    records.push_back(rec);
  }
  const auto s = summarize(records, {0.05});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].count, 37u);
  for (int q = 0; q < 3; ++q) {
    const double p = kQuantileLevels[q];
    EXPECT_DOUBLE_EQ(s[0].k_opt[q], oracle::quantile_type7(k, p));
    EXPECT_DOUBLE_EQ(s[0].alpha_opt[q], oracle::quantile_type7(ao, p));
    EXPECT_DOUBLE_EQ(s[0].alpha_star[q], oracle::quantile_type7(as, p));
    EXPECT_DOUBLE_EQ(s[0].rre_truncated[q], oracle::quantile_type7(rt, p));
    EXPECT_DOUBLE_EQ(s[0].rre_full[q], oracle::quantile_type7(rf, p));
  }
  double gap = 0.0;
  for (const auto& r : records) gap += std::abs(r.alpha_opt - r.alpha_star) / r.alpha_star;
  EXPECT_NEAR(s[0].mean_rel_gap, gap / 37.0, 1e-15);
}

TEST(CmdMontecarlo, SingleRunQuartilesCollapse) {
  const auto dir = scratch_dir();
  auto cfg = small_experiment(dir);
  cfg.runs = 1;
  cfg.noise_levels = {0.05};
  const auto res = cmd_montecarlo(cfg);
  ASSERT_EQ(res.records.size(), 1u);
  const auto rows = read_csv(dir / "summary.csv");
  ASSERT_EQ(rows.size(), 2u);
  const auto& r = res.records[0];
  const double singles[5] = {static_cast<double>(r.k_opt), r.alpha_opt, r.alpha_star, r.rre_truncated, r.rre_full};
  for (int m = 0; m < 5; ++m)
    for (int q = 0; q < 3; ++q) EXPECT_EQ(std::stod(rows[1][2 + 3 * m + q]), singles[m]) << m << " " << q;
  EXPECT_EQ(read_text_file(dir / "summary.csv").rfind("# quantiles:", 0), 0u);
}

TEST(CmdMontecarlo, RowCountsAndByteIdenticalReruns) {
  const auto dir = scratch_dir();
  auto cfg = small_experiment(dir / "a");
  const auto res = cmd_montecarlo(cfg);
  ASSERT_EQ(res.records.size(), 6u);
  for (std::size_t j = 0; j < res.records.size(); ++j) {
    const auto& r = res.records[j];
    EXPECT_EQ(r.level_index, j / 3);
    EXPECT_EQ(r.run, static_cast<int>(j % 3));
    EXPECT_EQ(r.seed, run_seed(cfg.seed, r.level_index, r.run));
    EXPECT_GT(r.alpha_opt, 0.0);
    EXPECT_LE(r.alpha_opt, 1.0);
    EXPECT_GE(r.rre_truncated, 0.0);
  }
  EXPECT_EQ(read_csv(dir / "a" / "runs.csv").size(), 7u);
  EXPECT_EQ(read_csv(dir / "a" / "summary.csv").size(), 3u);
  EXPECT_EQ(read_csv(dir / "a" / "timings.csv").size(), 7u);
  EXPECT_TRUE(fs::exists(dir / "a" / "boxplot.gp"));

  cfg.output_dir = dir / "b";
  cfg.workers = 1;
  cmd_montecarlo(cfg);
  for (const char* f : {"runs.csv", "traces.csv", "summary.csv", "boxplot.gp"})
    EXPECT_EQ(read_text_file(dir / "a" / f), read_text_file(dir / "b" / f)) << f;
}

TEST(CmdMontecarlo, PartialResultsFlushedBeforeFailure) {
  const auto dir = scratch_dir();
  ExperimentConfig cfg;
  cfg.problem.model = {DecayKind::mild, 0.5};
  cfg.problem.n = 4096;
  cfg.noise_levels = {0.01, 0.9};
  cfg.runs = 2;
  cfg.output_dir = dir;
  cfg.workers = 1;
  EXPECT_THROW(cmd_montecarlo(cfg), DegenerateInputError);
  EXPECT_EQ(read_csv(dir / "runs.csv").size(), 3u);
}

TEST(ExitStatus, MapsErrorClassesToCodes) {
  auto code = [](auto e) { return exit_status(std::make_exception_ptr(e)).first; };
  EXPECT_EQ(code(InputError("x")), 2);
  EXPECT_EQ(code(DegenerateInputError("x")), 2);
  EXPECT_EQ(code(DomainError("x")), 3);
  EXPECT_EQ(code(NumericError("x", 0.5)), 3);
  EXPECT_EQ(code(IoError("x")), 4);
  EXPECT_EQ(code(std::runtime_error("x")), 1);
  EXPECT_EQ(exit_status(std::make_exception_ptr(42)).first, 1);
  EXPECT_EQ(exit_status(std::make_exception_ptr(DomainError("bad"))).second, "numeric error: bad");
}
