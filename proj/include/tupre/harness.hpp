#ifndef TUPRE_HARNESS_HPP
#define TUPRE_HARNESS_HPP

// Experiment orchestration behind the command-line tool: table generation,
// alpha_k sweeps, single estimates, Picard data and Monte Carlo studies.
// Every command writes CSV plus a gnuplot script into an output directory.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "tupre/algorithm.hpp"
#include "tupre/decay_models.hpp"
#include "tupre/errors.hpp"
#include "tupre/estimators.hpp"
#include "tupre/io.hpp"
#include "tupre/problems.hpp"
#include "tupre/spectral_core.hpp"

namespace tupre {

enum class ProblemKind { model, blur };
enum class BasisKind { canonical, dense };

inline std::string_view to_string(ProblemKind k) { return k == ProblemKind::model ? "model" : "blur"; }
inline std::string_view to_string(BasisKind b) { return b == BasisKind::canonical ? "canonical" : "dense"; }

inline ProblemKind parse_problem_kind(std::string_view s) {
  if (s == "model") return ProblemKind::model;
  if (s == "blur") return ProblemKind::blur;
  throw InputError("unknown problem '" + std::string(s) + "'");
}

inline BasisKind parse_basis_kind(std::string_view s) {
  if (s == "canonical") return BasisKind::canonical;
  if (s == "dense") return BasisKind::dense;
  throw InputError("unknown basis '" + std::string(s) + "'");
}

struct ProblemSpec {
  ProblemKind kind = ProblemKind::model;
  DecayModel model{DecayKind::moderate, 1.5};
  Index n = 1024;
  double nu = 0.5;
  BasisKind basis = BasisKind::canonical;
  Index n_side = 64;
  double psf_width = 2.0;

  void validate() const {
    if (kind == ProblemKind::model) {
      model.validate();
      if (n < 8) throw InputError("problem size must be at least 8");
      if (!(nu > 0.0 && nu < 1.0)) throw InputError("nu must lie in (0, 1)");
    } else {
      if (n_side < 16 || (n_side & (n_side - 1)) != 0)
        throw InputError("image side must be a power of two, at least 16");
      if (!(psf_width > 0.0)) throw InputError("PSF width must be positive");
    }
  }

  json to_json() const {
    if (kind == ProblemKind::blur)
      return {{"problem", "blur"}, {"n_side", n_side}, {"psf_width", psf_width}};
    return {{"problem", "model"},  {"model", to_string(model.kind)}, {"tau", model.tau},
            {"n", n},              {"nu", nu},
            {"basis", to_string(basis)}};
  }
};

using AnyInstance =
    std::variant<ProblemInstance<DiagonalSystem>, ProblemInstance<SingularSystem>, BlurProblem>;

inline AnyInstance make_instance(const ProblemSpec& spec, double noise_sigma, std::uint64_t seed) {
  spec.validate();
  if (spec.kind == ProblemKind::blur)
    return generate_blur_problem(spec.n_side, spec.psf_width, noise_sigma, seed);
  if (spec.basis == BasisKind::dense)
    return generate_model_problem(spec.model, spec.n, spec.nu, noise_sigma, seed);
  return generate_model_problem_canonical(spec.model, spec.n, spec.nu, noise_sigma, seed);
}

// Calls f(const ProblemInstance<System>&) on whichever instance is held.
template <class F>
decltype(auto) visit_instance(const AnyInstance& any, F&& f) {
  return std::visit(
      [&](const auto& held) -> decltype(auto) {
        if constexpr (std::is_same_v<std::decay_t<decltype(held)>, BlurProblem>)
          return f(held.instance);
        else
          return f(held);
      },
      any);
}

// Linear interpolation between closest ranks over the sorted sample
// (type 7): position h = (n - 1) p.
inline double quantile(std::vector<double> x, double p) {
  if (x.empty()) throw InputError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InputError("quantile level must lie in [0, 1]");
  std::sort(x.begin(), x.end());
  const double h = static_cast<double>(x.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

inline constexpr double kQuantileLevels[3] = {0.25, 0.5, 0.75};
inline constexpr const char* kQuantileNote =
    "# quantiles: linear interpolation between closest ranks, position (n-1)p, inclusive\n";

// ---------------------------------------------------------------- tables

inline constexpr double kTableTaus[9] = {1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0};
inline constexpr double kTableSigmas[4] = {1e-1, 1e-2, 1e-4, 1e-8};
inline constexpr double kTableEps = 1e-15;
inline constexpr double kTableDelta = 0.5;
inline constexpr double kTableNu = 0.5;

struct TablesOutput {
  CsvTable table1{{"model", "tau", "eps", "r"}};
  CsvTable table2{{"model", "tau", "sigma", "ell"}};
};

inline TablesOutput build_tables() {
  TablesOutput out;
  for (DecayKind kind : {DecayKind::moderate, DecayKind::severe})
    for (double tau : kTableTaus)
      out.table1.add(std::string(to_string(kind)), tau, kTableEps,
                     rank_bound(DecayModel{kind, tau}, kTableEps));
  for (DecayKind kind : {DecayKind::moderate, DecayKind::severe})
    for (double sigma : kTableSigmas)
      for (double tau : kTableTaus)
        out.table2.add(std::string(to_string(kind)), tau, sigma,
                       noise_index_bound(DecayModel{kind, tau}, sigma, kTableDelta, kTableNu));
  return out;
}

inline void cmd_tables(const fs::path& out_dir) {
  ensure_directory(out_dir);
  const auto t = build_tables();
  t.table1.save(out_dir / "table1.csv");
  t.table2.save(out_dir / "table2.csv");
}

// ----------------------------------------------------------------- sweep

struct SweepRow {
  Index k;
  double alpha;
  double value;
  bool at_boundary;
  double sigma_k;
};

inline std::vector<SweepRow> sweep_alpha(const EstimatorInput& in, const std::vector<Index>& ks,
                                         Objective objective, const MinimizeOptions& opts = {}) {
  if (ks.empty()) throw InputError("k list is empty");
  const Index r = effective_rank(in.sigma, kRankEps);
  std::vector<SweepRow> rows;
  for (Index k : ks) {
    if (k < 1 || k > r)
      throw InputError("k = " + std::to_string(k) + " outside [1, effective rank " + std::to_string(r) + "]");
    const auto res = minimize_objective(in, k, AlphaInterval{opts.floor, 1.0}, objective, opts);
    rows.push_back({k, res.alpha, res.value, res.at_boundary(), in.sigma[k - 1]});
  }
  return rows;
}

inline void cmd_sweep(const ProblemSpec& spec, double noise_sigma, std::uint64_t seed,
                      const std::vector<Index>& ks, Objective objective, const fs::path& out_dir) {
  const AnyInstance inst = make_instance(spec, noise_sigma, seed);
  const auto rows = visit_instance(inst, [&](const auto& p) {
    return sweep_alpha(make_estimator_input(p), ks, objective);
  });
  ensure_directory(out_dir);
  CsvTable csv({"k", "alpha_k", "value", "at_boundary", "sigma_k"});
  for (const auto& r : rows) csv.add(r.k, r.alpha, r.value, r.at_boundary, r.sigma_k);
  csv.save(out_dir / "alpha_trace.csv");
  write_text_file(out_dir / "sweep.gp",
                  "set datafile separator ','\n"
                  "set key autotitle columnhead\n"
                  "set logscale y\n"
                  "set xlabel 'k'\n"
                  "set ylabel 'alpha_k, sigma_k'\n"
                  "set title '" + std::string(to_string(objective)) + " minimizer versus subspace size'\n"
                  "plot 'alpha_trace.csv' using 1:2 with linespoints title 'alpha_k', \\\n"
                  "     '' using 1:5 with lines dashtype 2 title 'sigma_k'\n");
}

// -------------------------------------------------------------- estimate

inline json result_to_json(const TupreResult& r, Index k_max) {
  json j;
  j["k_opt"] = r.k_opt;
  j["alpha_opt"] = r.alpha_opt;
  j["c_hat"] = std::isfinite(r.c_hat) ? json(r.c_hat) : json(nullptr);
  j["terminated_by"] = to_string(r.terminated_by);
  j["k_max"] = k_max;
  j["steps"] = r.trace.size();
  j["at_boundary"] = r.trace.empty() ? false : r.trace.back().at_boundary;
  return j;
}

inline CsvTable trace_table(const std::vector<TraceRecord>& trace) {
  CsvTable csv({"k", "alpha", "alpha_min", "c", "at_boundary", "at_lower", "value"});
  for (const auto& t : trace) csv.add(t.k, t.alpha, t.alpha_min, t.c, t.at_boundary, t.at_lower, t.value);
  return csv;
}

inline json config_to_json(const TupreConfig& c) {
  json j{{"k0", c.k0}, {"dk", c.dk}, {"delta", c.delta}, {"w", c.w}};
  j["k_max"] = c.k_max ? json(*c.k_max) : json(nullptr);
  j["ell"] = c.l_estimate ? json(*c.l_estimate) : json(nullptr);
  return j;
}

inline TupreResult cmd_estimate(const ProblemSpec& spec, double noise_sigma, std::uint64_t seed,
                                const TupreConfig& config, const fs::path& out_dir,
                                bool save_problem = false) {
  const AnyInstance inst = make_instance(spec, noise_sigma, seed);
  Index k_max = 0;
  const TupreResult res = visit_instance(inst, [&](const auto& p) {
    const auto in = make_estimator_input(p);
    k_max = config.k_max.value_or(effective_rank(in.sigma, kRankEps));
    return run_tupre(in, config);
  });
  ensure_directory(out_dir);
  json doc = result_to_json(res, k_max);
  doc["problem"] = spec.to_json();
  doc["noise_sigma"] = noise_sigma;
  doc["seed"] = seed;
  doc["config"] = config_to_json(config);
  write_text_file(out_dir / "estimate.json", doc.dump(2) + "\n");
  trace_table(res.trace).save(out_dir / "trace.csv");
  if (save_problem)
    std::visit([&](const auto& held) { save_instance(out_dir / "instance", held, spec.to_json()); }, inst);
  return res;
}

// ---------------------------------------------------------------- picard

inline void cmd_picard(const ProblemSpec& spec, double noise_sigma, std::uint64_t seed,
                       const fs::path& out_dir) {
  const AnyInstance inst = make_instance(spec, noise_sigma, seed);
  const auto rows = visit_instance(inst, [&](const auto& p) {
    return picard_data(p.system, normalize_data(p.system, p.b));
  });
  ensure_directory(out_dir);
  CsvTable csv({"i", "sigma", "abs_s", "ratio"});
  for (const auto& r : rows) csv.add(r.index, r.sigma, r.abs_s, r.ratio);
  csv.save(out_dir / "picard.csv");
  write_text_file(out_dir / "picard.gp",
                  "set datafile separator ','\n"
                  "set key autotitle columnhead\n"
                  "set logscale y\n"
                  "set xlabel 'i'\n"
                  "set title 'Picard plot'\n"
                  "plot 'picard.csv' using 1:2 with lines title 'sigma_i', \\\n"
                  "     '' using 1:3 with points pointtype 7 pointsize 0.4 title '|u_i^T b|', \\\n"
                  "     '' using 1:4 with points pointtype 1 pointsize 0.4 title 'ratio'\n");
}

// ------------------------------------------------------------ montecarlo

struct ExperimentConfig {
  ProblemSpec problem;
  std::vector<double> noise_levels{0.01, 0.05, 0.1};
  int runs = 100;
  TupreConfig tupre;
  fs::path output_dir = "out";
  std::uint64_t seed = 1;
  int workers = 0;  // 0: one per hardware thread

  void validate() const {
    problem.validate();
    tupre.validate();
    if (runs < 1) throw InputError("runs must be at least 1");
    if (runs > 1000) throw InputError("runs must not exceed 1000, the per-level seed stride");
    if (noise_levels.empty()) throw InputError("at least one noise level is required");
    for (double s : noise_levels)
      if (!(s > 0.0 && s < 1.0)) throw InputError("noise levels must lie in (0, 1)");
    if (workers < 0) throw InputError("worker count must be nonnegative");
  }
};

inline std::uint64_t run_seed(std::uint64_t base, std::size_t level_index, int run_index) {
  return base + 1000u * static_cast<std::uint64_t>(level_index) + static_cast<std::uint64_t>(run_index);
}

struct RunRecord {
  int run = 0;
  std::uint64_t seed = 0;
  double noise = 0.0;
  std::size_t level_index = 0;
  Index l_true = 0;
  Index k_opt = 0;
  double alpha_opt = 0.0;
  double alpha_star = 0.0;
  double rre_truncated = 0.0;
  double rre_full = 0.0;
  double wall_time = 0.0;  // seconds
  Termination terminated_by = Termination::k_max;
  Index effective_rank = 0;
  double sigma_l_plus_1 = 0.0;
  std::vector<TraceRecord> trace;
};

template <SpectralBasis System>
RunRecord evaluate_run(const ProblemInstance<System>& inst, const TupreConfig& config) {
  const auto coeffs = normalize_data(inst.system, inst.b);
  const auto in = make_estimator_input(inst.system.sigma(), coeffs, inst.noise_sigma * inst.noise_sigma);
  RunRecord rec;
  rec.l_true = inst.l_true;
  rec.effective_rank = effective_rank(in.sigma, kRankEps);
  rec.sigma_l_plus_1 = inst.l_true < in.size() ? in.sigma[inst.l_true] : 0.0;

  const TupreResult res = run_tupre(in, config);
  rec.k_opt = res.k_opt;
  rec.alpha_opt = res.alpha_opt;
  rec.terminated_by = res.terminated_by;
  rec.trace = res.trace;

  const Index r = rec.effective_rank;
  rec.alpha_star = minimize_objective(in, r, AlphaInterval{0.0, 1.0}, Objective::upre).alpha;
  rec.rre_truncated = rre(solve_filtered(inst.system, coeffs, res.alpha_opt, res.k_opt).x, inst.x_true);
  rec.rre_full = rre(solve_filtered(inst.system, coeffs, rec.alpha_star, r).x, inst.x_true);
  return rec;
}

struct MonteCarloResult {
  std::vector<RunRecord> records;  // level-major, run-index order
  std::exception_ptr error;        // first failure in run order, if any
};

// Runs every (level, run) pair on a pool of workers. Results land in
// fixed slots so the output order never depends on scheduling. On failure
// the records before the first failing slot are kept.
inline MonteCarloResult run_montecarlo(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::size_t levels = cfg.noise_levels.size();
  const std::size_t total = levels * static_cast<std::size_t>(cfg.runs);
  std::vector<std::optional<RunRecord>> slots(total);
  std::vector<std::exception_ptr> errors(total);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};

  auto worker = [&] {
    for (;;) {
      const std::size_t job = next.fetch_add(1);
      if (job >= total || failed.load()) return;
      const std::size_t level = job / static_cast<std::size_t>(cfg.runs);
      const int run = static_cast<int>(job % static_cast<std::size_t>(cfg.runs));
      const double noise = cfg.noise_levels[level];
      const std::uint64_t seed = run_seed(cfg.seed, level, run);
      try {
        const auto t0 = std::chrono::steady_clock::now();
        const AnyInstance inst = make_instance(cfg.problem, noise, seed);
        RunRecord rec = visit_instance(inst, [&](const auto& p) { return evaluate_run(p, cfg.tupre); });
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rec.run = run;
        rec.seed = seed;
        rec.noise = noise;
        rec.level_index = level;
        slots[job] = std::move(rec);
      } catch (...) {
        errors[job] = std::current_exception();
        failed.store(true);
      }
    }
  };

  unsigned n_workers = cfg.workers > 0 ? static_cast<unsigned>(cfg.workers)
                                       : std::max(1u, std::thread::hardware_concurrency());
  n_workers = static_cast<unsigned>(std::min<std::size_t>(n_workers, total));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  MonteCarloResult out;
  for (std::size_t j = 0; j < total; ++j) {
    if (errors[j]) {
      out.error = errors[j];
      break;
    }
    if (!slots[j]) break;
    out.records.push_back(std::move(*slots[j]));
  }
  if (!out.error && out.records.size() != total)
    for (const auto& e : errors)
      if (e) {
        out.error = e;
        break;
      }
  return out;
}

struct LevelSummary {
  double noise = 0.0;
  std::size_t count = 0;
  double k_opt[3]{};
  double alpha_opt[3]{};
  double alpha_star[3]{};
  double rre_truncated[3]{};
  double rre_full[3]{};
  double mean_rel_gap = 0.0;
};

inline std::vector<LevelSummary> summarize(const std::vector<RunRecord>& records,
                                           const std::vector<double>& noise_levels) {
  std::vector<LevelSummary> out;
  for (std::size_t level = 0; level < noise_levels.size(); ++level) {
    std::vector<double> k, ao, as, rt, rf;
    double gap = 0.0;
    for (const auto& r : records) {
      if (r.level_index != level) continue;
      k.push_back(static_cast<double>(r.k_opt));
      ao.push_back(r.alpha_opt);
      as.push_back(r.alpha_star);
      rt.push_back(r.rre_truncated);
      rf.push_back(r.rre_full);
      gap += std::abs(r.alpha_opt - r.alpha_star) / r.alpha_star;
    }
    if (k.empty()) continue;
    LevelSummary s;
    s.noise = noise_levels[level];
    s.count = k.size();
    for (int q = 0; q < 3; ++q) {
      s.k_opt[q] = quantile(k, kQuantileLevels[q]);
      s.alpha_opt[q] = quantile(ao, kQuantileLevels[q]);
      s.alpha_star[q] = quantile(as, kQuantileLevels[q]);
      s.rre_truncated[q] = quantile(rt, kQuantileLevels[q]);
      s.rre_full[q] = quantile(rf, kQuantileLevels[q]);
    }
    s.mean_rel_gap = gap / static_cast<double>(k.size());
    out.push_back(s);
  }
  return out;
}

inline CsvTable summary_table(const std::vector<LevelSummary>& summary) {
  std::vector<std::string> header{"noise", "count"};
  for (const char* name : {"k_opt", "alpha_opt", "alpha_star", "rre_truncated", "rre_full"})
    for (const char* q : {"q25", "q50", "q75"}) header.push_back(std::string(name) + "_" + q);
  header.push_back("mean_rel_gap");
  CsvTable csv(header);
  csv.set_preamble(kQuantileNote);
  for (const auto& s : summary)
    csv.add(s.noise, s.count, s.k_opt[0], s.k_opt[1], s.k_opt[2], s.alpha_opt[0], s.alpha_opt[1],
            s.alpha_opt[2], s.alpha_star[0], s.alpha_star[1], s.alpha_star[2], s.rre_truncated[0],
            s.rre_truncated[1], s.rre_truncated[2], s.rre_full[0], s.rre_full[1], s.rre_full[2],
            s.mean_rel_gap);
  return csv;
}

inline void write_montecarlo(const ExperimentConfig& cfg, const std::vector<RunRecord>& records) {
  ensure_directory(cfg.output_dir);
  CsvTable runs({"run", "seed", "noise", "l_true", "k_opt", "alpha_opt", "alpha_star", "rre_truncated",
                 "rre_full", "terminated_by"});
  CsvTable traces({"noise", "run", "k", "alpha", "alpha_min", "c", "at_boundary", "value"});
  CsvTable timings({"noise", "run", "wall_time"});
  for (const auto& r : records) {
    runs.add(r.run, r.seed, r.noise, r.l_true, r.k_opt, r.alpha_opt, r.alpha_star, r.rre_truncated,
             r.rre_full, std::string(to_string(r.terminated_by)));
    for (const auto& t : r.trace) traces.add(r.noise, r.run, t.k, t.alpha, t.alpha_min, t.c, t.at_boundary, t.value);
    timings.add(r.noise, r.run, r.wall_time);
  }
  runs.save(cfg.output_dir / "runs.csv");
  traces.save(cfg.output_dir / "traces.csv");
  timings.save(cfg.output_dir / "timings.csv");
  summary_table(summarize(records, cfg.noise_levels)).save(cfg.output_dir / "summary.csv");

  std::string gp =
      "set datafile separator ','\n"
      "set style data boxplot\n"
      "set style boxplot outliers pointtype 1\n"
      "set key off\n"
      "set multiplot layout 1,3\n";
  // runs.csv columns: 3 noise (factor), 5 k_opt, 6 alpha_opt, 8 rre_truncated
  for (const auto& [title, col] : {std::pair{"k_opt", 5}, {"alpha_opt", 6}, {"rre_truncated", 8}}) {
    gp += std::string("set title '") + title + "'\n";
    gp += "plot 'runs.csv' skip 1 using (0):" + std::to_string(col) + ":(0.5):3\n";
  }
  gp += "unset multiplot\n";
  write_text_file(cfg.output_dir / "boxplot.gp", gp);
}

inline MonteCarloResult cmd_montecarlo(const ExperimentConfig& cfg) {
  MonteCarloResult res = run_montecarlo(cfg);
  write_montecarlo(cfg, res.records);
  if (res.error) std::rethrow_exception(res.error);
  return res;
}

// ------------------------------------------------------------ exit codes

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;
inline constexpr int kExitOther = 1;

// Process exit code for an exception escaping a subcommand, plus the
// message prefix to print.
inline std::pair<int, std::string> exit_status(const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const InputError& e) {
    return {kExitInput, std::string("input error: ") + e.what()};
  } catch (const DomainError& e) {
    return {kExitNumeric, std::string("numeric error: ") + e.what()};
  } catch (const NumericError& e) {
    return {kExitNumeric, std::string("numeric error: ") + e.what()};
  } catch (const IoError& e) {
    return {kExitIo, std::string("i/o error: ") + e.what()};
  } catch (const std::exception& e) {
    return {kExitOther, std::string("error: ") + e.what()};
  } catch (...) {
    return {kExitOther, "error: unknown exception"};
  }
}

}  // namespace tupre

#endif  // TUPRE_HARNESS_HPP
