// tupre: regularization parameter estimation by truncated UPRE.
//
//   tupre tables     --out DIR
//   tupre picard     [problem flags] --noise S --seed N --out DIR
//   tupre sweep      [problem flags] --noise S --seed N --k 10,20,50 --objective upre|gcv --out DIR
//   tupre estimate   [problem flags] [algorithm flags] --noise S --seed N --out DIR
//   tupre montecarlo [problem flags] [algorithm flags] --noise 0.01,0.05,0.1 --runs R --seed N --out DIR
//
// Any subcommand accepts --config FILE.json; keys use the long flag names
// without dashes (e.g. {"tau": 2, "noise": [0.01, 0.1]}). Flags given on the
// command line take precedence over the file.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tupre/harness.hpp"

namespace {

using nlohmann::json;

struct Options {
  // problem
  std::string problem = "model";
  std::string model = "moderate";
  double tau = 1.5;
  double nu = 0.5;
  long n = 1024;
  std::string basis = "canonical";
  long n_side = 64;
  double psf_width = 2.0;
  std::vector<double> noise{0.01};
  bool noise_from_config = false;
  std::uint64_t seed = 1;
  std::string out = "out";
  // algorithm
  long k0 = 10;
  long dk = 10;
  std::optional<long> kmax;
  double delta = 1e-3;
  int window = 5;
  std::optional<long> ell;
  // sweep
  std::vector<long> ks{10, 15, 20, 50};
  std::string objective = "upre";
  // estimate
  bool save_instance = false;
  // montecarlo
  int runs = 100;
  int workers = 0;
};

template <class T>
void take(const json& cfg, const char* key, T& dst) {
  if (cfg.contains(key)) dst = cfg.at(key).get<T>();
}

template <class T>
void take(const json& cfg, const char* key, std::optional<T>& dst) {
  if (cfg.contains(key) && !cfg.at(key).is_null()) dst = cfg.at(key).get<T>();
}

// Applies a JSON config file before the command line is parsed, so that
// flags override file values.
void apply_config_file(int argc, char** argv, Options& o) {
  std::string path;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) path = argv[i + 1];
    else if (a.rfind("--config=", 0) == 0) path = a.substr(9);
  }
  if (path.empty()) return;
  json cfg;
  try {
    cfg = json::parse(tupre::read_text_file(path));
  } catch (const json::exception& e) {
    throw tupre::InputError("config file " + path + ": " + e.what());
  }
  if (!cfg.is_object()) throw tupre::InputError("config file must hold a JSON object");
  try {
    take(cfg, "problem", o.problem);
    take(cfg, "model", o.model);
    take(cfg, "tau", o.tau);
    take(cfg, "nu", o.nu);
    take(cfg, "n", o.n);
    take(cfg, "basis", o.basis);
    take(cfg, "n-side", o.n_side);
    take(cfg, "psf-width", o.psf_width);
    if (cfg.contains("noise")) {
      const auto& v = cfg.at("noise");
      o.noise = v.is_array() ? v.get<std::vector<double>>() : std::vector<double>{v.get<double>()};
      o.noise_from_config = true;
    }
    take(cfg, "seed", o.seed);
    take(cfg, "out", o.out);
    take(cfg, "k0", o.k0);
    take(cfg, "dk", o.dk);
    take(cfg, "kmax", o.kmax);
    take(cfg, "delta", o.delta);
    take(cfg, "window", o.window);
    take(cfg, "ell", o.ell);
    take(cfg, "k", o.ks);
    take(cfg, "objective", o.objective);
    take(cfg, "save-instance", o.save_instance);
    take(cfg, "runs", o.runs);
    take(cfg, "workers", o.workers);
  } catch (const json::exception& e) {
    throw tupre::InputError("config file " + path + ": " + e.what());
  }
}

void add_common(CLI::App* app, Options& o) {
  app->add_option("--config", "JSON file with default values for any flag");
  app->add_option("--seed", o.seed, "base RNG seed")->capture_default_str();
  app->add_option("--out", o.out, "output directory")->capture_default_str();
}

void add_problem(CLI::App* app, Options& o, bool noise_list) {
  app->add_option("--problem", o.problem, "model | blur")->capture_default_str();
  app->add_option("--model", o.model, "mild | moderate | severe")->capture_default_str();
  app->add_option("--tau", o.tau, "decay parameter")->capture_default_str();
  app->add_option("--nu", o.nu, "coefficient decay excess, 0 < nu < 1")->capture_default_str();
  app->add_option("--n", o.n, "problem size for model problems")->capture_default_str();
  app->add_option("--basis", o.basis, "canonical | dense singular bases for model problems")
      ->capture_default_str();
  app->add_option("--n-side", o.n_side, "image side for blur problems")->capture_default_str();
  app->add_option("--psf-width", o.psf_width, "Gaussian PSF standard deviation in pixels")
      ->capture_default_str();
  if (noise_list)
    app->add_option("--noise", o.noise, "noise levels (default 0.01,0.05,0.1)")->delimiter(',');
  else
    app->add_option("--noise", o.noise, "noise level")->expected(1)->capture_default_str();
}

void add_algorithm(CLI::App* app, Options& o) {
  app->add_option("--k0", o.k0, "initial subspace size")->capture_default_str();
  app->add_option("--dk", o.dk, "subspace increment")->capture_default_str();
  app->add_option("--kmax", o.kmax, "largest subspace size (default: effective rank)");
  app->add_option("--delta", o.delta, "tolerance on the windowed relative change")->capture_default_str();
  app->add_option("--window", o.window, "moving window length")->capture_default_str();
  app->add_option("--ell", o.ell, "noise index estimate; enables the tight lower bound");
}

tupre::ProblemSpec problem_spec(const Options& o) {
  tupre::ProblemSpec spec;
  spec.kind = tupre::parse_problem_kind(o.problem);
  spec.model = tupre::DecayModel{tupre::parse_decay_kind(o.model), o.tau};
  spec.n = o.n;
  spec.nu = o.nu;
  spec.basis = tupre::parse_basis_kind(o.basis);
  spec.n_side = o.n_side;
  spec.psf_width = o.psf_width;
  spec.validate();
  return spec;
}

tupre::TupreConfig tupre_config(const Options& o) {
  tupre::TupreConfig c;
  c.k0 = o.k0;
  c.dk = o.dk;
  if (o.kmax) c.k_max = *o.kmax;
  c.delta = o.delta;
  c.w = o.window;
  if (o.ell) c.l_estimate = *o.ell;
  c.validate();
  return c;
}

double single_noise(const Options& o) {
  if (o.noise.size() != 1) throw tupre::InputError("exactly one noise level is required");
  return o.noise.front();
}

int run(int argc, char** argv) {
  Options o;
  apply_config_file(argc, argv, o);

  CLI::App app{"Tikhonov parameter selection by truncated UPRE"};
  app.require_subcommand(1);

  auto* tables = app.add_subcommand("tables", "write the rank and noise-index tables");
  add_common(tables, o);

  auto* picard = app.add_subcommand("picard", "write Picard plot data for one instance");
  add_common(picard, o);
  add_problem(picard, o, false);

  auto* sweep = app.add_subcommand("sweep", "minimize UPRE or GCV for a list of subspace sizes");
  add_common(sweep, o);
  add_problem(sweep, o, false);
  sweep->add_option("--k", o.ks, "subspace sizes")->delimiter(',')->capture_default_str();
  sweep->add_option("--objective", o.objective, "upre | gcv")->capture_default_str();

  auto* estimate = app.add_subcommand("estimate", "run the truncated UPRE algorithm on one instance");
  add_common(estimate, o);
  add_problem(estimate, o, false);
  add_algorithm(estimate, o);
  estimate->add_flag("--save-instance", o.save_instance, "also write the generated instance");

  auto* mc = app.add_subcommand("montecarlo", "repeat the algorithm over noise levels and seeds");
  add_common(mc, o);
  add_problem(mc, o, true);
  add_algorithm(mc, o);
  mc->add_option("--runs", o.runs, "runs per noise level")->capture_default_str();
  mc->add_option("--workers", o.workers, "worker threads (0: hardware concurrency)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? tupre::kExitOk : tupre::kExitInput;
  }

  const tupre::fs::path out = o.out;
  if (tables->parsed()) {
    tupre::cmd_tables(out);
  } else if (picard->parsed()) {
    tupre::cmd_picard(problem_spec(o), single_noise(o), o.seed, out);
  } else if (sweep->parsed()) {
    std::vector<tupre::Index> ks(o.ks.begin(), o.ks.end());
    tupre::cmd_sweep(problem_spec(o), single_noise(o), o.seed, ks, tupre::parse_objective(o.objective), out);
  } else if (estimate->parsed()) {
    const auto res =
        tupre::cmd_estimate(problem_spec(o), single_noise(o), o.seed, tupre_config(o), out, o.save_instance);
    std::printf("k_opt=%lld alpha_opt=%.10g terminated_by=%s\n", static_cast<long long>(res.k_opt),
                res.alpha_opt, std::string(tupre::to_string(res.terminated_by)).c_str());
  } else if (mc->parsed()) {
    tupre::ExperimentConfig cfg;
    cfg.problem = problem_spec(o);
    cfg.noise_levels = (mc->count("--noise") || o.noise_from_config) ? o.noise
                                                                      : std::vector<double>{0.01, 0.05, 0.1};
    cfg.runs = o.runs;
    cfg.tupre = tupre_config(o);
    cfg.output_dir = out;
    cfg.seed = o.seed;
    cfg.workers = o.workers;
    const auto res = tupre::cmd_montecarlo(cfg);
    for (const auto& s : tupre::summarize(res.records, cfg.noise_levels))
      std::printf("noise=%g runs=%zu median k_opt=%g median alpha_opt=%.6g mean rel gap=%.4g\n", s.noise,
                  s.count, s.k_opt[1], s.alpha_opt[1], s.mean_rel_gap);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (...) {
    const auto [code, message] = tupre::exit_status(std::current_exception());
    std::cerr << message << '\n';
    return code;
  }
}
