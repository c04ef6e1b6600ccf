#ifndef TUPRE_ALGORITHM_HPP
#define TUPRE_ALGORITHM_HPP

// Truncated UPRE parameter estimation: minimize U_k over growing TSVD
// subspaces k0, k0 + dk, ... and stop once the moving-window mean of the
// relative change in alpha_k falls below a tolerance, provided the current
// minimizer is not pinned to the lower bound.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tupre/errors.hpp"
#include "tupre/estimators.hpp"

namespace tupre {

// Precision used to define the effective numerical rank throughout.
inline constexpr double kRankEps = 1e-15;

struct TupreConfig {
  Index k0 = 10;
  Index dk = 10;
  std::optional<Index> k_max;  // defaults to the effective rank
  double delta = 1e-3;
  int w = 5;
  std::optional<Index> l_estimate;

  void validate() const {
    if (k0 < 1) throw InputError("k0 must be at least 1");
    if (dk < 1) throw InputError("step size must be at least 1");
    if (k_max && *k_max < k0) throw InputError("k_max must be at least k0");
    if (!(delta > 0.0)) throw InputError("tolerance must be positive");
    if (w < 1) throw InputError("window length must be at least 1");
    if (l_estimate && *l_estimate < 1) throw InputError("noise index estimate must be at least 1");
  }
};

enum class Termination { tolerance, k_max };

inline std::string_view to_string(Termination t) {
  return t == Termination::tolerance ? "tolerance" : "k_max";
}

struct TraceRecord {
  Index k = 0;
  double alpha = 0.0;
  double alpha_min = 0.0;
  double c = std::numeric_limits<double>::quiet_NaN();  // undefined for the first step
  bool at_boundary = false;
  bool at_lower = false;
  double value = 0.0;  // U_k(alpha_k)
};

struct TupreResult {
  Index k_opt = 0;
  double alpha_opt = 0.0;
  double c_hat = std::numeric_limits<double>::infinity();
  std::vector<TraceRecord> trace;
  Termination terminated_by = Termination::k_max;
};

// Mean of the last min(w, c.size()) entries; +inf for an empty sequence.
inline double window_mean(std::span<const double> c, int w) {
  if (c.empty()) return std::numeric_limits<double>::infinity();
  const std::size_t n = std::min(c.size(), static_cast<std::size_t>(w));
  double sum = 0.0;
  for (std::size_t j = c.size() - n; j < c.size(); ++j) sum += c[j];
  return sum / static_cast<double>(n);
}

// Lower end of the search interval at subspace size k. Uses sigma_{l+1}
// when a noise index is known and sigma_k otherwise. When the bound is
// not below 1 it carries no information and the floor is used instead.
inline double step_lower_bound(const Vector& sigma, Index k, std::optional<Index> l_estimate,
                               double floor = MinimizeOptions{}.floor) {
  double s = 0.0;
  if (l_estimate) {
    s = *l_estimate < sigma.size() ? sigma[*l_estimate] : 0.0;
  } else {
    s = sigma[k - 1];
  }
  if (s >= 1.0) return floor;
  const double bound = alpha_lower_bound(s);
  return bound >= 1.0 ? floor : std::max(bound, floor);
}

// One evaluation of the loop body: the constrained minimizer of U_k and the
// lower bound of the interval it was searched on.
struct StepOutcome {
  MinimizeResult result;
  double alpha_min = 0.0;
};

// The step callable maps k to the StepOutcome for that subspace size.
template <class Step>
  requires std::invocable<Step, Index>
TupreResult run_tupre_steps(Step&& step, const TupreConfig& config, Index k_max) {
  config.validate();
  TupreResult out;
  std::vector<double> changes;
  double c_hat = std::numeric_limits<double>::infinity();

  auto evaluate = [&](Index k) {
    const StepOutcome o = step(k);
    const MinimizeResult& r = o.result;
    TraceRecord rec;
    rec.k = k;
    rec.alpha = r.alpha;
    rec.alpha_min = o.alpha_min;
    rec.at_boundary = r.at_boundary();
    rec.at_lower = r.at_lower;
    rec.value = r.value;
    return rec;
  };

  Index k = config.k0;
  out.trace.push_back(evaluate(k));

  std::size_t i = 0;
  while ((c_hat > config.delta && k < k_max) || out.trace.back().at_lower) {
    if (k >= k_max) break;
    ++i;
    k = std::min(k + config.dk, k_max);
    TraceRecord rec = evaluate(k);
    rec.c = std::abs(rec.alpha - out.trace.back().alpha) / rec.alpha;
    changes.push_back(rec.c);
    out.trace.push_back(rec);
    if (i >= static_cast<std::size_t>(config.w)) c_hat = window_mean(changes, config.w);
  }

  const TraceRecord& last = out.trace.back();
  out.k_opt = last.k;
  out.alpha_opt = last.alpha;
  out.c_hat = window_mean(changes, config.w);
  out.terminated_by =
      (c_hat <= config.delta && !last.at_lower) ? Termination::tolerance : Termination::k_max;
  return out;
}

inline TupreResult run_tupre(const EstimatorInput& in, const TupreConfig& config,
                             const MinimizeOptions& opts = {}) {
  in.validate();
  config.validate();
  const Index k_max = config.k_max.value_or(effective_rank(in.sigma, kRankEps));
  if (k_max > in.size())
    throw InputError("k_max " + std::to_string(k_max) + " exceeds the " +
                     std::to_string(in.size()) + " available singular values");
  if (k_max < config.k0) throw InputError("k_max must be at least k0");

  auto step = [&](Index k) {
    const double lo = step_lower_bound(in.sigma, k, config.l_estimate, opts.floor);
    return StepOutcome{minimize_objective(in, k, AlphaInterval{lo, 1.0}, Objective::upre, opts), lo};
  };
  return run_tupre_steps(step, config, k_max);
}

}  // namespace tupre

#endif  // TUPRE_ALGORITHM_HPP
