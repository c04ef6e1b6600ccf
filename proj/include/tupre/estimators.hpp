#ifndef TUPRE_ESTIMATORS_HPP
#define TUPRE_ESTIMATORS_HPP

// UPRE and GCV objectives over a TSVD subspace of size k, the analytic
// UPRE derivatives, the bounding functions for U_k, the lower bound on
// the UPRE-optimal parameter, and a bounded one-dimensional minimizer.
//
// All quantities are in normalized units (sigma_1 == 1) and the noise
// variance is always an explicit input.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "tupre/errors.hpp"
#include "tupre/spectral_core.hpp"

namespace tupre {

struct EstimatorInput {
  Vector sigma;
  Vector s;
  double b_norm_sq = 0.0;
  Index m = 0;
  double noise_var = 0.0;

  Index size() const { return sigma.size(); }

  void validate() const {
    if (!(noise_var > 0.0) || !std::isfinite(noise_var))
      throw InputError("noise variance must be positive");
    if (sigma.size() != s.size()) throw InputError("sigma and s must have equal length");
    if (sigma.size() == 0) throw InputError("estimator input is empty");
    if (m < sigma.size()) throw InputError("data length m must be at least the number of terms");
  }
};

inline EstimatorInput make_estimator_input(const Vector& sigma, const SpectralCoefficients& coeffs,
                                           double noise_var) {
  EstimatorInput in{sigma, coeffs.s, coeffs.b_norm_sq, coeffs.m, noise_var};
  in.validate();
  return in;
}

// Admissible range [lo, hi] for the regularization parameter.
struct AlphaInterval {
  double lo = 0.0;
  double hi = 1.0;

  void validate() const {
    if (!(lo >= 0.0 && lo < hi && hi <= 1.0))
      throw InputError("alpha interval must satisfy 0 <= lo < hi <= 1");
  }
};

enum class Objective { upre, gcv };

inline std::string_view to_string(Objective o) { return o == Objective::upre ? "upre" : "gcv"; }

inline Objective parse_objective(std::string_view name) {
  if (name == "upre") return Objective::upre;
  if (name == "gcv") return Objective::gcv;
  throw InputError("unknown objective '" + std::string(name) + "'");
}

namespace detail {

inline void check_k(const EstimatorInput& in, Index k) {
  if (k < 1 || k > in.size())
    throw InputError("truncation index " + std::to_string(k) + " outside [1, " +
                     std::to_string(in.size()) + "]");
}

inline void check_alpha_positive(double alpha) {
  if (!(alpha > 0.0)) throw DomainError("UPRE derivatives are defined only for alpha > 0");
}

// Sums shared by the UPRE derivatives.
struct UpreSums {
  double data1 = 0.0;   // sum s^2 phi^2 gamma
  double noise1 = 0.0;  // sum phi gamma
  double data2 = 0.0;   // sum s^2 phi^2 gamma (2 gamma - phi)
  double noise2 = 0.0;  // sum phi gamma (gamma - phi)
};

inline UpreSums upre_sums(const EstimatorInput& in, Index k, double alpha) {
  const double a2 = alpha * alpha;
  UpreSums out;
  for (Index i = 0; i < k; ++i) {
    const double sg2 = in.sigma[i] * in.sigma[i];
    const double den = sg2 + a2;
    const double g = sg2 / den;
    const double p = a2 / den;
    const double s2 = in.s[i] * in.s[i];
    const double pg = p * g;
    out.data1 += s2 * p * pg;
    out.noise1 += pg;
    out.data2 += s2 * p * pg * (2.0 * g - p);
    out.noise2 += pg * (g - p);
  }
  return out;
}

}  // namespace detail

// U_k(alpha) = sum_{i<=k} phi_i^2 s_i^2 + 2 sigma^2 sum_{i<=k} gamma_i
inline double upre_value(const EstimatorInput& in, Index k, double alpha) {
  detail::check_k(in, k);
  if (!(alpha >= 0.0)) throw InputError("alpha must be nonnegative");
  const double a2 = alpha * alpha;
  double fit = 0.0;
  double trace = 0.0;
  for (Index i = 0; i < k; ++i) {
    const double sg2 = in.sigma[i] * in.sigma[i];
    const double den = sg2 + a2;
    const double p = a2 / den;
    fit += p * p * in.s[i] * in.s[i];
    trace += sg2 / den;
  }
  return fit + 2.0 * in.noise_var * trace;
}

inline double upre_grad(const EstimatorInput& in, Index k, double alpha) {
  detail::check_k(in, k);
  detail::check_alpha_positive(alpha);
  const auto t = detail::upre_sums(in, k, alpha);
  return 4.0 / alpha * (t.data1 - in.noise_var * t.noise1);
}

inline double upre_hess(const EstimatorInput& in, Index k, double alpha) {
  detail::check_k(in, k);
  detail::check_alpha_positive(alpha);
  const auto t = detail::upre_sums(in, k, alpha);
  const double grad = 4.0 / alpha * (t.data1 - in.noise_var * t.noise1);
  return -grad / alpha + 8.0 / (alpha * alpha) * (t.data2 - in.noise_var * t.noise2);
}

// G_k(alpha) with the tail sum_{i>k} s_i^2 taken from ||b||^2 - sum_{i<=k} s_i^2,
// clamped at zero against rounding.
inline double gcv_value(const EstimatorInput& in, Index k, double alpha) {
  detail::check_k(in, k);
  if (!(alpha >= 0.0)) throw InputError("alpha must be nonnegative");
  const double a2 = alpha * alpha;
  double fit = 0.0;
  double head = 0.0;
  double phi_sum = 0.0;
  for (Index i = 0; i < k; ++i) {
    const double sg2 = in.sigma[i] * in.sigma[i];
    const double p = a2 / (sg2 + a2);
    const double s2 = in.s[i] * in.s[i];
    fit += p * p * s2;
    head += s2;
    phi_sum += p;
  }
  const double tail = std::max(0.0, in.b_norm_sq - head);
  const double den = static_cast<double>(in.m - k) + phi_sum;
  if (den == 0.0) throw DomainError("GCV denominator vanishes (m == k and alpha == 0)");
  return (fit + tail) / (den * den);
}

inline double objective_value(const EstimatorInput& in, Index k, double alpha, Objective obj) {
  return obj == Objective::upre ? upre_value(in, k, alpha) : gcv_value(in, k, alpha);
}

// sigma_{l+1} / sqrt(1 - sigma_{l+1}^2)
inline double alpha_lower_bound(double sigma_lplus1) {
  if (!(sigma_lplus1 >= 0.0)) throw DomainError("singular value must be nonnegative");
  if (sigma_lplus1 >= 1.0) throw DomainError("lower bound requires sigma_{l+1} < 1");
  return sigma_lplus1 / std::sqrt(1.0 - sigma_lplus1 * sigma_lplus1);
}

struct UpreBounds {
  double lower;
  double upper;
};

// Lower G + F_k and upper H + F_k bounding functions for U_k, where the
// first l coefficients follow the decay assumption and the rest are noise:
//   G   = alpha^4 sum_{i<=l} gamma_i^2
//   H   = alpha^2 sum_{i<=l} phi_i gamma_i
//   F_k = sigma^2 ((k - l) + 2 sum_{i<=l} gamma_i + sum_{l<i<=k} gamma_i^2)
inline UpreBounds upre_bounds(const EstimatorInput& in, Index k, Index l, double alpha) {
  detail::check_k(in, k);
  if (l < 1 || l > k) throw InputError("noise index must satisfy 1 <= l <= k");
  if (!(alpha > 0.0)) throw DomainError("bounds require alpha > 0");
  const double a2 = alpha * alpha;
  double s1_head = 0.0;
  double s2_head = 0.0;
  double s2_tail = 0.0;
  for (Index i = 0; i < k; ++i) {
    const double sg2 = in.sigma[i] * in.sigma[i];
    const double g = sg2 / (sg2 + a2);
    if (i < l) {
      s1_head += g;
      s2_head += g * g;
    } else {
      s2_tail += g * g;
    }
  }
  const double G = a2 * a2 * s2_head;
  const double H = a2 * (s1_head - s2_head);
  const double F = in.noise_var * (static_cast<double>(k - l) + 2.0 * s1_head + s2_tail);
  return {G + F, H + F};
}

struct MinimizeResult {
  double alpha = 0.0;
  double value = 0.0;
  bool at_lower = false;
  bool at_upper = false;
  // Number of local minima seen on the coarse grid; more than one means
  // the minimizer is not certified unique.
  int grid_minima = 0;

  bool at_boundary() const { return at_lower || at_upper; }
};

// Parameters for minimize_objective. The defaults are the library contract.
struct MinimizeOptions {
  double xtol = 1e-10;
  int fill_points = 64;
  double floor = 1e-12;  // smallest alpha ever probed
};

namespace detail {

// Bounded derivative-free minimization: golden section with parabolic
// interpolation steps (Brent). Terminates when the bracket around x is
// within sqrt(eps)|x| + xtol/3 on either side.
template <class F>
double brent_minimize(F&& f, double a, double b, double xtol, double& fx_out) {
  const double golden = 0.5 * (3.0 - std::sqrt(5.0));
  const double sqrt_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  double x = a + golden * (b - a);
  double w = x;
  double v = x;
  double fx = f(x);
  double fw = fx;
  double fv = fx;
  double d = 0.0;
  double e = 0.0;

  for (int iter = 0; iter < 500; ++iter) {
    const double xm = 0.5 * (a + b);
    const double tol1 = sqrt_eps * std::abs(x) + xtol / 3.0;
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) break;

    bool take_golden = true;
    if (std::abs(e) > tol1) {
      double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      r = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * q * r) && p > q * (a - x) && p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if ((u - a) < tol2 || (b - u) < tol2) d = xm >= x ? tol1 : -tol1;
        take_golden = false;
      }
    }
    if (take_golden) {
      e = x >= xm ? a - x : b - x;
      d = golden * e;
    }
    const double u = x + (std::abs(d) >= tol1 ? d : (d > 0.0 ? tol1 : -tol1));
    const double fu = f(u);
    if (fu <= fx) {
      if (u >= x) a = x; else b = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  fx_out = fx;
  return x;
}

// Root of the UPRE gradient inside [lo, hi] given grad(lo) < 0 < grad(hi).
inline double upre_stationary_point(const EstimatorInput& in, Index k, double lo, double hi) {
  for (int iter = 0; iter < 200 && hi - lo > 1e-12; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (upre_grad(in, k, mid) < 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

inline std::vector<double> candidate_grid(const EstimatorInput& in, Index k, double lo, double hi,
                                          int fill_points) {
  std::vector<double> pts;
  pts.reserve(static_cast<std::size_t>(k + fill_points + 2));
  pts.push_back(lo);
  pts.push_back(hi);
  for (Index i = 0; i < k; ++i)
    if (in.sigma[i] > lo && in.sigma[i] < hi) pts.push_back(in.sigma[i]);
  const double llo = std::log(lo);
  const double lhi = std::log(hi);
  for (int j = 1; j <= fill_points; ++j)
    pts.push_back(std::exp(llo + (lhi - llo) * j / (fill_points + 1)));
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

}  // namespace detail

// alpha_k = argmin over [interval.lo, interval.hi] of the chosen objective.
// The objective is first sampled at the singular values inside the
// interval plus a log-spaced fill; the best sample's neighbours bracket a
// Brent refinement. For UPRE the refined point is polished on the sign of
// the analytic gradient so that the final abscissa meets xtol.
inline MinimizeResult minimize_objective(const EstimatorInput& in, Index k,
                                         const AlphaInterval& interval, Objective objective,
                                         const MinimizeOptions& opts = {}) {
  interval.validate();
  detail::check_k(in, k);
  const double lo = std::max(interval.lo, opts.floor);
  const double hi = interval.hi;
  if (!(lo < hi)) throw InputError("alpha interval is empty after applying the floor");

  auto f = [&](double a) {
    const double val = objective_value(in, k, a, objective);
    if (!std::isfinite(val))
      throw NumericError("objective is not finite at alpha = " + std::to_string(a), a);
    return val;
  };

  const auto pts = detail::candidate_grid(in, k, lo, hi, opts.fill_points);
  std::vector<double> vals(pts.size());
  for (std::size_t j = 0; j < pts.size(); ++j) vals[j] = f(pts[j]);

  std::size_t best = 0;
  for (std::size_t j = 1; j < vals.size(); ++j)
    if (vals[j] < vals[best]) best = j;

  MinimizeResult out;
  for (std::size_t j = 0; j < vals.size(); ++j) {
    const bool left_ok = j == 0 || vals[j] < vals[j - 1];
    const bool right_ok = j + 1 == vals.size() || vals[j] <= vals[j + 1];
    if (left_ok && right_ok) ++out.grid_minima;
  }

  const double a = pts[best == 0 ? 0 : best - 1];
  const double b = pts[std::min(best + 1, pts.size() - 1)];

  double x = pts[best];
  double fx = vals[best];
  // A UPRE sample at an end point whose slope points outward is the exact
  // constrained minimizer; no refinement needed.
  const bool upre_edge =
      objective == Objective::upre &&
      ((best + 1 == pts.size() && upre_grad(in, k, hi) <= 0.0) ||
       (best == 0 && upre_grad(in, k, lo) >= 0.0));
  if (a < b && !upre_edge) {
    double fb = 0.0;
    const double xb = detail::brent_minimize(f, a, b, opts.xtol, fb);
    if (fb < fx) {
      x = xb;
      fx = fb;
    }
    if (objective == Objective::upre && upre_grad(in, k, a) < 0.0 && upre_grad(in, k, b) > 0.0) {
      // Near a flat minimum the objective values differ only by rounding,
      // so the gradient root wins unless it is clearly worse.
      const double xr = detail::upre_stationary_point(in, k, a, b);
      const double fr = f(xr);
      if (fr <= fx + 8.0 * std::numeric_limits<double>::epsilon() * std::abs(fx)) {
        x = xr;
        fx = fr;
      }
    }
  }

  const double sqrt_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  const double tol = opts.xtol + 2.0 * sqrt_eps * std::abs(x);
  out.alpha = x;
  out.value = fx;
  out.at_lower = std::abs(x - lo) <= tol;
  out.at_upper = std::abs(hi - x) <= tol;
  return out;
}

}  // namespace tupre

#endif  // TUPRE_ESTIMATORS_HPP
