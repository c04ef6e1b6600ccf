#ifndef TUPRE_DECAY_MODELS_HPP
#define TUPRE_DECAY_MODELS_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "tupre/errors.hpp"

namespace tupre {

enum class DecayKind { mild, moderate, severe };

inline std::string_view to_string(DecayKind kind) {
  switch (kind) {
    case DecayKind::mild: return "mild";
    case DecayKind::moderate: return "moderate";
    case DecayKind::severe: return "severe";
  }
  return "unknown";
}

inline DecayKind parse_decay_kind(std::string_view name) {
  if (name == "mild") return DecayKind::mild;
  if (name == "moderate") return DecayKind::moderate;
  if (name == "severe") return DecayKind::severe;
  throw InputError("unknown decay model '" + std::string(name) + "'");
}

// Normalized singular value decay: i^-tau (mild, moderate) or tau^(1-i)
// (severe), so that sigma_1 == 1 in every regime.
struct DecayModel {
  DecayKind kind = DecayKind::moderate;
  double tau = 1.5;

  void validate() const {
    if (!std::isfinite(tau)) throw InputError("decay parameter must be finite");
    switch (kind) {
      case DecayKind::mild:
        if (tau < 0.5 || tau > 1.0) throw InputError("mild decay requires 1/2 <= tau <= 1");
        break;
      case DecayKind::moderate:
        if (!(tau > 1.0)) throw InputError("moderate decay requires tau > 1");
        break;
      case DecayKind::severe:
        if (!(tau > 1.0)) throw InputError("severe decay requires tau > 1");
        break;
    }
  }
};

inline bool is_power_law(DecayKind kind) { return kind != DecayKind::severe; }

inline double singular_value_at(const DecayModel& model, std::int64_t i) {
  model.validate();
  if (i < 1) throw InputError("singular value index is 1-based");
  const auto x = static_cast<double>(i);
  return is_power_law(model.kind) ? std::pow(x, -model.tau) : std::pow(model.tau, 1.0 - x);
}

inline Eigen::VectorXd model_spectrum(const DecayModel& model, Eigen::Index n) {
  model.validate();
  Eigen::VectorXd sigma(n);
  for (Eigen::Index i = 0; i < n; ++i) sigma[i] = singular_value_at(model, i + 1);
  return sigma;
}

// Upper bound on the effective numerical rank at precision eps, rounded
// down: the bound is strict, so r <= floor(bound).
inline std::int64_t rank_bound(const DecayModel& model, double eps) {
  model.validate();
  if (!(eps > 0.0 && eps < 1.0)) throw InputError("eps must lie in (0, 1)");
  const double bound = is_power_law(model.kind)
                           ? std::pow(eps, -1.0 / model.tau)
                           : 1.0 - std::log(eps) / std::log(model.tau);
  return static_cast<std::int64_t>(std::floor(bound));
}

// Index past which the data coefficients are noise dominated, for a
// noise level sigma_noise = sigma_{l+delta}^(1+nu). Rounded to nearest,
// never below 1.
inline std::int64_t noise_index_bound(const DecayModel& model, double sigma_noise, double delta,
                                      double nu) {
  model.validate();
  if (!(sigma_noise > 0.0 && sigma_noise < 1.0)) throw InputError("noise level must lie in (0, 1)");
  if (!(delta > 0.0 && delta < 1.0)) throw InputError("delta must lie in (0, 1)");
  if (!(nu > 0.0 && nu < 1.0)) throw InputError("nu must lie in (0, 1)");
  const double ell = is_power_law(model.kind)
                         ? std::pow(sigma_noise, -1.0 / (model.tau * (1.0 + nu))) - delta
                         : (1.0 - delta) - std::log(sigma_noise) / ((nu + 1.0) * std::log(model.tau));
  return std::max<std::int64_t>(1, std::llround(ell));
}

struct DecayFit {
  DecayKind kind;
  double tau;
  double residual;  // RMS misfit of log(sigma)
};

namespace detail {

struct LineFit {
  double slope;
  double intercept;
  double rms;
};

inline LineFit fit_line(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const double mx = x.mean();
  const double my = y.mean();
  const Eigen::VectorXd dx = x.array() - mx;
  const double sxx = dx.squaredNorm();
  const double slope = dx.dot(y.array().matrix() - Eigen::VectorXd::Constant(y.size(), my)) / sxx;
  const double intercept = my - slope * mx;
  const Eigen::VectorXd r = y.array() - (intercept + slope * x.array());
  return {slope, intercept, std::sqrt(r.squaredNorm() / static_cast<double>(y.size()))};
}

}  // namespace detail

// Least-squares fit of log(sigma_i) over the 1-based inclusive index range
// [first, last], against log(i) (power law) and against i (exponential).
// Returns whichever model fits better; ties go to the exponential model.
inline DecayFit fit_decay(const Eigen::VectorXd& sigma, Eigen::Index first, Eigen::Index last) {
  if (first < 1 || last > sigma.size() || last - first + 1 < 3)
    throw InputError("fit range must hold at least 3 indices inside the spectrum");
  const Eigen::Index len = last - first + 1;
  Eigen::VectorXd idx(len), logi(len), logs(len);
  for (Eigen::Index j = 0; j < len; ++j) {
    const double s = sigma[first - 1 + j];
    if (!(s > 0.0) || !std::isfinite(s)) throw InputError("fit range holds non-positive singular values");
    idx[j] = static_cast<double>(first + j);
    logi[j] = std::log(idx[j]);
    logs[j] = std::log(s);
  }

  const auto power = detail::fit_line(logi, logs);
  const auto expo = detail::fit_line(idx, logs);

  const double tau_power = -power.slope;
  const double tau_exp = std::exp(-expo.slope);
  const bool exp_valid = tau_exp > 1.0;
  if (exp_valid && expo.rms <= power.rms + 1e-12) return {DecayKind::severe, tau_exp, expo.rms};
  return {tau_power <= 1.0 ? DecayKind::mild : DecayKind::moderate, tau_power, power.rms};
}

}  // namespace tupre

#endif  // TUPRE_DECAY_MODELS_HPP
