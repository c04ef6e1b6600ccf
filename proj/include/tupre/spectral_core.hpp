#ifndef TUPRE_SPECTRAL_CORE_HPP
#define TUPRE_SPECTRAL_CORE_HPP

// Singular systems, data projections and filtered truncated Tikhonov
// solutions. Everything downstream of this header works in normalized
// units: singular values are divided by the largest one (recorded as
// `scale`) and data vectors are divided by the same factor.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tupre/errors.hpp"

namespace tupre {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// A factored operator A = scale * U diag(sigma) V^T that can map data
// onto its left singular vectors and synthesize solutions from its right
// singular vectors without exposing how the bases are stored.
template <class S>
concept SpectralBasis = requires(const S& sys, const Vector& v, Index k) {
  { sys.rows() } -> std::convertible_to<Index>;
  { sys.cols() } -> std::convertible_to<Index>;
  { sys.size() } -> std::convertible_to<Index>;
  { sys.sigma() } -> std::convertible_to<const Vector&>;
  { sys.scale() } -> std::convertible_to<double>;
  { sys.project(v) } -> std::convertible_to<Vector>;
  { sys.expand(v, k) } -> std::convertible_to<Vector>;
};

namespace detail {

inline void check_sigma(const Vector& sigma) {
  if (sigma.size() == 0) throw InputError("singular system has no singular values");
  for (Index i = 0; i < sigma.size(); ++i) {
    if (!std::isfinite(sigma[i]) || sigma[i] < 0.0)
      throw InputError("singular values must be finite and nonnegative");
    if (i > 0 && sigma[i] > sigma[i - 1])
      throw InputError("singular values must be nonincreasing");
  }
}

}  // namespace detail

// Thin SVD with explicitly stored singular vectors.
class SingularSystem {
 public:
  SingularSystem() = default;

  // sigma is taken in normalized units (sigma[0] == 1); U is m x k and
  // V is n x k with k == sigma.size().
  SingularSystem(Vector sigma, Matrix U, Matrix V, double scale)
      : sigma_(std::move(sigma)), U_(std::move(U)), V_(std::move(V)), scale_(scale) {
    detail::check_sigma(sigma_);
    if (U_.cols() != sigma_.size() || V_.cols() != sigma_.size())
      throw InputError("singular vector count does not match singular values");
    if (!(scale_ > 0.0) || !std::isfinite(scale_))
      throw InputError("scale must be positive and finite");
  }

  Index rows() const { return U_.rows(); }
  Index cols() const { return V_.rows(); }
  Index size() const { return sigma_.size(); }
  const Vector& sigma() const { return sigma_; }
  const Matrix& U() const { return U_; }
  const Matrix& V() const { return V_; }
  double scale() const { return scale_; }

  // U^T b
  Vector project(const Vector& b) const {
    if (b.size() != rows()) throw InputError("data length does not match operator rows");
    return U_.transpose() * b;
  }

  // sum_{i<k} c_i v_i
  Vector expand(const Vector& c, Index k) const {
    return V_.leftCols(k) * c.head(k);
  }

  // U diag(sigma) V^T * scale
  Matrix reconstruct() const {
    return scale_ * (U_ * sigma_.asDiagonal() * V_.transpose());
  }

 private:
  Vector sigma_;
  Matrix U_;
  Matrix V_;
  double scale_ = 1.0;
};

// A = scale * diag(sigma): both bases are the canonical one.
class DiagonalSystem {
 public:
  DiagonalSystem() = default;
  DiagonalSystem(Vector sigma, double scale) : sigma_(std::move(sigma)), scale_(scale) {
    detail::check_sigma(sigma_);
    if (!(scale_ > 0.0) || !std::isfinite(scale_))
      throw InputError("scale must be positive and finite");
  }

  Index rows() const { return sigma_.size(); }
  Index cols() const { return sigma_.size(); }
  Index size() const { return sigma_.size(); }
  const Vector& sigma() const { return sigma_; }
  double scale() const { return scale_; }

  Vector project(const Vector& b) const {
    if (b.size() != rows()) throw InputError("data length does not match operator rows");
    return b;
  }

  Vector expand(const Vector& c, Index k) const {
    Vector x = Vector::Zero(cols());
    x.head(k) = c.head(k);
    return x;
  }

 private:
  Vector sigma_;
  double scale_ = 1.0;
};

// Projected data s_i = u_i^T b (normalized units) and the energy of b.
struct SpectralCoefficients {
  Vector s;
  double b_norm_sq = 0.0;
  Index m = 0;
};

struct FilteredSolution {
  Vector x;
  double alpha = 0.0;
  Index k = 0;
};

struct FilterFactors {
  Vector gamma;
  Vector phi;
};

struct PicardRow {
  Index index;  // 1-based
  double sigma;
  double abs_s;
  double ratio;
};

// Thin SVD of a dense matrix, normalized so that sigma[0] == 1.
inline SingularSystem compute_svd(const Matrix& A) {
  if (A.size() == 0) throw InputError("matrix is empty");
  if (!A.allFinite()) throw InputError("matrix has non-finite entries");
  if (A.cwiseAbs().maxCoeff() == 0.0) throw DegenerateInputError("matrix is identically zero");

  Eigen::BDCSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& raw = svd.singularValues();
  const Index k = raw.size();

  std::vector<Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return raw[a] > raw[b]; });

  const double scale = raw[order[0]];
  Vector sigma(k);
  Matrix U(A.rows(), k);
  Matrix V(A.cols(), k);
  for (Index j = 0; j < k; ++j) {
    const Index src = order[static_cast<std::size_t>(j)];
    sigma[j] = raw[src] / scale;
    U.col(j) = svd.matrixU().col(src);
    V.col(j) = svd.matrixV().col(src);
  }
  sigma[0] = 1.0;
  return SingularSystem(std::move(sigma), std::move(U), std::move(V), scale);
}

// s_i = u_i^T (b / scale), b_norm_sq = ||b / scale||^2
template <SpectralBasis System>
SpectralCoefficients normalize_data(const System& sys, const Vector& b) {
  if (b.size() != sys.rows())
    throw InputError("data length " + std::to_string(b.size()) + " does not match " +
                     std::to_string(sys.rows()) + " operator rows");
  const double inv = 1.0 / sys.scale();
  SpectralCoefficients out;
  out.s = sys.project(b) * inv;
  out.b_norm_sq = b.squaredNorm() * inv * inv;
  out.m = sys.rows();
  return out;
}

// Largest 1-based index with sigma[i-1] > eps * sigma[0]; 0 if none.
inline Index effective_rank(std::span<const double> sigma, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw InputError("eps must lie in (0, 1)");
  if (sigma.empty()) return 0;
  const double cut = eps * sigma[0];
  Index r = 0;
  for (std::size_t i = 0; i < sigma.size(); ++i)
    if (sigma[i] > cut) r = static_cast<Index>(i + 1);
  return r;
}

inline Index effective_rank(const Vector& sigma, double eps) {
  return effective_rank(std::span<const double>(sigma.data(), static_cast<std::size_t>(sigma.size())),
                        eps);
}

template <SpectralBasis System>
Index effective_rank(const System& sys, double eps) {
  return effective_rank(sys.sigma(), eps);
}

inline FilterFactors filter_factors(const Vector& sigma, double alpha) {
  if (!(alpha >= 0.0)) throw InputError("alpha must be nonnegative");
  const double a2 = alpha * alpha;
  FilterFactors f{Vector(sigma.size()), Vector(sigma.size())};
  for (Index i = 0; i < sigma.size(); ++i) {
    const double s2 = sigma[i] * sigma[i];
    const double den = s2 + a2;
    f.gamma[i] = s2 / den;
    f.phi[i] = a2 / den;
  }
  return f;
}

// x = sum_{i<=k} gamma_i(alpha) s_i / sigma_i v_i, in normalized units.
template <SpectralBasis System>
FilteredSolution solve_filtered(const System& sys, const SpectralCoefficients& coeffs,
                                double alpha, Index k) {
  if (k < 1 || k > sys.size())
    throw InputError("truncation index " + std::to_string(k) + " outside [1, " +
                     std::to_string(sys.size()) + "]");
  if (coeffs.s.size() != sys.size()) throw InputError("coefficient count does not match system");
  if (!(alpha >= 0.0)) throw InputError("alpha must be nonnegative");

  const Vector& sigma = sys.sigma();
  const double a2 = alpha * alpha;
  Vector c = Vector::Zero(sys.size());
  for (Index i = 0; i < k; ++i) {
    const double s2 = sigma[i] * sigma[i];
    // gamma_i / sigma_i = sigma_i / (sigma_i^2 + alpha^2)
    c[i] = sigma[i] / (s2 + a2) * coeffs.s[i];
  }
  return FilteredSolution{sys.expand(c, k), alpha, k};
}

template <SpectralBasis System>
std::vector<PicardRow> picard_data(const System& sys, const SpectralCoefficients& coeffs) {
  if (coeffs.s.size() != sys.size()) throw InputError("coefficient count does not match system");
  const Vector& sigma = sys.sigma();
  std::vector<PicardRow> rows;
  rows.reserve(static_cast<std::size_t>(sys.size()));
  for (Index i = 0; i < sys.size(); ++i) {
    const double a = std::abs(coeffs.s[i]);
    rows.push_back({i + 1, sigma[i], a, a / sigma[i]});
  }
  return rows;
}

}  // namespace tupre

#endif  // TUPRE_SPECTRAL_CORE_HPP
