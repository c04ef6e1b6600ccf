#ifndef TUPRE_PROBLEMS_HPP
#define TUPRE_PROBLEMS_HPP

// Synthetic ground-truth problems: 1D problems whose spectrum follows a
// decay model and whose exact coefficients satisfy the discrete Picard
// condition, and 2D separable Gaussian deblurring. Also noise injection,
// reconstruction error and simple noise estimators.
//
// Generated operators are posed so that the data are normalized the same
// way the estimators expect: ||b_true|| == 1 in the operator's own units,
// and the noise is white with standard deviation noise_sigma once the data
// are divided by the largest singular value.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tupre/decay_models.hpp"
#include "tupre/errors.hpp"
#include "tupre/estimators.hpp"
#include "tupre/spectral_core.hpp"

namespace tupre {

namespace detail {

// Independent, reproducible random streams derived from one seed.
enum class Stream : std::uint32_t { signs = 1, left_basis = 2, right_basis = 3, noise = 4, image = 5 };

inline std::mt19937_64 make_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

inline Matrix random_orthonormal(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix G(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) G(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(G);
  Matrix Q = qr.householderQ();
  // Fix column signs so Q is a function of G alone.
  const Matrix& R = qr.matrixQR();
  for (Index j = 0; j < n; ++j)
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
  return Q;
}

}  // namespace detail

// Separable operator A = A_left (x) A_right acting on column-major images
// X (n x n) through vec(A_right X A_left^T). Its singular triplets are the
// pairwise products of the factor triplets, sorted by decreasing value;
// ties keep (left index, right index) lexicographic order.
class KroneckerSystem {
 public:
  KroneckerSystem() = default;
  KroneckerSystem(const Matrix& A_left, const Matrix& A_right) {
    if (A_left.rows() != A_left.cols() || A_right.rows() != A_right.cols())
      throw InputError("Kronecker factors must be square");
    const SingularSystem left = compute_svd(A_left);
    const SingularSystem right = compute_svd(A_right);
    nl_ = A_left.rows();
    nr_ = A_right.rows();
    UL_ = left.U();
    VL_ = left.V();
    UR_ = right.U();
    VR_ = right.V();
    scale_ = left.scale() * right.scale();

    const Index total = nl_ * nr_;
    std::vector<std::pair<Index, Index>> pairs;
    pairs.reserve(static_cast<std::size_t>(total));
    for (Index i = 0; i < nl_; ++i)
      for (Index j = 0; j < nr_; ++j) pairs.emplace_back(i, j);
    const Vector& sl = left.sigma();
    const Vector& sr = right.sigma();
    std::stable_sort(pairs.begin(), pairs.end(), [&](const auto& a, const auto& b) {
      return sl[a.first] * sr[a.second] > sl[b.first] * sr[b.second];
    });
    pairs_ = std::move(pairs);
    sigma_.resize(total);
    for (Index p = 0; p < total; ++p) {
      const auto [i, j] = pairs_[static_cast<std::size_t>(p)];
      sigma_[p] = sl[i] * sr[j];
    }
  }

  Index rows() const { return nl_ * nr_; }
  Index cols() const { return nl_ * nr_; }
  Index size() const { return sigma_.size(); }
  const Vector& sigma() const { return sigma_; }
  double scale() const { return scale_; }
  const std::vector<std::pair<Index, Index>>& pairing() const { return pairs_; }

  Vector project(const Vector& b) const {
    if (b.size() != rows()) throw InputError("data length does not match operator rows");
    const Eigen::Map<const Matrix> B(b.data(), nr_, nl_);
    const Matrix M = UR_.transpose() * B * UL_;
    Vector s(size());
    for (Index p = 0; p < size(); ++p) {
      const auto [i, j] = pairs_[static_cast<std::size_t>(p)];
      s[p] = M(j, i);
    }
    return s;
  }

  Vector expand(const Vector& c, Index k) const {
    Matrix C = Matrix::Zero(nr_, nl_);
    for (Index p = 0; p < k; ++p) {
      const auto [i, j] = pairs_[static_cast<std::size_t>(p)];
      C(j, i) = c[p];
    }
    const Matrix X = VR_ * C * VL_.transpose();
    return Eigen::Map<const Vector>(X.data(), X.size());
  }

 private:
  Index nl_ = 0;
  Index nr_ = 0;
  Matrix UL_, VL_, UR_, VR_;
  Vector sigma_;
  double scale_ = 1.0;
  std::vector<std::pair<Index, Index>> pairs_;
};

// Separable Gaussian blur with zero boundary conditions.
struct KroneckerBlur {
  Vector psf_1d;  // centred kernel of odd length, unit sum
  Index n_side = 0;
  Matrix A_left;
  Matrix A_right;

  // vec(A_right X A_left^T) for a column-major image x
  Vector apply(const Vector& x) const {
    const Eigen::Map<const Matrix> X(x.data(), n_side, n_side);
    const Matrix Y = A_right * X * A_left.transpose();
    return Eigen::Map<const Vector>(Y.data(), Y.size());
  }

  Matrix dense() const {
    const Index n = n_side * n_side;
    Matrix A(n, n);
    for (Index r = 0; r < n_side; ++r)
      for (Index c = 0; c < n_side; ++c)
        A.block(r * n_side, c * n_side, n_side, n_side) = A_left(r, c) * A_right;
    return A;
  }
};

inline KroneckerBlur make_gaussian_blur(Index n_side, double psf_width) {
  if (n_side < 1) throw InputError("image side must be positive");
  if (!(psf_width > 0.0) || !std::isfinite(psf_width)) throw InputError("PSF width must be positive");
  const Index half = std::max<Index>(1, static_cast<Index>(std::ceil(4.0 * psf_width)));
  Vector psf(2 * half + 1);
  for (Index t = -half; t <= half; ++t) {
    const double z = static_cast<double>(t) / psf_width;
    psf[t + half] = std::exp(-0.5 * z * z);
  }
  const double total = psf.sum();
  if (!(total > 0.0) || !std::isfinite(total)) throw DegenerateInputError("PSF has no mass");
  psf /= total;

  Matrix T = Matrix::Zero(n_side, n_side);
  for (Index i = 0; i < n_side; ++i)
    for (Index j = std::max<Index>(0, i - half); j <= std::min(n_side - 1, i + half); ++j)
      T(i, j) = psf[i - j + half];
  return KroneckerBlur{std::move(psf), n_side, T, T};
}

template <SpectralBasis System>
struct ProblemInstance {
  System system;
  Vector x_true;
  Vector b_true;
  Vector b;
  double noise_sigma = 0.0;  // in normalized units
  Index l_true = 0;          // largest i with (s_true,i)^2 > noise_sigma^2
  std::uint64_t seed = 0;
};

// Gaussian noise with standard deviation noise_sigma added to b_true.
inline Vector add_noise(const Vector& b_true, double noise_sigma, std::uint64_t seed) {
  if (!(noise_sigma >= 0.0)) throw InputError("noise level must be nonnegative");
  auto rng = detail::make_rng(seed, detail::Stream::noise);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector b = b_true;
  for (Index i = 0; i < b.size(); ++i) b[i] += noise_sigma * normal(rng);
  return b;
}

inline double rre(const Vector& x, const Vector& x_true) {
  if (x.size() != x_true.size()) throw InputError("vectors must have equal length");
  const double ref = x_true.norm();
  if (!(ref > 0.0)) throw DomainError("reference solution is zero");
  return (x - x_true).norm() / ref;
}

namespace detail {

inline Index crossover_index(const Vector& s_true, double noise_sigma) {
  const double floor = noise_sigma * noise_sigma;
  Index l = 0;
  for (Index i = 0; i < s_true.size(); ++i)
    if (s_true[i] * s_true[i] > floor) l = i + 1;
  return l;
}

struct ModelCoefficients {
  Vector sigma;
  Vector s_true;  // unit norm
};

inline ModelCoefficients model_coefficients(const DecayModel& model, Index n, double nu,
                                            double noise_sigma, std::uint64_t seed) {
  model.validate();
  if (n < 8) throw InputError("problem size must be at least 8");
  if (!(nu > 0.0 && nu < 1.0)) throw InputError("nu must lie in (0, 1)");
  if (!(noise_sigma > 0.0 && noise_sigma < 1.0)) throw InputError("noise level must lie in (0, 1)");

  Vector sigma = model_spectrum(model, n);
  if (noise_sigma >= std::pow(sigma[0], 1.0 + nu))
    throw DegenerateInputError("noise level leaves no coefficient above the noise floor");
  auto rng = make_rng(seed, Stream::signs);
  std::bernoulli_distribution coin(0.5);
  Vector c(n);
  for (Index i = 0; i < n; ++i) c[i] = (coin(rng) ? 1.0 : -1.0) * std::pow(sigma[i], 1.0 + nu);
  c /= c.norm();
  return {std::move(sigma), std::move(c)};
}

// s_i / sigma_i, with 0 where sigma_i has underflowed to zero (s_i is then
// zero as well).
inline Vector coefficient_solution(const Vector& s_true, const Vector& sigma) {
  Vector x(s_true.size());
  for (Index i = 0; i < x.size(); ++i) x[i] = sigma[i] > 0.0 ? s_true[i] / sigma[i] : 0.0;
  return x;
}

template <SpectralBasis System>
ProblemInstance<System> finish_instance(System system, Vector x_true, Vector b_true,
                                        double noise_sigma, std::uint64_t seed) {
  ProblemInstance<System> out;
  const double scale = system.scale();
  const Vector s_true = system.project(b_true) / scale;
  out.l_true = crossover_index(s_true, noise_sigma);
  if (out.l_true == 0) throw DegenerateInputError("no coefficient of b_true lies above the noise floor");
  // Noise is white at level noise_sigma in normalized units.
  out.b = add_noise(b_true, noise_sigma * scale, seed);
  out.system = std::move(system);
  out.x_true = std::move(x_true);
  out.b_true = std::move(b_true);
  out.noise_sigma = noise_sigma;
  out.seed = seed;
  return out;
}

}  // namespace detail

// Square problem with sigma_i from the decay model, exact coefficients
// |s_true,i| proportional to sigma_i^(1+nu) with random signs, and random
// orthonormal singular bases.
inline ProblemInstance<SingularSystem> generate_model_problem(const DecayModel& model, Index n,
                                                              double nu, double noise_sigma,
                                                              std::uint64_t seed) {
  auto [sigma, s_true] = detail::model_coefficients(model, n, nu, noise_sigma, seed);
  auto rng_u = detail::make_rng(seed, detail::Stream::left_basis);
  auto rng_v = detail::make_rng(seed, detail::Stream::right_basis);
  Matrix U = detail::random_orthonormal(n, rng_u);
  Matrix V = detail::random_orthonormal(n, rng_v);
  Vector b_true = U * s_true;
  Vector x_true = V * detail::coefficient_solution(s_true, sigma);
  return detail::finish_instance(SingularSystem(std::move(sigma), std::move(U), std::move(V), 1.0),
                                 std::move(x_true), std::move(b_true), noise_sigma, seed);
}

// Same coefficients and noise stream as generate_model_problem but with
// canonical bases, so A is diagonal. Estimators only see (sigma, s), so the
// two variants are statistically interchangeable; this one costs O(n).
inline ProblemInstance<DiagonalSystem> generate_model_problem_canonical(const DecayModel& model,
                                                                        Index n, double nu,
                                                                        double noise_sigma,
                                                                        std::uint64_t seed) {
  auto [sigma, s_true] = detail::model_coefficients(model, n, nu, noise_sigma, seed);
  Vector x_true = detail::coefficient_solution(s_true, sigma);
  return detail::finish_instance(DiagonalSystem(std::move(sigma), 1.0), std::move(x_true),
                                 std::move(s_true), noise_sigma, seed);
}

namespace detail {

// Piecewise-constant test image: a few overlapping rectangles on a zero
// background.
inline Vector blocky_image(Index n_side, std::uint64_t seed) {
  auto rng = make_rng(seed, Stream::image);
  const Index count = 6 + n_side / 8;
  std::uniform_int_distribution<Index> size_dist(std::max<Index>(2, n_side / 8), std::max<Index>(3, n_side / 3));
  std::uniform_real_distribution<double> level(0.2, 1.0);
  Matrix X = Matrix::Zero(n_side, n_side);
  for (Index r = 0; r < count; ++r) {
    const Index h = size_dist(rng);
    const Index w = size_dist(rng);
    std::uniform_int_distribution<Index> row(0, n_side - h);
    std::uniform_int_distribution<Index> col(0, n_side - w);
    const Index r0 = row(rng);
    const Index c0 = col(rng);
    X.block(r0, c0, h, w).array() += level(rng);
  }
  return Eigen::Map<const Vector>(X.data(), X.size());
}

}  // namespace detail

struct BlurProblem {
  KroneckerBlur blur;
  ProblemInstance<KroneckerSystem> instance;
};

inline BlurProblem generate_blur_problem(Index n_side, double psf_width, double noise_sigma,
                                         std::uint64_t seed) {
  if (n_side < 16 || (n_side & (n_side - 1)) != 0)
    throw InputError("image side must be a power of two, at least 16");
  if (!(noise_sigma > 0.0 && noise_sigma < 1.0)) throw InputError("noise level must lie in (0, 1)");
  KroneckerBlur blur = make_gaussian_blur(n_side, psf_width);
  KroneckerSystem system(blur.A_left, blur.A_right);

  Vector x_true = detail::blocky_image(n_side, seed);
  Vector b_true = blur.apply(x_true);
  const double nb = b_true.norm();
  if (!(nb > 0.0)) throw DegenerateInputError("blurred image vanishes");
  x_true /= nb;
  b_true /= nb;
  auto inst = detail::finish_instance(std::move(system), std::move(x_true), std::move(b_true),
                                      noise_sigma, seed);
  return BlurProblem{std::move(blur), std::move(inst)};
}

// Estimator input for an instance in normalized units, with the known
// noise variance.
template <SpectralBasis System>
EstimatorInput make_estimator_input(const ProblemInstance<System>& inst) {
  return make_estimator_input(inst.system.sigma(), normalize_data(inst.system, inst.b),
                              inst.noise_sigma * inst.noise_sigma);
}

// Mean of s_i^2 over the trailing tail_fraction of the coefficients.
inline double estimate_noise_variance(const SpectralCoefficients& coeffs, double tail_fraction) {
  if (!(tail_fraction > 0.0 && tail_fraction <= 0.5)) throw InputError("tail fraction must lie in (0, 0.5]");
  const auto n = coeffs.s.size();
  const auto count = static_cast<Index>(std::floor(tail_fraction * static_cast<double>(n)));
  if (count < 8) throw InputError("fewer than 8 coefficients in the tail");
  return coeffs.s.tail(count).squaredNorm() / static_cast<double>(count);
}

// First crossing of a centred 5-point moving average of s_i^2 below
// 2 * noise_var: the largest i whose averages at 1..i all exceed the
// threshold, or 1 if the very first one does not.
inline Index estimate_noise_index(const SpectralCoefficients& coeffs, double noise_var) {
  if (!(noise_var > 0.0)) throw InputError("noise variance must be positive");
  const Index n = coeffs.s.size();
  const double threshold = 2.0 * noise_var;
  Index last = 0;
  for (Index i = 0; i < n; ++i) {
    const Index a = std::max<Index>(0, i - 2);
    const Index b = std::min<Index>(n - 1, i + 2);
    const double avg = coeffs.s.segment(a, b - a + 1).squaredNorm() / static_cast<double>(b - a + 1);
    if (!(avg > threshold)) break;
    last = i + 1;
  }
  return std::max<Index>(1, last);
}

}  // namespace tupre

#endif  // TUPRE_PROBLEMS_HPP
