#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "circgof/errors.hpp"
#include "circgof/summation.hpp"

namespace circgof {

using cplx = std::complex<double>;

namespace detail {

//! exp(i 2 pi t), reducing t modulo 1 first.
inline cplx unit_phase(double t) {
  double frac = t - std::floor(t);
  return std::polar(1.0, two_pi * frac);
}

}  // namespace detail

//! Hermitian Fourier sequence stored by its coefficients c_0..c_J; c_{-j} = conj(c_j).
class FourierSeq {
 public:
  FourierSeq() : c_{cplx(0.0)} {}
  explicit FourierSeq(std::vector<cplx> nonnegative) : c_(std::move(nonnegative)) {
    require(!c_.empty(), ErrorCode::domain, "FourierSeq needs at least the zeroth coefficient");
  }

  static FourierSeq uniform() { return FourierSeq(std::vector<cplx>{1.0}); }

  //! Builds from c_{-J}..c_J (index j + J); rejects sequences that are not Hermitian.
  static FourierSeq from_two_sided(const std::vector<cplx>& two_sided, double tol = 1e-12) {
    require(two_sided.size() % 2 == 1, ErrorCode::domain, "two-sided sequence must have odd length");
    auto J = static_cast<long>(two_sided.size() / 2);
    std::vector<cplx> c(J + 1);
    for (long j = 0; j <= J; ++j) {
      cplx pos = two_sided[J + j];
      cplx neg = two_sided[J - j];
      double scale = std::max(1.0, std::abs(pos));
      if (std::abs(pos - std::conj(neg)) > tol * scale)
        throw Error(ErrorCode::imaginary_residual,
                    "coefficient " + std::to_string(j) + " violates Hermitian symmetry");
      c[j] = pos;
    }
    return FourierSeq(std::move(c));
  }

  long max_index() const { return static_cast<long>(c_.size()) - 1; }

  cplx operator[](long j) const {
    if (j < 0) return std::conj((*this)[-j]);
    if (j > max_index()) return 0.0;
    return c_[j];
  }

  const std::vector<cplx>& nonnegative() const { return c_; }

 private:
  std::vector<cplx> c_;
};

//! sum_j c_j exp(-i 2 pi j x) at x in [0, 1).
inline double eval_density(const FourierSeq& f, double x) {
  require(x >= 0.0 && x < 1.0, ErrorCode::domain, "evaluation point outside [0, 1)");
  const auto& c = f.nonnegative();
  if (std::abs(c[0].imag()) > 1e-9)
    throw Error(ErrorCode::imaginary_residual, "imaginary part of the zeroth coefficient");
  CompensatedSum acc;
  acc += c[0].real();
  for (std::size_t j = 1; j < c.size(); ++j) {
    cplx e = std::conj(detail::unit_phase(static_cast<double>(j) * x));
    acc += 2.0 * (c[j] * e).real();
  }
  return acc.value();
}

//! Fourier sequence of a probability density on the circle, checked on a grid.
class CircularDensity {
 public:
  //! grid_size 0 picks max(4096, next power of two >= 8 J).
  explicit CircularDensity(FourierSeq coeffs, std::size_t grid_size = 0)
      : coeffs_(std::move(coeffs)) {
    cplx c0 = coeffs_[0];
    require(std::abs(c0.real() - 1.0) <= 1e-12 && std::abs(c0.imag()) <= 1e-12, ErrorCode::domain,
            "density must have zeroth coefficient 1");
    if (grid_size == 0) {
      grid_size = 4096;
      auto want = static_cast<std::size_t>(8 * std::max(1L, coeffs_.max_index()));
      while (grid_size < want) grid_size *= 2;
    }
    require(grid_size >= 16, ErrorCode::domain, "grid too coarse");
    build_grid(grid_size);
    min_value_ = *std::min_element(values_.begin(), values_.end());
    if (min_value_ < -1e-9)
      throw Error(ErrorCode::negative_density,
                  "density takes value " + std::to_string(min_value_) + " on the grid");
  }

  static CircularDensity uniform() { return CircularDensity(FourierSeq::uniform()); }

  const FourierSeq& coeffs() const { return coeffs_; }
  double operator()(double x) const { return eval_density(coeffs_, x); }
  std::size_t grid_size() const { return values_.size(); }
  //! f(i / G), i = 0..G-1.
  const std::vector<double>& grid_values() const { return values_; }
  //! Exact distribution function at i / G, i = 0..G.
  const std::vector<double>& grid_cdf() const { return cdf_; }
  double min_on_grid() const { return min_value_; }

 private:
  void build_grid(std::size_t G) {
    // Table of exp(-i 2 pi m / G); j * i mod G indexes it exactly.
    std::vector<double> cs(G), sn(G);
    for (std::size_t m = 0; m < G; ++m) {
      double t = two_pi * static_cast<double>(m) / static_cast<double>(G);
      cs[m] = std::cos(t);
      sn[m] = std::sin(t);
    }
    values_.assign(G, 1.0);
    cdf_.assign(G + 1, 0.0);
    const auto& c = coeffs_.nonnegative();
    for (std::size_t i = 0; i < G; ++i) {
      CompensatedSum f, F;
      f += 1.0;
      F += static_cast<double>(i) / static_cast<double>(G);
      for (std::size_t j = 1; j < c.size(); ++j) {
        std::size_t m = (j * i) % G;
        double a = c[j].real(), b = c[j].imag();
        f += 2.0 * (a * cs[m] + b * sn[m]);
        F += (a * sn[m] + b * (1.0 - cs[m])) / (std::numbers::pi * static_cast<double>(j));
      }
      values_[i] = f.value();
      cdf_[i] = F.value();
    }
    cdf_[0] = 0.0;
    cdf_[G] = 1.0;
  }

  FourierSeq coeffs_;
  std::vector<double> values_;
  std::vector<double> cdf_;
  double min_value_ = 0.0;
};

enum class NoiseKind { polynomial, exponential, custom };

//! Error law through its Fourier coefficients phi_j = E exp(i 2 pi j eps).
class NoiseModel {
 public:
  //! scale > 0: phi_j = (1 + (2 pi scale j)^2)^{-p/2}; scale == 0: phi_j = |j|^{-p}.
  static NoiseModel polynomial(double p, double scale = 0.0) {
    require(p > 0.0 && std::isfinite(p), ErrorCode::domain, "polynomial noise needs p > 0");
    require(scale >= 0.0 && std::isfinite(scale), ErrorCode::domain, "noise scale must be >= 0");
    NoiseModel m;
    m.kind_ = NoiseKind::polynomial;
    m.degree_ = p;
    m.param_ = scale;
    m.l2_ = polynomial_l2(p, scale);
    return m;
  }

  //! phi_j = exp(-rate |j|^p).
  static NoiseModel exponential(double p, double rate) {
    require(p > 0.0 && std::isfinite(p), ErrorCode::domain, "exponential noise needs p > 0");
    require(rate > 0.0 && std::isfinite(rate), ErrorCode::domain, "exponential noise needs rate > 0");
    NoiseModel m;
    m.kind_ = NoiseKind::exponential;
    m.degree_ = p;
    m.param_ = rate;
    m.l2_ = exponential_l2(p, rate);
    return m;
  }

  static NoiseModel wrapped_laplace(double b) {
    require(b > 0.0, ErrorCode::domain, "wrapped Laplace needs b > 0");
    return polynomial(2.0, b);
  }
  static NoiseModel wrapped_normal(double sigma) {
    require(sigma > 0.0, ErrorCode::domain, "wrapped normal needs sigma > 0");
    return exponential(2.0, 2.0 * std::numbers::pi * std::numbers::pi * sigma * sigma);
  }
  static NoiseModel wrapped_cauchy(double rho) {
    require(rho > 0.0 && rho < 1.0, ErrorCode::domain, "wrapped Cauchy needs rho in (0, 1)");
    return exponential(1.0, -std::log(rho));
  }

  //! Finitely many coefficients; phi_j = 0 beyond the stored range.
  static NoiseModel custom(FourierSeq phi) {
    require(std::abs(phi[0] - cplx(1.0)) <= 1e-12, ErrorCode::domain, "noise needs phi_0 = 1");
    bool ones = true;
    CompensatedSum l2;
    l2 += 1.0;
    for (long j = 1; j <= phi.max_index(); ++j) {
      double a = std::abs(phi[j]);
      require(a <= 1.0 + 1e-12, ErrorCode::domain, "noise coefficients must satisfy |phi_j| <= 1");
      ones = ones && phi[j] == cplx(1.0);
      l2 += 2.0 * a * a;
    }
    NoiseModel m;
    m.kind_ = NoiseKind::custom;
    m.custom_ = std::move(phi);
    m.dirac_ = ones;
    m.l2_ = std::sqrt(l2.value());
    return m;
  }

  //! Error degenerate at zero, represented by phi_j = 1 for |j| <= J.
  static NoiseModel dirac(long J) {
    require(J >= 1, ErrorCode::domain, "truncation index must be >= 1");
    return custom(FourierSeq(std::vector<cplx>(J + 1, cplx(1.0))));
  }

  NoiseKind kind() const { return kind_; }
  double degree() const { return degree_; }
  //! Scale for polynomial noise, rate for exponential noise.
  double parameter() const { return param_; }
  bool is_dirac() const { return dirac_; }
  const FourierSeq& custom_coeffs() const { return custom_; }

  //! Largest index with a representable coefficient.
  long max_index() const {
    return kind_ == NoiseKind::custom ? custom_.max_index() : std::numeric_limits<long>::max();
  }

  cplx coeff(long j) const {
    if (kind_ == NoiseKind::custom) return custom_[j];
    if (j == 0) return 1.0;
    return modulus(j);
  }

  double modulus(long j) const {
    if (j == 0) return 1.0;
    double aj = std::abs(static_cast<double>(j));
    switch (kind_) {
      case NoiseKind::polynomial:
        if (param_ == 0.0) return std::pow(aj, -degree_);
        return std::pow(1.0 + square(two_pi * param_ * aj), -0.5 * degree_);
      case NoiseKind::exponential:
        return std::exp(-param_ * std::pow(aj, degree_));
      case NoiseKind::custom:
        return std::abs(custom_[j]);
    }
    return 0.0;
  }

  //! ||phi||_{l2(Z)}; +inf when the series diverges.
  double l2_norm() const { return l2_; }

 private:
  static double square(double x) { return x * x; }

  static double polynomial_l2(double p, double b) {
    if (2.0 * p <= 1.0) return std::numeric_limits<double>::infinity();
    if (b == 0.0) return std::sqrt(1.0 + 2.0 * std::riemann_zeta(2.0 * p));
    // Direct sum, then the integral of the leading power term for the tail.
    constexpr long head = 200000;
    CompensatedSum s;
    s += 1.0;
    for (long j = 1; j <= head; ++j)
      s += 2.0 * std::pow(1.0 + square(two_pi * b * static_cast<double>(j)), -p);
    double t0 = static_cast<double>(head) + 0.5;
    s += 2.0 * std::pow(two_pi * b, -2.0 * p) * std::pow(t0, 1.0 - 2.0 * p) / (2.0 * p - 1.0);
    return std::sqrt(s.value());
  }

  static double exponential_l2(double p, double rate) {
    // Terms below 1e-40 are dropped.
    double jmax = std::pow(92.0 / (2.0 * rate), 1.0 / p);
    require(jmax < 1e8, ErrorCode::too_large, "exponential noise decays too slowly to sum");
    CompensatedSum s;
    s += 1.0;
    for (long j = 1; j <= static_cast<long>(jmax) + 1; ++j)
      s += 2.0 * std::exp(-2.0 * rate * std::pow(static_cast<double>(j), p));
    return std::sqrt(s.value());
  }

  NoiseKind kind_ = NoiseKind::custom;
  double degree_ = 0.0;
  double param_ = 0.0;
  FourierSeq custom_;
  bool dirac_ = false;
  double l2_ = 1.0;
};

enum class SmoothnessKind { ordinary, super, custom };

//! Sobolev-type ellipsoid {f : sum_{j != 0} |f_j - f0_j|^2 / a_|j|^2 <= R^2}.
class RegularityClass {
 public:
  static RegularityClass ordinary(double s, double R) {
    require(s > 0.0 && std::isfinite(s), ErrorCode::domain, "smoothness must be > 0");
    return RegularityClass(SmoothnessKind::ordinary, s, R, {});
  }
  static RegularityClass super(double s, double R) {
    require(s > 0.0 && std::isfinite(s), ErrorCode::domain, "smoothness must be > 0");
    return RegularityClass(SmoothnessKind::super, s, R, {});
  }
  //! weights a_1..a_J; must be positive and non-increasing.
  static RegularityClass custom(std::vector<double> weights, double R) {
    require(!weights.empty(), ErrorCode::domain, "custom weights must be non-empty");
    for (std::size_t i = 0; i < weights.size(); ++i) {
      require(weights[i] > 0.0 && std::isfinite(weights[i]), ErrorCode::domain,
              "weights must be positive");
      require(i == 0 || weights[i] <= weights[i - 1], ErrorCode::domain,
              "weights must be non-increasing");
    }
    return RegularityClass(SmoothnessKind::custom, 0.0, R, std::move(weights));
  }

  SmoothnessKind kind() const { return kind_; }
  double smoothness() const { return s_; }
  double radius() const { return R_; }

  long max_index() const {
    return kind_ == SmoothnessKind::custom ? static_cast<long>(custom_.size())
                                           : std::numeric_limits<long>::max();
  }

  double weight(long j) const {
    require(j >= 1, ErrorCode::domain, "weights are indexed from 1");
    switch (kind_) {
      case SmoothnessKind::ordinary: return std::pow(static_cast<double>(j), -s_);
      case SmoothnessKind::super: return std::exp(-std::pow(static_cast<double>(j), s_));
      case SmoothnessKind::custom:
        require(j <= max_index(), ErrorCode::domain, "index beyond custom weights");
        return custom_[j - 1];
    }
    return 0.0;
  }

  //! sum_{j >= 1} a_j^2; +inf when it diverges.
  double weight_l2_squared() const {
    switch (kind_) {
      case SmoothnessKind::ordinary:
        if (2.0 * s_ <= 1.0) return std::numeric_limits<double>::infinity();
        return std::riemann_zeta(2.0 * s_);
      case SmoothnessKind::super: {
        CompensatedSum acc;
        for (long j = 1;; ++j) {
          double t = std::exp(-2.0 * std::pow(static_cast<double>(j), s_));
          acc += t;
          if (t < 1e-20 * acc.value()) break;
        }
        return acc.value();
      }
      case SmoothnessKind::custom: {
        CompensatedSum acc;
        for (double a : custom_) acc += a * a;
        return acc.value();
      }
    }
    return 0.0;
  }

 private:
  RegularityClass(SmoothnessKind kind, double s, double R, std::vector<double> custom)
      : kind_(kind), s_(s), R_(R), custom_(std::move(custom)) {
    require(R > 0.0 && std::isfinite(R), ErrorCode::domain, "radius must be > 0");
  }

  SmoothnessKind kind_;
  double s_;
  double R_;
  std::vector<double> custom_;
};

//! Elementwise product of coefficients, truncated at the shorter sequence.
inline FourierSeq circular_convolve(const FourierSeq& a, const FourierSeq& b) {
  long J = std::min(a.max_index(), b.max_index());
  std::vector<cplx> c(J + 1);
  for (long j = 0; j <= J; ++j) c[j] = a[j] * b[j];
  return FourierSeq(std::move(c));
}

//! Coefficients g_j = f_j phi_j of the observation density.
inline FourierSeq convolve(const FourierSeq& f, const NoiseModel& noise) {
  std::vector<cplx> c(f.max_index() + 1);
  for (long j = 0; j <= f.max_index(); ++j) c[j] = f[j] * noise.coeff(j);
  return FourierSeq(std::move(c));
}

//! S_j = sum_l exp(i 2 pi j y_l) for j = 0..K.
//! Phases advance by complex recurrence inside cache-sized tiles of frequencies.
#if defined(__GNUC__) && defined(__x86_64__) && !defined(__clang__)
__attribute__((target_clones("avx2", "default")))
#endif
inline std::vector<cplx> power_sums(std::span<const double> y, long K) {
  require(K >= 0, ErrorCode::domain, "negative frequency bound");
  constexpr long lanes = 32;
  // Tiles of up to 1024 frequencies, trimmed to whole lane blocks when K is small.
  const long tile = std::min(1024L, ((K + lanes) / lanes) * lanes);
  constexpr long exact_every = 8;  // tiles between exact anchor evaluations
  constexpr std::size_t chunk = 256;
  const long len = ((K + tile) / tile) * tile;
  const long tiles = len / tile;
  std::vector<CompensatedSum> tot_re(K + 1), tot_im(K + 1);
  if (K < lanes) {
    // Few frequencies: one exact phase per sample and a short recurrence.
    constexpr std::size_t block = 256;
    std::vector<cplx> part(K + 1);
    for (std::size_t start = 0; start < y.size(); start += block) {
      std::fill(part.begin(), part.end(), cplx(0.0));
      const std::size_t stop = std::min(y.size(), start + block);
      for (std::size_t l = start; l < stop; ++l) {
        const cplx e1 = detail::unit_phase(y[l]);
        cplx w = 1.0;
        for (long j = 0; j <= K; ++j) {
          part[j] += w;
          w *= e1;
        }
      }
      for (long j = 0; j <= K; ++j) {
        tot_re[j] += part[j].real();
        tot_im[j] += part[j].imag();
      }
    }
    std::vector<cplx> S(K + 1);
    for (long j = 0; j <= K; ++j) S[j] = {tot_re[j].value(), tot_im[j].value()};
    return S;
  }
  std::vector<double> part_re(tile), part_im(tile);
  std::vector<double> lane_re(chunk * lanes), lane_im(chunk * lanes);
  std::vector<cplx> step(chunk), tstep(chunk), anchor(chunk);

  for (std::size_t start = 0; start < y.size(); start += chunk) {
    const std::size_t count = std::min(chunk, y.size() - start);
    for (std::size_t l = 0; l < count; ++l) {
      double yl = y[start + l];
      // Lane phases by recurrence from one exact phase; 31 products cost ~1e-14.
      const cplx e1 = detail::unit_phase(yl);
      cplx w = 1.0;
      for (long r = 0; r < lanes; ++r) {
        lane_re[l * lanes + r] = w.real();
        lane_im[l * lanes + r] = w.imag();
        w *= e1;
      }
      step[l] = detail::unit_phase(static_cast<double>(lanes) * yl);
      tstep[l] = detail::unit_phase(static_cast<double>(tile) * yl);
      anchor[l] = 1.0;
    }
    for (long t = 0; t < tiles; ++t) {
      const long j0 = t * tile;
      std::fill(part_re.begin(), part_re.end(), 0.0);
      std::fill(part_im.begin(), part_im.end(), 0.0);
      for (std::size_t l = 0; l < count; ++l) {
        if (t % exact_every == 0) anchor[l] = detail::unit_phase(static_cast<double>(j0) * y[start + l]);
        const double ar = anchor[l].real(), ai = anchor[l].imag();
        const double sr = step[l].real(), si = step[l].imag();
        double wr[lanes], wi[lanes];
        for (long r = 0; r < lanes; ++r) {
          double br = lane_re[l * lanes + r], bi = lane_im[l * lanes + r];
          wr[r] = ar * br - ai * bi;
          wi[r] = ar * bi + ai * br;
        }
        for (long b = 0; b < tile; b += lanes) {
          double* pr = part_re.data() + b;
          double* pi = part_im.data() + b;
          for (long r = 0; r < lanes; ++r) {
            pr[r] += wr[r];
            pi[r] += wi[r];
            double nr = wr[r] * sr - wi[r] * si;
            double ni = wr[r] * si + wi[r] * sr;
            wr[r] = nr;
            wi[r] = ni;
          }
        }
        anchor[l] *= tstep[l];
      }
      const long jmax = std::min(K, j0 + tile - 1);
      for (long j = j0; j <= jmax; ++j) {
        tot_re[j] += part_re[j - j0];
        tot_im[j] += part_im[j - j0];
      }
    }
  }
  std::vector<cplx> S(K + 1);
  for (long j = 0; j <= K; ++j) S[j] = {tot_re[j].value(), tot_im[j].value()};
  return S;
}

//! g_hat_j = (1/n) sum_l exp(i 2 pi j Y_l), j = 0..k.
inline FourierSeq empirical_coeffs(std::span<const double> sample, long k) {
  if (sample.empty()) throw Error(ErrorCode::empty_sample, "empirical coefficients of an empty sample");
  require(k >= 0, ErrorCode::domain, "negative frequency bound");
  auto S = power_sums(sample, k);
  double n = static_cast<double>(sample.size());
  for (auto& s : S) s /= n;
  S[0] = 1.0;
  return FourierSeq(std::move(S));
}

struct CoeffNorms {
  double l1;
  double l2;
};

//! l1 and l2 norms over all of Z.
inline CoeffNorms coeff_norms(const FourierSeq& f) {
  CompensatedSum l1, l2;
  double a0 = std::abs(f[0]);
  l1 += a0;
  l2 += a0 * a0;
  for (long j = 1; j <= f.max_index(); ++j) {
    double a = std::abs(f[j]);
    l1 += 2.0 * a;
    l2 += 2.0 * a * a;
  }
  return {l1.value(), std::sqrt(l2.value())};
}

struct NuM {
  double nu;  //!< (sum_{1<=|j|<=k} |phi_j|^-4)^{1/4}
  double m;   //!< max_{1<=j<=k} |phi_j|^-1
};

//! Streams nu_k and m_k for k = 1, 2, ...
class MomentScanner {
 public:
  explicit MomentScanner(const NoiseModel& noise) : noise_(&noise) {}

  //! Advances to the next k and returns (nu_k, m_k); nu_k is +inf once the sum overflows.
  NuM next() {
    ++k_;
    double a = noise_->modulus(k_);
    if (!(a > 0.0))
      throw Error(ErrorCode::zero_coefficient, "phi_" + std::to_string(k_) + " is zero");
    double inv2 = 1.0 / (a * a);
    inv4_ += 2.0 * inv2 * inv2;
    m_ = std::max(m_, 1.0 / a);
    double v = inv4_.value();
    return {std::isfinite(v) ? std::pow(v, 0.25) : std::numeric_limits<double>::infinity(), m_};
  }

  long k() const { return k_; }
  double inverse_square(long j) const {
    double a = noise_->modulus(j);
    return 1.0 / (a * a);
  }

 private:
  const NoiseModel* noise_;
  long k_ = 0;
  CompensatedSum inv4_;
  double m_ = 0.0;
};

inline NuM nu_m(const NoiseModel& noise, long k) {
  require(k >= 1, ErrorCode::domain, "k must be >= 1");
  MomentScanner scan(noise);
  NuM out{};
  for (long j = 1; j <= k; ++j) out = scan.next();
  require(std::isfinite(out.nu), ErrorCode::overflow, "nu_k overflows");
  return out;
}

//! q_k(f - f0) = sum_{1<=|j|<=k} |f_j - f0_j|^2.
inline double q_trunc(const FourierSeq& f, const FourierSeq& f0, long k) {
  require(k >= 1, ErrorCode::domain, "k must be >= 1");
  CompensatedSum acc;
  for (long j = 1; j <= k; ++j) acc += 2.0 * std::norm(f[j] - f0[j]);
  return acc.value();
}

//! sum_{j != 0} |f_j - f0_j|^2 / a_|j|^2 over the stored range of f and f0.
inline double ellipsoid_norm2(const FourierSeq& f, const FourierSeq& f0, const RegularityClass& cls) {
  long J = std::max(f.max_index(), f0.max_index());
  CompensatedSum acc;
  for (long j = 1; j <= J; ++j) {
    double d = std::norm(f[j] - f0[j]);
    if (d == 0.0) continue;
    double a = cls.weight(j);
    acc += 2.0 * d / (a * a);
  }
  return acc.value();
}

//! Membership with a relative slack of 1e-12 for rounding.
inline bool ellipsoid_member(const FourierSeq& f, const FourierSeq& f0, const RegularityClass& cls) {
  double R2 = cls.radius() * cls.radius();
  return ellipsoid_norm2(f, f0, cls) <= R2 * (1.0 + 1e-12);
}

}  // namespace circgof
