#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "circgof/errors.hpp"
#include "circgof/spectral.hpp"
#include "circgof/summation.hpp"

namespace circgof {

enum class Mode { indirect, direct };

inline std::string to_string(Mode m) { return m == Mode::indirect ? "indirect" : "direct"; }

struct TestSpec {
  CircularDensity f0;
  NoiseModel noise;
  long k = 1;
  double alpha = 0.05;
  Mode mode = Mode::indirect;
};

//! L_x = sqrt(1 - ln x) for x in (0, 1].
inline double l_factor(double x) {
  require(x > 0.0 && x <= 1.0, ErrorCode::domain, "L_x needs x in (0, 1]");
  return std::sqrt(1.0 - std::log(x));
}

inline void validate_sample(std::span<const double> sample) {
  if (sample.empty()) throw Error(ErrorCode::empty_sample, "sample is empty");
  if (sample.size() < 2) throw Error(ErrorCode::sample_too_small, "statistic needs n >= 2");
  for (double y : sample)
    require(y >= 0.0 && y < 1.0, ErrorCode::domain, "sample value outside [0, 1)");
}

//! Per-frequency ingredients shared by the statistic and its thresholds.
class StatisticKernel {
 public:
  StatisticKernel(const CircularDensity& f0, const NoiseModel& noise, Mode mode, long kmax)
      : mode_(mode), kmax_(kmax) {
    require(kmax >= 1, ErrorCode::domain, "k must be >= 1");
    weight_.assign(kmax + 1, 1.0);
    g0_.assign(kmax + 1, cplx(0.0));
    ref_sq_.assign(kmax + 1, 0.0);
    for (long j = 1; j <= kmax; ++j) {
      cplx phi = noise.coeff(j);
      cplx f0j = f0.coeffs()[j];
      g0_[j] = f0j * phi;
      if (mode == Mode::indirect) {
        double a2 = std::norm(phi);
        if (!(a2 > 0.0))
          throw Error(ErrorCode::zero_coefficient, "phi_" + std::to_string(j) + " is zero");
        weight_[j] = 1.0 / a2;
        ref_sq_[j] = std::norm(f0j);
      } else {
        ref_sq_[j] = std::norm(g0_[j]);
      }
    }
  }

  Mode mode() const { return mode_; }
  long kmax() const { return kmax_; }

  //! Statistic at every k in ks (each <= kmax) from power sums S_0..S_kmax.
  std::vector<double> from_sums(const std::vector<cplx>& S, long n, std::span<const long> ks) const {
    require(n >= 2, ErrorCode::sample_too_small, "statistic needs n >= 2");
    const double dn = static_cast<double>(n);
    const double cu = 2.0 / (dn * (dn - 1.0));
    const double cl = 4.0 / dn;
    std::vector<double> out(ks.size());
    std::vector<std::pair<long, std::size_t>> order(ks.size());
    for (std::size_t i = 0; i < ks.size(); ++i) {
      require(ks[i] >= 1 && ks[i] <= kmax_, ErrorCode::domain, "k outside the kernel range");
      order[i] = {ks[i], i};
    }
    std::sort(order.begin(), order.end());
    CompensatedSum acc;
    long j = 0;
    for (auto [k, idx] : order) {
      for (; j < k;) {
        ++j;
        double u = cu * (std::norm(S[j]) - dn) * weight_[j];
        double l = cl * (g0_[j] * std::conj(S[j])).real() * weight_[j];
        acc += u;
        acc += -l;
        acc += 2.0 * ref_sq_[j];
      }
      out[idx] = acc.value();
    }
    return out;
  }

  std::vector<double> evaluate(std::span<const double> sample, std::span<const long> ks) const {
    validate_sample(sample);
    long kmax = *std::max_element(ks.begin(), ks.end());
    auto S = power_sums(sample, kmax);
    return from_sums(S, static_cast<long>(sample.size()), ks);
  }

  double weight(long j) const { return weight_[j]; }
  cplx null_coeff(long j) const { return g0_[j]; }

 private:
  Mode mode_;
  long kmax_;
  std::vector<double> weight_;
  std::vector<cplx> g0_;
  std::vector<double> ref_sq_;
};

inline void validate_spec(const TestSpec& spec) {
  require(spec.k >= 1, ErrorCode::domain, "k must be >= 1");
  require(spec.alpha > 0.0 && spec.alpha < 1.0, ErrorCode::domain, "alpha must lie in (0, 1)");
}

//! Fourier-expansion assumption on the null, approximated by g0 = f0 * phi staying
//! above a floor on the evaluation grid.
struct NullCondition {
  double min_g0;
  bool holds;
};

inline NullCondition null_condition(const CircularDensity& f0, const NoiseModel& noise, double floor = 1e-6) {
  CircularDensity g0(convolve(f0.coeffs(), noise));
  double m = g0.min_on_grid();
  return {m, m >= floor};
}

//! Unbiased estimate of q_k(f - f0) from the noisy sample.
inline double indirect_statistic(std::span<const double> sample, const TestSpec& spec) {
  validate_spec(spec);
  StatisticKernel kernel(spec.f0, spec.noise, Mode::indirect, spec.k);
  long ks[] = {spec.k};
  return kernel.evaluate(sample, ks)[0];
}

//! Unbiased estimate of q_k(g - g0), g = f * phi.
inline double direct_statistic(std::span<const double> sample, const TestSpec& spec) {
  validate_spec(spec);
  StatisticKernel kernel(spec.f0, spec.noise, Mode::direct, spec.k);
  long ks[] = {spec.k};
  return kernel.evaluate(sample, ks)[0];
}

inline double statistic(std::span<const double> sample, const TestSpec& spec) {
  return spec.mode == Mode::indirect ? indirect_statistic(sample, spec) : direct_statistic(sample, spec);
}

//! Norms used by the threshold constants.
struct NullNorms {
  double g0_l1;
  double g0_l2;
  double phi_l2;
};

inline NullNorms null_norms(const CircularDensity& f0, const NoiseModel& noise) {
  auto n = coeff_norms(convolve(f0.coeffs(), noise));
  return {n.l1, n.l2, noise.l2_norm()};
}

namespace detail {

inline double threshold_value(double c1, double c2, double L, double nu, double nu2, double m2, double n) {
  double L2 = L * L;
  double inner = std::max({1.0, L2 * nu / std::sqrt(n), L2 * L * nu2 / n});
  return c1 * inner * L * nu2 / n + c2 * L2 * m2 / n;
}

inline double indirect_threshold(const NullNorms& norms, NuM nm, double alpha, double n) {
  double c1 = 799.0 * norms.g0_l2 + 1372.0;
  double c2 = 52.0 * norms.g0_l1;
  return threshold_value(c1, c2, l_factor(alpha), nm.nu, nm.nu * nm.nu, nm.m * nm.m, n);
}

inline double direct_threshold(const NullNorms& norms, long k, double alpha, double n) {
  double c1 = 799.0 * norms.g0_l2 + 1372.0;
  double c2 = 52.0 * norms.g0_l1;
  double nu = std::pow(2.0 * static_cast<double>(k), 0.25);
  return threshold_value(c1, c2, l_factor(alpha), nu, nu * nu, 1.0, n);
}

}  // namespace detail

inline double threshold_indirect(const TestSpec& spec, long n) {
  validate_spec(spec);
  require(n >= 1, ErrorCode::domain, "n must be >= 1");
  return detail::indirect_threshold(null_norms(spec.f0, spec.noise), nu_m(spec.noise, spec.k), spec.alpha,
                                    static_cast<double>(n));
}

inline double threshold_direct(const TestSpec& spec, long n) {
  validate_spec(spec);
  require(n >= 1, ErrorCode::domain, "n must be >= 1");
  return detail::direct_threshold(null_norms(spec.f0, spec.noise), spec.k, spec.alpha, static_cast<double>(n));
}

inline double threshold(const TestSpec& spec, long n) {
  return spec.mode == Mode::indirect ? threshold_indirect(spec, n) : threshold_direct(spec, n);
}

//! Squared separation above which the indirect test has type II error <= beta.
//! g_l1 is ||g_hat||_1 of the data-generating observation density.
inline double separation_indirect(const TestSpec& spec, long n, double beta, double g_l1) {
  require(beta > 0.0 && beta < 1.0, ErrorCode::domain, "beta must lie in (0, 1)");
  double dn = static_cast<double>(n);
  double tau = threshold_indirect(spec, n);
  auto nm = nu_m(spec.noise, spec.k);
  double phi2 = spec.noise.l2_norm() * spec.noise.l2_norm();
  double c3 = 8.0 * g_l1 + 826.0 * phi2 + 1372.0;
  double L4 = std::pow(l_factor(beta / 2.0), 4);
  double nu2 = nm.nu * nm.nu;
  return 2.0 * (tau + c3 * L4 * std::max(1.0, nu2 / dn) * nu2 / dn);
}

//! Squared separation in q_k(g - g0) for the direct test.
inline double separation_direct(const TestSpec& spec, long n, double beta) {
  require(beta > 0.0 && beta < 1.0, ErrorCode::domain, "beta must lie in (0, 1)");
  double dn = static_cast<double>(n);
  double tau = threshold_direct(spec, n);
  double c3 = 837.0 * spec.noise.l2_norm() + 1373.0;
  double L4 = std::pow(l_factor(beta / 2.0), 4);
  double nu2 = std::sqrt(2.0 * static_cast<double>(spec.k));
  return 2.0 * (tau + c3 * L4 * std::max(1.0, nu2 / dn) * nu2 / dn);
}

struct TestOutcome {
  bool reject;
  double statistic;
  double threshold;
};

//! Ties reject.
inline bool rejects(double statistic, double threshold) { return statistic >= threshold; }

inline TestOutcome single_test(std::span<const double> sample, const TestSpec& spec) {
  double s = statistic(sample, spec);
  double t = threshold(spec, static_cast<long>(sample.size()));
  return {rejects(s, t), s, t};
}

struct Breakdown {
  double u;           //!< degenerate U-statistic part
  double linear;      //!< L, enters the statistic as 2 L
  double separation;  //!< q_k of the true minus null difference
  double statistic;
};

//! statistic = u + 2 linear + separation, with true_f the data-generating density.
inline Breakdown stat_breakdown(std::span<const double> sample, const TestSpec& spec,
                                const CircularDensity& true_f) {
  validate_spec(spec);
  validate_sample(sample);
  StatisticKernel kernel(spec.f0, spec.noise, spec.mode, spec.k);
  auto S = power_sums(sample, spec.k);
  const long n = static_cast<long>(sample.size());
  const double dn = static_cast<double>(n);
  CompensatedSum u, lin, sep;
  for (long j = 1; j <= spec.k; ++j) {
    cplx g = true_f.coeffs()[j] * spec.noise.coeff(j);
    cplx g0 = kernel.null_coeff(j);
    double w = kernel.weight(j);
    double uj = std::norm(S[j] - dn * g) - dn + 2.0 * (S[j] * std::conj(g)).real() - dn * std::norm(g);
    u += 2.0 * uj * w / (dn * (dn - 1.0));
    lin += 2.0 * ((g - g0) * (std::conj(S[j]) - dn * std::conj(g))).real() * w / dn;
    sep += 2.0 * std::norm(g - g0) * w;
  }
  long ks[] = {spec.k};
  double stat = kernel.from_sums(S, n, ks)[0];
  return {u.value(), lin.value(), sep.value(), stat};
}

//! Constants (A, B, C, D) of the degenerate U-statistic deviation inequality.
struct UstatBounds {
  double A, B, C, D;
};

//! g_norms are the norms of the data-generating observation density; under the
//! null they default to those of g0.
inline UstatBounds ustat_bounds(const TestSpec& spec, bool under_null,
                                std::optional<CoeffNorms> g_norms = std::nullopt) {
  validate_spec(spec);
  auto nn = null_norms(spec.f0, spec.noise);
  CoeffNorms g = g_norms.value_or(CoeffNorms{nn.g0_l1, nn.g0_l2});
  if (spec.mode == Mode::indirect) {
    auto nm = nu_m(spec.noise, spec.k);
    double nu = nm.nu;
    double D = under_null ? 4.0 * g.l1 * nm.m * nm.m : 2.0 * g.l2 * nu * nu;
    return {4.0 * std::pow(nu, 4), 3.0 * g.l2 * std::pow(nu, 3), 2.0 * g.l2 * nu * nu, D};
  }
  double k2 = 2.0 * static_cast<double>(spec.k);
  double D = under_null ? 4.0 * g.l1 : 2.0 * g.l2 * std::sqrt(k2);
  return {4.0 * k2, 3.0 * g.l2 * std::pow(k2, 0.75), 2.0 * g.l2 * std::sqrt(k2), D};
}

//! 8 C x^{1/2}/n + 13 D x/n + 261 B x^{3/2}/n^{3/2} + 343 A x^2/n^2.
inline double utail_level(const UstatBounds& b, double x, long n) {
  double dn = static_cast<double>(n);
  return 8.0 * b.C * std::sqrt(x) / dn + 13.0 * b.D * x / dn + 261.0 * b.B * std::pow(x / dn, 1.5) +
         343.0 * b.A * x * x / (dn * dn);
}

}  // namespace circgof
