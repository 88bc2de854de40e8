#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "circgof/errors.hpp"
#include "circgof/spectral.hpp"
#include "circgof/test_engine.hpp"

namespace circgof {

//! Finite set of candidate dimensions with delta = (1 + ln |K|)^{-1/2}.
struct DimensionGrid {
  std::vector<long> dims;
  double delta = 1.0;

  static DimensionGrid from(std::vector<long> dims) {
    require(!dims.empty(), ErrorCode::domain, "dimension grid must be non-empty");
    std::sort(dims.begin(), dims.end());
    dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
    require(dims.front() >= 1, ErrorCode::domain, "grid dimensions must be >= 1");
    DimensionGrid g;
    g.delta = 1.0 / std::sqrt(1.0 + std::log(static_cast<double>(dims.size())));
    g.dims = std::move(dims);
    return g;
  }

  std::size_t size() const { return dims.size(); }
  long max() const { return dims.back(); }
};

//! {1} together with 2^j for 1 <= j <= floor(log2(n^2 / 2)).
inline DimensionGrid geometric_grid(long n) {
  require(n >= 1, ErrorCode::domain, "n must be >= 1");
  require(n <= 3000000000L, ErrorCode::too_large, "n too large for the geometric grid");
  const long n2 = n * n;
  std::vector<long> dims{1};
  for (long p = 2; 2 * p <= n2; p *= 2) dims.push_back(p);
  return DimensionGrid::from(std::move(dims));
}

//! {1} together with 2^j for 1 <= j <= floor(log2(ln n) / s_star).
inline DimensionGrid small_grid(long n, double s_star) {
  require(n >= 1, ErrorCode::domain, "n must be >= 1");
  require(s_star > 0.0, ErrorCode::domain, "s_star must be > 0");
  std::vector<long> dims{1};
  double ln = std::log(static_cast<double>(n));
  if (ln > 1.0) {
    auto top = static_cast<long>(std::floor(std::log2(ln) / s_star));
    require(top < 62, ErrorCode::too_large, "grid exponent too large");
    for (long j = 1; j <= top; ++j) dims.push_back(1L << j);
  }
  return DimensionGrid::from(std::move(dims));
}

struct ComponentResult {
  long k;
  double statistic;
  double threshold;
};

struct MaxTestResult {
  bool reject;
  std::vector<ComponentResult> per_k;
};

//! Max test over a dimension grid; each component runs at level alpha / |K|.
class MaxTest {
 public:
  MaxTest(const CircularDensity& f0, const NoiseModel& noise, DimensionGrid grid, double alpha, Mode mode)
      : grid_(std::move(grid)),
        alpha_(alpha),
        mode_(mode),
        kernel_(f0, noise, mode, grid_.max()),
        norms_(null_norms(f0, noise)) {
    require(alpha > 0.0 && alpha < 1.0, ErrorCode::domain, "alpha must lie in (0, 1)");
    if (mode == Mode::indirect) {
      MomentScanner scan(noise);
      std::size_t next = 0;
      for (long j = 1; j <= grid_.max(); ++j) {
        NuM nm = scan.next();
        require(std::isfinite(nm.nu), ErrorCode::overflow, "nu_k overflows");
        if (j == grid_.dims[next]) {
          moments_.push_back(nm);
          ++next;
        }
      }
    }
  }

  const DimensionGrid& grid() const { return grid_; }
  Mode mode() const { return mode_; }
  double component_level() const { return alpha_ / static_cast<double>(grid_.size()); }

  std::vector<double> thresholds(long n) const {
    require(n >= 1, ErrorCode::domain, "n must be >= 1");
    std::vector<double> t(grid_.size());
    double dn = static_cast<double>(n);
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      t[i] = mode_ == Mode::indirect
                 ? detail::indirect_threshold(norms_, moments_[i], component_level(), dn)
                 : detail::direct_threshold(norms_, grid_.dims[i], component_level(), dn);
    }
    return t;
  }

  MaxTestResult from_sums(const std::vector<cplx>& S, long n) const {
    auto stats = kernel_.from_sums(S, n, grid_.dims);
    auto thr = thresholds(n);
    MaxTestResult out{false, {}};
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      out.per_k.push_back({grid_.dims[i], stats[i], thr[i]});
      best = std::max(best, stats[i] - thr[i]);
    }
    out.reject = best > 0.0;
    return out;
  }

  MaxTestResult operator()(std::span<const double> sample) const {
    validate_sample(sample);
    auto S = power_sums(sample, grid_.max());
    return from_sums(S, static_cast<long>(sample.size()));
  }

 private:
  DimensionGrid grid_;
  double alpha_;
  Mode mode_;
  StatisticKernel kernel_;
  NullNorms norms_;
  std::vector<NuM> moments_;
};

inline MaxTestResult max_test(std::span<const double> sample, const CircularDensity& f0, const NoiseModel& noise,
                              const DimensionGrid& grid, double alpha, Mode mode) {
  return MaxTest(f0, noise, grid, alpha, mode)(sample);
}

//! Which variance term enters the radius a_k^2 v v_k / x.
enum class VarianceKind {
  indirect,   //!< nu_k^2
  direct,     //!< (2k)^{1/2} m_k^2
  remainder,  //!< m_k^2
};

struct ProfileEntry {
  long k;
  double bias;
  double variance;
  double radius;
};

struct RadiusProfile {
  std::vector<ProfileEntry> per_k;  //!< scanned candidates, in increasing k
  long argmin = 0;                  //!< smallest minimiser
  double min_radius = 0.0;          //!< squared radius at argmin
  bool exhaustive = false;          //!< per_k covers every candidate
};

struct ProfileOptions {
  //! Scan every candidate instead of stopping once the variance dominates.
  bool full_scan = false;
};

namespace detail {

// Candidates are either 1..kmax or the grid dimensions; bias is non-increasing and
// the variance non-decreasing in k, so nothing past the first k where the variance
// reaches the bias can improve on the minimum.
inline RadiusProfile profile_scan(const RegularityClass& cls, const NoiseModel& noise, double x, VarianceKind kind,
                                  const std::vector<long>* grid, long kmax, ProfileOptions opt) {
  require(x > 0.0 && std::isfinite(x), ErrorCode::domain, "effective sample size must be > 0");
  RadiusProfile out;
  MomentScanner scan(noise);
  NuM nm{};
  std::size_t gi = 0;
  long last = grid ? grid->back() : kmax;
  require(last >= 1, ErrorCode::domain, "empty candidate range");
  if (opt.full_scan) require(last <= 50000000, ErrorCode::too_large, "full scan over too many candidates");
  bool stopped = false;
  for (long k = 1; k <= last; ++k) {
    try {
      nm = scan.next();
    } catch (const Error& e) {
      // A zero coefficient makes every later variance infinite.
      if (e.code() != ErrorCode::zero_coefficient || out.argmin == 0) throw;
      stopped = true;
      break;
    }
    if (grid) {
      if (k != (*grid)[gi]) continue;
      ++gi;
    }
    double a = cls.weight(k);
    double bias = a * a;
    double v = 0.0;
    switch (kind) {
      case VarianceKind::indirect: v = nm.nu * nm.nu; break;
      case VarianceKind::direct: v = std::sqrt(2.0 * static_cast<double>(k)) * nm.m * nm.m; break;
      case VarianceKind::remainder: v = nm.m * nm.m; break;
    }
    v /= x;
    if (!std::isfinite(v)) {
      // Variances only grow, so no later candidate can beat a finite radius.
      require(out.argmin != 0, ErrorCode::overflow, "variance overflows at k = 1");
      stopped = true;
      break;
    }
    double r = std::max(bias, v);
    out.per_k.push_back({k, bias, v, r});
    if (out.argmin == 0 || r < out.min_radius) {
      out.argmin = k;
      out.min_radius = r;
    }
    if (!opt.full_scan && v >= bias) {
      stopped = k < last;
      break;
    }
  }
  out.exhaustive = !stopped;
  return out;
}

}  // namespace detail

inline long default_kmax(double x) {
  double k = std::floor(x * x / 2.0);
  return k < 1.0 ? 1L : (k > 4e18 ? std::numeric_limits<long>::max() : static_cast<long>(k));
}

//! rho_k^2(x) = a_k^2 v variance_k / x over k in [1, kmax]; kmax <= 0 means floor(x^2/2).
inline RadiusProfile radius_profile(const RegularityClass& cls, const NoiseModel& noise, double x, Mode mode,
                                    long kmax = 0, ProfileOptions opt = {}) {
  if (kmax <= 0) kmax = default_kmax(x);
  auto kind = mode == Mode::indirect ? VarianceKind::indirect : VarianceKind::direct;
  return detail::profile_scan(cls, noise, x, kind, nullptr, kmax, opt);
}

inline RadiusProfile radius_profile(const RegularityClass& cls, const NoiseModel& noise, double x, Mode mode,
                                    const DimensionGrid& grid, ProfileOptions opt = {}) {
  auto kind = mode == Mode::indirect ? VarianceKind::indirect : VarianceKind::direct;
  return detail::profile_scan(cls, noise, x, kind, &grid.dims, 0, opt);
}

//! min_k a_k^2 v m_k^2 / x.
inline RadiusProfile remainder_profile(const RegularityClass& cls, const NoiseModel& noise, double x,
                                       long kmax = 0, ProfileOptions opt = {}) {
  if (kmax <= 0) kmax = default_kmax(x);
  return detail::profile_scan(cls, noise, x, VarianceKind::remainder, nullptr, kmax, opt);
}

inline RadiusProfile remainder_profile(const RegularityClass& cls, const NoiseModel& noise, double x,
                                       const DimensionGrid& grid, ProfileOptions opt = {}) {
  return detail::profile_scan(cls, noise, x, VarianceKind::remainder, &grid.dims, 0, opt);
}

inline double remainder_radius(const RegularityClass& cls, const NoiseModel& noise, double x, long kmax = 0) {
  return remainder_profile(cls, noise, x, kmax).min_radius;
}

inline double remainder_radius(const RegularityClass& cls, const NoiseModel& noise, double x,
                               const DimensionGrid& grid) {
  return remainder_profile(cls, noise, x, grid).min_radius;
}

enum class BoundFlavor { uniform, worst, best };

//! Squared separation radius of the max test, up to the constant upper_constant^2.
//! uniform: (rbar^2(delta^2 n) v r^2(delta n)) (1 v delta^{-3} r^2(delta n)),
//! whose square root is (rbar v r)(1 v delta^{-3/2} r) in radius units.
inline double adaptive_bound(const RegularityClass& cls, const NoiseModel& noise, long n, const DimensionGrid& grid,
                             Mode mode, BoundFlavor flavor) {
  require(n >= 1, ErrorCode::domain, "n must be >= 1");
  const double d = grid.delta;
  const double dn = static_cast<double>(n);
  switch (flavor) {
    case BoundFlavor::best:
      return radius_profile(cls, noise, d * dn, mode, grid).min_radius;
    case BoundFlavor::worst: {
      double r = radius_profile(cls, noise, d * d * dn, mode, grid).min_radius;
      return r * std::max(1.0, r);
    }
    case BoundFlavor::uniform: {
      double r = radius_profile(cls, noise, d * dn, mode, grid).min_radius;
      double rbar = remainder_radius(cls, noise, d * d * dn, grid);
      return std::max(rbar, r) * std::max(1.0, std::pow(d, -3.0) * r);
    }
  }
  return 0.0;
}

//! Upper-bound constant A_alpha (not squared).
inline double upper_constant(const RegularityClass& cls, const CircularDensity& f0, const NoiseModel& noise,
                             double alpha, Mode mode) {
  require(alpha > 0.0 && alpha < 1.0, ErrorCode::domain, "alpha must lie in (0, 1)");
  double R = cls.radius();
  double phi = noise.l2_norm();
  double g0_l1 = coeff_norms(convolve(f0.coeffs(), noise)).l1;
  double L4 = std::pow(l_factor(alpha / 4.0), 4);
  double a2 = mode == Mode::indirect
                  ? R * R + 2.0 * (8.0 * R * phi + 826.0 * phi * phi + 859.0 * g0_l1 + 2744.0) * L4
                  : R * R + 2.0 * (837.0 * phi + 851.0 * g0_l1 + 2745.0) * L4;
  return std::sqrt(a2);
}

enum class RateRow {
  ordinary_mild,
  ordinary_severe,
  super_mild,
  adaptive_ordinary_mild,
  adaptive_ordinary_severe,
  adaptive_super_mild,
};

struct RateOrders {
  double k_order;
  double radius_order;  //!< squared radius, unit constant
};

//! Order-of-magnitude dimension and squared radius, with iterated logs floored at 1.
inline RateOrders rate_table(RateRow row, double s, double p, double n) {
  require(s > 0.0 && p > 0.0, ErrorCode::domain, "s and p must be > 0");
  require(n > 1.0, ErrorCode::domain, "n must be > 1");
  const double ln = std::log(n);
  const double lln = std::max(1.0, std::log(ln));
  const double llln = ln > 1.0 ? std::max(1.0, std::log(std::max(1.0, std::log(ln)))) : 1.0;
  const double mild = 4.0 * s + 4.0 * p + 1.0;
  switch (row) {
    case RateRow::ordinary_mild:
      return {std::pow(n, 2.0 / mild), std::pow(n, -4.0 * s / mild)};
    case RateRow::ordinary_severe:
    case RateRow::adaptive_ordinary_severe:
      return {std::pow(ln, 1.0 / p), std::pow(ln, -2.0 * s / p)};
    case RateRow::super_mild:
      return {std::pow(ln, 1.0 / s), std::pow(ln, (2.0 * p + 0.5) / s) / n};
    case RateRow::adaptive_ordinary_mild: {
      double eff = n / std::sqrt(lln);
      return {std::pow(eff, 2.0 / mild), std::pow(eff, -4.0 * s / mild)};
    }
    case RateRow::adaptive_super_mild:
      return {std::pow(ln, 1.0 / s), std::sqrt(llln) / n * std::pow(ln, (2.0 * p + 0.5) / s)};
  }
  return {0.0, 0.0};
}

}  // namespace circgof
