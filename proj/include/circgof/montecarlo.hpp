#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "circgof/errors.hpp"
#include "circgof/lower_bound.hpp"
#include "circgof/spectral.hpp"
#include "circgof/test_engine.hpp"

namespace circgof {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

//! Independent stream for one replication of one experiment.
inline Rng stream_rng(std::uint64_t master_seed, std::uint64_t experiment, std::uint64_t rep) {
  std::uint64_t h = splitmix64(master_seed);
  h = splitmix64(h ^ experiment);
  h = splitmix64(h ^ rep);
  return Rng(h);
}

//! FNV-1a, for turning experiment names into stream ids.
inline std::uint64_t stream_id(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

//! Uniform on [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double wrap01(double y) {
  y -= std::floor(y);
  return y < 1.0 ? y : 0.0;
}

//! Inverse-CDF sampler from the exact distribution function on the density grid,
//! linear inside each cell.
class DensitySampler {
 public:
  explicit DensitySampler(const CircularDensity& f) : cdf_(f.grid_cdf()) {
    const std::size_t G = cdf_.size() - 1;
    for (std::size_t i = 1; i <= G; ++i) cdf_[i] = std::max(cdf_[i], cdf_[i - 1]);
    cdf_[G] = 1.0;
    guide_.resize(G + 1);
    std::size_t cell = 0;
    for (std::size_t b = 0; b <= G; ++b) {
      double u = static_cast<double>(b) / static_cast<double>(G);
      while (cell + 1 < G && cdf_[cell + 1] <= u) ++cell;
      guide_[b] = cell;
    }
  }

  double operator()(Rng& rng) const {
    const std::size_t G = cdf_.size() - 1;
    double u = uniform01(rng);
    std::size_t cell = guide_[static_cast<std::size_t>(u * static_cast<double>(G))];
    while (cell + 1 < G && cdf_[cell + 1] <= u) ++cell;
    double lo = cdf_[cell], hi = cdf_[cell + 1];
    double frac = hi > lo ? (u - lo) / (hi - lo) : 0.5;
    double x = (static_cast<double>(cell) + frac) / static_cast<double>(G);
    return x < 1.0 ? x : std::nextafter(1.0, 0.0);
  }

 private:
  std::vector<double> cdf_;
  std::vector<std::size_t> guide_;
};

//! Draws the error eps whose characteristic sequence is the noise model.
class NoiseSampler {
 public:
  explicit NoiseSampler(const NoiseModel& noise) : noise_(noise) {
    switch (noise.kind()) {
      case NoiseKind::polynomial:
        available_ = noise.parameter() > 0.0;
        break;
      case NoiseKind::exponential:
        available_ = noise.degree() <= 2.0;
        stable_scale_ = std::pow(noise.parameter(), 1.0 / noise.degree()) / two_pi;
        break;
      case NoiseKind::custom:
        if (noise.is_dirac()) {
          available_ = true;
        } else {
          try {
            density_.emplace(CircularDensity(noise.custom_coeffs()));
            available_ = true;
          } catch (const Error&) {
            available_ = false;
          }
        }
        break;
    }
  }

  bool available() const { return available_; }

  double operator()(Rng& rng) const {
    require(available_, ErrorCode::domain, "no sampler for this noise model");
    switch (noise_.kind()) {
      case NoiseKind::polynomial: {
        // Difference of two Gamma(p/2) draws has characteristic function (1 + b^2 t^2)^{-p/2}.
        if (noise_.degree() == 2.0) {
          // Laplace: a signed exponential from a single uniform.
          double u = uniform01(rng) - 0.5;
          double e = -std::log1p(-2.0 * std::abs(u));
          return noise_.parameter() * (u < 0.0 ? -e : e);
        }
        std::gamma_distribution<double> gam(0.5 * noise_.degree(), 1.0);
        double g1 = gam(rng);
        double g2 = gam(rng);
        return noise_.parameter() * (g1 - g2);
      }
      case NoiseKind::exponential:
        return stable_scale_ * symmetric_stable(noise_.degree(), rng);
      case NoiseKind::custom:
        if (noise_.is_dirac()) return 0.0;
        return density_.value()(rng);
    }
    return 0.0;
  }

 private:
  //! Chambers-Mallows-Stuck draw with characteristic function exp(-|t|^a).
  static double symmetric_stable(double a, Rng& rng) {
    constexpr double half_pi = std::numbers::pi / 2.0;
    double v = (uniform01(rng) - 0.5) * std::numbers::pi;
    while (std::abs(v) >= half_pi) v = (uniform01(rng) - 0.5) * std::numbers::pi;
    double w = -std::log1p(-uniform01(rng));
    if (a == 2.0) return 2.0 * std::sin(v) * std::sqrt(w);
    if (a == 1.0) return std::tan(v);
    return std::sin(a * v) / std::pow(std::cos(v), 1.0 / a) * std::pow(std::cos(v - a * v) / w, (1.0 - a) / a);
  }

  NoiseModel noise_;
  bool available_ = false;
  double stable_scale_ = 1.0;
  std::optional<DensitySampler> density_;
};

//! Y = X + eps mod 1 with X ~ f.
class ObservationSampler {
 public:
  ObservationSampler(const CircularDensity& f, const NoiseModel& noise) : x_(f), eps_(NoiseSampler(noise)) {
    require(std::get<NoiseSampler>(eps_).available(), ErrorCode::domain, "noise model cannot be sampled");
  }
  //! Noise given directly as a circular density.
  ObservationSampler(const CircularDensity& f, const CircularDensity& noise) : x_(f), eps_(DensitySampler(noise)) {}

  void fill(std::span<double> out, Rng& rng) const {
    for (double& y : out) {
      double x = x_(rng);
      double e = std::visit([&](const auto& s) { return s(rng); }, eps_);
      y = wrap01(x + e);
    }
  }

  std::vector<double> draw(long n, Rng& rng) const {
    require(n >= 0, ErrorCode::domain, "negative sample size");
    std::vector<double> y(static_cast<std::size_t>(n));
    fill(y, rng);
    return y;
  }

 private:
  DensitySampler x_;
  std::variant<NoiseSampler, DensitySampler> eps_;
};

inline std::vector<double> sample_density(const CircularDensity& f, long n, Rng& rng) {
  DensitySampler s(f);
  std::vector<double> x(static_cast<std::size_t>(n));
  for (double& v : x) v = s(rng);
  return x;
}

inline std::vector<double> sample_model(const CircularDensity& f, const NoiseModel& noise, long n, Rng& rng) {
  return ObservationSampler(f, noise).draw(n, rng);
}

inline std::vector<double> sample_model(const CircularDensity& f, const CircularDensity& noise, long n, Rng& rng) {
  return ObservationSampler(f, noise).draw(n, rng);
}

//! Explicit count, else CIRCGOF_THREADS, else the hardware concurrency.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CIRCGOF_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

//! fn(rep) for rep = 0..reps-1 on a worker pool; results stay in rep order.
template <class Fn>
auto run_replications(long reps, int threads, Fn&& fn) -> std::vector<decltype(fn(0L))> {
  using T = decltype(fn(0L));
  require(reps >= 0, ErrorCode::domain, "negative replication count");
  std::vector<T> out(static_cast<std::size_t>(reps));
  const int workers = static_cast<int>(std::min<long>(std::max(1, resolve_threads(threads)), std::max(1L, reps)));
  std::atomic<long> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (long r = next++; r < reps; r = next++) {
      try {
        out[static_cast<std::size_t>(r)] = fn(r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = reps;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

struct McConfig {
  long n = 100;
  long reps = 1000;
  std::uint64_t seed = 0;
  int threads = 0;
};

using TestFn = std::function<bool(std::span<const double>)>;

//! Rejection count of the test over reps samples from f with the given noise.
inline long count_rejections(const CircularDensity& f, const NoiseModel& noise, const TestFn& test,
                             const McConfig& cfg, std::uint64_t experiment) {
  require(cfg.n >= 2, ErrorCode::sample_too_small, "Monte Carlo needs n >= 2");
  ObservationSampler sampler(f, noise);
  auto hits = run_replications(cfg.reps, cfg.threads, [&](long r) -> char {
    Rng rng = stream_rng(cfg.seed, experiment, static_cast<std::uint64_t>(r));
    auto y = sampler.draw(cfg.n, rng);
    return test(y) ? 1 : 0;
  });
  long c = 0;
  for (char h : hits) c += h;
  return c;
}

struct RiskEstimate {
  double type1 = 0.0;
  double type1_se = 0.0;
  double type2 = std::numeric_limits<double>::quiet_NaN();  //!< NaN without an alternative
  double type2_se = std::numeric_limits<double>::quiet_NaN();
  double risk = 0.0;
  long reps = 0;
};

inline double binomial_se(double p, long reps) {
  return std::sqrt(p * (1.0 - p) / static_cast<double>(reps));
}

//! Type I error under f0 and, given an alternative, type II error under it.
inline RiskEstimate estimate_risk(const CircularDensity& f0, const NoiseModel& noise,
                                  const std::optional<CircularDensity>& f_alt, const TestFn& test,
                                  const McConfig& cfg, std::uint64_t experiment = 0) {
  require(cfg.reps >= 1, ErrorCode::domain, "at least one replication");
  RiskEstimate est;
  est.reps = cfg.reps;
  const double R = static_cast<double>(cfg.reps);
  est.type1 = static_cast<double>(count_rejections(f0, noise, test, cfg, splitmix64(experiment) ^ 0x1ULL)) / R;
  est.type1_se = binomial_se(est.type1, cfg.reps);
  est.risk = est.type1;
  if (f_alt) {
    long rej = count_rejections(*f_alt, noise, test, cfg, splitmix64(experiment) ^ 0x2ULL);
    est.type2 = 1.0 - static_cast<double>(rej) / R;
    est.type2_se = binomial_se(est.type2, cfg.reps);
    est.risk += est.type2;
  }
  return est;
}

//! Perturbation f0 + A sum_{1<=|j|<=k} d_|j| e_j along a fixed real direction.
struct Direction {
  std::vector<double> d;  //!< d_1..d_k, unit ellipsoid norm: 2 sum d_j^2 / a_j^2 = 1
  long k = 0;

  //! Squared L2 distance per unit amplitude squared: 2 sum d_j^2.
  double l2_squared() const {
    CompensatedSum acc;
    for (double v : d) acc += 2.0 * v * v;
    return acc.value();
  }
};

//! Lower-bound bump shape (|phi_j|^{-2} up to the profile argmin at n), rescaled to
//! unit ellipsoid norm.
inline Direction lb_bump_direction(const RegularityClass& cls, const NoiseModel& noise, long n) {
  Theta th = build_theta(cls, noise, n, 1.0, 1.0);
  CompensatedSum e;
  for (long j = 1; j <= th.k_star; ++j) {
    double a = cls.weight(j);
    e += 2.0 * th.values[j - 1] * th.values[j - 1] / (a * a);
  }
  double scale = 1.0 / std::sqrt(e.value());
  Direction dir;
  dir.k = th.k_star;
  for (double v : th.values) dir.d.push_back(v * scale);
  return dir;
}

//! Largest amplitude keeping f0 + A h nonnegative on the grid of f0.
inline double max_valid_amplitude(const CircularDensity& f0, const Direction& dir) {
  const auto& vals = f0.grid_values();
  const std::size_t G = vals.size();
  double amax = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < G; ++i) {
    double x = static_cast<double>(i) / static_cast<double>(G);
    double h = 0.0;
    for (long j = 1; j <= dir.k; ++j) h += 2.0 * dir.d[j - 1] * std::cos(two_pi * static_cast<double>(j) * x);
    if (h < 0.0) amax = std::min(amax, vals[i] / -h);
  }
  return amax;
}

inline CircularDensity perturbed_density(const CircularDensity& f0, const Direction& dir, double A) {
  long J = std::max(f0.coeffs().max_index(), dir.k);
  std::vector<cplx> c(J + 1);
  for (long j = 0; j <= J; ++j) c[j] = f0.coeffs()[j];
  for (long j = 1; j <= dir.k; ++j) c[j] += A * dir.d[j - 1];
  return CircularDensity(FourierSeq(std::move(c)));
}

struct EmpiricalRadius {
  double radius_sq;  //!< squared L2 distance of the detected alternative
  double amplitude;
  double power;      //!< estimated power at the returned amplitude
};

//! Smallest amplitude along dir with estimated power >= 1 - beta, by 12 bisection
//! steps on [0, min(2R, nonnegativity limit)].
inline EmpiricalRadius empirical_radius(const CircularDensity& f0, const NoiseModel& noise,
                                        const RegularityClass& cls, const TestFn& test, const McConfig& cfg,
                                        double beta, const Direction& dir, std::uint64_t experiment = 0) {
  require(beta > 0.0 && beta < 1.0, ErrorCode::domain, "beta must lie in (0, 1)");
  require(dir.k >= 1 && static_cast<long>(dir.d.size()) == dir.k, ErrorCode::domain, "malformed direction");
  const double target = 1.0 - beta;
  const double R = static_cast<double>(cfg.reps);
  double a_max = std::min(2.0 * cls.radius(), max_valid_amplitude(f0, dir) * (1.0 - 1e-9));
  auto power = [&](double A, std::uint64_t step) {
    CircularDensity f = perturbed_density(f0, dir, A);
    return static_cast<double>(count_rejections(f, noise, test, cfg, splitmix64(experiment) ^ (0x100ULL + step))) / R;
  };
  double p0 = power(0.0, 0);
  if (p0 >= target) return {0.0, 0.0, p0};
  double p_hi = power(a_max, 1);
  if (p_hi < target)
    throw Error(ErrorCode::no_power_at_max,
                "power " + std::to_string(p_hi) + " at the largest admissible amplitude " + std::to_string(a_max));
  double lo = 0.0, hi = a_max;
  for (int step = 0; step < 12; ++step) {
    double mid = 0.5 * (lo + hi);
    double p = power(mid, 2 + static_cast<std::uint64_t>(step));
    if (p >= target) {
      hi = mid;
      p_hi = p;
    } else {
      lo = mid;
    }
  }
  return {hi * hi * dir.l2_squared(), hi, p_hi};
}

struct TailCheck {
  double x;
  double level;       //!< deviation level being exceeded
  double rate;        //!< empirical exceedance frequency
  double rate_se;
  double prob_bound;  //!< bound on the exceedance probability
  bool within;        //!< rate <= prob_bound + 3 se
};

//! Exceedance of the degenerate U-statistic under the null against e^{1-x}.
inline std::vector<TailCheck> utail_check(const TestSpec& spec, const std::vector<double>& x_values,
                                          const McConfig& cfg, std::uint64_t experiment = 0) {
  validate_spec(spec);
  auto bounds = ustat_bounds(spec, true);
  ObservationSampler sampler(spec.f0, spec.noise);
  auto u = run_replications(cfg.reps, cfg.threads, [&](long r) {
    Rng rng = stream_rng(cfg.seed, experiment, static_cast<std::uint64_t>(r));
    auto y = sampler.draw(cfg.n, rng);
    return stat_breakdown(y, spec, spec.f0).u;
  });
  std::vector<TailCheck> out;
  for (double x : x_values) {
    require(x > 0.0, ErrorCode::domain, "tail levels need x > 0");
    double level = utail_level(bounds, x, cfg.n);
    long hits = std::count_if(u.begin(), u.end(), [&](double v) { return v >= level; });
    double rate = static_cast<double>(hits) / static_cast<double>(cfg.reps);
    double se = binomial_se(rate, cfg.reps);
    double pb = std::min(1.0, std::exp(1.0 - x));
    out.push_back({x, level, rate, se, pb, rate <= pb + 3.0 * se});
  }
  return out;
}

//! Lower deviations of the linear term under an alternative against e^{-x}.
inline std::vector<TailCheck> bernstein_check(const TestSpec& spec, const CircularDensity& f_alt,
                                              const std::vector<double>& x_values, const McConfig& cfg,
                                              std::uint64_t experiment = 0) {
  validate_spec(spec);
  auto gn = coeff_norms(convolve(f_alt.coeffs(), spec.noise));
  ObservationSampler sampler(f_alt, spec.noise);
  auto parts = run_replications(cfg.reps, cfg.threads, [&](long r) {
    Rng rng = stream_rng(cfg.seed, experiment, static_cast<std::uint64_t>(r));
    auto y = sampler.draw(cfg.n, rng);
    auto b = stat_breakdown(y, spec, f_alt);
    return std::pair<double, double>{b.linear, b.separation};
  });
  const double dn = static_cast<double>(cfg.n);
  double c, m2;
  if (spec.mode == Mode::indirect) {
    double phi = spec.noise.l2_norm();
    c = 8.0 * gn.l1 + phi * phi;
    double m = nu_m(spec.noise, spec.k).m;
    m2 = m * m;
  } else {
    c = 12.0 * gn.l2 + 1.0;
    m2 = std::sqrt(2.0 * static_cast<double>(spec.k));
  }
  const double q = parts.front().second;
  std::vector<TailCheck> out;
  for (double x : x_values) {
    require(x > 0.0, ErrorCode::domain, "tail levels need x > 0");
    double level = -(c * x * x * std::max(1.0, m2 / dn) * m2 / dn + 0.5 * q);
    long hits = std::count_if(parts.begin(), parts.end(), [&](const auto& p) { return 2.0 * p.first <= level; });
    double rate = static_cast<double>(hits) / static_cast<double>(cfg.reps);
    double se = binomial_se(rate, cfg.reps);
    double pb = std::min(1.0, std::exp(-x));
    out.push_back({x, level, rate, se, pb, rate <= pb + 3.0 * se});
  }
  return out;
}

}  // namespace circgof
