#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "circgof/adaptive.hpp"
#include "circgof/errors.hpp"
#include "circgof/spectral.hpp"
#include "circgof/summation.hpp"

namespace circgof {

//! Perturbation amplitudes theta_1..theta_k of one hypercube.
struct Theta {
  std::vector<double> values;
  long k_star = 0;
  double rho = 0.0;  //!< radius (not squared) at the effective sample size
  double nu = 0.0;   //!< nu_{k_star}
};

//! theta_j = A rho nu_k^{-2} |phi_j|^{-2} for j <= k_star, both taken from the
//! indirect radius profile at x = delta n; then 2 ||theta||_2^2 = A^2 rho^2.
inline Theta build_theta(const RegularityClass& cls, const NoiseModel& noise, long n, double delta, double A) {
  require(n >= 1, ErrorCode::domain, "n must be >= 1");
  require(delta > 0.0 && delta <= 1.0, ErrorCode::domain, "delta must lie in (0, 1]");
  require(A >= 0.0 && std::isfinite(A), ErrorCode::domain, "amplitude must be >= 0");
  auto prof = radius_profile(cls, noise, delta * static_cast<double>(n), Mode::indirect);
  Theta th;
  th.k_star = prof.argmin;
  th.rho = std::sqrt(prof.min_radius);
  th.nu = nu_m(noise, th.k_star).nu;
  double scale = A * th.rho / (th.nu * th.nu);
  th.values.resize(th.k_star);
  for (long j = 1; j <= th.k_star; ++j) {
    double a = noise.modulus(j);
    th.values[j - 1] = scale / (a * a);
  }
  return th;
}

//! f = 1 + sum_{1<=|j|<=k} signs_|j| theta_|j| e_j; requires 2 ||theta||_1 <= 1.
inline CircularDensity vertex_density(const std::vector<double>& theta, const std::vector<int>& signs) {
  require(theta.size() == signs.size(), ErrorCode::domain, "one sign per amplitude");
  CompensatedSum l1;
  std::vector<cplx> c(theta.size() + 1);
  c[0] = 1.0;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    require(signs[j] == 1 || signs[j] == -1, ErrorCode::domain, "signs must be +1 or -1");
    require(theta[j] >= 0.0, ErrorCode::domain, "amplitudes must be >= 0");
    l1 += theta[j];
    c[j + 1] = static_cast<double>(signs[j]) * theta[j];
  }
  if (2.0 * l1.value() > 1.0 + 1e-15)
    throw Error(ErrorCode::invalid_vertex, "2 ||theta||_1 = " + std::to_string(2.0 * l1.value()) + " exceeds 1");
  return CircularDensity(FourierSeq(std::move(c)));
}

inline CircularDensity vertex_density(const Theta& theta, const std::vector<int>& signs) {
  return vertex_density(theta.values, signs);
}

//! Mixture of N hypercubes, each uniform over its sign vertices.
struct HypercubeSpec {
  std::vector<std::vector<double>> thetas;
  long n = 1;
  double delta = 1.0;
};

//! (1/N^2) sum_{s,t} exp(2 n^2 sum_j (theta^s_j theta^t_j |phi_j|^2)^2) - 1.
inline double chi2_bound(const HypercubeSpec& spec, const NoiseModel& noise) {
  require(!spec.thetas.empty(), ErrorCode::domain, "at least one hypercube");
  require(spec.n >= 1, ErrorCode::domain, "n must be >= 1");
  const double N = static_cast<double>(spec.thetas.size());
  const double n2 = static_cast<double>(spec.n) * static_cast<double>(spec.n);
  CompensatedSum total;
  for (const auto& s : spec.thetas) {
    for (const auto& t : spec.thetas) {
      std::size_t k = std::min(s.size(), t.size());
      CompensatedSum e;
      for (std::size_t j = 0; j < k; ++j) {
        double a = noise.modulus(static_cast<long>(j + 1));
        double v = s[j] * t[j] * a * a;
        e += v * v;
      }
      double expo = 2.0 * n2 * e.value();
      if (expo > 700.0) throw Error(ErrorCode::overflow, "chi-square exponent " + std::to_string(expo));
      total += std::expm1(expo);
    }
  }
  return total.value() / (N * N);
}

namespace detail {

//! Vertices of all hypercubes with their mixture weights.
struct VertexTable {
  std::vector<std::vector<cplx>> g;  // observation coefficients g_1..g_k per vertex
  std::vector<double> weight;
};

inline VertexTable enumerate_vertices(const HypercubeSpec& spec, const NoiseModel& noise, std::size_t cap) {
  VertexTable vt;
  const double N = static_cast<double>(spec.thetas.size());
  std::size_t total = 0;
  for (const auto& th : spec.thetas) {
    require(th.size() < 20, ErrorCode::too_large, "hypercube dimension too large to enumerate");
    total += std::size_t{1} << th.size();
  }
  require(total <= cap, ErrorCode::too_large, "too many vertices: " + std::to_string(total));
  for (const auto& th : spec.thetas) {
    const std::size_t k = th.size();
    const std::size_t count = std::size_t{1} << k;
    for (std::size_t mask = 0; mask < count; ++mask) {
      std::vector<cplx> g(k);
      for (std::size_t j = 0; j < k; ++j) {
        double sign = (mask >> j) & 1U ? -1.0 : 1.0;
        g[j] = sign * th[j] * noise.coeff(static_cast<long>(j + 1));
      }
      vt.g.push_back(std::move(g));
      vt.weight.push_back(1.0 / (N * static_cast<double>(count)));
    }
  }
  return vt;
}

}  // namespace detail

//! chi^2(P1, P0) of the observation mixture by tensor quadrature over [0, 1)^n.
//! The last coordinate is summed through the Gram matrix of the vertex densities.
inline double chi2_bruteforce(const HypercubeSpec& spec, const NoiseModel& noise, std::size_t quad_points = 512) {
  require(!spec.thetas.empty(), ErrorCode::domain, "at least one hypercube");
  require(spec.n >= 1, ErrorCode::domain, "n must be >= 1");
  require(spec.n <= 3, ErrorCode::too_large, "brute-force chi-square limited to n <= 3");
  require(quad_points >= 512, ErrorCode::domain, "at least 512 quadrature points");
  auto vt = detail::enumerate_vertices(spec, noise, 64);
  const std::size_t V = vt.g.size();
  const std::size_t Q = quad_points;

  // G[v][q] = g_v(q / Q).
  std::vector<std::vector<double>> G(V, std::vector<double>(Q));
  for (std::size_t q = 0; q < Q; ++q) {
    double z = static_cast<double>(q) / static_cast<double>(Q);
    for (std::size_t v = 0; v < V; ++v) {
      CompensatedSum acc;
      acc += 1.0;
      for (std::size_t j = 0; j < vt.g[v].size(); ++j) {
        cplx e = std::conj(detail::unit_phase(static_cast<double>(j + 1) * z));
        acc += 2.0 * (vt.g[v][j] * e).real();
      }
      G[v][q] = acc.value();
    }
  }
  std::vector<double> M(V * V);
  for (std::size_t v = 0; v < V; ++v)
    for (std::size_t w = 0; w < V; ++w) {
      CompensatedSum acc;
      for (std::size_t q = 0; q < Q; ++q) acc += G[v][q] * G[w][q];
      M[v * V + w] = acc.value() / static_cast<double>(Q);
    }

  const long outer = spec.n - 1;
  std::size_t tuples = 1;
  for (long i = 0; i < outer; ++i) tuples *= Q;
  CompensatedSum total;
  std::vector<double> b(V);
  std::vector<std::size_t> idx(outer, 0);
  for (std::size_t t = 0; t < tuples; ++t) {
    for (std::size_t v = 0; v < V; ++v) {
      double p = vt.weight[v];
      for (long i = 0; i < outer; ++i) p *= G[v][idx[i]];
      b[v] = p;
    }
    double quad = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      double row = 0.0;
      for (std::size_t w = 0; w < V; ++w) row += M[v * V + w] * b[w];
      quad += b[v] * row;
    }
    total += quad;
    for (long i = 0; i < outer; ++i) {
      if (++idx[i] < Q) break;
      idx[i] = 0;
    }
  }
  double mean = total.value() / std::pow(static_cast<double>(Q), static_cast<double>(outer));
  return mean - 1.0;
}

struct ClassDiagnostics {
  long k_star;
  double rho;       //!< radius (not squared) at delta n
  double bias;      //!< a_k^2
  double variance;  //!< nu_k^2 / (delta n)
};

struct LbConditions {
  std::vector<ClassDiagnostics> classes;
  bool c1_nested = false;     //!< k_m <= k_l and rho_m <= delta rho_l for m < l
  double c_alpha = 0.0;       //!< delta^2 ln(N alpha^2)
  bool c2_separated = false;  //!< c_alpha > 0
  double kappa = 0.0;         //!< 2 max_m ||a^(m)||^2
  double eta = 0.0;           //!< min_m min(bias, variance) / max(bias, variance)
  double log_n_proxy = 0.0;   //!< delta^2 ln N
  double a_lower = 0.0;       //!< lower-bound constant, 0 when infeasible
  bool feasible = false;
};

//! Conditions of the hypercube-mixture lower bound for an ordered family of classes.
inline LbConditions check_conditions(const std::vector<RegularityClass>& classes, const NoiseModel& noise, long n,
                                     double delta, double alpha) {
  require(!classes.empty(), ErrorCode::domain, "at least one class");
  require(n >= 1, ErrorCode::domain, "n must be >= 1");
  require(delta > 0.0 && delta <= 1.0, ErrorCode::domain, "delta must lie in (0, 1]");
  require(alpha > 0.0 && alpha < 1.0, ErrorCode::domain, "alpha must lie in (0, 1)");
  LbConditions out;
  const double x = delta * static_cast<double>(n);
  double R = classes.front().radius();
  double eta = 1.0;
  double kappa = 0.0;
  for (const auto& cls : classes) {
    auto prof = radius_profile(cls, noise, x, Mode::indirect);
    const auto& e = prof.per_k.back().k == prof.argmin
                        ? prof.per_k.back()
                        : *std::find_if(prof.per_k.begin(), prof.per_k.end(),
                                        [&](const ProfileEntry& p) { return p.k == prof.argmin; });
    out.classes.push_back({prof.argmin, std::sqrt(prof.min_radius), e.bias, e.variance});
    eta = std::min(eta, std::min(e.bias, e.variance) / std::max(e.bias, e.variance));
    kappa = std::max(kappa, 2.0 * cls.weight_l2_squared());
    R = std::min(R, cls.radius());
  }
  out.c1_nested = true;
  for (std::size_t m = 0; m < out.classes.size(); ++m)
    for (std::size_t l = m + 1; l < out.classes.size(); ++l)
      if (out.classes[m].k_star > out.classes[l].k_star || out.classes[m].rho > delta * out.classes[l].rho)
        out.c1_nested = false;
  const double N = static_cast<double>(classes.size());
  out.c_alpha = delta * delta * std::log(N * alpha * alpha);
  out.c2_separated = out.c_alpha > 0.0;
  out.kappa = kappa;
  out.eta = eta;
  out.log_n_proxy = delta * delta * std::log(N);
  out.feasible = out.c1_nested && out.c2_separated && std::isfinite(kappa);
  if (out.c2_separated && std::isfinite(kappa)) {
    double m = std::min({R * R, std::sqrt(std::log1p(alpha * alpha)), 1.0 / kappa, std::sqrt(out.c_alpha)});
    out.a_lower = std::sqrt(eta * m);
  }
  return out;
}

enum class TheoremKind { ordinary_mild, super_mild };

struct TheoremGrid {
  TheoremKind kind;
  std::vector<RegularityClass> classes;  //!< smoothest first
  std::vector<double> smoothness;
  std::vector<double> exponents;
  NoiseModel noise;
  double delta;
  long N;
};

//! Smoothness grid of the adaptive lower bound, equispaced in the rate exponent.
inline TheoremGrid theorem_grid(TheoremKind kind, double s_lo, double s_hi, double p, double n, double R = 1.0) {
  require(s_lo < s_hi, ErrorCode::domain, "need s_lo < s_hi");
  require(p > 0.5, ErrorCode::domain, "noise degree must exceed 1/2");
  require(n > 1.0 && std::isfinite(n), ErrorCode::domain, "n must be > 1");
  const double ln = std::log(n);
  double delta, e_lo, e_hi, num;
  if (kind == TheoremKind::ordinary_mild) {
    require(s_lo > 0.5, ErrorCode::domain, "ordinary smoothness must exceed 1/2");
    auto e = [p](double s) { return 4.0 * s / (4.0 * s + 4.0 * p + 1.0); };
    delta = 1.0 / std::sqrt(std::max(1.0, std::log(ln)));
    e_lo = e(s_lo);
    e_hi = e(s_hi);
    num = std::log(delta * n);
  } else {
    require(s_lo > 0.0, ErrorCode::domain, "smoothness must be > 0");
    auto e = [p](double s) { return (2.0 * p + 0.5) / s; };
    double lln = ln > 1.0 ? std::log(ln) : 0.0;
    delta = 1.0 / std::sqrt(std::max(1.0, lln > 0.0 ? std::log(lln) : 0.0));
    e_lo = e(s_hi);
    e_hi = e(s_lo);
    num = std::log(std::log(delta * n));
  }
  if (!(delta < 1.0)) throw Error(ErrorCode::n_too_small, "n too small for delta < 1");
  const double span = e_hi - e_lo;
  const double Nf = std::floor(span / 4.0 * num / std::abs(std::log(delta)));
  if (!(Nf >= 2.0)) throw Error(ErrorCode::n_too_small, "only " + std::to_string(Nf) + " classes at this n");
  require(Nf <= 1e6, ErrorCode::too_large, "too many classes");
  TheoremGrid tg{kind, {}, {}, {}, NoiseModel::polynomial(p), delta, static_cast<long>(Nf)};
  const double d = span / Nf;
  for (long m = 1; m <= tg.N; ++m) {
    double em, s;
    if (kind == TheoremKind::ordinary_mild) {
      em = e_hi - static_cast<double>(m - 1) * d;
      s = em * (4.0 * p + 1.0) / (4.0 * (1.0 - em));
      tg.classes.push_back(RegularityClass::ordinary(s, R));
    } else {
      em = e_lo + static_cast<double>(m - 1) * d;
      s = (2.0 * p + 0.5) / em;
      tg.classes.push_back(RegularityClass::super(s, R));
    }
    tg.exponents.push_back(em);
    tg.smoothness.push_back(s);
  }
  return tg;
}

}  // namespace circgof
