#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "circgof/montecarlo.hpp"

using namespace circgof;

namespace {

// Mean of exp(i 2 pi j v) with a 5 standard error tolerance per component.
void expect_coefficient(const std::vector<double>& v, long j, cplx want, const char* what) {
  auto S = power_sums(v, j);
  double n = static_cast<double>(v.size());
  cplx mean = S[j] / n;
  double tol = 5.0 / std::sqrt(n);
  EXPECT_NEAR(mean.real(), want.real(), tol) << what << " j=" << j;
  EXPECT_NEAR(mean.imag(), want.imag(), tol) << what << " j=" << j;
}

std::vector<double> noise_draws(const NoiseModel& noise, long n, std::uint64_t seed) {
  NoiseSampler s(noise);
  Rng rng = stream_rng(seed, 0, 0);
  std::vector<double> v(n);
  for (auto& x : v) x = wrap01(s(rng));
  return v;
}

}  // namespace

TEST(Streams, DistinctAndReproducible) {
  Rng a = stream_rng(1, 2, 3), b = stream_rng(1, 2, 3), c = stream_rng(1, 2, 4), d = stream_rng(2, 2, 3);
  auto x = a();
  EXPECT_EQ(x, b());
  EXPECT_NE(x, c());
  EXPECT_NE(x, d());
  EXPECT_NE(stream_id("a"), stream_id("b"));
}

TEST(Sampling, DensityCoefficients) {
  CircularDensity f(FourierSeq({1.0, cplx(0.2, 0.1), -0.15}));
  Rng rng = stream_rng(5, 1, 0);
  auto x = sample_density(f, 200000, rng);
  for (double v : x) ASSERT_TRUE(v >= 0.0 && v < 1.0);
  for (long j : {1L, 2L, 3L}) expect_coefficient(x, j, f.coeffs()[j], "density");
}

TEST(Sampling, NoiseFamiliesMatchTheirCoefficients) {
  std::vector<std::pair<const char*, NoiseModel>> cases{
      {"laplace", NoiseModel::wrapped_laplace(0.1)},
      {"variance-gamma", NoiseModel::polynomial(1.0, 0.05)},
      {"normal", NoiseModel::wrapped_normal(0.15)},
      {"cauchy", NoiseModel::wrapped_cauchy(0.7)},
      {"stable", NoiseModel::exponential(1.5, 0.3)},
      {"custom", NoiseModel::custom(FourierSeq({1.0, cplx(0.2, 0.3), 0.1}))},
  };
  std::uint64_t seed = 10;
  for (const auto& [name, noise] : cases) {
    ASSERT_TRUE(NoiseSampler(noise).available()) << name;
    auto v = noise_draws(noise, 200000, seed++);
    for (long j : {1L, 2L, 3L}) expect_coefficient(v, j, noise.coeff(j), name);
  }
}

TEST(Sampling, UnsampleableNoise) {
  EXPECT_FALSE(NoiseSampler(NoiseModel::polynomial(1.0)).available());
  EXPECT_FALSE(NoiseSampler(NoiseModel::exponential(3.0, 0.1)).available());
  EXPECT_FALSE(NoiseSampler(NoiseModel::custom(FourierSeq({1.0, 0.9}))).available());
  EXPECT_THROW(ObservationSampler(CircularDensity::uniform(), NoiseModel::polynomial(1.0)), Error);
}

TEST(Sampling, DiracNoiseLeavesSampleUnchanged) {
  CircularDensity f(FourierSeq({1.0, 0.3}));
  Rng a = stream_rng(3, 3, 3), b = stream_rng(3, 3, 3);
  auto y = sample_model(f, NoiseModel::dirac(3), 1000, a);
  auto x = sample_density(f, 1000, b);
  EXPECT_EQ(x, y);
}

TEST(Sampling, ObservationCoefficientsBothRoutes) {
  // Y = X + eps has g_j = f_j phi_j, whether eps comes from the noise model or its density.
  CircularDensity f(FourierSeq({1.0, cplx(0.25, -0.1), 0.1}));
  auto noise = NoiseModel::wrapped_cauchy(0.6);
  CircularDensity noise_density(FourierSeq({1.0, 0.6, 0.36, 0.216, 0.1296, 0.07776}));
  Rng r1 = stream_rng(1, 0, 0), r2 = stream_rng(2, 0, 0);
  auto y1 = sample_model(f, noise, 200000, r1);
  auto y2 = sample_model(f, noise_density, 200000, r2);
  for (long j : {1L, 2L}) {
    expect_coefficient(y1, j, f.coeffs()[j] * noise.coeff(j), "model");
    expect_coefficient(y2, j, f.coeffs()[j] * noise.coeff(j), "density");
  }
}

TEST(Replications, ThreadCountDoesNotChangeResults) {
  auto fn = [](long r) {
    Rng rng = stream_rng(42, 7, static_cast<std::uint64_t>(r));
    return uniform01(rng);
  };
  auto one = run_replications(200, 1, fn);
  auto four = run_replications(200, 4, fn);
  EXPECT_EQ(one, four);
}

TEST(Replications, PropagatesExceptions) {
  auto fn = [](long r) -> int {
    if (r == 17) throw Error(ErrorCode::domain, "boom");
    return 1;
  };
  EXPECT_THROW(run_replications(50, 3, fn), Error);
}

TEST(Risk, TrivialTests) {
  auto f0 = CircularDensity::uniform();
  auto alt = std::optional<CircularDensity>(CircularDensity(FourierSeq({1.0, 0.3})));
  auto noise = NoiseModel::wrapped_laplace(0.1);
  McConfig cfg{20, 100, 9, 1};
  auto always = estimate_risk(f0, noise, alt, [](std::span<const double>) { return true; }, cfg);
  EXPECT_EQ(always.type1, 1.0);
  EXPECT_EQ(always.type2, 0.0);
  auto never = estimate_risk(f0, noise, alt, [](std::span<const double>) { return false; }, cfg);
  EXPECT_EQ(never.type1, 0.0);
  EXPECT_EQ(never.type2, 1.0);
  auto null_only = estimate_risk(f0, noise, std::nullopt, [](std::span<const double>) { return false; }, cfg);
  EXPECT_TRUE(std::isnan(null_only.type2));
}

TEST(Risk, SeedReproducibility) {
  auto f0 = CircularDensity::uniform();
  auto alt = std::optional<CircularDensity>(CircularDensity(FourierSeq({1.0, 0.2})));
  auto noise = NoiseModel::wrapped_laplace(0.05);
  auto test = [](std::span<const double> y) { return empirical_coeffs(y, 1)[1].real() > 0.05; };
  McConfig cfg{200, 300, 123, 1};
  auto a = estimate_risk(f0, noise, alt, test, cfg);
  cfg.threads = 3;
  auto b = estimate_risk(f0, noise, alt, test, cfg);
  EXPECT_EQ(a.type1, b.type1);
  EXPECT_EQ(a.type2, b.type2);
  cfg.seed = 124;
  auto c = estimate_risk(f0, noise, alt, test, cfg);
  EXPECT_TRUE(a.type1 != c.type1 || a.type2 != c.type2);
}

TEST(EmpiricalRadius, TrivialTests) {
  auto f0 = CircularDensity::uniform();
  auto noise = NoiseModel::wrapped_laplace(0.1);
  auto cls = RegularityClass::ordinary(1.0, 1.0);
  auto dir = lb_bump_direction(cls, noise, 100);
  McConfig cfg{50, 40, 1, 1};
  auto zero = empirical_radius(f0, noise, cls, [](std::span<const double>) { return true; }, cfg, 0.1, dir);
  EXPECT_EQ(zero.radius_sq, 0.0);
  try {
    empirical_radius(f0, noise, cls, [](std::span<const double>) { return false; }, cfg, 0.1, dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::no_power_at_max);
  }
}

TEST(EmpiricalRadius, BisectsOnAKnownThreshold) {
  // A test that rejects iff the first empirical coefficient is large has a sharp power curve.
  auto f0 = CircularDensity::uniform();
  auto noise = NoiseModel::dirac(2);
  auto cls = RegularityClass::ordinary(1.0, 1.0);
  Direction dir{{1.0 / std::sqrt(2.0)}, 1};
  auto test = [](std::span<const double> y) { return empirical_coeffs(y, 1)[1].real() > 0.2; };
  McConfig cfg{2000, 100, 3, 1};
  auto r = empirical_radius(f0, noise, cls, test, cfg, 0.1, dir);
  // Power ~ 1 once A / sqrt 2 exceeds 0.2 by a few standard errors (0.016).
  EXPECT_GT(r.amplitude / std::sqrt(2.0), 0.2);
  EXPECT_LT(r.amplitude / std::sqrt(2.0), 0.25);
  EXPECT_NEAR(r.radius_sq, r.amplitude * r.amplitude, 1e-15);
}

TEST(Direction, UnitEllipsoidNorm) {
  auto cls = RegularityClass::ordinary(1.5, 2.0);
  auto noise = NoiseModel::polynomial(1.0, 0.1);
  auto dir = lb_bump_direction(cls, noise, 1000);
  double e = 0.0;
  for (long j = 1; j <= dir.k; ++j) e += 2.0 * dir.d[j - 1] * dir.d[j - 1] / std::pow(cls.weight(j), 2);
  EXPECT_NEAR(e, 1.0, 1e-12);
  double amax = max_valid_amplitude(CircularDensity::uniform(), dir);
  EXPECT_NO_THROW(perturbed_density(CircularDensity::uniform(), dir, amax * (1 - 1e-9)));
  EXPECT_THROW(perturbed_density(CircularDensity::uniform(), dir, amax * 1.01), Error);
}

TEST(TailChecks, RunAndReportBounds) {
  TestSpec spec{CircularDensity::uniform(), NoiseModel::wrapped_laplace(0.1), 2, 0.05, Mode::indirect};
  McConfig cfg{100, 200, 5, 1};
  auto u = utail_check(spec, {2.0, 3.0}, cfg);
  ASSERT_EQ(u.size(), 2u);
  EXPECT_NEAR(u[0].prob_bound, std::exp(-1.0), 1e-15);
  EXPECT_LE(u[0].rate, u[0].prob_bound + 3 * u[0].rate_se);
  auto b = bernstein_check(spec, CircularDensity(FourierSeq({1.0, 0.2})), {1.0, 2.0}, cfg);
  EXPECT_NEAR(b[1].prob_bound, std::exp(-2.0), 1e-15);
  EXPECT_TRUE(b[0].within);
}
