#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "circgof/errors.hpp"
#include "circgof/spectral.hpp"
#include "json.hpp"

namespace circgof::io {

using json = nlohmann::json;

//! Shortest round-trip representation with 17 significant digits.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

//! Collects every schema violation before failing.
class SchemaErrors {
 public:
  void add(const std::string& path, const std::string& what) { items_.push_back(path + ": " + what); }
  bool empty() const { return items_.empty(); }
  const std::vector<std::string>& items() const { return items_; }

  void throw_if_any() const {
    if (items_.empty()) return;
    std::string msg = std::to_string(items_.size()) + " schema violation(s)";
    for (const auto& s : items_) msg += "\n  " + s;
    throw Error(ErrorCode::schema, msg);
  }

 private:
  std::vector<std::string> items_;
};

inline const json* member(const json& obj, const char* key) {
  if (!obj.is_object()) return nullptr;
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

inline double get_number(const json& obj, const char* key, const std::string& path, SchemaErrors& errs,
                         std::optional<double> fallback = std::nullopt) {
  const json* v = member(obj, key);
  if (!v) {
    if (fallback) return *fallback;
    errs.add(path + "." + key, "required number missing");
    return std::numeric_limits<double>::quiet_NaN();
  }
  if (!v->is_number()) {
    errs.add(path + "." + key, "expected a number");
    return std::numeric_limits<double>::quiet_NaN();
  }
  return v->get<double>();
}

inline long get_integer(const json& obj, const char* key, const std::string& path, SchemaErrors& errs,
                        std::optional<long> fallback = std::nullopt) {
  const json* v = member(obj, key);
  if (!v) {
    if (fallback) return *fallback;
    errs.add(path + "." + key, "required integer missing");
    return 0;
  }
  if (!v->is_number_integer()) {
    errs.add(path + "." + key, "expected an integer");
    return 0;
  }
  return v->get<long>();
}

inline std::string get_string(const json& obj, const char* key, const std::string& path, SchemaErrors& errs,
                              std::optional<std::string> fallback = std::nullopt) {
  const json* v = member(obj, key);
  if (!v) {
    if (fallback) return *fallback;
    errs.add(path + "." + key, "required string missing");
    return {};
  }
  if (!v->is_string()) {
    errs.add(path + "." + key, "expected a string");
    return {};
  }
  return v->get<std::string>();
}

//! [{"j": 1, "re": 0.25, "im": 0}, ...]; absent indices are zero, j = 0 defaults to 1.
inline FourierSeq coeffs_from_json(const json& arr, const std::string& path, SchemaErrors& errs) {
  if (!arr.is_array()) {
    errs.add(path, "expected an array of coefficients");
    return FourierSeq::uniform();
  }
  std::map<long, cplx> entries;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& e = arr[i];
    std::string p = path + "[" + std::to_string(i) + "]";
    if (!e.is_object()) {
      errs.add(p, "expected an object");
      continue;
    }
    long j = get_integer(e, "j", p, errs);
    double re = get_number(e, "re", p, errs, 0.0);
    double im = get_number(e, "im", p, errs, 0.0);
    if (j < 0) {
      errs.add(p + ".j", "negative indices are implied by symmetry");
      continue;
    }
    if (j > 10000000) {
      errs.add(p + ".j", "index too large");
      continue;
    }
    if (entries.count(j)) errs.add(p + ".j", "duplicate index " + std::to_string(j));
    entries[j] = {re, im};
  }
  long J = entries.empty() ? 0 : entries.rbegin()->first;
  std::vector<cplx> c(J + 1, cplx(0.0));
  c[0] = 1.0;
  for (auto [j, v] : entries) c[j] = v;
  return FourierSeq(std::move(c));
}

namespace detail {

// Smallest truncation index whose discarded l1 mass is below tol.
inline long truncation_index(const std::vector<double>& c, double beyond, double tol) {
  double tail = beyond;
  long J = static_cast<long>(c.size()) - 1;
  for (; J >= 1; --J) {
    if (tail + 2.0 * c[J] >= tol) break;
    tail += 2.0 * c[J];
  }
  if (J == static_cast<long>(c.size()) - 1 && beyond >= tol) return -1;
  return J;
}

}  // namespace detail

//! Density spec: {"family": ..., "params": {...}, "coeffs": [...]}.
inline CircularDensity density_from_json(const json& spec, const std::string& path = "density") {
  SchemaErrors errs;
  if (!spec.is_object()) {
    errs.add(path, "expected an object");
    errs.throw_if_any();
  }
  std::string family = get_string(spec, "family", path, errs);
  const json empty = json::object();
  const json* params = member(spec, "params");
  if (params && !params->is_object()) errs.add(path + ".params", "expected an object");
  const json& P = params && params->is_object() ? *params : empty;
  const std::string pp = path + ".params";
  constexpr long cap = 10000;
  constexpr double tol = 1e-10;
  long forced = get_integer(P, "max_index", pp, errs, 0L);

  if (family == "uniform") {
    errs.throw_if_any();
    return CircularDensity::uniform();
  }
  if (family == "coeffs") {
    const json* arr = member(spec, "coeffs");
    if (!arr) errs.add(path + ".coeffs", "required for family coeffs");
    FourierSeq f = arr ? coeffs_from_json(*arr, path + ".coeffs", errs) : FourierSeq::uniform();
    errs.throw_if_any();
    return CircularDensity(f);
  }
  std::vector<double> c;
  double beyond = 0.0;
  if (family == "wrapped_cauchy") {
    double rho = get_number(P, "rho", pp, errs);
    errs.throw_if_any();
    require(rho > 0.0 && rho < 1.0, ErrorCode::domain, "wrapped Cauchy needs rho in (0, 1)");
    c.resize(cap + 1);
    for (long j = 0; j <= cap; ++j) c[j] = std::pow(rho, static_cast<double>(j));
    beyond = 2.0 * std::pow(rho, cap + 1.0) / (1.0 - rho);
  } else if (family == "wrapped_normal") {
    double sigma = get_number(P, "sigma", pp, errs);
    errs.throw_if_any();
    require(sigma > 0.0, ErrorCode::domain, "wrapped normal needs sigma > 0");
    double a = 2.0 * std::numbers::pi * std::numbers::pi * sigma * sigma;
    c.resize(cap + 1);
    for (long j = 0; j <= cap; ++j) c[j] = std::exp(-a * static_cast<double>(j) * static_cast<double>(j));
    double first = std::exp(-a * (cap + 1.0) * (cap + 1.0));
    beyond = 2.0 * first / (1.0 - std::exp(-a * (2.0 * cap + 3.0)));
  } else if (family == "wrapped_laplace") {
    double b = get_number(P, "b", pp, errs);
    errs.throw_if_any();
    require(b > 0.0, ErrorCode::domain, "wrapped Laplace needs b > 0");
    double w = 2.0 * std::numbers::pi * b;
    c.resize(cap + 1);
    for (long j = 0; j <= cap; ++j) c[j] = 1.0 / (1.0 + w * w * static_cast<double>(j) * static_cast<double>(j));
    beyond = 2.0 / (w * w * static_cast<double>(cap));
  } else {
    errs.add(path + ".family", "unknown density family '" + family + "'");
    errs.throw_if_any();
  }
  long J = forced > 0 ? std::min(forced, cap) : detail::truncation_index(c, beyond, tol);
  require(J >= 0, ErrorCode::domain,
          family + " cannot be truncated within " + std::to_string(cap) + " coefficients; set params.max_index");
  std::vector<cplx> coeffs(c.begin(), c.begin() + J + 1);
  return CircularDensity(FourierSeq(std::move(coeffs)));
}

//! Noise spec; families polynomial_noise, exponential_noise, wrapped_*, coeffs.
inline NoiseModel noise_from_json(const json& spec, const std::string& path = "noise") {
  SchemaErrors errs;
  if (!spec.is_object()) {
    errs.add(path, "expected an object");
    errs.throw_if_any();
  }
  std::string family = get_string(spec, "family", path, errs);
  const json empty = json::object();
  const json* params = member(spec, "params");
  const json& P = params && params->is_object() ? *params : empty;
  const std::string pp = path + ".params";
  if (family == "polynomial_noise") {
    double p = get_number(P, "p", pp, errs);
    double scale = get_number(P, "scale", pp, errs, 0.0);
    errs.throw_if_any();
    return NoiseModel::polynomial(p, scale);
  }
  if (family == "exponential_noise") {
    double p = get_number(P, "p", pp, errs);
    double rate = get_number(P, "rate", pp, errs);
    errs.throw_if_any();
    return NoiseModel::exponential(p, rate);
  }
  if (family == "wrapped_laplace") {
    double b = get_number(P, "b", pp, errs);
    errs.throw_if_any();
    return NoiseModel::wrapped_laplace(b);
  }
  if (family == "wrapped_normal") {
    double s = get_number(P, "sigma", pp, errs);
    errs.throw_if_any();
    return NoiseModel::wrapped_normal(s);
  }
  if (family == "wrapped_cauchy") {
    double rho = get_number(P, "rho", pp, errs);
    errs.throw_if_any();
    return NoiseModel::wrapped_cauchy(rho);
  }
  if (family == "coeffs") {
    const json* arr = member(spec, "coeffs");
    if (!arr) errs.add(path + ".coeffs", "required for family coeffs");
    FourierSeq f = arr ? coeffs_from_json(*arr, path + ".coeffs", errs) : FourierSeq::uniform();
    errs.throw_if_any();
    return NoiseModel::custom(f);
  }
  errs.add(path + ".family", "unknown noise family '" + family + "'");
  errs.throw_if_any();
  return NoiseModel::dirac(1);
}

//! One decimal per line; blank lines and lines starting with '#' are skipped.
inline std::vector<double> parse_data(std::istream& in) {
  std::vector<double> out;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    auto e = line.find_last_not_of(" \t\r");
    std::string_view tok(line.data() + b, e - b + 1);
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || !std::isfinite(v))
      throw Error(ErrorCode::parse, "line " + std::to_string(lineno) + ": cannot read '" + std::string(tok) + "'");
    if (!(v >= 0.0 && v < 1.0))
      throw Error(ErrorCode::domain, "line " + std::to_string(lineno) + ": value " + std::string(tok) +
                                         " outside [0, 1)");
    out.push_back(v);
  }
  return out;
}

inline std::vector<double> read_data_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::parse, "cannot open data file " + path);
  return parse_data(in);
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::schema, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::schema, path + ": " + e.what());
  }
}

}  // namespace circgof::io
