// Command-line front end: test, simulate, radius, lowerbound.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "circgof/circgof.hpp"
#include "circgof/io.hpp"

namespace fs = std::filesystem;
using namespace circgof;
using io::json;
using io::SchemaErrors;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Options {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  int threads = 0;
};

json manifest(const Options& opt, const json& config, std::uint64_t seed) {
  return json{{"tool", "circgof"},
              {"version", kVersion},
              {"command", opt.command},
              {"config_path", opt.config_path},
              {"output_path", opt.out_path.empty() ? json(nullptr) : json(opt.out_path)},
              {"seed_override", opt.seed ? json(*opt.seed) : json(nullptr)},
              {"seed", seed},
              {"config", config},
              {"threads", resolve_threads(opt.threads)}};
}

class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw Error(ErrorCode::domain, "cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

Mode parse_mode(const json& obj, const std::string& path, SchemaErrors& errs) {
  std::string m = io::get_string(obj, "mode", path, errs, std::string("indirect"));
  if (m == "indirect") return Mode::indirect;
  if (m == "direct") return Mode::direct;
  errs.add(path + ".mode", "expected 'indirect' or 'direct'");
  return Mode::indirect;
}

RegularityClass parse_class(const json& obj, const std::string& path) {
  SchemaErrors errs;
  if (!obj.is_object()) {
    errs.add(path, "expected an object");
    errs.throw_if_any();
  }
  std::string family = io::get_string(obj, "family", path, errs);
  double R = io::get_number(obj, "R", path, errs, 1.0);
  if (family == "ordinary" || family == "super") {
    double s = io::get_number(obj, "s", path, errs);
    errs.throw_if_any();
    return family == "ordinary" ? RegularityClass::ordinary(s, R) : RegularityClass::super(s, R);
  }
  if (family == "custom") {
    const json* w = io::member(obj, "weights");
    std::vector<double> weights;
    if (!w || !w->is_array()) {
      errs.add(path + ".weights", "required array of numbers");
    } else {
      for (const auto& v : *w) {
        if (!v.is_number()) errs.add(path + ".weights", "non-numeric weight");
        else weights.push_back(v.get<double>());
      }
    }
    errs.throw_if_any();
    return RegularityClass::custom(std::move(weights), R);
  }
  errs.add(path + ".family", "expected ordinary, super or custom");
  errs.throw_if_any();
  return RegularityClass::ordinary(1.0, 1.0);
}

//! Either "k" (single test) or "grid" ("geometric", {"small": s_star}, or a list).
struct Dimension {
  std::optional<long> k;
  std::optional<json> grid;

  std::string label() const {
    if (k) return std::to_string(*k);
    return "grid:" + (grid->is_string() ? grid->get<std::string>() : grid->dump());
  }

  DimensionGrid resolve(long n) const {
    const json& g = *grid;
    if (g.is_string()) return geometric_grid(n);
    if (g.is_object()) return small_grid(n, g.at("small").get<double>());
    std::vector<long> dims;
    for (const auto& v : g) dims.push_back(v.get<long>());
    return DimensionGrid::from(std::move(dims));
  }
};

Dimension parse_dimension(const json& obj, const std::string& path, SchemaErrors& errs) {
  Dimension d;
  const json* k = io::member(obj, "k");
  const json* g = io::member(obj, "grid");
  if (k && g) errs.add(path, "give either k or grid, not both");
  if (!k && !g) errs.add(path, "one of k or grid is required");
  if (k) {
    if (!k->is_number_integer() || k->get<long>() < 1) errs.add(path + ".k", "expected an integer >= 1");
    else d.k = k->get<long>();
  }
  if (g) {
    bool ok = (g->is_string() && g->get<std::string>() == "geometric") ||
              (g->is_object() && g->contains("small") && (*g)["small"].is_number()) ||
              (g->is_array() && !g->empty() &&
               std::all_of(g->begin(), g->end(), [](const json& v) { return v.is_number_integer(); }));
    if (!ok) errs.add(path + ".grid", "expected \"geometric\", {\"small\": s_star} or a list of integers");
    else d.grid = *g;
  }
  return d;
}

std::vector<long> parse_sizes(const json& obj, const std::string& path, SchemaErrors& errs) {
  const json* n = io::member(obj, "n");
  std::vector<long> out;
  if (!n) {
    errs.add(path + ".n", "required");
  } else if (n->is_number_integer()) {
    out.push_back(n->get<long>());
  } else if (n->is_array()) {
    for (const auto& v : *n) {
      if (v.is_number_integer()) out.push_back(v.get<long>());
      else errs.add(path + ".n", "sample sizes must be integers");
    }
  } else {
    errs.add(path + ".n", "expected an integer or a list of integers");
  }
  for (long v : out)
    if (v < 2) errs.add(path + ".n", "sample sizes must be >= 2");
  return out;
}

fs::path relative_to(const std::string& config_path, const std::string& file) {
  fs::path p(file);
  if (p.is_absolute()) return p;
  return fs::path(config_path).parent_path() / p;
}

// ---- test -------------------------------------------------------------------

int run_test(const Options& opt) {
  json cfg = io::read_json_file(opt.config_path);
  SchemaErrors errs;
  std::string data = io::get_string(cfg, "data", "config", errs);
  double alpha = io::get_number(cfg, "alpha", "config", errs, 0.05);
  Mode mode = parse_mode(cfg, "config", errs);
  Dimension dim = parse_dimension(cfg, "config", errs);
  if (!io::member(cfg, "null")) errs.add("config.null", "required density spec");
  if (!io::member(cfg, "noise")) errs.add("config.noise", "required noise spec");
  errs.throw_if_any();
  auto f0 = io::density_from_json(cfg["null"], "config.null");
  auto noise = io::noise_from_json(cfg["noise"], "config.noise");
  auto sample = io::read_data_file(relative_to(opt.config_path, data).string());
  long n = static_cast<long>(sample.size());

  json out;
  out["manifest"] = manifest(opt, cfg, 0);
  out["n"] = n;
  out["mode"] = to_string(mode);
  auto cond = null_condition(f0, noise);
  out["null_condition"] = json{{"min_g0", cond.min_g0}, {"holds", cond.holds}};
  if (!cond.holds)
    std::cerr << "circgof: warning: convolved null density drops to " << cond.min_g0
              << "; its Fourier expansion may not characterise the null\n";
  out["alpha"] = alpha;
  if (dim.k) {
    TestSpec spec{f0, noise, *dim.k, alpha, mode};
    auto res = single_test(sample, spec);
    out["reject"] = res.reject;
    out["statistic"] = res.statistic;
    out["threshold"] = res.threshold;
    out["per_k"] = json::array({json{{"k", *dim.k}, {"statistic", res.statistic}, {"threshold", res.threshold}}});
  } else {
    auto grid = dim.resolve(n);
    auto res = max_test(sample, f0, noise, grid, alpha, mode);
    out["reject"] = res.reject;
    out["delta"] = grid.delta;
    out["per_k"] = json::array();
    for (const auto& c : res.per_k)
      out["per_k"].push_back(json{{"k", c.k}, {"statistic", c.statistic}, {"threshold", c.threshold}});
  }
  Output o(opt.out_path);
  o.stream() << out.dump(2) << "\n";
  return 0;
}

// ---- simulate ---------------------------------------------------------------

struct Experiment {
  std::string id;
  CircularDensity f0;
  NoiseModel noise;
  std::optional<CircularDensity> alt;
  Mode mode;
  double alpha;
  Dimension dim;
  std::vector<long> sizes;
  long reps;
  std::optional<RegularityClass> radius_class;
  double beta;
};

std::vector<Experiment> parse_experiments(const json& cfg, long default_reps) {
  SchemaErrors errs;
  const json* list = io::member(cfg, "experiments");
  if (!list || !list->is_array()) {
    errs.add("config.experiments", "required array");
    errs.throw_if_any();
  }
  // Validate every experiment before building any of them so all violations are listed.
  for (std::size_t i = 0; i < list->size(); ++i) {
    const json& e = (*list)[i];
    std::string p = "config.experiments[" + std::to_string(i) + "]";
    if (!e.is_object()) {
      errs.add(p, "expected an object");
      continue;
    }
    io::get_string(e, "id", p, errs);
    io::get_number(e, "alpha", p, errs, 0.05);
    io::get_integer(e, "reps", p, errs, default_reps);
    parse_mode(e, p, errs);
    parse_dimension(e, p, errs);
    parse_sizes(e, p, errs);
    if (!io::member(e, "null")) errs.add(p + ".null", "required density spec");
    if (!io::member(e, "noise")) errs.add(p + ".noise", "required noise spec");
    if (const json* r = io::member(e, "radius")) {
      if (!io::member(*r, "class")) errs.add(p + ".radius.class", "required regularity class");
      io::get_number(*r, "beta", p + ".radius", errs, 0.1);
    }
  }
  errs.throw_if_any();
  std::vector<Experiment> out;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const json& e = (*list)[i];
    std::string p = "config.experiments[" + std::to_string(i) + "]";
    SchemaErrors unused;
    Experiment x{io::get_string(e, "id", p, unused),
                 io::density_from_json(e["null"], p + ".null"),
                 io::noise_from_json(e["noise"], p + ".noise"),
                 std::nullopt,
                 parse_mode(e, p, unused),
                 io::get_number(e, "alpha", p, unused, 0.05),
                 parse_dimension(e, p, unused),
                 parse_sizes(e, p, unused),
                 io::get_integer(e, "reps", p, unused, default_reps),
                 std::nullopt,
                 0.1};
    if (const json* a = io::member(e, "alternative")) x.alt = io::density_from_json(*a, p + ".alternative");
    if (const json* r = io::member(e, "radius")) {
      x.radius_class = parse_class((*r)["class"], p + ".radius.class");
      x.beta = io::get_number(*r, "beta", p + ".radius", unused, 0.1);
    }
    require(x.alpha > 0.0 && x.alpha < 1.0, ErrorCode::domain, p + ": alpha must lie in (0, 1)");
    require(x.reps >= 1, ErrorCode::domain, p + ": reps must be >= 1");
    out.push_back(std::move(x));
  }
  return out;
}

TestFn make_test(const Experiment& x, long n) {
  if (x.dim.k) {
    auto kernel = std::make_shared<StatisticKernel>(x.f0, x.noise, x.mode, *x.dim.k);
    TestSpec spec{x.f0, x.noise, *x.dim.k, x.alpha, x.mode};
    double thr = threshold(spec, n);
    long k = *x.dim.k;
    return [kernel, thr, k](std::span<const double> y) {
      long ks[] = {k};
      return rejects(kernel->evaluate(y, ks)[0], thr);
    };
  }
  auto mt = std::make_shared<MaxTest>(x.f0, x.noise, x.dim.resolve(n), x.alpha, x.mode);
  return [mt](std::span<const double> y) { return (*mt)(y).reject; };
}

int run_simulate(const Options& opt) {
  json cfg = io::read_json_file(opt.config_path);
  SchemaErrors errs;
  auto seed = static_cast<std::uint64_t>(io::get_integer(cfg, "seed", "config", errs, 0L));
  long reps = io::get_integer(cfg, "reps", "config", errs, 1000L);
  errs.throw_if_any();
  if (opt.seed) seed = *opt.seed;
  auto experiments = parse_experiments(cfg, reps);

  Output o(opt.out_path);
  std::ostream& os = o.stream();
  os << "# " << manifest(opt, cfg, seed).dump() << "\n";
  os << "experiment_id,n,k_or_grid,alpha,mode,type1,type1_se,type2,type2_se,radius,seed\n";
  for (const auto& x : experiments) {
    for (long n : x.sizes) {
      McConfig mc{n, x.reps, seed, opt.threads};
      std::uint64_t id = stream_id(x.id) ^ splitmix64(static_cast<std::uint64_t>(n));
      TestFn test = make_test(x, n);
      auto risk = estimate_risk(x.f0, x.noise, x.alt, test, mc, id);
      double radius = std::numeric_limits<double>::quiet_NaN();
      if (x.radius_class) {
        auto dir = lb_bump_direction(*x.radius_class, x.noise, n);
        try {
          radius = empirical_radius(x.f0, x.noise, *x.radius_class, test, mc, x.beta, dir, id).radius_sq;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::no_power_at_max) throw;
          std::cerr << "circgof: " << x.id << " n=" << n << ": " << e.what() << "\n";
        }
      }
      os << x.id << "," << n << "," << x.dim.label() << "," << io::format_double(x.alpha) << ","
         << to_string(x.mode) << "," << io::format_double(risk.type1) << "," << io::format_double(risk.type1_se)
         << "," << io::format_double(risk.type2) << "," << io::format_double(risk.type2_se) << ","
         << io::format_double(radius) << "," << seed << "\n";
    }
  }
  return 0;
}

// ---- radius -----------------------------------------------------------------

std::optional<RateRow> parse_row(const std::string& s) {
  static const std::vector<std::pair<std::string, RateRow>> rows{
      {"ordinary_mild", RateRow::ordinary_mild},
      {"ordinary_severe", RateRow::ordinary_severe},
      {"super_mild", RateRow::super_mild},
      {"adaptive_ordinary_mild", RateRow::adaptive_ordinary_mild},
      {"adaptive_ordinary_severe", RateRow::adaptive_ordinary_severe},
      {"adaptive_super_mild", RateRow::adaptive_super_mild}};
  for (const auto& [name, row] : rows)
    if (name == s) return row;
  return std::nullopt;
}

std::optional<BoundFlavor> parse_flavor(const std::string& s) {
  if (s == "uniform") return BoundFlavor::uniform;
  if (s == "worst") return BoundFlavor::worst;
  if (s == "best") return BoundFlavor::best;
  return std::nullopt;
}

//! Monte Carlo settings for the empirical radius column of a profile.
struct EmpiricalSpec {
  CircularDensity f0 = CircularDensity::uniform();
  double alpha = 0.05;
  long reps = 200;
  double beta = 0.1;
  bool max_test = false;
};

std::optional<EmpiricalSpec> parse_empirical(const json& r, const std::string& path, SchemaErrors& errs) {
  const json* e = io::member(r, "empirical");
  if (!e) return std::nullopt;
  std::string p = path + ".empirical";
  if (!e->is_object()) {
    errs.add(p, "expected an object");
    return std::nullopt;
  }
  EmpiricalSpec out;
  out.alpha = io::get_number(*e, "alpha", p, errs, 0.05);
  out.reps = io::get_integer(*e, "reps", p, errs, 200L);
  out.beta = io::get_number(*e, "beta", p, errs, 0.1);
  std::string t = io::get_string(*e, "test", p, errs, std::string("single"));
  if (t != "single" && t != "max") errs.add(p + ".test", "expected single or max");
  out.max_test = t == "max";
  if (!errs.empty()) return out;
  if (const json* f = io::member(*e, "null")) out.f0 = io::density_from_json(*f, p + ".null");
  return out;
}

int run_radius(const Options& opt) {
  json cfg = io::read_json_file(opt.config_path);
  SchemaErrors errs;
  auto seed = static_cast<std::uint64_t>(io::get_integer(cfg, "seed", "config", errs, 0L));
  const json* rows = io::member(cfg, "rows");
  const json* profiles = io::member(cfg, "profiles");
  if (!rows && !profiles) errs.add("config", "need rows and/or profiles");
  if (rows && !rows->is_array()) errs.add("config.rows", "expected an array");
  if (profiles && !profiles->is_array()) errs.add("config.profiles", "expected an array");
  errs.throw_if_any();
  if (opt.seed) seed = *opt.seed;
  bool any_empirical = false;
  if (rows) {
    for (std::size_t i = 0; i < rows->size(); ++i) {
      std::string p = "config.rows[" + std::to_string(i) + "]";
      const json& r = (*rows)[i];
      if (!parse_row(io::get_string(r, "row", p, errs))) errs.add(p + ".row", "unknown rate row");
      io::get_number(r, "s", p, errs);
      io::get_number(r, "p", p, errs);
      parse_sizes(r, p, errs);
    }
  }
  if (profiles) {
    for (std::size_t i = 0; i < profiles->size(); ++i) {
      std::string p = "config.profiles[" + std::to_string(i) + "]";
      const json& r = (*profiles)[i];
      if (!io::member(r, "class")) errs.add(p + ".class", "required");
      if (!io::member(r, "noise")) errs.add(p + ".noise", "required");
      parse_mode(r, p, errs);
      parse_sizes(r, p, errs);
      std::string fl = io::get_string(r, "flavor", p, errs, std::string("none"));
      if (fl != "none" && !parse_flavor(fl)) errs.add(p + ".flavor", "expected uniform, worst or best");
      if (io::member(r, "empirical")) {
        any_empirical = true;
        if (fl != "none") errs.add(p + ".empirical", "not available together with flavor");
        parse_empirical(r, p, errs);
      }
    }
  }
  errs.throw_if_any();

  Output o(opt.out_path);
  std::ostream& os = o.stream();
  os << "# " << manifest(opt, cfg, seed).dump() << "\n";
  os << "source,label,mode,n,k,radius_sq,exponent" << (any_empirical ? ",empirical_radius_sq,empirical_power" : "")
     << "\n";
  const std::string blank_empirical = any_empirical ? ",," : "";
  // Effective exponent r such that radius_sq = n^{-r}.
  auto exponent = [](double radius_sq, long n) { return -std::log(radius_sq) / std::log(static_cast<double>(n)); };
  SchemaErrors unused;
  if (rows) {
    for (std::size_t i = 0; i < rows->size(); ++i) {
      std::string p = "config.rows[" + std::to_string(i) + "]";
      const json& r = (*rows)[i];
      std::string name = io::get_string(r, "row", p, unused);
      RateRow row = *parse_row(name);
      double s = io::get_number(r, "s", p, unused), pp = io::get_number(r, "p", p, unused);
      for (long n : parse_sizes(r, p, unused)) {
        auto ro = rate_table(row, s, pp, static_cast<double>(n));
        os << "rate_table," << name << ",," << n << "," << io::format_double(ro.k_order) << ","
           << io::format_double(ro.radius_order) << "," << io::format_double(exponent(ro.radius_order, n))
           << blank_empirical << "\n";
      }
    }
  }
  if (profiles) {
    for (std::size_t i = 0; i < profiles->size(); ++i) {
      std::string p = "config.profiles[" + std::to_string(i) + "]";
      const json& r = (*profiles)[i];
      auto cls = parse_class(r["class"], p + ".class");
      auto noise = io::noise_from_json(r["noise"], p + ".noise");
      Mode mode = parse_mode(r, p, unused);
      std::string label = io::get_string(r, "label", p, unused, "profile" + std::to_string(i));
      std::string flavor_name = io::get_string(r, "flavor", p, unused, std::string("none"));
      auto flavor = parse_flavor(flavor_name);
      auto emp = parse_empirical(r, p, unused);
      for (long n : parse_sizes(r, p, unused)) {
        if (flavor) {
          double b = adaptive_bound(cls, noise, n, geometric_grid(n), mode, *flavor);
          os << "adaptive_" << flavor_name << "," << label << "," << to_string(mode) << "," << n << ",,"
             << io::format_double(b) << "," << io::format_double(exponent(b, n)) << blank_empirical << "\n";
          continue;
        }
        auto prof = radius_profile(cls, noise, static_cast<double>(n), mode);
        os << "profile," << label << "," << to_string(mode) << "," << n << "," << prof.argmin << ","
           << io::format_double(prof.min_radius) << "," << io::format_double(exponent(prof.min_radius, n));
        if (!emp) {
          os << blank_empirical << "\n";
          continue;
        }
        TestFn test;
        if (emp->max_test) {
          auto mt = std::make_shared<MaxTest>(emp->f0, noise, geometric_grid(n), emp->alpha, mode);
          test = [mt](std::span<const double> y) { return (*mt)(y).reject; };
        } else {
          auto kernel = std::make_shared<StatisticKernel>(emp->f0, noise, mode, prof.argmin);
          double thr = threshold(TestSpec{emp->f0, noise, prof.argmin, emp->alpha, mode}, n);
          long k = prof.argmin;
          test = [kernel, thr, k](std::span<const double> y) {
            long ks[] = {k};
            return rejects(kernel->evaluate(y, ks)[0], thr);
          };
        }
        McConfig mc{n, emp->reps, seed, opt.threads};
        std::uint64_t id = stream_id(label) ^ splitmix64(static_cast<std::uint64_t>(n) + 1000003ULL * i);
        double radius = std::numeric_limits<double>::quiet_NaN();
        double power = std::numeric_limits<double>::quiet_NaN();
        try {
          auto er = empirical_radius(emp->f0, noise, cls, test, mc, emp->beta, lb_bump_direction(cls, noise, n), id);
          radius = er.radius_sq;
          power = er.power;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::no_power_at_max) throw;
          std::cerr << "circgof: " << label << " n=" << n << ": " << e.what() << "\n";
        }
        os << "," << io::format_double(radius) << "," << io::format_double(power) << "\n";
      }
    }
  }
  return 0;
}

// ---- lowerbound -------------------------------------------------------------

json conditions_json(const LbConditions& lc) {
  json classes = json::array();
  for (const auto& c : lc.classes)
    classes.push_back(json{{"k_star", c.k_star}, {"rho", c.rho}, {"bias", c.bias}, {"variance", c.variance}});
  return json{{"classes", classes},
              {"c1_nested", lc.c1_nested},
              {"c_alpha", lc.c_alpha},
              {"c2_separated", lc.c2_separated},
              {"kappa", lc.kappa},
              {"eta", lc.eta},
              {"log_n_proxy", lc.log_n_proxy},
              {"a_lower", lc.a_lower},
              {"feasible", lc.feasible}};
}

//! Conditions, plus the chi-square bound and vertex validity of the mixture at A_lower.
json audit(const std::vector<RegularityClass>& classes, const NoiseModel& noise, long n, double delta, double alpha) {
  auto lc = check_conditions(classes, noise, n, delta, alpha);
  json t{{"N", classes.size()}, {"delta", delta}, {"n", n}, {"conditions", conditions_json(lc)}};
  if (lc.a_lower <= 0.0) return t;
  HypercubeSpec hs{{}, n, delta};
  bool vertices_ok = true;
  for (const auto& cls : classes) {
    auto theta = build_theta(cls, noise, n, delta, lc.a_lower);
    hs.thetas.push_back(theta.values);
    // All-plus vertex maximises the sup norm of the perturbation.
    std::vector<int> plus(theta.values.size(), 1);
    try {
      auto v = vertex_density(theta, plus);
      vertices_ok = vertices_ok && ellipsoid_member(v.coeffs(), FourierSeq::uniform(), cls);
    } catch (const Error&) {
      vertices_ok = false;
    }
  }
  t["vertices_valid"] = vertices_ok;
  t["chi2_limit"] = 2.0 * alpha * alpha;
  try {
    double chi2 = chi2_bound(hs, noise);
    t["chi2_bound"] = chi2;
    t["chi2_within_limit"] = chi2 <= 2.0 * alpha * alpha;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::overflow) throw;
    t["chi2_bound"] = nullptr;
    t["chi2_within_limit"] = false;
  }
  return t;
}

int run_lowerbound(const Options& opt) {
  json cfg = io::read_json_file(opt.config_path);
  SchemaErrors errs;
  double alpha = io::get_number(cfg, "alpha", "config", errs);
  const json* th = io::member(cfg, "theorem");
  const json* ex = io::member(cfg, "explicit");
  const json* bf = io::member(cfg, "bruteforce");
  if (!th && !ex && !bf) errs.add("config", "need theorem, explicit and/or bruteforce");
  std::string kind;
  if (th) {
    kind = io::get_string(*th, "kind", "config.theorem", errs);
    if (kind != "ordinary_mild" && kind != "super_mild")
      errs.add("config.theorem.kind", "expected ordinary_mild or super_mild");
    io::get_number(*th, "s_lo", "config.theorem", errs);
    io::get_number(*th, "s_hi", "config.theorem", errs);
    io::get_number(*th, "p", "config.theorem", errs);
    io::get_number(*th, "n", "config.theorem", errs);
  }
  if (ex) {
    const json* c = io::member(*ex, "classes");
    if (!c || !c->is_array() || c->empty()) errs.add("config.explicit.classes", "required non-empty array");
    if (!io::member(*ex, "noise")) errs.add("config.explicit.noise", "required noise spec");
    io::get_integer(*ex, "n", "config.explicit", errs);
    io::get_number(*ex, "delta", "config.explicit", errs);
  }
  if (bf) {
    const json* t = io::member(*bf, "thetas");
    if (!t || !t->is_array()) errs.add("config.bruteforce.thetas", "required array of arrays");
    io::get_integer(*bf, "n", "config.bruteforce", errs);
    io::get_integer(*bf, "quad_points", "config.bruteforce", errs, 512L);
    if (!io::member(*bf, "noise")) errs.add("config.bruteforce.noise", "required noise spec");
  }
  errs.throw_if_any();
  require(alpha > 0.0 && alpha < 1.0, ErrorCode::domain, "alpha must lie in (0, 1)");

  json out;
  out["manifest"] = manifest(opt, cfg, 0);
  out["alpha"] = alpha;
  SchemaErrors unused;
  if (th) {
    double n = io::get_number(*th, "n", "", unused);
    try {
      auto tg = theorem_grid(kind == "ordinary_mild" ? TheoremKind::ordinary_mild : TheoremKind::super_mild,
                             io::get_number(*th, "s_lo", "", unused), io::get_number(*th, "s_hi", "", unused),
                             io::get_number(*th, "p", "", unused), n, io::get_number(*th, "R", "", unused, 1.0));
      json t = audit(tg.classes, tg.noise, static_cast<long>(n), tg.delta, alpha);
      t["kind"] = kind;
      t["smoothness"] = tg.smoothness;
      t["exponents"] = tg.exponents;
      out["theorem"] = t;
    } catch (const Error& e) {
      // Too few classes at this n is an audit finding, not a failure of the run.
      if (e.code() != ErrorCode::n_too_small) throw;
      out["theorem"] = json{{"kind", kind}, {"feasible", false}, {"error", error_name(e.code())}, {"message", e.what()}};
    }
  }
  if (ex) {
    std::vector<RegularityClass> classes;
    const json& c = (*ex)["classes"];
    for (std::size_t i = 0; i < c.size(); ++i)
      classes.push_back(parse_class(c[i], "config.explicit.classes[" + std::to_string(i) + "]"));
    auto noise = io::noise_from_json((*ex)["noise"], "config.explicit.noise");
    out["explicit"] = audit(classes, noise, io::get_integer(*ex, "n", "", unused),
                            io::get_number(*ex, "delta", "", unused), alpha);
  }
  if (bf) {
    HypercubeSpec hs;
    for (const auto& row : (*bf)["thetas"]) hs.thetas.push_back(row.get<std::vector<double>>());
    hs.n = io::get_integer(*bf, "n", "", unused);
    auto noise = io::noise_from_json((*bf)["noise"], "config.bruteforce.noise");
    auto q = static_cast<std::size_t>(io::get_integer(*bf, "quad_points", "", unused, 512L));
    double exact = chi2_bruteforce(hs, noise, q);
    double bound = chi2_bound(hs, noise);
    out["bruteforce"] = json{{"chi2_exact", exact}, {"chi2_bound", bound}, {"bound_holds", exact <= bound}};
  }
  Output o(opt.out_path);
  o.stream() << out.dump(2) << "\n";
  return 0;
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::schema:
    case ErrorCode::parse:
      return 2;
    default:
      return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Goodness-of-fit tests for circular densities observed with additive noise"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON configuration")->required();
    sub->add_option("--out", opt.out_path, "output file (default stdout)");
    sub->add_option("--threads", opt.threads, "worker threads (default CIRCGOF_THREADS or all cores)");
  };
  auto* test = app.add_subcommand("test", "test a data file against a null density");
  auto* sim = app.add_subcommand("simulate", "Monte Carlo level, power and empirical radius");
  auto* rad = app.add_subcommand("radius", "rate tables, radius profiles and adaptive bounds");
  auto* lb = app.add_subcommand("lowerbound", "lower-bound condition audit and chi-square checks");
  for (auto* s : {test, sim, rad, lb}) add_common(s);
  std::uint64_t seed = 0;
  std::vector<CLI::Option*> seed_opts;
  for (auto* s : {test, sim, rad, lb})
    seed_opts.push_back(s->add_option("--seed", seed, "master seed (overrides the config)"));
  CLI11_PARSE(app, argc, argv);
  for (auto* o : seed_opts)
    if (o->count() > 0) opt.seed = seed;

  auto start = std::chrono::steady_clock::now();
  int rc = 0;
  try {
    if (*test) opt.command = "test", rc = run_test(opt);
    else if (*sim) opt.command = "simulate", rc = run_simulate(opt);
    else if (*rad) opt.command = "radius", rc = run_radius(opt);
    else opt.command = "lowerbound", rc = run_lowerbound(opt);
  } catch (const Error& e) {
    std::cerr << "circgof: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const json::exception& e) {
    std::cerr << "circgof: SchemaError: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "circgof: " << e.what() << "\n";
    return 1;
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cerr << "circgof: " << opt.command << " finished in " << secs << " s\n";
  return rc;
}
