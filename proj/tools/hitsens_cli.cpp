// Batch front end: reads a JSON scenario, runs it through the C API and
// writes one CSV row per sample (optionally mirrored as JSON).
//
// Exit codes: 0 ok, 2 config/schema error, 3 computation error in at least
// one sample, 4 residual above --assert tolerance.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hitsens/hitsens.h"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitCompute = 3;
constexpr int kExitAssert = 4;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Schema helpers

void check_keys(const json& obj, const std::string& where,
                const std::set<std::string>& allowed,
                const std::set<std::string>& required = {}) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key \"" + key + "\"");
  }
  for (const auto& key : required) {
    if (!obj.contains(key)) throw ConfigError(where + ": missing required key \"" + key + "\"");
  }
}

double get_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(where + ": expected a finite number");
  return v;
}

double get_positive(const json& j, const std::string& where) {
  const double v = get_number(j, where);
  if (!(v > 0.0)) throw ConfigError(where + ": expected a positive number");
  return v;
}

int get_count(const json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<long long>() < 1 || j.get<long long>() > 10'000'000) {
    throw ConfigError(where + ": expected a positive integer");
  }
  return static_cast<int>(j.get<long long>());
}

std::string get_string(const json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + ": expected a string");
  return j.get<std::string>();
}

bool get_bool(const json& j, const std::string& where) {
  if (!j.is_boolean()) throw ConfigError(where + ": expected true or false");
  return j.get<bool>();
}

std::vector<double> get_numbers(const json& j, const std::string& where) {
  if (j.is_number()) return {get_number(j, where)};
  if (!j.is_array()) throw ConfigError(where + ": expected a number or an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(get_number(j[i], where + "[" + std::to_string(i) + "]"));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scenario

struct Sample {
  std::vector<double> x0;
  double t0 = 0.0;
};

struct Scenario {
  std::string kind;      // flow, hit, verify-hjb
  bool sweep = false;
  json system, problem;  // raw definitions
  std::vector<Sample> samples;
  std::optional<double> t_abs, duration;
  double t_max = 0.0;
  bool strict_graze = false;
  hs_options opts{};
  std::optional<hs_dp_grid> dp;
  double dpp_step = 1e-3;
  std::string csv_path, json_path;
};

struct Overrides {
  std::optional<double> rtol, atol;
  std::optional<std::uint64_t> seed;
};

double uniform(std::mt19937_64& gen, double lo, double hi) {
  // 53 random bits; independent of the standard library's distributions.
  const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

std::vector<double> linspace(const json& spec, const std::string& where) {
  if (!spec.is_array() || spec.size() != 3) {
    throw ConfigError(where + ": expected [lo, hi, count]");
  }
  const double lo = get_number(spec[0], where + "[0]");
  const double hi = get_number(spec[1], where + "[1]");
  const int n = get_count(spec[2], where + "[2]");
  if (hi < lo) throw ConfigError(where + ": hi < lo");
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
  return v;
}

std::pair<double, double> range(const json& spec, const std::string& where) {
  if (!spec.is_array() || spec.size() != 2) throw ConfigError(where + ": expected [lo, hi]");
  const double lo = get_number(spec[0], where + "[0]");
  const double hi = get_number(spec[1], where + "[1]");
  if (hi < lo) throw ConfigError(where + ": hi < lo");
  return {lo, hi};
}

// x0 specs are given per dimension; a bare spec is accepted for 1D.
std::vector<json> per_dimension(const json& spec, bool nested, const std::string& where) {
  if (spec.is_array() && !spec.empty() && spec[0].is_array()) {
    return std::vector<json>(spec.begin(), spec.end());
  }
  if (nested) throw ConfigError(where + ": expected one range per dimension");
  return {spec};
}

std::vector<Sample> parse_initial(const json& init, int dim, std::uint64_t seed) {
  check_keys(init, "initial", {"points", "grid", "random"});
  if (init.size() != 1) {
    throw ConfigError("initial: give exactly one of \"points\", \"grid\", \"random\"");
  }
  std::vector<Sample> out;
  auto check_dim = [&](std::size_t n, const std::string& where) {
    if (static_cast<int>(n) != dim) {
      throw ConfigError(where + ": expected " + std::to_string(dim) + " components");
    }
  };
  if (init.contains("points")) {
    const json& pts = init["points"];
    if (!pts.is_array() || pts.empty()) throw ConfigError("initial.points: expected a non-empty array");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const std::string where = "initial.points[" + std::to_string(i) + "]";
      check_keys(pts[i], where, {"x0", "t0"}, {"x0", "t0"});
      Sample s;
      s.x0 = get_numbers(pts[i]["x0"], where + ".x0");
      check_dim(s.x0.size(), where + ".x0");
      s.t0 = get_number(pts[i]["t0"], where + ".t0");
      out.push_back(std::move(s));
    }
  } else if (init.contains("grid")) {
    const json& g = init["grid"];
    check_keys(g, "initial.grid", {"x0", "t0"}, {"x0", "t0"});
    const auto dims = per_dimension(g["x0"], dim > 1, "initial.grid.x0");
    check_dim(dims.size(), "initial.grid.x0");
    std::vector<std::vector<double>> axes;
    for (std::size_t d = 0; d < dims.size(); ++d) {
      axes.push_back(linspace(dims[d], "initial.grid.x0[" + std::to_string(d) + "]"));
    }
    const std::vector<double> ts =
        g["t0"].is_number() ? std::vector<double>{get_number(g["t0"], "initial.grid.t0")}
                            : linspace(g["t0"], "initial.grid.t0");
    std::size_t total = ts.size();
    for (const auto& a : axes) total *= a.size();
    if (total > 10'000'000) throw ConfigError("initial.grid: too many samples");
    for (double t : ts) {
      std::vector<std::size_t> idx(dim, 0);
      for (;;) {
        Sample s;
        s.t0 = t;
        for (int d = 0; d < dim; ++d) s.x0.push_back(axes[d][idx[d]]);
        out.push_back(std::move(s));
        int d = 0;
        while (d < dim && ++idx[d] == axes[d].size()) idx[d++] = 0;
        if (d == dim) break;
      }
    }
  } else {
    const json& r = init["random"];
    check_keys(r, "initial.random", {"count", "x0", "t0"}, {"count", "x0", "t0"});
    const int count = get_count(r["count"], "initial.random.count");
    const auto dims = per_dimension(r["x0"], dim > 1, "initial.random.x0");
    check_dim(dims.size(), "initial.random.x0");
    std::vector<std::pair<double, double>> xr;
    for (std::size_t d = 0; d < dims.size(); ++d) {
      xr.push_back(range(dims[d], "initial.random.x0[" + std::to_string(d) + "]"));
    }
    const auto tr = range(r["t0"], "initial.random.t0");
    std::mt19937_64 gen(seed);
    for (int i = 0; i < count; ++i) {
      Sample s;
      for (const auto& [lo, hi] : xr) s.x0.push_back(uniform(gen, lo, hi));
      s.t0 = uniform(gen, tr.first, tr.second);
      out.push_back(std::move(s));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Library handles built from the scenario

struct SystemHandle {
  hs_system* ptr = nullptr;
  ~SystemHandle() { hs_system_free(ptr); }
};

struct ProblemHandle {
  hs_problem* ptr = nullptr;
  ~ProblemHandle() { hs_problem_free(ptr); }
};

struct DpHandle {
  hs_dp_table* ptr = nullptr;
  ~DpHandle() { hs_dp_free(ptr); }
};

void config_status(hs_status st, const std::string& where) {
  if (st != HS_OK) {
    throw ConfigError(where + ": " + hs_status_name(st) + ": " + hs_last_error());
  }
}

void build_system(const json& def, SystemHandle& out) {
  check_keys(def, "system", {"builtin", "params", "field", "level_set"});
  if (def.contains("builtin") == def.contains("field")) {
    throw ConfigError("system: give exactly one of \"builtin\" and \"field\"");
  }
  if (def.contains("builtin")) {
    const std::string name = get_string(def["builtin"], "system.builtin");
    const std::vector<double> params =
        def.contains("params") ? get_numbers(def["params"], "system.params") : std::vector<double>{};
    config_status(hs_system_builtin(name.c_str(), params.data(), params.size(), &out.ptr),
                  "system");
  } else {
    if (def.contains("params")) throw ConfigError("system: \"params\" requires \"builtin\"");
    const json& f = def["field"];
    if (!f.is_array() || f.empty()) throw ConfigError("system.field: expected a non-empty array");
    std::vector<std::string> exprs;
    for (std::size_t i = 0; i < f.size(); ++i) {
      exprs.push_back(get_string(f[i], "system.field[" + std::to_string(i) + "]"));
    }
    std::vector<const char*> ptrs;
    for (const auto& e : exprs) ptrs.push_back(e.c_str());
    config_status(hs_system_from_exprs(ptrs.data(), ptrs.size(), nullptr, &out.ptr), "system");
  }
  if (def.contains("level_set")) {
    const std::string g = get_string(def["level_set"], "system.level_set");
    config_status(hs_system_set_level_set(out.ptr, g.c_str()), "system.level_set");
  }
}

void build_problem(const json& def, ProblemHandle& out) {
  check_keys(def, "problem", {"builtin", "params", "f", "g", "l_x", "l_u", "G", "T"});
  if (def.contains("builtin")) {
    for (const char* k : {"f", "g", "l_x", "l_u", "G", "T"}) {
      if (def.contains(k)) throw ConfigError(std::string("problem: \"") + k + "\" conflicts with \"builtin\"");
    }
    const std::string name = get_string(def["builtin"], "problem.builtin");
    const std::vector<double> params =
        def.contains("params") ? get_numbers(def["params"], "problem.params") : std::vector<double>{};
    config_status(hs_problem_builtin(name.c_str(), params.data(), params.size(), &out.ptr),
                  "problem");
    return;
  }
  check_keys(def, "problem", {"f", "g", "l_x", "l_u", "G", "T"}, {"f", "g", "l_x", "l_u", "G", "T"});
  const std::string f = get_string(def["f"], "problem.f");
  const std::string g = get_string(def["g"], "problem.g");
  const std::string lx = get_string(def["l_x"], "problem.l_x");
  const std::string lu = get_string(def["l_u"], "problem.l_u");
  const std::string G = get_string(def["G"], "problem.G");
  const double T = get_number(def["T"], "problem.T");
  config_status(hs_problem_from_exprs(f.c_str(), g.c_str(), lx.c_str(), lu.c_str(),
                                      G.c_str(), T, &out.ptr),
                "problem");
}

hs_dp_grid parse_dp(const json& def) {
  check_keys(def, "dp", {"x_min", "x_max", "dx", "t_min", "dt", "controls"});
  hs_dp_grid g;
  hs_dp_grid_default(&g);
  if (def.contains("x_min")) g.x_min = get_number(def["x_min"], "dp.x_min");
  if (def.contains("x_max")) g.x_max = get_number(def["x_max"], "dp.x_max");
  if (def.contains("dx")) g.dx = get_positive(def["dx"], "dp.dx");
  if (def.contains("t_min")) g.t_min = get_number(def["t_min"], "dp.t_min");
  if (def.contains("dt")) g.dt = get_positive(def["dt"], "dp.dt");
  if (def.contains("controls")) g.controls = get_count(def["controls"], "dp.controls");
  if (g.controls < 2) throw ConfigError("dp.controls: need at least 2 control values");
  return g;
}

const std::set<std::string>& keys_for(const std::string& analysis) {
  static const std::map<std::string, std::set<std::string>> table = {
      {"flow", {"system", "initial", "t", "duration"}},
      {"hit", {"system", "initial", "t_max", "strict_graze"}},
      {"verify-hjb", {"problem", "initial", "dp", "dpp_step"}},
  };
  return table.at(analysis);
}

Scenario parse_scenario(const json& root, const std::string& subcommand,
                        const Overrides& ov) {
  if (!root.is_object()) throw ConfigError("scenario: expected a JSON object");
  if (!root.contains("kind")) throw ConfigError("scenario: missing required key \"kind\"");
  Scenario sc;
  const std::string kind = get_string(root["kind"], "kind");
  if (kind != subcommand) {
    throw ConfigError("kind \"" + kind + "\" does not match subcommand \"" + subcommand + "\"");
  }
  std::set<std::string> allowed = {"kind", "tolerances", "output", "seed", "description"};
  if (kind == "sweep") {
    sc.sweep = true;
    allowed.insert("analysis");
    if (!root.contains("analysis")) throw ConfigError("scenario: missing required key \"analysis\"");
    sc.kind = get_string(root["analysis"], "analysis");
    if (sc.kind != "flow" && sc.kind != "hit" && sc.kind != "verify-hjb") {
      throw ConfigError("analysis: expected \"flow\", \"hit\" or \"verify-hjb\"");
    }
  } else if (kind == "flow" || kind == "hit" || kind == "verify-hjb") {
    sc.kind = kind;
  } else {
    throw ConfigError("kind: unknown scenario kind \"" + kind + "\"");
  }
  const auto& extra = keys_for(sc.kind);
  allowed.insert(extra.begin(), extra.end());
  check_keys(root, "scenario", allowed, {"initial"});
  if (root.contains("description")) get_string(root["description"], "description");

  hs_options_default(&sc.opts);
  if (root.contains("tolerances")) {
    const json& t = root["tolerances"];
    check_keys(t, "tolerances", {"rtol", "atol", "h_max"});
    if (t.contains("rtol")) sc.opts.rtol = get_positive(t["rtol"], "tolerances.rtol");
    if (t.contains("atol")) sc.opts.atol = get_positive(t["atol"], "tolerances.atol");
    if (t.contains("h_max")) sc.opts.h_max = get_positive(t["h_max"], "tolerances.h_max");
  }
  if (ov.rtol) sc.opts.rtol = *ov.rtol;
  if (ov.atol) sc.opts.atol = *ov.atol;

  if (root.contains("output")) {
    const json& o = root["output"];
    check_keys(o, "output", {"csv", "json"});
    if (o.contains("csv")) sc.csv_path = get_string(o["csv"], "output.csv");
    if (o.contains("json")) sc.json_path = get_string(o["json"], "output.json");
  }

  std::uint64_t seed = 0;
  if (root.contains("seed")) {
    if (!root["seed"].is_number_unsigned()) throw ConfigError("seed: expected a non-negative integer");
    seed = root["seed"].get<std::uint64_t>();
  }
  if (ov.seed) seed = *ov.seed;

  int dim = 1;
  if (sc.kind == "flow" || sc.kind == "hit") {
    if (!root.contains("system")) throw ConfigError("scenario: missing required key \"system\"");
    sc.system = root["system"];
  } else {
    if (!root.contains("problem")) throw ConfigError("scenario: missing required key \"problem\"");
    sc.problem = root["problem"];
  }
  if (sc.kind == "flow") {
    if (root.contains("t") == root.contains("duration")) {
      throw ConfigError("scenario: give exactly one of \"t\" and \"duration\"");
    }
    if (root.contains("t")) sc.t_abs = get_number(root["t"], "t");
    if (root.contains("duration")) {
      sc.duration = get_number(root["duration"], "duration");
      if (*sc.duration < 0.0) throw ConfigError("duration: expected a non-negative number");
    }
  } else if (sc.kind == "hit") {
    if (!root.contains("t_max")) throw ConfigError("scenario: missing required key \"t_max\"");
    sc.t_max = get_number(root["t_max"], "t_max");
    if (root.contains("strict_graze")) sc.strict_graze = get_bool(root["strict_graze"], "strict_graze");
    sc.opts.strict_graze = sc.strict_graze ? 1 : 0;
  } else {
    if (root.contains("dp")) sc.dp = parse_dp(root["dp"]);
    if (root.contains("dpp_step")) sc.dpp_step = get_positive(root["dpp_step"], "dpp_step");
  }

  // Dimension comes from the system definition; validate it here so the
  // initial-condition parser can check component counts.
  if (sc.kind != "verify-hjb") {
    SystemHandle probe;
    build_system(sc.system, probe);
    dim = hs_system_dimension(probe.ptr);
    if (sc.kind == "hit" && !hs_system_has_level_set(probe.ptr)) {
      throw ConfigError("system: hit analysis needs a level set");
    }
  }
  sc.samples = parse_initial(root["initial"], dim, seed);
  return sc;
}

// ---------------------------------------------------------------------------
// Results

struct Cell {
  enum Kind { kNumber, kInt, kText } kind = kNumber;
  double number = 0.0;
  long long integer = 0;
  std::string text;
};

Cell num(double v) { return {Cell::kNumber, v, 0, {}}; }
Cell integer(long long v) { return {Cell::kInt, 0.0, v, {}}; }
Cell text(std::string s) { return {Cell::kText, 0.0, 0, std::move(s)}; }

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  std::vector<std::string> residual_columns;  // checked by --assert
  std::vector<int> status;                    // hs_status per row
};

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const Cell& c) {
  switch (c.kind) {
    case Cell::kNumber: return format_number(c.number);
    case Cell::kInt: return std::to_string(c.integer);
    case Cell::kText: break;
  }
  if (c.text.find_first_of(",\"\n") == std::string::npos) return c.text;
  std::string out = "\"";
  for (char ch : c.text) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string to_csv(const Table& t) {
  std::ostringstream os;
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
  os << "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << csv_field(row[i]);
    os << "\n";
  }
  return os.str();
}

std::string to_json(const Table& t, const std::string& kind) {
  json rows = json::array();
  for (const auto& row : t.rows) {
    json r = json::array();
    for (const auto& c : row) {
      if (c.kind == Cell::kText) r.push_back(c.text);
      else if (c.kind == Cell::kInt) r.push_back(c.integer);
      else if (std::isfinite(c.number)) r.push_back(c.number);
      else r.push_back(nullptr);
    }
    rows.push_back(std::move(r));
  }
  json doc = {{"kind", kind}, {"columns", t.columns}, {"rows", rows}};
  return doc.dump(1) + "\n";
}

std::vector<std::string> indexed(const std::string& stem, int n) {
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i) out.push_back(stem + "_" + std::to_string(i));
  return out;
}

std::vector<std::string> matrix_names(const std::string& stem, int n) {
  std::vector<std::string> out;
  for (int c = 1; c <= n; ++c)
    for (int r = 1; r <= n; ++r) out.push_back(stem + "_" + std::to_string(r) + "_" + std::to_string(c));
  return out;
}

template <class Body>
void for_each_sample(std::size_t n, Body&& body) {
  const unsigned threads =
      static_cast<unsigned>(std::min<std::size_t>(std::thread::hardware_concurrency(), n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned k = 0; k < threads; ++k) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

void append(std::vector<std::string>& dst, const std::vector<std::string>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

void append_numbers(std::vector<Cell>& row, const std::vector<double>& v) {
  for (double x : v) row.push_back(num(x));
}

Table run_flow(const Scenario& sc, const hs_system* sys) {
  const int n = hs_system_dimension(sys);
  Table t;
  t.columns = {"index"};
  append(t.columns, indexed("x0", n));
  t.columns.push_back("t0");
  t.columns.push_back("t");
  append(t.columns, indexed("x_t", n));
  append(t.columns, matrix_names("M", n));
  append(t.columns, indexed("dx_dt0", n));
  append(t.columns, {"r_prop", "r_cor", "status", "message"});
  t.residual_columns = {"r_prop", "r_cor"};
  t.rows.resize(sc.samples.size());
  t.status.resize(sc.samples.size());
  for_each_sample(sc.samples.size(), [&](std::size_t i) {
    const Sample& s = sc.samples[i];
    const double tt = sc.t_abs ? *sc.t_abs : s.t0 + *sc.duration;
    const double nan = std::nan("");
    std::vector<double> xt(n, nan), M(n * n, nan), d(n, nan);
    double rp = nan, rc = nan;
    const hs_status st = hs_flow_sensitivities(sys, s.x0.data(), s.t0, tt, &sc.opts,
                                               xt.data(), M.data(), d.data(), &rp, &rc);
    auto& row = t.rows[i];
    row.push_back(integer(static_cast<long long>(i)));
    append_numbers(row, s.x0);
    row.push_back(num(s.t0));
    row.push_back(num(tt));
    append_numbers(row, xt);
    append_numbers(row, M);
    append_numbers(row, d);
    row.push_back(num(rp));
    row.push_back(num(rc));
    row.push_back(text(hs_status_name(st)));
    row.push_back(text(st == HS_OK ? "" : hs_last_error()));
    t.status[i] = st;
  });
  return t;
}

Table run_hit(const Scenario& sc, const hs_system* sys) {
  const int n = hs_system_dimension(sys);
  Table t;
  t.columns = {"index"};
  append(t.columns, indexed("x0", n));
  append(t.columns, {"t0", "found", "t_hat"});
  append(t.columns, indexed("x_hat", n));
  append(t.columns, {"denom", "transversal", "grazing", "dt_dt0"});
  append(t.columns, indexed("dt_dx0", n));
  append(t.columns, indexed("dx_dt0", n));
  append(t.columns, matrix_names("dx_dx0", n));
  append(t.columns, {"r_t", "r_x", "status", "message"});
  t.residual_columns = {"r_t", "r_x"};
  t.rows.resize(sc.samples.size());
  t.status.resize(sc.samples.size());
  for_each_sample(sc.samples.size(), [&](std::size_t i) {
    const Sample& s = sc.samples[i];
    const double nan = std::nan("");
    hs_hit_info info{};
    std::vector<double> xh(n, nan), tx(n, nan), xt(n, nan), xx(n * n, nan);
    const hs_status st = hs_detect_hit(sys, s.x0.data(), s.t0, sc.t_max, &sc.opts, 1, &info,
                                       xh.data(), tx.data(), xt.data(), xx.data());
    const bool grads = info.has_gradients != 0;
    auto& row = t.rows[i];
    row.push_back(integer(static_cast<long long>(i)));
    append_numbers(row, s.x0);
    row.push_back(num(s.t0));
    row.push_back(integer(info.found));
    row.push_back(num(info.found ? info.t_hat : nan));
    append_numbers(row, xh);
    row.push_back(num(info.found ? info.denom : nan));
    row.push_back(integer(info.transversal));
    row.push_back(integer(info.grazing));
    row.push_back(num(grads ? info.dt_dt0 : nan));
    append_numbers(row, tx);
    append_numbers(row, xt);
    append_numbers(row, xx);
    row.push_back(num(grads ? info.r_t : nan));
    row.push_back(num(grads ? info.r_x : nan));
    row.push_back(text(hs_status_name(st)));
    row.push_back(text(st == HS_OK ? "" : hs_last_error()));
    t.status[i] = st;
  });
  return t;
}

Table run_verify(const Scenario& sc, const hs_problem* p) {
  Table t;
  t.columns = {"index", "x0", "t0", "region", "hj_minus", "hj_plus", "switch_r_t",
               "switch_r_x", "lhs_minus", "lhs_plus", "hjb_pass", "dpp", "w", "v_dp",
               "w_minus_dp", "status", "message"};
  t.residual_columns = {"hj_minus", "hj_plus", "switch_r_t", "switch_r_x"};
  DpHandle dp;
  if (sc.dp) {
    const hs_status st = hs_dp_oracle(p, &*sc.dp, &dp.ptr);
    if (st != HS_OK) throw ConfigError(std::string("dp: ") + hs_status_name(st) + ": " + hs_last_error());
  }
  const std::size_t n = sc.samples.size();
  std::vector<double> xs(n), ts(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = sc.samples[i].x0[0];
    ts[i] = sc.samples[i].t0;
  }
  std::vector<hs_verify_row> rows(n);
  const hs_status st = hs_verify(p, xs.data(), ts.data(), n, &sc.opts, dp.ptr, sc.dpp_step, rows.data());
  if (st != HS_OK) throw ConfigError(std::string("verify: ") + hs_last_error());
  for (std::size_t i = 0; i < n; ++i) {
    const hs_verify_row& r = rows[i];
    t.rows.push_back({integer(static_cast<long long>(i)), num(r.x0), num(r.t0),
                      integer(r.region), num(r.hj_minus), num(r.hj_plus),
                      num(r.switch_r_t), num(r.switch_r_x), num(r.lhs_minus),
                      num(r.lhs_plus), integer(r.hjb_pass), num(r.dpp), num(r.w),
                      num(r.v_dp), num(r.w_minus_dp), text(hs_status_name(r.status)),
                      text(r.message)});
    t.status.push_back(r.status);
  }
  return t;
}

struct Summary {
  std::size_t errors = 0;
  std::size_t assert_failures = 0;
  std::vector<std::pair<std::string, double>> maxima;
};

Summary summarize(const Table& t, std::optional<double> assert_tol) {
  Summary s;
  for (int st : t.status) s.errors += st != HS_OK;
  for (const auto& col : t.residual_columns) {
    const auto it = std::find(t.columns.begin(), t.columns.end(), col);
    const std::size_t c = static_cast<std::size_t>(it - t.columns.begin());
    double m = 0.0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      if (t.status[r] != HS_OK) continue;
      const double v = t.rows[r][c].number;
      if (std::isnan(v)) continue;
      m = std::max(m, v);
      if (assert_tol && !(v <= *assert_tol)) ++s.assert_failures;
    }
    s.maxima.emplace_back(col, m);
  }
  return s;
}

void print_summary(std::ostream& os, const std::string& kind, const Table& t, const Summary& s) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-12s %10s %10s", "analysis", "samples", "errors");
  os << buf;
  for (const auto& [name, v] : s.maxima) {
    std::snprintf(buf, sizeof buf, " %14s", ("max " + name).c_str());
    os << buf;
  }
  os << "\n";
  std::snprintf(buf, sizeof buf, "%-12s %10zu %10zu", kind.c_str(), t.rows.size(), s.errors);
  os << buf;
  for (const auto& [name, v] : s.maxima) {
    std::snprintf(buf, sizeof buf, " %14.3e", v);
    os << buf;
  }
  os << "\n";
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path + " for writing");
  f << content;
  if (!f) throw ConfigError("failed writing " + path);
}

std::string json_path_for(const std::string& csv) {
  const auto dot = csv.rfind('.');
  const auto slash = csv.find_last_of('/');
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) {
    return csv.substr(0, dot) + ".json";
  }
  return csv + ".json";
}

struct RunFlags {
  std::string config;
  std::string out;
  bool json = false;
  std::optional<double> assert_tol;
  Overrides overrides;
};

int run(const std::string& subcommand, const RunFlags& flags) {
  Scenario sc;
  SystemHandle sys;
  ProblemHandle prob;
  try {
    std::ifstream in(flags.config, std::ios::binary);
    if (!in) throw ConfigError("cannot read config " + flags.config);
    json root;
    try {
      root = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    sc = parse_scenario(root, subcommand, flags.overrides);
    if (sc.kind == "verify-hjb") build_problem(sc.problem, prob);
    else build_system(sc.system, sys);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  Table table;
  try {
    if (sc.kind == "flow") table = run_flow(sc, sys.ptr);
    else if (sc.kind == "hit") table = run_hit(sc, sys.ptr);
    else table = run_verify(sc, prob.ptr);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  const Summary summary = summarize(table, flags.assert_tol);
  const std::string label = sc.sweep ? "sweep:" + sc.kind : sc.kind;
  const std::string csv_path = !flags.out.empty() ? flags.out : sc.csv_path;
  std::string json_path = sc.json_path;
  if (flags.json && json_path.empty() && !csv_path.empty()) json_path = json_path_for(csv_path);
  try {
    const std::string csv = to_csv(table);
    if (csv_path.empty()) std::cout << csv;
    else write_file(csv_path, csv);
    if (!json_path.empty()) write_file(json_path, to_json(table, label));
    else if (flags.json) std::cout << to_json(table, label);
  } catch (const ConfigError& e) {
    std::cerr << "output error: " << e.what() << "\n";
    return kExitConfig;
  }
  print_summary(csv_path.empty() ? std::cerr : std::cout, label, table, summary);

  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    if (table.status[i] != HS_OK) {
      std::cerr << "error: sample " << i << ": " << hs_status_name(static_cast<hs_status>(table.status[i]))
                << ": " << table.rows[i].back().text << "\n";
    }
  }
  if (summary.errors) return kExitCompute;
  if (summary.assert_failures) {
    std::cerr << "assert: " << summary.assert_failures << " residual(s) above "
              << format_number(*flags.assert_tol) << "\n";
    return kExitAssert;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow sensitivities, hitting times and HJB verification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("hitsens ") + hs_version());

  RunFlags flags;
  double rtol = 0.0, atol = 0.0, assert_tol = 0.0;
  std::uint64_t seed = 0;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"flow", "flow sensitivities and transport residuals"},
      {"hit", "first hitting time, gradients and residuals"},
      {"verify-hjb", "verification report for a control-affine problem"},
      {"sweep", "any analysis over a grid or random sample set"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "scenario JSON file")->required();
    sub->add_option("--out", flags.out, "CSV output path (default: stdout)");
    sub->add_flag("--json", flags.json, "also write a JSON mirror of the CSV");
    sub->add_option("--assert", assert_tol, "fail with exit 4 if a residual exceeds this")
        ->check(CLI::PositiveNumber);
    sub->add_option("--rtol", rtol, "relative integration tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--atol", atol, "absolute integration tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "seed for random sample sets");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--assert")) flags.assert_tol = assert_tol;
  if (sub->count("--rtol")) flags.overrides.rtol = rtol;
  if (sub->count("--atol")) flags.overrides.atol = atol;
  if (sub->count("--seed")) flags.overrides.seed = seed;
  return run(sub->get_name(), flags);
}
