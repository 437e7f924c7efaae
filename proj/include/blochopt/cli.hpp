#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "blochopt/analysis.hpp"
#include "blochopt/version.hpp"

namespace blochopt::cli {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// configuration

/// Flat configuration store: scalar and list-valued keys. Sources are merged
/// in priority order: built-in defaults < config file < command-line flags.
struct Config {
  std::map<std::string, double> scalars;
  std::map<std::string, std::vector<double>> lists;

  bool has(const std::string& k) const {
    return scalars.count(k) || lists.count(k);
  }
  double get(const std::string& k, double def) const {
    auto it = scalars.find(k);
    return it == scalars.end() ? def : it->second;
  }
  double require(const std::string& k) const {
    auto it = scalars.find(k);
    if (it == scalars.end()) throw ConfigError("missing config key: " + k);
    return it->second;
  }
  std::vector<double> list(const std::string& k,
                           std::vector<double> def = {}) const {
    auto it = lists.find(k);
    if (it != lists.end()) return it->second;
    auto is = scalars.find(k);
    if (is != scalars.end()) return {is->second};
    return def;
  }
};

namespace detail {

inline double parse_number(const std::string& s, const std::string& key) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
      ++pos;
    if (pos != s.size())
      throw ConfigError("non-numeric value for '" + key + "': " + s);
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("non-numeric value for '" + key + "': " + s);
  }
}

inline void assign_entry(Config& cfg, const std::string& key,
                         const std::string& value) {
  if (value.find(',') == std::string::npos) {
    cfg.scalars[key] = parse_number(value, key);
    return;
  }
  std::vector<double> vs;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) vs.push_back(parse_number(item, key));
  cfg.lists[key] = vs;
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

/// Parse configuration text: JSON when the first non-space character is '{',
/// otherwise 'key = value' lines ('#' comments, comma-separated lists).
inline Config parse_config_text(const std::string& text) {
  Config cfg;
  const std::string t = detail::trim(text);
  if (!t.empty() && t.front() == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(t);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config JSON parse error: ") + e.what());
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& v = it.value();
      if (v.is_number()) {
        cfg.scalars[it.key()] = v.get<double>();
      } else if (v.is_boolean()) {
        cfg.scalars[it.key()] = v.get<bool>() ? 1.0 : 0.0;
      } else if (v.is_array()) {
        std::vector<double> vs;
        for (const auto& x : v) {
          if (!x.is_number())
            throw ConfigError("non-numeric array entry for '" + it.key() + "'");
          vs.push_back(x.get<double>());
        }
        cfg.lists[it.key()] = vs;
      } else {
        throw ConfigError("unsupported value type for '" + it.key() + "'");
      }
    }
    return cfg;
  }
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line without '=': " + line);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("malformed config line: " + line);
    detail::assign_entry(cfg, key, value);
  }
  return cfg;
}

inline Config load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

// ---------------------------------------------------------------------------
// output helpers

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

/// Write a table as CSV (17 significant digits) or as a JSON array of
/// objects, depending on format. Returns the file actually written.
inline std::filesystem::path write_table(const std::filesystem::path& dir,
                                         const std::string& stem,
                                         const Table& tab,
                                         const std::string& format) {
  if (format == "csv") {
    const auto path = dir / (stem + ".csv");
    std::ofstream out(path, std::ios::binary);
    for (size_t i = 0; i < tab.columns.size(); ++i)
      out << (i ? "," : "") << tab.columns[i];
    out << "\n";
    for (const auto& row : tab.rows) {
      for (size_t i = 0; i < row.size(); ++i)
        out << (i ? "," : "") << fmt17(row[i]);
      out << "\n";
    }
    return path;
  }
  const auto path = dir / (stem + ".json");
  json arr = json::array();
  for (const auto& row : tab.rows) {
    json obj;
    for (size_t i = 0; i < row.size() && i < tab.columns.size(); ++i)
      obj[tab.columns[i]] = row[i];
    arr.push_back(std::move(obj));
  }
  std::ofstream out(path, std::ios::binary);
  out << arr.dump(2) << "\n";
  return path;
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << "\n";
}

inline const char* event_name(EventKind k) {
  switch (k) {
    case EventKind::EquatorCross: return "EquatorCross";
    case EventKind::AntipodalParallel: return "AntipodalParallel";
    case EventKind::TurningPoint: return "TurningPoint";
    case EventKind::SwitchingGuard: return "SwitchingGuard";
    case EventKind::PolarBand: return "PolarBand";
    case EventKind::CostateGuard: return "CostateGuard";
    case EventKind::ConjugateDet: return "ConjugateDet";
  }
  return "Unknown";
}

/// Run f(0..n-1) on up to `jobs` threads. Results must be written into
/// index-addressed slots so output order is independent of scheduling.
template <class F>
inline void parallel_for(size_t n, int jobs, F&& f) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr err;
  std::mutex m;
  auto work = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(m);
        if (!err) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int k = static_cast<int>(std::min<size_t>(jobs, n));
  pool.reserve(k);
  for (int i = 0; i < k; ++i) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------------------
// shared option plumbing

struct RunContext {
  Config cfg;
  std::filesystem::path out = ".";
  std::string format = "csv";
  int jobs = 1;

  DissipationParams params() const {
    DissipationParams P{cfg.get("Gamma", 2.5), cfg.get("gamma_minus", 0.0),
                        cfg.get("gamma_plus", 2.0)};
    P.validate();
    return P;
  }
  IntegrateOptions integrate_options() const {
    IntegrateOptions o;
    o.tol.abs = cfg.get("tol_abs", 1e-10);
    o.tol.rel = cfg.get("tol_rel", 1e-10);
    o.costate_guard = cfg.get("costate_guard", 1e6);
    return o;
  }
  ExtremalPoint seed() const {
    return ExtremalPoint{cfg.get("r0", 0.0),
                         cfg.get("phi0", M_PI / 4),
                         cfg.get("theta0", 0.0),
                         {cfg.get("p_r", 0.0), cfg.get("p_phi", 0.0),
                          cfg.get("p_theta", 0.0)},
                         cfg.get("epsilon", 1.0),
                         0.0};
  }
  std::vector<double> grid(const std::string& list_key,
                           const std::string& lo_key,
                           const std::string& hi_key,
                           const std::string& n_key, double lo_def,
                           double hi_def, int n_def) const {
    // cfg.list also promotes a single scalar (a one-seed list has no comma).
    if (const auto seeds = cfg.list(list_key); !seeds.empty()) return seeds;
    const double lo = cfg.get(lo_key, lo_def);
    const double hi = cfg.get(hi_key, hi_def);
    const int n = static_cast<int>(cfg.get(n_key, n_def));
    if (n < 1 || hi < lo) throw ConfigError("invalid grid: " + list_key);
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i)
      g[i] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1.0);
    return g;
  }

  json manifest_base(const std::string& command) const {
    json m;
    m["command"] = command;
    m["version"] = version_string;
    json c;
    for (const auto& [k, v] : cfg.scalars) c[k] = v;
    for (const auto& [k, v] : cfg.lists) c[k] = v;
    m["config"] = std::move(c);
    m["format"] = format;
    return m;
  }
};

namespace detail {

inline Table trajectory_table(const Trajectory& traj,
                              const DissipationParams& P) {
  Table tab;
  tab.columns = {"t",   "r",     "phi",     "theta", "p_r", "p_phi",
                 "p_theta", "H", "Q", "u1", "u2"};
  tab.rows.reserve(traj.samples.size());
  for (const auto& z : traj.samples) {
    const double H = h_reduced(z, P);
    const double Q = switching_distance(z.costate, z.phi);
    double u1 = std::numeric_limits<double>::quiet_NaN(), u2 = u1;
    if (Q > q_min) {
      const auto u = extremal_control(z.costate, z.phi);
      u1 = u.u1;
      u2 = u.u2;
    }
    tab.rows.push_back({z.t, z.r, z.phi, z.theta, z.costate.p_r,
                        z.costate.p_phi, z.costate.p_theta, H, Q, u1, u2});
  }
  return tab;
}

inline json events_json(const Trajectory& traj) {
  json evs = json::array();
  for (const auto& ev : traj.events) {
    json e;
    e["t"] = ev.t;
    e["kind"] = event_name(ev.kind);
    e["r"] = ev.point.r;
    e["phi"] = ev.point.phi;
    e["theta"] = ev.point.theta;
    e["p_phi"] = ev.point.costate.p_phi;
    evs.push_back(std::move(e));
  }
  return evs;
}

inline json conservation_json(const Trajectory& traj,
                              const DissipationParams& P) {
  const auto& z0 = traj.samples.front();
  const double H0 = h_reduced(z0, P);
  double dH = 0.0, dpr = 0.0, dpt = 0.0;
  for (const auto& z : traj.samples) {
    dH = std::max(dH, std::abs(h_reduced(z, P) - H0));
    dpr = std::max(dpr, std::abs(z.costate.p_r - z0.costate.p_r));
    dpt = std::max(dpt, std::abs(z.costate.p_theta - z0.costate.p_theta));
  }
  json d;
  d["H0"] = H0;
  d["max_abs_dH"] = dH;
  d["max_abs_dp_r"] = dpr;
  d["max_abs_dp_theta"] = dpt;
  return d;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// subcommands

inline void cmd_extremal(const RunContext& rc) {
  const auto P = rc.params();
  const auto z0 = rc.seed();
  const auto opt = rc.integrate_options();
  const double t_max = rc.cfg.get("t_max", 10.0);

  const std::vector<EventSpec> events{
      {EventKind::EquatorCross, 0.0},
      {EventKind::AntipodalParallel, M_PI - z0.phi},
      {EventKind::TurningPoint, 0.0}};
  const auto traj = integrate_extremal(z0, P, t_max, opt, events);

  std::filesystem::create_directories(rc.out);
  const auto tab = detail::trajectory_table(traj, P);
  const auto data = write_table(rc.out, "trajectory", tab, rc.format);

  json m = rc.manifest_base("extremal");
  m["t_end"] = traj.t_end;
  m["terminated_by"] =
      traj.terminated_by ? event_name(*traj.terminated_by) : "t_max";
  m["events"] = detail::events_json(traj);
  m["conservation"] = detail::conservation_json(traj, P);
  m["outputs"] = json::array({data.filename().string()});
  write_json_file(rc.out / "manifest.json", m);
}

inline void cmd_return_map(const RunContext& rc) {
  std::vector<double> lambdas = rc.cfg.list("lambda_grid");
  if (lambdas.empty()) lambdas = {rc.cfg.get("lambda", 0.5)};
  const int n = static_cast<int>(rc.cfg.get("n_p_theta", 20));
  if (n < 1) throw ConfigError("n_p_theta must be positive");
  const double frac_lo = rc.cfg.get("domain_frac_min", 0.1);
  const double frac_hi = rc.cfg.get("domain_frac_max", 0.9);
  IntegrateOptions opt = rc.integrate_options();

  struct RowSpec {
    double lambda, p_theta;
  };
  std::vector<RowSpec> specs;
  for (double lam : lambdas) {
    if (lam < 0.0 || lam > 1.0)
      throw ConfigError("lambda outside [0, 1] in lambda_grid");
    // At lambda = 1 the domain is unbounded; sample a fixed representative
    // window instead of a fraction of sup.
    const double lo = lam == 1.0
                          ? rc.cfg.get("p_theta_min", 0.25)
                          : frac_lo * return_map_domain_sup(lam);
    const double hi = lam == 1.0 ? rc.cfg.get("p_theta_max", 4.0)
                                 : frac_hi * return_map_domain_sup(lam);
    for (int i = 0; i < n; ++i)
      specs.push_back(
          {lam, n == 1 ? lo : lo + (hi - lo) * i / (n - 1.0)});
  }

  std::vector<std::vector<double>> rows(specs.size());
  parallel_for(specs.size(), rc.jobs, [&](size_t i) {
    const auto [lam, pt] = specs[i];
    const double closed = return_map(lam, pt);
    const auto num = return_map_numeric(lam, pt, opt);
    rows[i] = {lam, pt, closed, num.delta_theta,
               std::abs(closed - num.delta_theta)};
  });

  std::filesystem::create_directories(rc.out);
  Table tab;
  tab.columns = {"lambda", "p_theta", "R_closed", "R_numeric", "abs_err"};
  tab.rows = std::move(rows);
  const auto data = write_table(rc.out, "return_map", tab, rc.format);

  double max_err = 0.0;
  for (const auto& r : tab.rows) max_err = std::max(max_err, r[4]);
  json m = rc.manifest_base("return-map");
  m["max_abs_err"] = max_err;
  m["outputs"] = json::array({data.filename().string()});
  write_json_file(rc.out / "manifest.json", m);
}

inline void cmd_conjugate(const RunContext& rc) {
  const auto P = rc.params();
  const auto opt = rc.integrate_options();
  const double phi0 = rc.cfg.get("phi0", M_PI / 4);
  const double p_r = rc.cfg.get("p_r", 0.5);
  const double p_theta = rc.cfg.get("p_theta", 2.0);
  const double epsilon = rc.cfg.get("epsilon", 1.0);
  const double t_max = rc.cfg.get("t_max", 50.0);
  const bool with_traj = rc.cfg.get("with_trajectories", 0.0) != 0.0;
  const auto grid =
      rc.grid("p_phi_seeds", "p_phi_min", "p_phi_max", "n_seeds", -6.0, 6.0, 41);

  // Per-seed sweep, parallelized; each slot is written independently so the
  // output order follows the grid regardless of thread scheduling.
  struct Slot {
    std::optional<LocusPoint> lp;
    bool skipped = false;
  };
  std::vector<Slot> slots(grid.size());
  parallel_for(grid.size(), rc.jobs, [&](size_t i) {
    ExtremalPoint z0{0.0, phi0, 0.0, {p_r, grid[i], p_theta}, epsilon, 0.0};
    const double h = h_reduced(z0, P);
    if (!(h > 1e-12)) {
      slots[i].skipped = true;
      return;
    }
    const double s = epsilon / h;
    z0.costate = {p_r * s, grid[i] * s, p_theta * s};
    slots[i].lp = conjugate_time(z0, P, t_max, opt);
  });

  std::filesystem::create_directories(rc.out);
  Table tab;
  tab.columns = {"seed_index", "seed_p_phi", "t_1c", "r", "phi", "theta"};
  json skipped = json::array();
  int found = 0;
  for (size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].lp) {
      const auto& lp = *slots[i].lp;
      tab.rows.push_back({static_cast<double>(i), grid[i], lp.t, lp.r, lp.phi,
                          lp.theta});
      ++found;
    } else if (slots[i].skipped) {
      skipped.push_back(grid[i]);
    }
  }
  const auto data = write_table(rc.out, "conjugate_locus", tab, rc.format);

  json m = rc.manifest_base("conjugate");
  m["degenerate_grusin_test"] = (P.Gamma == P.gamma_plus);
  m["seeds_total"] = grid.size();
  m["conjugate_points_found"] = found;
  m["seeds_skipped_no_level"] = std::move(skipped);
  if (found == 0)
    m["note"] = "no conjugate points located on [0, t_max]";
  json outputs = json::array({data.filename().string()});

  if (with_traj) {
    std::filesystem::create_directories(rc.out / "trajectories");
    for (size_t i = 0; i < slots.size(); ++i) {
      if (!slots[i].lp) continue;
      const auto traj =
          integrate_extremal(slots[i].lp->seed, P, slots[i].lp->t, opt);
      char name[32];
      std::snprintf(name, sizeof name, "seed_%03zu", i);
      const auto tt = detail::trajectory_table(traj, P);
      write_table(rc.out / "trajectories", name, tt, rc.format);
    }
    outputs.push_back("trajectories/");
  }

  if (P.Gamma != P.gamma_plus) {
    // Reference overlay: the degenerate-family locus from the same parallel,
    // seeded with the matching unit-covector directions.
    std::vector<double> ref_grid;
    for (size_t i = 0; i < grid.size(); ++i) {
      if (slots[i].skipped) continue;
      const double Q = switching_distance({p_r, grid[i], p_theta}, phi0);
      if (Q > q_min && p_theta / Q > 1e-6) ref_grid.push_back(p_theta / Q);
    }
    std::sort(ref_grid.begin(), ref_grid.end());
    ref_grid.erase(std::unique(ref_grid.begin(), ref_grid.end()),
                   ref_grid.end());
    const auto locus = conjugate_locus_sphere(1.0, phi0, ref_grid);
    Table ref;
    ref.columns = {"branch", "p_theta", "theta", "phi", "t"};
    for (const auto& pt : locus)
      ref.rows.push_back({static_cast<double>(pt.branch), pt.p_theta, pt.theta,
                          pt.phi, pt.t});
    const auto refdata = write_table(rc.out, "grusin_reference", ref, rc.format);
    outputs.push_back(refdata.filename().string());
  }

  m["outputs"] = std::move(outputs);
  write_json_file(rc.out / "manifest.json", m);
}

inline void cmd_classify(const RunContext& rc) {
  const auto P = rc.params();
  const auto opt = rc.integrate_options();
  const double p_r = rc.cfg.get("p_r", 0.0);
  const double p_theta = rc.cfg.get("p_theta", 1.0);
  const double epsilon = rc.cfg.get("epsilon", 1.0);
  const double phi0 = rc.cfg.get("phi0", M_PI / 2);
  const double t_span = rc.cfg.get("t_max", 200.0);

  json rep = rc.manifest_base("classify");
  rep["finsler_regime"] = finsler_regime(P);
  try {
    rep["synthesis"] =
        normal_form_classify(P) == SynthesisType::BSB ? "BSB" : "BB";
  } catch (const GrusinDegenerate&) {
    rep["synthesis"] = "degenerate";
  }
  std::vector<double> sing;
  try {
    sing = singular_phi(P);
    rep["singular_phis"] = sing;
    const auto band = barrier_band(P);
    rep["barrier_band"] = json::array({band.first, band.second});
  } catch (const NoBarrier&) {
    rep["singular_phis"] = json::array();
  }

  std::vector<double> phi_grid(2001);
  for (int i = 0; i <= 2000; ++i)
    phi_grid[i] = 0.01 + (M_PI - 0.02) * i / 2000.0;
  const auto level = classify_level_set(p_r, p_theta, epsilon, P, phi_grid);
  json lv;
  lv["kind"] = level.kind == ExtremalClass::CompactPeriodic
                   ? "CompactPeriodic"
                   : "NoncompactAperiodic";
  lv["turning_phis"] = level.turning_phis;
  if (level.period) {
    lv["period"] = *level.period;
    lv["period_residual"] = level.period_residual;
  }
  rep["level_set"] = std::move(lv);

  const auto seeds = rc.cfg.list("p_phi_seeds");
  std::vector<json> seed_rows(seeds.size());
  parallel_for(seeds.size(), rc.jobs, [&](size_t i) {
    ExtremalPoint z0{0.0, phi0, 0.0, {p_r, seeds[i], p_theta}, epsilon, 0.0};
    json row;
    row["p_phi"] = seeds[i];
    try {
      const auto cls = classify_extremal(z0, P, t_span, opt);
      row["kind"] = cls.kind == ExtremalClass::CompactPeriodic
                        ? "CompactPeriodic"
                        : "NoncompactAperiodic";
      row["turning_phis"] = cls.turning_phis;
      if (cls.period) {
        row["period"] = *cls.period;
        row["period_residual"] = cls.period_residual;
      }
      if (cls.asymptote_phi) {
        row["asymptote_phi"] = *cls.asymptote_phi;
        if (!sing.empty()) {
          double best = sing.front();
          for (double s : sing)
            if (std::abs(s - *cls.asymptote_phi) <
                std::abs(best - *cls.asymptote_phi))
              best = s;
          row["nearest_singular_phi"] = best;
          row["singular_distance"] = std::abs(best - *cls.asymptote_phi);
        }
      }
    } catch (const NotPeriodic& e) {
      row["kind"] = "Undecided";
      row["note"] = e.what();
    }
    seed_rows[i] = std::move(row);
  });
  rep["seeds"] = seed_rows;

  std::filesystem::create_directories(rc.out);
  write_json_file(rc.out / "classify.json", rep);
  json m = rc.manifest_base("classify");
  m["outputs"] = json::array({"classify.json"});
  write_json_file(rc.out / "manifest.json", m);
}

inline void cmd_grusin_locus(const RunContext& rc) {
  const double lam = rc.cfg.require("lambda");
  const double phi0 = rc.cfg.get("phi0", M_PI / 3);
  const double t_max = rc.cfg.get("t_max", 8.0 * M_PI);
  const auto opt = rc.integrate_options();
  const double W0 = grusin_weight(phi0, lam);
  const double sup = W0 > 0.0 ? 1.0 / std::sqrt(W0) : 10.0;
  const auto grid = rc.grid("p_theta_seeds", "p_theta_min", "p_theta_max",
                            "n_p_theta", 0.05 * sup, 0.95 * sup, 40);

  const auto locus = conjugate_locus_sphere(lam, phi0, grid, t_max, opt);

  std::filesystem::create_directories(rc.out);
  Table tab;
  tab.columns = {"branch", "p_theta", "theta", "phi", "t"};
  for (const auto& pt : locus)
    tab.rows.push_back({static_cast<double>(pt.branch), pt.p_theta, pt.theta,
                        pt.phi, pt.t});
  const auto data = write_table(rc.out, "grusin_locus", tab, rc.format);

  const auto rev = tangent_reversals(locus);
  json m = rc.manifest_base("grusin-locus");
  m["points"] = tab.rows.size();
  m["tangent_reversals_theta"] = rev.theta;
  m["tangent_reversals_phi"] = rev.phi;
  m["cusps"] = rev.theta + rev.phi;
  m["outputs"] = json::array({data.filename().string()});
  write_json_file(rc.out / "manifest.json", m);
}

inline void cmd_cut(const RunContext& rc) {
  std::filesystem::create_directories(rc.out);
  const auto opt = rc.integrate_options();

  if (rc.cfg.has("lambda")) {
    const double lam = rc.cfg.require("lambda");
    const double phi0 = rc.cfg.get("phi0", M_PI / 3);
    const double W0 = grusin_weight(phi0, lam);
    const double sup = W0 > 0.0 ? 1.0 / std::sqrt(W0) : 10.0;
    const auto grid = rc.grid("p_theta_seeds", "p_theta_min", "p_theta_max",
                              "n_p_theta", 0.05 * sup, 0.95 * sup, 40);
    const auto cut = cut_locus_sphere(lam, phi0, grid, opt);
    Table tab;
    tab.columns = {"p_theta", "t_cut", "theta", "phi", "pair_time_mismatch"};
    for (const auto& s : cut.samples)
      tab.rows.push_back({s.p_theta, s.t_cut, s.theta, s.phi,
                          s.pair_time_mismatch});
    const auto data = write_table(rc.out, "cut_locus", tab, rc.format);
    json m = rc.manifest_base("cut");
    m["kind"] = cut.kind == CutLocusDescription::Kind::SinglePoint
                    ? "SinglePoint"
                    : cut.kind == CutLocusDescription::Kind::AntipodalParallel
                          ? "AntipodalParallel"
                          : "EquatorMinusPoint";
    m["parallel_phi"] = cut.parallel_phi;
    m["outputs"] = json::array({data.filename().string()});
    write_json_file(rc.out / "manifest.json", m);
    return;
  }

  const auto P = rc.params();
  const double phi0 = rc.cfg.get("phi0", M_PI / 4);
  const double p_r = rc.cfg.get("p_r", 0.5);
  const double p_theta = rc.cfg.get("p_theta", 2.0);
  const double epsilon = rc.cfg.get("epsilon", 1.0);
  const auto grid =
      rc.grid("p_phi_seeds", "p_phi_min", "p_phi_max", "n_seeds", -4.0, 4.0, 21);

  struct Slot {
    std::optional<AntipodalIntersection> ai;
    bool skipped = false;
  };
  std::vector<Slot> slots(grid.size());
  parallel_for(grid.size(), rc.jobs, [&](size_t i) {
    ExtremalPoint z0{0.0, phi0, 0.0, {p_r, grid[i], p_theta}, epsilon, 0.0};
    const double h = h_reduced(z0, P);
    if (!(h > 1e-12)) {
      slots[i].skipped = true;
      return;
    }
    const double s = epsilon / h;
    z0.costate = {p_r * s, grid[i] * s, p_theta * s};
    try {
      slots[i].ai = antipodal_intersection(z0, P, opt);
    } catch (const NotPeriodic&) {
      slots[i].skipped = true;
    }
  });

  Table tab;
  tab.columns = {"seed_index", "seed_p_phi", "t_cut",         "r",
                 "phi",        "theta",      "mismatch_r",    "mismatch_theta"};
  json skipped = json::array();
  for (size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i].ai) {
      skipped.push_back(grid[i]);
      continue;
    }
    const auto& ai = *slots[i].ai;
    tab.rows.push_back({static_cast<double>(i), grid[i], ai.t_half,
                        0.5 * (ai.q_plus.r + ai.q_minus.r),
                        0.5 * (ai.q_plus.phi + ai.q_minus.phi),
                        0.5 * (ai.q_plus.theta + ai.q_minus.theta),
                        ai.mismatch_r, ai.mismatch_theta});
  }
  const auto data = write_table(rc.out, "cut_locus", tab, rc.format);
  json m = rc.manifest_base("cut");
  m["seeds_total"] = grid.size();
  m["seeds_skipped"] = std::move(skipped);
  m["outputs"] = json::array({data.filename().string()});
  write_json_file(rc.out / "manifest.json", m);
}

// ---------------------------------------------------------------------------
// entry point

inline int run(const std::vector<std::string>& args) {
  CLI::App app{"time-minimal control of the dissipative two-level quantum "
               "system: extremal flow, conjugate and cut loci"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", format = "csv";
  std::optional<double> tol_abs, tol_rel, t_max;
  int jobs = 1;
  app.add_option("--config", config_path, "configuration file (JSON or key=value)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--format", format, "data file format")
      ->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--tol-abs", tol_abs, "integrator absolute tolerance");
  app.add_option("--tol-rel", tol_rel, "integrator relative tolerance");
  app.add_option("--t-max", t_max, "integration horizon");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  // Model / seed / sweep overrides, merged into the config map after parse.
  std::map<std::string, std::optional<double>> fv;
  const std::vector<std::pair<std::string, std::string>> flag_keys = {
      {"--Gamma", "Gamma"},
      {"--gamma-minus", "gamma_minus"},
      {"--gamma-plus", "gamma_plus"},
      {"--lambda", "lambda"},
      {"--r0", "r0"},
      {"--phi0", "phi0"},
      {"--theta0", "theta0"},
      {"--p-r", "p_r"},
      {"--p-phi", "p_phi"},
      {"--p-theta", "p_theta"},
      {"--epsilon", "epsilon"},
      {"--costate-guard", "costate_guard"},
      {"--p-phi-min", "p_phi_min"},
      {"--p-phi-max", "p_phi_max"},
      {"--n-seeds", "n_seeds"},
      {"--p-theta-min", "p_theta_min"},
      {"--p-theta-max", "p_theta_max"},
      {"--n-p-theta", "n_p_theta"}};

  auto* s_ext = app.add_subcommand("extremal", "integrate one extremal");
  auto* s_ret = app.add_subcommand("return-map", "first return map table");
  auto* s_con = app.add_subcommand("conjugate", "conjugate locus sweep");
  auto* s_cls = app.add_subcommand("classify", "level set classification");
  auto* s_gru = app.add_subcommand("grusin-locus", "metric family conjugate locus");
  auto* s_cut = app.add_subcommand("cut", "cut locus");
  std::map<std::string, std::string> str_flags;  // list-valued flags
  for (auto* s : {s_ext, s_ret, s_con, s_cls, s_gru, s_cut}) {
    s->fallthrough();
    for (const auto& [flag, key] : flag_keys)
      s->add_option(flag, fv[key]);
    s->add_option("--p-phi-seeds", str_flags["p_phi_seeds"],
                  "comma-separated p_phi seed list");
    s->add_option("--p-theta-seeds", str_flags["p_theta_seeds"],
                  "comma-separated p_theta seed list");
    s->add_option("--lambda-grid", str_flags["lambda_grid"],
                  "comma-separated lambda values");
  }
  bool with_traj = false;
  s_con->add_flag("--with-trajectories", with_traj,
                  "write each extremal truncated at its conjugate point");

  std::vector<const char*> argv;
  argv.push_back("blochopt");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    RunContext rc;
    if (!config_path.empty()) rc.cfg = load_config_file(config_path);
    for (const auto& [key, val] : fv)
      if (val) rc.cfg.scalars[key] = *val;
    for (const auto& [key, raw] : str_flags)
      if (!raw.empty()) detail::assign_entry(rc.cfg, key, raw);
    if (tol_abs) rc.cfg.scalars["tol_abs"] = *tol_abs;
    if (tol_rel) rc.cfg.scalars["tol_rel"] = *tol_rel;
    if (t_max) rc.cfg.scalars["t_max"] = *t_max;
    if (with_traj) rc.cfg.scalars["with_trajectories"] = 1.0;
    rc.out = out_dir;
    rc.format = format;
    rc.jobs = jobs;

    if (s_ext->parsed()) cmd_extremal(rc);
    else if (s_ret->parsed()) cmd_return_map(rc);
    else if (s_con->parsed()) cmd_conjugate(rc);
    else if (s_cls->parsed()) cmd_classify(rc);
    else if (s_gru->parsed()) cmd_grusin_locus(rc);
    else if (s_cut->parsed()) cmd_cut(rc);
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const InvalidParams& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NotIntegrable& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const StepFailure& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const SwitchingSurface& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const PolarSingularity& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const NotPeriodic& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
}

}  // namespace blochopt::cli
