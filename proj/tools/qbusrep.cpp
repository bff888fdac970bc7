// Part of qbusrep. MIT licensed; see LICENSE.
// Command-line front end. Named experiments emit the toolkit's standard data
// sets as CSV or JSON together with a reproducibility sidecar holding the
// fully resolved parameters; `validate` checks a config file without running
// anything and `presets list` prints the built-in material parameter sets.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qbr/cqed.hpp"
#include "qbr/czgate.hpp"
#include "qbr/entangle.hpp"
#include "qbr/errors.hpp"
#include "qbr/repeater.hpp"
#include "qbr/version.hpp"

namespace {

using nlohmann::json;
using qbr::ConfigError;
using qbr::SolverError;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Output rendering

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

// Row cells are either numbers (rendered with 17 significant digits) or
// strings (category labels such as the material name).
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;

  void add_row(std::vector<json> cells) { rows.push_back(std::move(cells)); }
};

std::string render_cell(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return fmt17(v.get<double>());
}

std::string render_csv(const Table& t) {
  std::ostringstream os;
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    os << (c ? "," : "") << t.columns[c];
  }
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      os << (c ? "," : "") << render_cell(row[c]);
    }
    os << '\n';
  }
  return os.str();
}

std::string render_json(const Table& t) {
  json out;
  out["columns"] = t.columns;
  out["rows"] = json::array();
  for (const auto& row : t.rows) {
    json r = json::array();
    for (const auto& cell : row) r.push_back(cell);
    out["rows"].push_back(std::move(r));
  }
  return out.dump(2) + "\n";
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << content;
  os.flush();
  if (!os) throw IoError("failed while writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Config handling

// Parses a config file. Whitespace-only files resolve to an empty object;
// syntax errors are reported with line and column.
json parse_config_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read config file '" + path + "'");
  std::stringstream buffer;
  buffer << is.rdbuf();
  const std::string text = buffer.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    return json::object();
  }
  try {
    json parsed = json::parse(text);
    if (!parsed.is_object()) {
      throw ConfigError("config file must hold a single object");
    }
    // A sidecar written by this tool may be passed back directly; its
    // embedded parameter block is the rerunnable config.
    if (parsed.contains("tool") && parsed["tool"] == "qbusrep" &&
        parsed.contains("parameters")) {
      return parsed["parameters"];
    }
    return parsed;
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::ostringstream os;
    os << "config parse error at line " << line << ", column " << col;
    throw ConfigError(os.str());
  }
}

// key=value pairs from --override; values parse as JSON scalars/arrays when
// possible and fall back to plain strings.
void apply_overrides(json& params, const std::vector<std::string>& kvs) {
  for (const std::string& kv : kvs) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + kv + "' is not of the form key=value");
    }
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    json parsed = json::parse(value, nullptr, false);
    params[key] = parsed.is_discarded() ? json(value) : parsed;
  }
}

double as_num(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("parameter '" + key + "' must be a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) {
    throw ConfigError("parameter '" + key + "' must be an integer");
  }
  return v.get<int>();
}

std::vector<double> as_list(const json& v, const std::string& key) {
  if (!v.is_array() || v.empty()) {
    throw ConfigError("parameter '" + key + "' must be a non-empty array");
  }
  std::vector<double> out;
  for (const json& e : v) out.push_back(as_num(e, key));
  return out;
}

std::vector<double> log_grid(double lo, double hi, int n) {
  if (!(lo > 0.0) || !(hi > lo) || n < 2) {
    throw ConfigError("grids need 0 < min < max and at least two points");
  }
  std::vector<double> g;
  for (int i = 0; i < n; ++i) {
    g.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
  }
  return g;
}

std::vector<double> lin_grid(double lo, double hi, int n) {
  if (!(hi > lo) || n < 2) {
    throw ConfigError("grids need min < max and at least two points");
  }
  std::vector<double> g;
  for (int i = 0; i < n; ++i) {
    g.push_back(lo + (hi - lo) * static_cast<double>(i) / (n - 1));
  }
  return g;
}

qbr::entangle::Geometry parse_geometry(const json& v) {
  const std::string s = v.is_string() ? v.get<std::string>() : std::string();
  if (s == "end") return qbr::entangle::Geometry::kEndDetection;
  if (s == "midpoint") return qbr::entangle::Geometry::kMidPoint;
  throw ConfigError("geometry must be 'end' or 'midpoint'");
}

// Applies the supported preset override keys. A q_factor override rescales
// the cavity decay (keeping kappa/gamma fixed); tau_nr_ns replaces the
// non-radiative lifetime (0 keeps the preset, a negative value means none).
qbr::cqed::EmitterCavityParams resolve_preset(const std::string& material,
                                              const json& params) {
  qbr::cqed::EmitterCavityParams p = qbr::cqed::preset_by_name(material);
  if (params.contains("q_factor") && as_num(params["q_factor"], "q_factor") > 0.0) {
    const double ratio = p.kappa / p.gamma_cav;
    p.q_factor = params["q_factor"].get<double>();
    p.gamma_cav = p.omega_atom() / p.q_factor;
    p.kappa = ratio * p.gamma_cav;
  }
  if (params.contains("tau_nr_ns")) {
    const double v = as_num(params["tau_nr_ns"], "tau_nr_ns");
    if (v > 0.0) {
      p.tau_nr = v * 1e-9;
    } else if (v < 0.0) {
      p.tau_nr = std::numeric_limits<double>::infinity();
    }
  }
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Experiments

struct RunContext {
  std::uint64_t seed = 1;
  int workers = 0;
};

struct Experiment {
  std::string description;
  json defaults;
  // Cheap construction-and-range checks, shared by `validate` and the runner.
  std::function<void(const json&)> check;
  std::function<Table(const json&, const RunContext&, json& extra)> run;
};

Table run_fig2(const json& p, const RunContext& ctx, json& extra) {
  namespace rep = qbr::repeater;
  rep::NetworkConfig cfg;
  cfg.n_segments = as_int(p.at("n_segments"), "n_segments");
  cfg.slot_time_s = as_num(p.at("slot_time_us"), "slot_time_us") * 1e-6;
  cfg.validate();
  const std::vector<double> eps_list = as_list(p.at("eps_init_list"), "eps_init_list");
  const double eps_gate = as_num(p.at("eps_gate"), "eps_gate");
  const auto ps_grid = log_grid(as_num(p.at("ps_min"), "ps_min"),
                                as_num(p.at("ps_max"), "ps_max"),
                                as_int(p.at("ps_points"), "ps_points"));
  const int trials = as_int(p.at("trials_per_point"), "trials_per_point");
  const int n_deliver = as_int(p.at("n_deliver"), "n_deliver");
  const double target = as_num(p.at("target_fidelity"), "target_fidelity");
  const int max_rounds = as_int(p.at("max_rounds_per_level"), "max_rounds_per_level");

  Table t;
  t.columns = {"eps_init", "f_init", "ps", "rate_hz", "final_fidelity"};
  extra["fits"] = json::object();
  for (std::size_t k = 0; k < eps_list.size(); ++k) {
    rep::WhiteNoise base{eps_list[k], eps_gate, 1.0};
    const rep::ProtocolPolicy policy =
        rep::policy_for_target(cfg, base, target, max_rounds);
    const rep::RateStudy study =
        rep::rate_study(cfg, policy, base, ps_grid, n_deliver, trials,
                        ctx.seed + k, ctx.workers);
    const double f_init = 1.0 - 0.75 * eps_list[k];
    for (const rep::RateStudyRow& row : study.rows) {
      t.add_row({eps_list[k], f_init, row.ps, row.rate_hz, row.final_fidelity});
    }
    json fit;
    fit["exponent"] = study.fit.exponent;
    fit["stderr_exponent"] = study.fit.stderr_exponent;
    fit["intercept"] = study.fit.intercept;
    fit["policy_rounds"] = policy.purification_rounds;
    extra["fits"][fmt17(eps_list[k])] = fit;
  }
  return t;
}

Table run_fig5(const json& p, const RunContext&, json&) {
  namespace ent = qbr::entangle;
  const auto ratios = as_list(p.at("ell_over_ell0_list"), "ell_over_ell0_list");
  const auto pc_grid = log_grid(as_num(p.at("pc_min"), "pc_min"),
                                as_num(p.at("pc_max"), "pc_max"),
                                as_int(p.at("pc_points"), "pc_points"));
  const ent::Geometry geom = parse_geometry(p.at("geometry"));

  Table t;
  t.columns = {"ell_over_ell0", "pc", "d_star", "ps", "fidelity"};
  for (double ratio : ratios) {
    for (const ent::CurveRow& row : ent::fidelity_ps_curve(ratio, pc_grid, geom)) {
      t.add_row({ratio, row.pc, row.d_star, row.ps, row.fidelity});
    }
  }
  return t;
}

Table run_fig6(const json& p, const RunContext&, json&) {
  namespace ent = qbr::entangle;
  const double transmission = as_num(p.at("transmission"), "transmission");
  const double theta = as_num(p.at("theta"), "theta");
  const auto pc_list = as_list(p.at("pc_list"), "pc_list");
  const auto d_grid = lin_grid(as_num(p.at("d_min"), "d_min"),
                               as_num(p.at("d_max"), "d_max"),
                               as_int(p.at("d_points"), "d_points"));

  Table t;
  t.columns = {"pc", "d", "ps", "fidelity"};
  for (double pc : pc_list) {
    for (double d : d_grid) {
      ent::LinkParams lp;
      lp.alpha = d / (2.0 * std::sin(theta / 2.0) * std::cos(theta / 2.0));
      lp.theta1 = theta;
      lp.theta2 = theta;
      lp.transmission = transmission;
      lp.pc = pc;
      const ent::LinkDerived der = ent::derive_link(lp);
      t.add_row({pc, d, ent::success_probability(der.d, transmission, pc),
                 ent::entanglement_fidelity(der.d, transmission, pc, der.gamma1)});
    }
  }
  return t;
}

Table run_fig7(const json& p, const RunContext&, json&) {
  const auto theta_list = as_list(p.at("theta_list"), "theta_list");
  const auto loss_grid = log_grid(as_num(p.at("loss_min"), "loss_min"),
                                  as_num(p.at("loss_max"), "loss_max"),
                                  as_int(p.at("loss_points"), "loss_points"));
  Table t;
  t.columns = {"loss", "theta", "one_minus_lambda0"};
  for (const auto& row : qbr::czgate::cz_error_curve(theta_list, loss_grid)) {
    t.add_row({row.loss, row.theta, row.one_minus_lambda0});
  }
  return t;
}

qbr::entangle::LinkParams fig8_link(const json& p) {
  namespace ent = qbr::entangle;
  ent::LinkParams link = ent::LinkParams::from_fiber(
      as_num(p.at("spacing_km"), "spacing_km"),
      as_num(p.at("ell0_km"), "ell0_km"), ent::Geometry::kMidPoint);
  const double theta = as_num(p.at("link_theta"), "link_theta");
  link.theta1 = theta;
  link.theta2 = theta;
  link.pc = as_num(p.at("pc"), "pc");
  const ent::OptimalDisplacement opt =
      ent::optimize_d(link.transmission, link.pc);
  link.alpha = opt.d_star / (2.0 * std::sin(theta / 2.0) * std::cos(theta / 2.0));
  link.validate();
  return link;
}

Table run_fig8(const json& p, const RunContext& ctx, json& extra) {
  namespace rep = qbr::repeater;
  rep::NetworkConfig cfg;
  cfg.n_segments = as_int(p.at("n_segments"), "n_segments");
  cfg.spacing_km = as_num(p.at("spacing_km"), "spacing_km");
  const double slot_us = as_num(p.at("slot_time_us"), "slot_time_us");
  // 0 derives the slot from the spacing at 2e5 km/s in fiber.
  cfg.slot_time_s = slot_us > 0.0 ? slot_us * 1e-6 : cfg.spacing_km / 2e5;
  cfg.validate();

  const qbr::entangle::LinkParams link = fig8_link(p);
  const auto loss_list = as_list(p.at("local_loss_list"), "local_loss_list");
  const double gate_theta = as_num(p.at("gate_theta"), "gate_theta");
  const double target = as_num(p.at("target_fidelity"), "target_fidelity");
  const int max_rounds = as_int(p.at("max_rounds_per_level"), "max_rounds_per_level");
  const int n_deliver = as_int(p.at("n_deliver"), "n_deliver");

  Table t;
  t.columns = {"local_loss", "mean_interval_s", "std_interval_s", "rate_hz",
               "final_fidelity"};
  extra["policies"] = json::object();
  for (std::size_t k = 0; k < loss_list.size(); ++k) {
    const double loss = loss_list[k];
    const qbr::czgate::CZParams gate_params =
        qbr::czgate::CZParams::from_gate_condition(gate_theta, 1.0 - loss);
    rep::Physical noise{link, qbr::czgate::make_gate_channel(gate_params)};
    const rep::ProtocolPolicy policy =
        rep::policy_for_target(cfg, noise, target, max_rounds);
    const rep::SimResult res =
        rep::run_simulation(cfg, policy, noise, n_deliver, ctx.seed + k);
    t.add_row({loss, res.mean_interval_s, res.std_interval_s, res.rate_hz,
               res.final_fidelity});
    extra["policies"][fmt17(loss)] = policy.purification_rounds;
  }
  return t;
}

Table sweep_table(const qbr::cqed::EmitterCavityParams& preset,
                  const std::vector<double>& products,
                  const std::vector<double>& sigmas,
                  const std::vector<double>& grid, int workers) {
  Table t;
  t.columns = {"material", "saturation_param", "alpha", "omega0_rad_s",
               "sigma_p_s", "d", "fidelity", "theta", "loss"};
  for (const qbr::cqed::SweepRow& row :
       qbr::cqed::saturation_sweep(preset, products, sigmas, grid, workers)) {
    t.add_row({preset.name, row.saturation_param, row.alpha, row.omega0,
               row.sigma_p, row.d, row.fidelity, row.theta, row.loss});
  }
  return t;
}

void append_rows(Table& into, const Table& from) {
  for (const auto& row : from.rows) into.rows.push_back(row);
}

Table run_fig9(const json& p, const RunContext& ctx, json& extra) {
  const std::string material =
      p.at("material").is_string() ? p.at("material").get<std::string>() : "";
  const qbr::cqed::EmitterCavityParams preset = resolve_preset(material, p);
  const double gp = preset.g_prime();
  const auto grid = log_grid(as_num(p.at("saturation_min"), "saturation_min"),
                             as_num(p.at("saturation_max"), "saturation_max"),
                             as_int(p.at("grid_points"), "grid_points"));
  std::vector<double> products;
  for (double m : as_list(p.at("products_gprime"), "products_gprime")) {
    products.push_back(m * gp);
  }
  const double family_sigma = as_num(p.at("family_sigma_p_ns"), "family_sigma_p_ns") * 1e-9;
  const double family_product =
      as_num(p.at("family_product_gprime"), "family_product_gprime") * gp;
  std::vector<double> sigmas;
  for (double ns : as_list(p.at("sigma_p_list_ns"), "sigma_p_list_ns")) {
    sigmas.push_back(ns * 1e-9);
  }

  // Two families of curves: constant pulse width across the product list, and
  // a pulse-width scan at one fixed product.
  Table t = sweep_table(preset, products, {family_sigma}, grid, ctx.workers);
  append_rows(t, sweep_table(preset, {family_product}, sigmas, grid, ctx.workers));
  extra["g_prime_rad_s"] = gp;
  extra["cooperativity"] = qbr::cqed::cooperativity(preset);
  return t;
}

Table run_fig10(const json& p, const RunContext& ctx, json& extra) {
  if (!p.at("materials").is_array()) {
    throw ConfigError("parameter 'materials' must be an array of preset names");
  }
  const auto grid = log_grid(as_num(p.at("saturation_min"), "saturation_min"),
                             as_num(p.at("saturation_max"), "saturation_max"),
                             as_int(p.at("grid_points"), "grid_points"));
  const auto products_g = as_list(p.at("products_gprime"), "products_gprime");
  const double family_product_g =
      as_num(p.at("family_product_gprime"), "family_product_gprime");
  const auto sigma_factors = as_list(p.at("sigma_p_over_tau_list"), "sigma_p_over_tau_list");
  const double family_factor =
      as_num(p.at("family_sigma_p_over_tau"), "family_sigma_p_over_tau");

  Table t;
  t.columns = {"material", "saturation_param", "alpha", "omega0_rad_s",
               "sigma_p_s", "d", "fidelity", "theta", "loss"};
  for (const json& mj : p.at("materials")) {
    const std::string material = mj.is_string() ? mj.get<std::string>() : "";
    const qbr::cqed::EmitterCavityParams preset = resolve_preset(material, p);
    const double gp = preset.g_prime();
    const double tau = preset.tau_total();
    std::vector<double> products;
    for (double m : products_g) products.push_back(m * gp);
    std::vector<double> sigmas;
    for (double f : sigma_factors) sigmas.push_back(f * tau);
    append_rows(t, sweep_table(preset, products, {family_factor * tau}, grid,
                               ctx.workers));
    append_rows(t, sweep_table(preset, {family_product_g * gp}, sigmas, grid,
                               ctx.workers));
    extra[material] = {{"g_prime_rad_s", gp},
                       {"tau_s", tau},
                       {"cooperativity", qbr::cqed::cooperativity(preset)}};
  }
  return t;
}

// Construction-only checks used by `validate` (and before running).
void check_fig2(const json& p) {
  qbr::repeater::NetworkConfig cfg;
  cfg.n_segments = as_int(p.at("n_segments"), "n_segments");
  cfg.slot_time_s = as_num(p.at("slot_time_us"), "slot_time_us") * 1e-6;
  cfg.validate();
  for (double eps : as_list(p.at("eps_init_list"), "eps_init_list")) {
    qbr::repeater::WhiteNoise{eps, as_num(p.at("eps_gate"), "eps_gate"), 1.0}
        .validate();
  }
  log_grid(as_num(p.at("ps_min"), "ps_min"), as_num(p.at("ps_max"), "ps_max"),
           as_int(p.at("ps_points"), "ps_points"));
  if (as_num(p.at("ps_max"), "ps_max") > 1.0) {
    throw ConfigError("ps_max cannot exceed 1");
  }
  const double target = as_num(p.at("target_fidelity"), "target_fidelity");
  if (!(target > 0.25 && target < 1.0)) {
    throw ConfigError("target_fidelity must lie in (0.25, 1)");
  }
  if (as_int(p.at("n_deliver"), "n_deliver") < 5) {
    throw ConfigError("n_deliver must be at least 5");
  }
  if (as_int(p.at("trials_per_point"), "trials_per_point") < 1) {
    throw ConfigError("trials_per_point must be positive");
  }
}

void check_fig5(const json& p) {
  for (double r : as_list(p.at("ell_over_ell0_list"), "ell_over_ell0_list")) {
    if (!(r > 0.0)) throw ConfigError("ell_over_ell0 entries must be positive");
  }
  log_grid(as_num(p.at("pc_min"), "pc_min"), as_num(p.at("pc_max"), "pc_max"),
           as_int(p.at("pc_points"), "pc_points"));
  parse_geometry(p.at("geometry"));
}

void check_fig6(const json& p) {
  const double transmission = as_num(p.at("transmission"), "transmission");
  if (!(transmission > 0.0 && transmission <= 1.0)) {
    throw ConfigError("transmission must lie in (0, 1]");
  }
  if (!(as_num(p.at("theta"), "theta") > 0.0)) {
    throw ConfigError("theta must be positive");
  }
  for (double pc : as_list(p.at("pc_list"), "pc_list")) {
    if (!(pc > 0.0)) throw ConfigError("pc_list entries must be positive");
  }
  lin_grid(as_num(p.at("d_min"), "d_min"), as_num(p.at("d_max"), "d_max"),
           as_int(p.at("d_points"), "d_points"));
  if (!(as_num(p.at("d_min"), "d_min") > 0.0)) {
    throw ConfigError("d_min must be positive");
  }
}

void check_fig7(const json& p) {
  for (double th : as_list(p.at("theta_list"), "theta_list")) {
    if (!(th > 0.0)) throw ConfigError("theta_list entries must be positive");
  }
  const double lmax = as_num(p.at("loss_max"), "loss_max");
  if (!(lmax < 0.95)) {
    throw ConfigError("loss_max must stay below 0.95 (gate condition diverges)");
  }
  log_grid(as_num(p.at("loss_min"), "loss_min"), lmax,
           as_int(p.at("loss_points"), "loss_points"));
}

void check_fig8(const json& p) {
  qbr::repeater::NetworkConfig cfg;
  cfg.n_segments = as_int(p.at("n_segments"), "n_segments");
  cfg.spacing_km = as_num(p.at("spacing_km"), "spacing_km");
  const double slot_us = as_num(p.at("slot_time_us"), "slot_time_us");
  cfg.slot_time_s = slot_us > 0.0 ? slot_us * 1e-6 : cfg.spacing_km / 2e5;
  cfg.validate();
  fig8_link(p);
  for (double loss : as_list(p.at("local_loss_list"), "local_loss_list")) {
    if (!(loss >= 0.0 && loss < 0.95)) {
      throw ConfigError("local losses must lie in [0, 0.95)");
    }
  }
  if (!(as_num(p.at("gate_theta"), "gate_theta") > 0.0)) {
    throw ConfigError("gate_theta must be positive");
  }
  const double target = as_num(p.at("target_fidelity"), "target_fidelity");
  if (!(target > 0.25 && target < 1.0)) {
    throw ConfigError("target_fidelity must lie in (0.25, 1)");
  }
  if (as_int(p.at("n_deliver"), "n_deliver") < 5) {
    throw ConfigError("n_deliver must be at least 5");
  }
}

void check_fig9(const json& p) {
  const std::string material =
      p.at("material").is_string() ? p.at("material").get<std::string>() : "";
  resolve_preset(material, p);
  log_grid(as_num(p.at("saturation_min"), "saturation_min"),
           as_num(p.at("saturation_max"), "saturation_max"),
           as_int(p.at("grid_points"), "grid_points"));
  for (double m : as_list(p.at("products_gprime"), "products_gprime")) {
    if (!(m > 0.0)) throw ConfigError("products_gprime entries must be positive");
  }
  for (double ns : as_list(p.at("sigma_p_list_ns"), "sigma_p_list_ns")) {
    if (!(ns > 0.0)) throw ConfigError("sigma_p_list_ns entries must be positive");
  }
  if (!(as_num(p.at("family_sigma_p_ns"), "family_sigma_p_ns") > 0.0)) {
    throw ConfigError("family_sigma_p_ns must be positive");
  }
  if (!(as_num(p.at("family_product_gprime"), "family_product_gprime") > 0.0)) {
    throw ConfigError("family_product_gprime must be positive");
  }
}

void check_fig10(const json& p) {
  if (!p.at("materials").is_array() || p.at("materials").empty()) {
    throw ConfigError("parameter 'materials' must be a non-empty array");
  }
  for (const json& mj : p.at("materials")) {
    resolve_preset(mj.is_string() ? mj.get<std::string>() : "", p);
  }
  log_grid(as_num(p.at("saturation_min"), "saturation_min"),
           as_num(p.at("saturation_max"), "saturation_max"),
           as_int(p.at("grid_points"), "grid_points"));
  for (double m : as_list(p.at("products_gprime"), "products_gprime")) {
    if (!(m > 0.0)) throw ConfigError("products_gprime entries must be positive");
  }
  for (double f : as_list(p.at("sigma_p_over_tau_list"), "sigma_p_over_tau_list")) {
    if (!(f > 0.0)) throw ConfigError("sigma factors must be positive");
  }
  if (!(as_num(p.at("family_sigma_p_over_tau"), "family_sigma_p_over_tau") > 0.0)) {
    throw ConfigError("family_sigma_p_over_tau must be positive");
  }
}

const std::map<std::string, Experiment>& experiments() {
  static const std::map<std::string, Experiment> table = [] {
    std::map<std::string, Experiment> m;
    m["fig2"] = {
        "White-noise repeater rate scaling vs generation probability",
        {{"n_segments", 8},
         {"slot_time_us", 50.0},
         {"eps_init_list", json::array({0.05, 0.30})},
         {"eps_gate", 0.0},
         {"ps_min", 0.1},
         {"ps_max", 1.0},
         {"ps_points", 8},
         {"trials_per_point", 5},
         {"n_deliver", 10},
         {"target_fidelity", 0.95},
         {"max_rounds_per_level", 6}},
        check_fig2,
        run_fig2};
    m["fig5"] = {
        "Optimized link fidelity and success probability vs fiber length",
        {{"ell_over_ell0_list", json::array({0.2, 0.4, 1.0, 2.0})},
         {"pc_min", 0.01},
         {"pc_max", 3.0},
         {"pc_points", 40},
         {"geometry", "end"}},
        check_fig5,
        run_fig5};
    m["fig6"] = {
        "Link fidelity and success probability vs displacement and window",
        {{"transmission", 0.67},
         {"theta", 0.01},
         {"pc_list", json::array({0.05, 0.1, 0.2, 0.5, 1.0, 2.0})},
         {"d_min", 0.05},
         {"d_max", 4.0},
         {"d_points", 60}},
        check_fig6,
        run_fig6};
    m["fig7"] = {
        "Controlled-Z gate error vs local loss for several angles",
        {{"theta_list", json::array({0.032, 0.01, 0.0032, 0.001})},
         {"loss_min", 1e-4},
         {"loss_max", 0.5},
         {"loss_points", 40}},
        check_fig7,
        run_fig7};
    m["fig8"] = {
        "Physical-noise repeater rates over 128 segments vs local loss",
        {{"n_segments", 128},
         {"spacing_km", 10.0},
         {"ell0_km", 25.0},
         {"slot_time_us", 0.0},
         {"pc", 0.5},
         {"link_theta", 0.01},
         {"gate_theta", 0.01},
         {"local_loss_list", json::array({0.001, 0.002, 0.005, 0.01, 0.02})},
         {"target_fidelity", 0.9},
         {"max_rounds_per_level", 4},
         {"n_deliver", 5}},
        check_fig8,
        run_fig8};
    m["fig9"] = {
        "Silicon-donor saturation sweep: distinguishability and fidelity",
        {{"material", "si"},
         {"products_gprime", json::array({316.2, 1000.0, 3162.0, 10000.0})},
         {"family_sigma_p_ns", 30.0},
         {"family_product_gprime", 3162.0},
         {"sigma_p_list_ns", json::array({30.0, 100.0, 300.0, 900.0})},
         {"saturation_min", 0.01},
         {"saturation_max", 10.0},
         {"grid_points", 25},
         {"q_factor", 0.0},
         {"tau_nr_ns", 0.0}},
        check_fig9,
        run_fig9};
    m["fig10"] = {
        "ZnSe-donor and trapped-ion saturation sweeps",
        {{"materials", json::array({"znse", "ion"})},
         {"products_gprime", json::array({316.2, 1000.0, 3162.0, 10000.0})},
         {"family_sigma_p_over_tau", 0.1},
         {"family_product_gprime", 3162.0},
         {"sigma_p_over_tau_list", json::array({0.1, 0.3, 1.0, 3.0})},
         {"saturation_min", 0.01},
         {"saturation_max", 10.0},
         {"grid_points", 25},
         {"q_factor", 0.0},
         {"tau_nr_ns", 0.0}},
        check_fig10,
        run_fig10};
    return m;
  }();
  return table;
}

// ---------------------------------------------------------------------------
// Drivers

struct CommonOpts {
  std::string output;
  std::string format = "csv";
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 1;
  bool seed_given = false;
  int workers = 0;
};

// Resolves the experiment name and parameter map from defaults, an optional
// config file, and command-line overrides. Meta keys (schema_version,
// experiment, seed) are consumed here.
json resolve_params(const std::string& name, const Experiment& exp,
                    CommonOpts& opts, std::string* resolved_name = nullptr) {
  json params = exp.defaults;
  json file = json::object();
  if (!opts.config_path.empty()) file = parse_config_file(opts.config_path);
  if (file.contains("schema_version")) {
    if (!file["schema_version"].is_number_integer() ||
        file["schema_version"].get<int>() != 1) {
      throw ConfigError("unsupported schema_version (expected 1)");
    }
  } else if (!file.empty()) {
    throw ConfigError("config file must declare schema_version");
  }
  if (file.contains("experiment")) {
    const std::string from_file = file["experiment"].get<std::string>();
    if (name != "custom" && from_file != name) {
      throw ConfigError("config file targets experiment '" + from_file + "'");
    }
    if (resolved_name) *resolved_name = from_file;
  }
  if (file.contains("seed") && !opts.seed_given) {
    opts.seed = file["seed"].get<std::uint64_t>();
  }
  for (const auto& [key, value] : file.items()) {
    if (key == "schema_version" || key == "experiment" || key == "seed") continue;
    params[key] = value;
  }
  apply_overrides(params, opts.overrides);
  for (const auto& [key, value] : params.items()) {
    if (!exp.defaults.contains(key)) {
      throw ConfigError("unknown parameter '" + key + "' for experiment");
    }
    (void)value;
  }
  return params;
}

int run_named_experiment(const std::string& cli_name, CommonOpts opts) {
  std::string name = cli_name;
  if (name == "custom") {
    if (opts.config_path.empty()) {
      throw ConfigError("custom requires --config with an 'experiment' key");
    }
    const json file = parse_config_file(opts.config_path);
    if (!file.contains("experiment")) {
      throw ConfigError("custom config must name its 'experiment'");
    }
    name = file["experiment"].get<std::string>();
  }
  const auto it = experiments().find(name);
  if (it == experiments().end()) {
    throw ConfigError("unknown experiment '" + name + "'");
  }
  const Experiment& exp = it->second;
  const json params = resolve_params(name, exp, opts);
  exp.check(params);

  if (opts.format != "csv" && opts.format != "json") {
    throw ConfigError("format must be csv or json");
  }
  if (opts.output.empty()) opts.output = name + "." + opts.format;

  RunContext ctx;
  ctx.seed = opts.seed;
  ctx.workers = opts.workers;
  json extra = json::object();
  const Table table = exp.run(params, ctx, extra);

  json sidecar;
  sidecar["tool"] = "qbusrep";
  sidecar["version"] = qbr::kVersion;
  sidecar["schema_version"] = 1;
  sidecar["experiment"] = name;
  sidecar["format"] = opts.format;
  sidecar["output"] = opts.output;
  json rerun = params;
  rerun["schema_version"] = 1;
  rerun["experiment"] = name;
  rerun["seed"] = opts.seed;
  sidecar["parameters"] = rerun;
  if (!extra.empty()) sidecar["results"] = extra;

  write_file(opts.output,
             opts.format == "csv" ? render_csv(table) : render_json(table));
  write_file(opts.output + ".meta.json", sidecar.dump(2) + "\n");
  std::cout << opts.output << ": " << table.rows.size() << " rows\n";
  return 0;
}

int run_validate(const std::string& path, const std::string& experiment_flag) {
  json file = parse_config_file(path);
  std::cout << "config: " << path << "\n";

  std::string name = experiment_flag;
  if (file.contains("experiment")) {
    if (!name.empty() && file["experiment"] != name) {
      std::cout << "error: config targets experiment '"
                << file["experiment"].get<std::string>() << "', not '" << name
                << "'\n";
      return 2;
    }
    name = file["experiment"].get<std::string>();
  }

  if (!file.empty() &&
      (!file.contains("schema_version") || file["schema_version"] != 1)) {
    std::cout << "error: config file must declare schema_version 1\n";
    return 2;
  }

  if (name.empty()) {
    // No experiment context: check every provided key against the union of
    // known parameters and echo it.
    std::vector<std::string> unknown;
    for (const auto& [key, value] : file.items()) {
      if (key == "schema_version" || key == "seed") continue;
      bool known = false;
      for (const auto& [ename, exp] : experiments()) {
        if (exp.defaults.contains(key)) known = true;
        (void)ename;
      }
      if (!known) unknown.push_back(key);
      (void)value;
    }
    std::cout << "experiment: (none given; defaults shown per experiment)\n";
    for (const auto& [ename, exp] : experiments()) {
      std::cout << ename << ": " << exp.defaults.size() << " parameters\n";
    }
    if (!unknown.empty()) {
      for (const std::string& k : unknown) {
        std::cout << "error: unknown key '" << k << "'\n";
      }
      return 2;
    }
    std::cout << "ok\n";
    return 0;
  }

  const auto it = experiments().find(name);
  if (it == experiments().end()) {
    std::cout << "error: unknown experiment '" << name << "'\n";
    return 2;
  }
  const Experiment& exp = it->second;
  std::cout << "experiment: " << name << "\n";

  json params = exp.defaults;
  std::vector<std::string> unknown;
  for (const auto& [key, value] : file.items()) {
    if (key == "schema_version" || key == "experiment" || key == "seed") continue;
    if (!exp.defaults.contains(key)) {
      unknown.push_back(key);
      continue;
    }
    params[key] = value;
  }
  for (const auto& [key, value] : params.items()) {
    const bool overridden = file.contains(key);
    std::cout << "  " << key << " = " << value.dump()
              << (overridden ? "  (from config)" : "") << "\n";
  }
  if ((name == "fig9" || name == "fig10") &&
      (params.contains("q_factor") || params.contains("tau_nr_ns"))) {
    // Echo the resolved preset so override effects are visible.
    const auto echo = [&](const std::string& material) {
      const qbr::cqed::EmitterCavityParams p = resolve_preset(material, params);
      std::cout << "  resolved preset " << material << ": g = " << fmt17(p.g)
                << ", kappa = " << fmt17(p.kappa)
                << ", gamma = " << fmt17(p.gamma_cav)
                << ", tau_r = " << fmt17(p.tau_r)
                << ", tau_nr = " << fmt17(p.tau_nr) << "\n";
    };
    try {
      if (name == "fig9") {
        echo(params.at("material").get<std::string>());
      } else {
        for (const json& mj : params.at("materials")) {
          echo(mj.get<std::string>());
        }
      }
    } catch (const ConfigError& e) {
      std::cout << "error: " << e.what() << "\n";
      return 2;
    }
  }
  if (!unknown.empty()) {
    for (const std::string& k : unknown) {
      std::cout << "error: unknown key '" << k << "' for experiment " << name
                << "\n";
    }
    return 2;
  }
  try {
    exp.check(params);
  } catch (const ConfigError& e) {
    std::cout << "error: " << e.what() << "\n";
    return 2;
  }
  std::cout << "ok\n";
  return 0;
}

int run_presets_list() {
  std::cout << "name    lambda_nm  n     Q          tau_r_s      tau_nr_s     "
               "g_rad_s      kappa_rad_s  gamma_rad_s  cooperativity\n";
  for (const qbr::cqed::EmitterCavityParams& p : qbr::cqed::material_presets()) {
    std::printf("%-7s %-10g %-5g %-10g %-12g %-12g %-12g %-12g %-12g %-12g\n",
                p.name.c_str(), p.lambda_nm, p.n_index, p.q_factor, p.tau_r,
                p.tau_nr, p.g, p.kappa, p.gamma_cav,
                qbr::cqed::cooperativity(p));
  }
  return 0;
}

void attach_common(CLI::App* sub, CommonOpts& opts) {
  sub->add_option("--output,-o", opts.output, "Output data file path");
  sub->add_option("--format,-f", opts.format, "Output format: csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
  sub->add_option("--config,-c", opts.config_path, "JSON config file");
  sub->add_option("--override", opts.overrides,
                  "Parameter override key=value (repeatable)");
  sub->add_option("--seed,-s", opts.seed, "Master seed for stochastic runs");
  sub->add_option("--workers,-w", opts.workers,
                  "Worker threads for sweeps (0 = hardware)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qbusrep: bus-mediated repeater simulation toolkit"};
  app.require_subcommand(1);

  std::map<std::string, CommonOpts> opts_by_name;
  int exit_code = 0;

  std::vector<std::string> names;
  for (const auto& entry : experiments()) names.push_back(entry.first);
  names.push_back("custom");

  for (const std::string& name : names) {
    const std::string desc =
        name == "custom" ? "Run an experiment fully described by --config"
                         : experiments().at(name).description;
    CLI::App* sub = app.add_subcommand(name, desc);
    attach_common(sub, opts_by_name[name]);
    sub->callback([&exit_code, &opts_by_name, name, sub]() {
      CommonOpts local = opts_by_name[name];
      local.seed_given = sub->count("--seed") > 0;
      exit_code = run_named_experiment(name, local);
    });
  }

  CLI::App* validate = app.add_subcommand("validate", "Check a config file");
  std::string validate_path;
  std::string validate_experiment;
  validate->add_option("path", validate_path, "Config file to check")->required();
  validate->add_option("--experiment", validate_experiment,
                       "Experiment context when the file names none");
  validate->callback([&]() {
    exit_code = run_validate(validate_path, validate_experiment);
  });

  CLI::App* presets = app.add_subcommand("presets", "Built-in parameter sets");
  CLI::App* presets_list = presets->add_subcommand("list", "Print the presets");
  presets_list->callback([&]() { exit_code = run_presets_list(); });
  presets->require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return exit_code;
}
