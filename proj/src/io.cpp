#include "fusion/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fusion/errors.hpp"
#include "fusion/version.hpp"

namespace fusion {

namespace fs = std::filesystem;

// ---- small file helpers ----

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  require(!ec, "cannot create directory " + path + ": " + ec.message());
}

void copy_file(const std::string& from, const std::string& to) {
  if (fs::weakly_canonical(from) == fs::weakly_canonical(to)) return;
  std::error_code ec;
  fs::copy_file(from, to, fs::copy_options::overwrite_existing, ec);
  require(!ec, "cannot copy " + from + " to " + to + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open " + path + " for writing");
  out << content;
  require(out.good(), "write failed for " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- transforms ----

void TransformSpec::validate() const {
  require(!name.empty(), "design column needs a name");
  require(!source.empty(), "design column " + name + " needs a source column");
  const bool known = op.empty() || op == "identity" || op == "log" || op == "log1p" ||
                     op == "square" || op == "interaction";
  require(known, "unknown transform op '" + op + "' for design column " + name);
  if (op == "interaction")
    require(!source2.empty(), "interaction column " + name + " needs source2");
  else
    require(source2.empty(), "source2 is only valid for interactions (column " + name + ")");
}

double TransformSpec::apply(double a, double b) const {
  if (op.empty() || op == "identity") return a;
  if (op == "log") {
    require(a > 0.0, "log transform of non-positive value in column " + name);
    return std::log(a);
  }
  if (op == "log1p") {
    require(a > -1.0, "log1p transform out of domain in column " + name);
    return std::log1p(a);
  }
  if (op == "square") return a * a;
  if (op == "interaction") return a * b;
  throw validation_error("unknown transform op " + op);
}

// ---- config parsing ----

namespace {

void check_keys(const Json& obj, const std::set<std::string>& allowed,
                const std::string& context) {
  require(obj.is_object(), context + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    require(allowed.count(key) > 0, "unknown key '" + key + "' in " + context);
  }
}

double get_num(const Json& obj, const std::string& key, double fallback) {
  if (!obj.contains(key)) return fallback;
  require(obj[key].is_number(), key + " must be a number");
  return obj[key].get<double>();
}

PCPriorSpec parse_pc(const Json& j, PCKind kind, const std::string& context) {
  check_keys(j, {"threshold", "prob"}, context);
  PCPriorSpec spec;
  spec.kind = kind;
  require(j.contains("threshold"), context + " needs a threshold");
  spec.threshold = j["threshold"].get<double>();
  spec.prob = get_num(j, "prob", 0.5);
  spec.validate();
  return spec;
}

std::vector<double> parse_alpha_grid(const Json& j) {
  std::vector<double> grid;
  if (j.is_array()) {
    for (const auto& v : j) grid.push_back(v.get<double>());
  } else {
    check_keys(j, {"start", "stop", "step"}, "model.alpha_grid");
    const double start = j["start"].get<double>();
    const double stop = j["stop"].get<double>();
    const double step = j["step"].get<double>();
    require(step > 0.0 && stop >= start, "bad alpha grid range");
    for (int i = 0;; ++i) {
      const double v = start + i * step;
      if (v > stop + 1e-9) break;
      grid.push_back(v);
    }
  }
  require(!grid.empty(), "alpha grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i)
    require(grid[i] > grid[i - 1], "alpha grid must be strictly increasing");
  return grid;
}

Domain parse_domain(const Json& j) {
  check_keys(j, {"unit", "boundary", "rect", "to_km"}, "domain");
  Unit unit = Unit::degrees;
  if (j.contains("unit")) {
    const std::string u = j["unit"].get<std::string>();
    require(u == "degrees" || u == "km", "domain.unit must be 'degrees' or 'km'");
    unit = u == "km" ? Unit::km : Unit::degrees;
  }
  require(j.contains("boundary") != j.contains("rect"),
          "domain needs exactly one of 'boundary' or 'rect'");
  if (j.contains("rect")) {
    const auto& r = j["rect"];
    require(r.is_array() && r.size() == 4, "domain.rect must be [x0, y0, x1, y1]");
    return Domain::rectangle(r[0].get<double>(), r[1].get<double>(), r[2].get<double>(),
                             r[3].get<double>(), unit);
  }
  Domain d;
  d.unit = unit;
  for (const auto& p : j["boundary"]) {
    require(p.is_array() && p.size() == 2, "domain boundary entries must be [x, y]");
    d.boundary.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  d.validate();
  return d;
}

SimConfig parse_sim(const Json& j, const Domain& domain, SimulationSection& section) {
  check_keys(j,
             {"scenario", "custom_stations", "replicates", "families", "prior_scenarios",
              "fit", "write_data", "base_seed", "sim_grid", "coarse_grid", "mesh_max_edge",
              "mesh_extension", "dgp"},
             "simulation");
  SimConfig sim;
  sim.domain = domain;
  if (j.contains("scenario")) sim.stations = scenario_from_name(j["scenario"].get<std::string>());
  if (j.contains("custom_stations"))
    for (const auto& p : j["custom_stations"])
      sim.custom_stations.push_back({p[0].get<double>(), p[1].get<double>()});
  if (j.contains("base_seed")) sim.base_seed = j["base_seed"].get<long>();
  if (j.contains("sim_grid")) {
    sim.sim_grid_nx = j["sim_grid"][0].get<int>();
    sim.sim_grid_ny = j["sim_grid"][1].get<int>();
  }
  if (j.contains("coarse_grid")) {
    sim.coarse_nx = j["coarse_grid"][0].get<int>();
    sim.coarse_ny = j["coarse_grid"][1].get<int>();
  }
  sim.mesh_max_edge = get_num(j, "mesh_max_edge", sim.mesh_max_edge);
  sim.mesh_extension = get_num(j, "mesh_extension", sim.mesh_extension);
  if (j.contains("dgp")) {
    const Json& d = j["dgp"];
    check_keys(d,
               {"covariate_range", "covariate_sd", "latent_range", "latent_sd", "bias_range",
                "bias_sd", "intercept", "slope", "noise_var_stations", "noise_var_grid",
                "mult_bias"},
               "simulation.dgp");
    sim.covariate_field.range = get_num(d, "covariate_range", sim.covariate_field.range);
    sim.covariate_field.sd = get_num(d, "covariate_sd", sim.covariate_field.sd);
    sim.latent_field.range = get_num(d, "latent_range", sim.latent_field.range);
    sim.latent_field.sd = get_num(d, "latent_sd", sim.latent_field.sd);
    sim.bias_field.range = get_num(d, "bias_range", sim.bias_field.range);
    sim.bias_field.sd = get_num(d, "bias_sd", sim.bias_field.sd);
    sim.fe_intercept = get_num(d, "intercept", sim.fe_intercept);
    sim.fe_slope = get_num(d, "slope", sim.fe_slope);
    sim.noise_var_stations = get_num(d, "noise_var_stations", sim.noise_var_stations);
    sim.noise_var_grid = get_num(d, "noise_var_grid", sim.noise_var_grid);
    sim.mult_bias = get_num(d, "mult_bias", sim.mult_bias);
  }
  if (j.contains("replicates")) section.replicates = j["replicates"].get<int>();
  if (j.contains("fit")) section.fit = j["fit"].get<bool>();
  if (j.contains("write_data")) section.write_data = j["write_data"].get<bool>();
  if (j.contains("families")) {
    section.families.clear();
    for (const auto& f : j["families"])
      section.families.push_back(family_from_name(f.get<std::string>()));
  }
  if (j.contains("prior_scenarios")) {
    section.prior_scenarios.clear();
    for (const auto& p : j["prior_scenarios"])
      section.prior_scenarios.push_back(prior_scenario_from_name(p.get<std::string>()));
  }
  sim.validate();
  return sim;
}

}  // namespace

double RunConfig::mesh_max_edge() const {
  if (mesh.max_edge) return *mesh.max_edge;
  const HyperPriorSet& p = require_priors();
  // prior median of the range; threshold itself when prob = 0.5
  const double median = p.latent_range.rate() / std::log(2.0);
  return median / 5.0;
}

double RunConfig::mesh_extension() const {
  if (mesh.extension) return *mesh.extension;
  const HyperPriorSet& p = require_priors();
  return p.latent_range.rate() / std::log(2.0);
}

const HyperPriorSet& RunConfig::require_priors() const {
  require(priors.has_value(), "config is missing the 'priors' section");
  return *priors;
}

RunConfig parse_config(const Json& doc) {
  // software_version appears in echoed configs; accepted and ignored
  check_keys(doc,
             {"seed", "threads", "out", "domain", "mesh", "model", "covariates", "priors",
              "optimizer", "lgocv", "simulation", "software_version"},
             "config");
  RunConfig cfg;
  if (doc.contains("seed")) cfg.seed = doc["seed"].get<long>();
  if (doc.contains("threads")) {
    cfg.threads = doc["threads"].get<int>();
    require(cfg.threads >= 1, "threads must be at least 1");
  }
  if (doc.contains("out")) cfg.out = doc["out"].get<std::string>();

  if (doc.contains("domain")) {
    cfg.domain.domain = parse_domain(doc["domain"]);
    if (doc["domain"].contains("to_km")) cfg.domain.to_km = doc["domain"]["to_km"].get<bool>();
    if (cfg.domain.to_km) {
      require(cfg.domain.domain.unit == Unit::degrees,
              "to_km requires a domain in degrees");
      cfg.domain.domain = degrees_to_km(cfg.domain.domain);
    }
  }

  if (doc.contains("mesh")) {
    const Json& m = doc["mesh"];
    check_keys(m, {"max_edge", "extension", "band_coarsening", "max_vertices"}, "mesh");
    if (m.contains("max_edge")) cfg.mesh.max_edge = m["max_edge"].get<double>();
    if (m.contains("extension")) cfg.mesh.extension = m["extension"].get<double>();
    cfg.mesh.band_coarsening = get_num(m, "band_coarsening", cfg.mesh.band_coarsening);
    if (m.contains("max_vertices")) cfg.mesh.max_vertices = m["max_vertices"].get<int>();
  }

  if (doc.contains("model")) {
    const Json& m = doc["model"];
    check_keys(m, {"family", "alpha_grid", "alpha_prior", "theta_grid"}, "model");
    if (m.contains("family")) cfg.model.family = family_from_name(m["family"].get<std::string>());
    if (m.contains("alpha_grid")) cfg.model.alpha_grid = parse_alpha_grid(m["alpha_grid"]);
    if (m.contains("alpha_prior")) {
      if (m["alpha_prior"].is_string())
        require(m["alpha_prior"].get<std::string>() == "uniform",
                "alpha_prior must be 'uniform' or an array of weights");
      else
        for (const auto& w : m["alpha_prior"])
          cfg.model.alpha_prior_weights.push_back(w.get<double>());
    }
    if (m.contains("theta_grid")) cfg.model.theta_grid = m["theta_grid"].get<bool>();
  }

  if (doc.contains("covariates")) {
    const Json& c = doc["covariates"];
    check_keys(c, {"intercept", "design"}, "covariates");
    if (c.contains("intercept")) cfg.covariates.intercept = c["intercept"].get<bool>();
    if (c.contains("design"))
      for (const auto& d : c["design"]) {
        check_keys(d, {"name", "source", "op", "source2"}, "covariates.design entry");
        TransformSpec spec;
        spec.name = d.value("name", "");
        spec.source = d.value("source", "");
        spec.op = d.value("op", "");
        spec.source2 = d.value("source2", "");
        if (spec.name.empty()) spec.name = spec.source;
        spec.validate();
        cfg.covariates.design.push_back(spec);
      }
  }

  if (doc.contains("priors")) {
    const Json& p = doc["priors"];
    check_keys(p,
               {"noise_stations", "noise_grid", "latent_sd", "latent_range", "bias_sd",
                "bias_range", "ar", "fixed_effect_precision"},
               "priors");
    HyperPriorSet set;
    require(p.contains("noise_stations") && p.contains("latent_sd") &&
                p.contains("latent_range"),
            "priors needs at least noise_stations, latent_sd, latent_range");
    set.noise_stations = parse_pc(p["noise_stations"], PCKind::sd_upper, "priors.noise_stations");
    set.latent_sd = parse_pc(p["latent_sd"], PCKind::sd_upper, "priors.latent_sd");
    set.latent_range = parse_pc(p["latent_range"], PCKind::range_lower, "priors.latent_range");
    set.noise_grid = p.contains("noise_grid")
                         ? parse_pc(p["noise_grid"], PCKind::sd_upper, "priors.noise_grid")
                         : set.noise_stations;
    set.bias_sd = p.contains("bias_sd")
                      ? parse_pc(p["bias_sd"], PCKind::sd_upper, "priors.bias_sd")
                      : set.latent_sd;
    set.bias_range = p.contains("bias_range")
                         ? parse_pc(p["bias_range"], PCKind::range_lower, "priors.bias_range")
                         : set.latent_range;
    if (p.contains("ar")) {
      if (p["ar"].is_string()) {
        require(p["ar"].get<std::string>() == "uniform", "priors.ar must be 'uniform' or a pc spec");
      } else {
        check_keys(p["ar"], {"kind", "threshold", "prob"}, "priors.ar");
        require(p["ar"].value("kind", "") == "pc_correlation",
                "priors.ar.kind must be pc_correlation");
        set.ar_prior.kind = ArPriorKind::pc_correlation;
        set.ar_prior.threshold = p["ar"]["threshold"].get<double>();
        set.ar_prior.prob = get_num(p["ar"], "prob", 0.5);
      }
    }
    set.fixed_effect_precision = get_num(p, "fixed_effect_precision", 1e-6);
    set.validate();
    cfg.priors = set;
  }

  if (doc.contains("optimizer")) {
    const Json& o = doc["optimizer"];
    check_keys(o, {"max_iters", "tol", "restarts", "init_step"}, "optimizer");
    if (o.contains("max_iters")) cfg.optim.max_iters = o["max_iters"].get<int>();
    cfg.optim.f_tol = get_num(o, "tol", cfg.optim.f_tol);
    if (o.contains("restarts")) cfg.optim.restarts = o["restarts"].get<int>();
    cfg.optim.init_step = get_num(o, "init_step", cfg.optim.init_step);
    require(cfg.optim.max_iters >= 1 && cfg.optim.f_tol > 0.0 && cfg.optim.restarts >= 0,
            "bad optimizer settings");
  }

  if (doc.contains("lgocv")) {
    check_keys(doc["lgocv"], {"radii"}, "lgocv");
    if (doc["lgocv"].contains("radii")) {
      cfg.lgocv_radii.clear();
      for (const auto& r : doc["lgocv"]["radii"]) {
        cfg.lgocv_radii.push_back(r.get<double>());
        require(cfg.lgocv_radii.back() > 0.0, "lgocv radii must be positive");
      }
      require(!cfg.lgocv_radii.empty(), "lgocv.radii is empty");
    }
  }

  cfg.simulation.sim.domain = cfg.domain.domain;
  if (doc.contains("simulation"))
    cfg.simulation.sim = parse_sim(doc["simulation"], cfg.domain.domain, cfg.simulation);

  return cfg;
}

RunConfig load_config(const std::string& path) {
  Json doc;
  try {
    doc = Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw validation_error("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

RunConfig load_config(const std::string& path, const Json& overrides) {
  Json doc;
  try {
    doc = Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw validation_error("config " + path + " is not valid JSON: " + e.what());
  }
  require(overrides.is_object() || overrides.is_null(), "overrides must be an object");
  if (overrides.is_object())
    for (const auto& [key, value] : overrides.items()) doc[key] = value;
  return parse_config(doc);
}

namespace {

Json pc_json(const PCPriorSpec& s) {
  return Json{{"threshold", s.threshold}, {"prob", s.prob}};
}

Json theta_json(const HyperPoint& th) {
  return Json{{"noise_sd_stations", th.noise_sd_stations},
              {"noise_sd_grid", th.noise_sd_grid},
              {"latent_sd", th.latent_sd},
              {"latent_range", th.latent_range},
              {"latent_ar", th.latent_ar},
              {"bias_sd", th.bias_sd},
              {"bias_range", th.bias_range},
              {"bias_ar", th.bias_ar}};
}

HyperPoint theta_from_json(const Json& j) {
  HyperPoint th;
  th.noise_sd_stations = j["noise_sd_stations"].get<double>();
  th.noise_sd_grid = j["noise_sd_grid"].get<double>();
  th.latent_sd = j["latent_sd"].get<double>();
  th.latent_range = j["latent_range"].get<double>();
  th.latent_ar = j["latent_ar"].get<double>();
  th.bias_sd = j["bias_sd"].get<double>();
  th.bias_range = j["bias_range"].get<double>();
  th.bias_ar = j["bias_ar"].get<double>();
  return th;
}

}  // namespace

Json resolved_config_json(const RunConfig& cfg) {
  Json doc;
  doc["seed"] = cfg.seed;
  doc["threads"] = cfg.threads;
  doc["out"] = cfg.out;

  Json boundary = Json::array();
  for (const Point& p : cfg.domain.domain.boundary) boundary.push_back({p.x, p.y});
  doc["domain"] = {{"unit", cfg.domain.domain.unit == Unit::km ? "km" : "degrees"},
                   {"boundary", boundary}};

  Json mesh;
  if (cfg.priors.has_value() || cfg.mesh.max_edge) mesh["max_edge"] = cfg.mesh_max_edge();
  if (cfg.priors.has_value() || cfg.mesh.extension) mesh["extension"] = cfg.mesh_extension();
  mesh["band_coarsening"] = cfg.mesh.band_coarsening;
  mesh["max_vertices"] = cfg.mesh.max_vertices;
  doc["mesh"] = mesh;

  doc["model"] = {{"family", family_name(cfg.model.family)},
                  {"alpha_grid", cfg.model.alpha_grid},
                  {"theta_grid", cfg.model.theta_grid}};
  if (!cfg.model.alpha_prior_weights.empty())
    doc["model"]["alpha_prior"] = cfg.model.alpha_prior_weights;
  else
    doc["model"]["alpha_prior"] = "uniform";

  Json design = Json::array();
  for (const TransformSpec& t : cfg.covariates.design) {
    Json d{{"name", t.name}, {"source", t.source}};
    if (!t.op.empty()) d["op"] = t.op;
    if (!t.source2.empty()) d["source2"] = t.source2;
    design.push_back(d);
  }
  doc["covariates"] = {{"intercept", cfg.covariates.intercept}, {"design", design}};

  if (cfg.priors.has_value()) {
    const HyperPriorSet& p = *cfg.priors;
    Json pj{{"noise_stations", pc_json(p.noise_stations)},
            {"noise_grid", pc_json(p.noise_grid)},
            {"latent_sd", pc_json(p.latent_sd)},
            {"latent_range", pc_json(p.latent_range)},
            {"bias_sd", pc_json(p.bias_sd)},
            {"bias_range", pc_json(p.bias_range)},
            {"fixed_effect_precision", p.fixed_effect_precision}};
    if (p.ar_prior.kind == ArPriorKind::uniform)
      pj["ar"] = "uniform";
    else
      pj["ar"] = {{"kind", "pc_correlation"},
                  {"threshold", p.ar_prior.threshold},
                  {"prob", p.ar_prior.prob}};
    doc["priors"] = pj;
  }

  doc["optimizer"] = {{"max_iters", cfg.optim.max_iters},
                      {"tol", cfg.optim.f_tol},
                      {"restarts", cfg.optim.restarts},
                      {"init_step", cfg.optim.init_step}};
  doc["lgocv"] = {{"radii", cfg.lgocv_radii}};

  const SimulationSection& s = cfg.simulation;
  Json families = Json::array();
  for (ModelFamily f : s.families) families.push_back(family_name(f));
  Json scenarios = Json::array();
  for (PriorScenario p : s.prior_scenarios) scenarios.push_back(prior_scenario_name(p));
  doc["simulation"] = {
      {"scenario", scenario_name(s.sim.stations)},
      {"replicates", s.replicates},
      {"fit", s.fit},
      {"write_data", s.write_data},
      {"families", families},
      {"prior_scenarios", scenarios},
      {"base_seed", s.sim.base_seed},
      {"sim_grid", {s.sim.sim_grid_nx, s.sim.sim_grid_ny}},
      {"coarse_grid", {s.sim.coarse_nx, s.sim.coarse_ny}},
      {"mesh_max_edge", s.sim.mesh_max_edge},
      {"mesh_extension", s.sim.mesh_extension},
      {"dgp",
       {{"covariate_range", s.sim.covariate_field.range},
        {"covariate_sd", s.sim.covariate_field.sd},
        {"latent_range", s.sim.latent_field.range},
        {"latent_sd", s.sim.latent_field.sd},
        {"bias_range", s.sim.bias_field.range},
        {"bias_sd", s.sim.bias_field.sd},
        {"intercept", s.sim.fe_intercept},
        {"slope", s.sim.fe_slope},
        {"noise_var_stations", s.sim.noise_var_stations},
        {"noise_var_grid", s.sim.noise_var_grid},
        {"mult_bias", s.sim.mult_bias}}}};
  doc["software_version"] = kVersion;
  return doc;
}

// ---- CSV ingestion ----

int CsvFile::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // raw cells
  std::vector<long> line_numbers;

  int column(const std::string& name, const std::string& path) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw validation_error(path + ": missing required column '" + name + "'");
  }
  int column_or_missing(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell += ch;
    }
  }
  cells.push_back(cell);
  return cells;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  CsvTable table;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    auto cells = split_csv_line(line);
    if (line_no == 1) {
      table.header = cells;
      continue;
    }
    require(cells.size() == table.header.size(),
            path + ": line " + std::to_string(line_no) + " has " +
                std::to_string(cells.size()) + " cells, expected " +
                std::to_string(table.header.size()));
    table.rows.push_back(std::move(cells));
    table.line_numbers.push_back(line_no);
  }
  require(!table.header.empty(), path + ": empty file");
  return table;
}

double parse_num(const std::string& cell, const std::string& path, long line,
                 const std::string& col) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &pos);
  } catch (...) {
    throw validation_error(path + ": line " + std::to_string(line) +
                           ": cannot parse number in column '" + col + "' (got '" + cell +
                           "')");
  }
  require(pos == cell.size(), path + ": line " + std::to_string(line) +
                                  ": trailing characters in column '" + col + "'");
  return v;
}

struct RawSource {
  std::vector<std::string> ids;
  std::vector<Point> points;
  std::map<std::string, int> id_index;
  // (loc, t) -> (value or NaN, raw covariate cells by column name)
  std::map<std::pair<int, int>, double> values;
  std::map<std::pair<int, int>, std::map<std::string, double>> raw;
  std::set<int> times;
};

RawSource read_source(const std::string& path, const std::string& id_col,
                      const std::vector<std::string>& raw_columns) {
  RawSource src;
  if (path.empty()) return src;
  const CsvTable table = read_csv(path);
  const int ci = table.column(id_col, path);
  const int cx = table.column("x", path);
  const int cy = table.column("y", path);
  const int ct = table.column("t", path);
  const int cv = table.column("value", path);
  std::vector<std::pair<std::string, int>> raw_cols;
  for (const std::string& rc : raw_columns) {
    const int c = table.column(rc, path);
    raw_cols.emplace_back(rc, c);
  }

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const long line = table.line_numbers[r];
    const std::string id = row[ci];
    require(!id.empty(), path + ": line " + std::to_string(line) + ": empty id");
    const double x = parse_num(row[cx], path, line, "x");
    const double y = parse_num(row[cy], path, line, "y");
    const double traw = parse_num(row[ct], path, line, "t");
    require(traw == std::floor(traw) && traw >= 1,
            path + ": line " + std::to_string(line) + ": t must be a positive integer");
    const int t = static_cast<int>(traw);

    int loc;
    auto it = src.id_index.find(id);
    if (it == src.id_index.end()) {
      loc = static_cast<int>(src.ids.size());
      src.id_index[id] = loc;
      src.ids.push_back(id);
      src.points.push_back({x, y});
    } else {
      loc = it->second;
      require(src.points[loc].x == x && src.points[loc].y == y,
              path + ": line " + std::to_string(line) + ": id '" + id +
                  "' re-appears with different coordinates");
    }
    const auto key = std::make_pair(loc, t);
    require(src.values.find(key) == src.values.end(),
            path + ": line " + std::to_string(line) + ": duplicate (id, t) record for '" +
                id + "', t=" + std::to_string(t));
    src.values[key] = row[cv].empty() ? std::numeric_limits<double>::quiet_NaN()
                                      : parse_num(row[cv], path, line, "value");
    std::map<std::string, double> raw_vals;
    for (const auto& [name, col] : raw_cols) {
      const std::string& cell = row[col];
      raw_vals[name] = cell.empty() ? std::numeric_limits<double>::quiet_NaN()
                                    : parse_num(cell, path, line, name);
    }
    src.raw[key] = std::move(raw_vals);
    src.times.insert(t);
  }
  return src;
}

std::vector<std::string> raw_columns_needed(const CovariateConfig& cov) {
  std::set<std::string> cols;
  for (const TransformSpec& t : cov.design) {
    cols.insert(t.source);
    if (!t.source2.empty()) cols.insert(t.source2);
  }
  return {cols.begin(), cols.end()};
}

SourceData build_source(const RawSource& raw, const CovariateConfig& cov, int n_times,
                        const std::string& which) {
  SourceData out;
  out.ids = raw.ids;
  out.points = raw.points;
  const int n = static_cast<int>(raw.ids.size());
  if (n == 0) return out;
  out.values = Eigen::MatrixXd::Constant(n, n_times, std::numeric_limits<double>::quiet_NaN());
  const int n_design = static_cast<int>(cov.design.size()) + (cov.intercept ? 1 : 0);
  out.covariates.assign(n_design,
                        Eigen::MatrixXd::Constant(n, n_times,
                                                  std::numeric_limits<double>::quiet_NaN()));
  for (const auto& [key, value] : raw.values) {
    const auto [loc, t] = key;
    require(t <= n_times, which + ": time index beyond the shared axis");
    out.values(loc, t - 1) = value;
    const auto& cells = raw.raw.at(key);
    int k = 0;
    if (cov.intercept) out.covariates[k++](loc, t - 1) = 1.0;
    for (const TransformSpec& spec : cov.design) {
      const double a = cells.at(spec.source);
      const double b = spec.source2.empty() ? 0.0 : cells.at(spec.source2);
      double v = std::numeric_limits<double>::quiet_NaN();
      if (std::isfinite(a) && (spec.source2.empty() || std::isfinite(b))) v = spec.apply(a, b);
      // covariates must exist wherever the value is observed
      if (std::isfinite(value))
        require(std::isfinite(v), which + ": missing covariate '" + spec.source +
                                      "' where a value is observed (id " + raw.ids[loc] +
                                      ", t=" + std::to_string(t) + ")");
      out.covariates[k++](loc, t - 1) = v;
    }
  }
  return out;
}

}  // namespace

CsvFile read_csv_file(const std::string& path) {
  const CsvTable table = read_csv(path);
  CsvFile out;
  out.header = table.header;
  out.rows = table.rows;
  return out;
}

ObservationSet read_observations(const std::string& stations_csv,
                                 const std::string& grid_csv, const RunConfig& cfg) {
  const std::vector<std::string> raw_cols = raw_columns_needed(cfg.covariates);
  RawSource stations = read_source(stations_csv, "station_id", raw_cols);
  RawSource grid = read_source(grid_csv, "cell_id", raw_cols);
  require(!stations.ids.empty() || !grid.ids.empty(), "no observations found");

  // shared contiguous time axis; both sources must agree when both present
  std::set<int> all_times = stations.times;
  all_times.insert(grid.times.begin(), grid.times.end());
  require(!all_times.empty(), "no records in the input files");
  const int n_times = *all_times.rbegin();
  require(*all_times.begin() == 1 && static_cast<int>(all_times.size()) == n_times,
          "time indices must form a contiguous axis 1..T");
  if (!stations.times.empty() && !grid.times.empty()) {
    std::vector<int> off;
    for (int t : all_times)
      if (stations.times.count(t) != grid.times.count(t)) off.push_back(t);
    if (!off.empty()) {
      std::string msg = "misaligned time indices between stations and grid:";
      for (int t : off) msg += " " + std::to_string(t);
      throw validation_error(msg);
    }
  }

  ObservationSet data;
  data.n_times = n_times;
  if (cfg.covariates.intercept) data.covariate_names.push_back("intercept");
  for (const TransformSpec& t : cfg.covariates.design) data.covariate_names.push_back(t.name);
  data.stations = build_source(stations, cfg.covariates, n_times, "stations");
  data.grid = build_source(grid, cfg.covariates, n_times, "grid");
  if (cfg.domain.to_km) {
    double lat = 0.0;
    for (const Point& p : cfg.domain.domain.boundary) lat += p.y;
    lat /= static_cast<double>(cfg.domain.domain.boundary.size());
    // input files are in degrees; project to the same km plane as the domain
    for (Point& p : data.stations.points) p = degrees_to_km(p, lat);
    for (Point& p : data.grid.points) p = degrees_to_km(p, lat);
  }
  data.validate();
  return data;
}

std::vector<TargetRow> read_targets(const std::string& path, const RunConfig& cfg,
                                    int n_times) {
  const CsvTable table = read_csv(path);
  const int cx = table.column("x", path);
  const int cy = table.column("y", path);
  const int ct = table.column_or_missing("t");
  std::vector<std::pair<TransformSpec, std::pair<int, int>>> design_cols;
  const bool need_covariates = cfg.model.family != ModelFamily::regression_calibration;
  if (need_covariates)
    for (const TransformSpec& spec : cfg.covariates.design) {
      const int a = table.column(spec.source, path);
      const int b = spec.source2.empty() ? -1 : table.column(spec.source2, path);
      design_cols.emplace_back(spec, std::make_pair(a, b));
    }

  std::vector<TargetRow> targets;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const long line = table.line_numbers[r];
    TargetRow target;
    target.location.x = parse_num(row[cx], path, line, "x");
    target.location.y = parse_num(row[cy], path, line, "y");
    target.t = 1;
    if (ct >= 0) {
      const double traw = parse_num(row[ct], path, line, "t");
      require(traw == std::floor(traw) && traw >= 1,
              path + ": line " + std::to_string(line) + ": t must be a positive integer");
      target.t = static_cast<int>(traw);
    }
    if (target.t > n_times) {
      target.usable = false;
      target.issue = "t_out_of_range";
    }
    const int n_design =
        (cfg.covariates.intercept ? 1 : 0) + static_cast<int>(cfg.covariates.design.size());
    target.covariates.resize(need_covariates ? n_design : 0);
    if (need_covariates) {
      int k = 0;
      if (cfg.covariates.intercept) target.covariates[k++] = 1.0;
      for (const auto& [spec, cols] : design_cols) {
        const double a = parse_num(row[cols.first], path, line, spec.source);
        const double b =
            cols.second >= 0 ? parse_num(row[cols.second], path, line, spec.source2) : 0.0;
        target.covariates[k++] = spec.apply(a, b);
      }
    }
    if (cfg.domain.to_km) {
      double lat = 0.0;
      for (const Point& p : cfg.domain.domain.boundary) lat += p.y;
      lat /= static_cast<double>(cfg.domain.domain.boundary.size());
      target.location = degrees_to_km(target.location, lat);
    }
    targets.push_back(std::move(target));
  }
  require(!targets.empty(), path + ": no target rows");
  return targets;
}

// ---- fitted-model artifact ----

void save_fit(const std::string& dir, const RunConfig& cfg, const ObservationSet& data,
              const Mesh& mesh, const PosteriorEnsemble& ensemble,
              const std::string& stations_csv, const std::string& grid_csv) {
  ensure_dir(dir);
  write_mesh(mesh, dir + "/mesh.txt");
  copy_file(stations_csv, dir + "/stations.csv");
  if (!grid_csv.empty()) copy_file(grid_csv, dir + "/grid.csv");

  Json doc;
  doc["schema_version"] = kArtifactSchemaVersion;
  doc["software_version"] = kVersion;
  doc["command"] = "fit";
  doc["family"] = family_name(ensemble.family);
  doc["n_times"] = data.n_times;
  doc["covariate_names"] = data.covariate_names;
  doc["seed"] = cfg.seed;
  doc["config"] = resolved_config_json(cfg);
  doc["files"] = {{"stations", "stations.csv"},
                  {"grid", grid_csv.empty() ? "" : "grid.csv"},
                  {"mesh", "mesh.txt"}};
  Json members = Json::array();
  for (const EnsembleMember& m : ensemble.members)
    members.push_back(Json{{"mult_bias", m.mult_bias},
                           {"theta", theta_json(m.theta)},
                           {"log_ml", m.log_ml},
                           {"log_prior", m.log_prior},
                           {"weight", m.weight},
                           {"converged", m.converged},
                           {"iterations", m.iterations}});
  doc["members"] = members;
  write_text(dir + "/fit.json", doc.dump(2) + "\n");
}

FitArtifact load_fit(const std::string& dir) {
  const Json doc = Json::parse(read_text(dir + "/fit.json"));
  require(doc.value("schema_version", -1) == kArtifactSchemaVersion,
          "unsupported fit artifact schema in " + dir);
  FitArtifact art;
  art.dir = dir;
  art.config = parse_config(doc["config"]);
  // the stored config echoes resolved values; re-parsing must not re-apply unit conversion
  art.config.domain.to_km = false;
  art.mesh = read_mesh(dir + "/" + doc["files"]["mesh"].get<std::string>());
  const std::string grid_rel = doc["files"]["grid"].get<std::string>();
  art.data = read_observations(dir + "/" + doc["files"]["stations"].get<std::string>(),
                               grid_rel.empty() ? "" : dir + "/" + grid_rel, art.config);
  art.ensemble.family = family_from_name(doc["family"].get<std::string>());
  for (const Json& mj : doc["members"]) {
    EnsembleMember mem;
    mem.mult_bias = mj["mult_bias"].get<double>();
    mem.theta = theta_from_json(mj["theta"]);
    mem.log_ml = mj["log_ml"].get<double>();
    mem.log_prior = mj["log_prior"].get<double>();
    mem.weight = mj["weight"].get<double>();
    mem.converged = mj["converged"].get<bool>();
    mem.iterations = mj["iterations"].get<int>();
    mem.assembler = std::make_shared<SystemAssembler>(
        art.ensemble.family, art.data, art.mesh,
        art.config.require_priors().fixed_effect_precision, mem.mult_bias);
    mem.posterior = condition(mem.assembler->assemble(mem.theta));
    art.ensemble.members.push_back(std::move(mem));
  }
  require(!art.ensemble.members.empty(), "fit artifact has no ensemble members");
  return art;
}

}  // namespace fusion
