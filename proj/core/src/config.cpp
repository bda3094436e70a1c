#include "oscilla/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

#include "oscilla/io.hpp"

namespace oscilla {

namespace {

struct RegistryEntry {
  const char* section;
  const char* key;
  const char* value;  // default
};

// Declaration order is the serialization order of effective_text().
const std::vector<RegistryEntry>& registry() {
  static const std::vector<RegistryEntry> entries = {
      {"model", "lambda", "46.0"},
      {"model", "varpi", "1.0"},
      {"model", "a11", "1.0"},
      {"model", "a12", "0.0"},
      {"model", "a22", "1.0"},
      {"model", "omega", "0.0"},  // if positive, overrides the stiffness to omega^2 I
      {"mesh", "diameter", "1.0"},
      {"mesh", "r_trunc", "30.0"},
      {"mesh", "n_theta", "96"},
      {"mesh", "grading", "1.2"},
      {"mesh", "near_factor", "0.5"},
      {"mesh", "wake_half_angle_deg", "20.0"},
      {"mesh", "wake_strength", "2.0"},
      {"steady", "tol", "1e-11"},
      {"steady", "max_newton", "30"},
      {"steady", "lambda_first", "2.0"},
      {"steady", "dlambda_max", "20.0"},
      {"eigs", "zeta_min", "0.2"},
      {"eigs", "zeta_max", "3.0"},
      {"eigs", "n_shifts", "7"},
      {"eigs", "arnoldi_m", "60"},
      {"eigs", "tol", "1e-9"},
      {"hopf", "lambda_lo", "40.0"},
      {"hopf", "lambda_hi", "55.0"},
      {"hopf", "tol_re", "1e-8"},
      {"modes", "kmax", "8"},
      {"branch", "epsilon_max", "0.2"},
      {"branch", "points", "9"},
      {"branch", "kmax", "6"},
      {"branch", "tol", "1e-9"},
      {"simulate", "tfinal", "100.0"},
      {"simulate", "dt", "0.02"},
      {"simulate", "mu", "0.0"},
      {"simulate", "init_amplitude", "0.05"},
      {"simulate", "stride", "5"},
      {"output", "dir", "out"},
      {"output", "seed", "1234"},
      {"output", "jobs", "1"},
  };
  return entries;
}

bool known(const std::string& section, const std::string& key) {
  for (const RegistryEntry& e : registry())
    if (section == e.section && key == e.key) return true;
  return false;
}

bool known_section(const std::string& section) {
  for (const RegistryEntry& e : registry())
    if (section == e.section) return true;
  return false;
}

std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config::Config() {
  for (const RegistryEntry& e : registry()) values_[{e.section, e.key}] = e.value;
}

Config Config::parse_text(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw validation_error("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      if (!known_section(section))
        throw validation_error("config line " + std::to_string(lineno) + ": unknown section [" +
                               section + "]");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw validation_error("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw validation_error("config line " + std::to_string(lineno) + ": empty key");
    if (section.empty())
      throw validation_error("config line " + std::to_string(lineno) + ": key '" + key +
                             "' outside any section");
    cfg.set(section, key, value);
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  return parse_text(read_text_file(path));
}

bool Config::has(const std::string& section, const std::string& key) const {
  return known(section, key);
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
  if (!known(section, key))
    throw validation_error("unknown configuration key '" + key + "' in section [" + section + "]");
  values_[{section, key}] = value;
}

std::string Config::get_string(const std::string& section, const std::string& key) const {
  const auto it = values_.find({section, key});
  if (it == values_.end())
    throw validation_error("unknown configuration key '" + key + "' in section [" + section + "]");
  return it->second;
}

double Config::get_double(const std::string& section, const std::string& key) const {
  const std::string raw = get_string(section, key);
  char* end = nullptr;
  const double v = std::strtod(raw.c_str(), &end);
  if (end == raw.c_str() || *end != '\0')
    throw validation_error("configuration key '" + key + "' in [" + section +
                           "] is not a number: '" + raw + "'");
  return v;
}

int Config::get_int(const std::string& section, const std::string& key) const {
  const std::string raw = get_string(section, key);
  char* end = nullptr;
  const long v = std::strtol(raw.c_str(), &end, 10);
  if (end == raw.c_str() || *end != '\0')
    throw validation_error("configuration key '" + key + "' in [" + section +
                           "] is not an integer: '" + raw + "'");
  return static_cast<int>(v);
}

std::string Config::effective_text() const {
  std::ostringstream os;
  std::string section;
  for (const RegistryEntry& e : registry()) {
    if (section != e.section) {
      if (!section.empty()) os << "\n";
      section = e.section;
      os << "[" << section << "]\n";
    }
    os << e.key << " = " << values_.at({e.section, e.key}) << "\n";
  }
  return os.str();
}

ModelParams model_params_from(const Config& cfg) {
  ModelParams p;
  p.d = 2;
  p.lambda = cfg.get_double("model", "lambda");
  p.varpi = cfg.get_double("model", "varpi");
  const double omega = cfg.get_double("model", "omega");
  p.A = Mat::Zero(2, 2);
  if (omega > 0.0) {
    p.A(0, 0) = p.A(1, 1) = omega * omega;
  } else {
    p.A(0, 0) = cfg.get_double("model", "a11");
    p.A(0, 1) = p.A(1, 0) = cfg.get_double("model", "a12");
    p.A(1, 1) = cfg.get_double("model", "a22");
  }
  return p;
}

MeshOptions mesh_options_from(const Config& cfg) {
  MeshOptions opts;
  opts.R_trunc = cfg.get_double("mesh", "r_trunc");
  opts.n_theta = cfg.get_int("mesh", "n_theta");
  opts.grading = cfg.get_double("mesh", "grading");
  opts.near_factor = cfg.get_double("mesh", "near_factor");
  opts.wake_half_angle_deg = cfg.get_double("mesh", "wake_half_angle_deg");
  opts.wake_strength = cfg.get_double("mesh", "wake_strength");
  return opts;
}

BodyGeometry body_geometry_from(const Config& cfg) {
  BodyGeometry geom;
  geom.kind = BodyGeometry::Kind::circle;
  geom.diameter = cfg.get_double("mesh", "diameter");
  return geom;
}

}  // namespace oscilla
