#pragma once

#include <map>
#include <string>
#include <utility>

#include "oscilla/mesh.hpp"
#include "oscilla/model.hpp"

namespace oscilla {

// Flat sectioned key=value run configuration. Every key is declared in a
// registry with a default, so a parsed file only overrides known entries;
// unknown sections or keys are rejected by name. '#' and ';' start comments.
class Config {
 public:
  Config();  // all defaults

  static Config parse_file(const std::string& path);
  static Config parse_text(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key) const;
  int get_int(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key) const;

  // Override one entry (CLI flags); validates the key against the registry.
  void set(const std::string& section, const std::string& key, const std::string& value);

  // Full configuration with defaults materialized, in registry order:
  // reparsing it reproduces this object exactly.
  std::string effective_text() const;

 private:
  std::map<std::pair<std::string, std::string>, std::string> values_;
};

// Conversion helpers from the shared sections to solver inputs.
ModelParams model_params_from(const Config& cfg);
MeshOptions mesh_options_from(const Config& cfg);
BodyGeometry body_geometry_from(const Config& cfg);

}  // namespace oscilla
