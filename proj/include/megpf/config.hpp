#ifndef MEGPF_CONFIG_HPP
#define MEGPF_CONFIG_HPP

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "megpf/geometry.hpp"
#include "megpf/model.hpp"
#include "megpf/proposals.hpp"
#include "megpf/smc.hpp"
#include "megpf/synthgen.hpp"

namespace megpf {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Minimal INI/TOML-style config: `[section]` headers, `key = value` pairs,
/// `#` comments, quoted or bare scalar values. Parsing keeps raw strings;
/// typed getters convert on access and throw ConfigError on bad syntax.
class ConfigFile {
 public:
  static ConfigFile parse_string(const std::string& text);
  static ConfigFile parse_file(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  std::vector<std::string> sections() const;
  std::vector<std::string> keys(const std::string& section) const;

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  std::int64_t get_int(const std::string& section, const std::string& key,
                       std::int64_t fallback) const;
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;

  /// Throws ConfigError when the section holds a key outside `allowed`.
  void require_known(const std::string& section,
                     const std::vector<std::string>& allowed) const;

 private:
  const std::string* find(const std::string& section,
                          const std::string& key) const;
  std::map<std::string, std::map<std::string, std::string>> data_;
};

/// Filter variants wired from a single config name.
struct VariantSpec {
  ProposalKind proposal = ProposalKind::Designed;
  ModelKind model = ModelKind::Static;
  bool move_enabled = true;
};

/// Names: static-rm, static-bootstrap, rw-designed, rw-bootstrap.
VariantSpec parse_variant(const std::string& name);
std::string variant_name(const VariantSpec& spec);
std::vector<std::string> variant_names();

/// Pooled: one variance shared by all sensors; PerSensor: one each.
enum class NoisePooling { Pooled, PerSensor };

/// Typed loaders. Each reads one section, applies defaults for missing
/// keys, converts nAm-denominated entries to SI, and rejects unknown keys.
GeometryConfig load_geometry_config(const ConfigFile& cfg);
ModelParams load_model_params(const ConfigFile& cfg);
NoisePooling load_noise_pooling(const ConfigFile& cfg);
ProposalParams load_proposal_params(const ConfigFile& cfg);
FilterConfig load_filter_config(const ConfigFile& cfg);
ScenarioConfig load_scenario_config(const ConfigFile& cfg);

/// Rejects sections other than the recognized ones and unknown keys
/// within each recognized section.
void validate_config(const ConfigFile& cfg);

}  // namespace megpf

#endif  // MEGPF_CONFIG_HPP
