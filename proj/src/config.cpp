#include "megpf/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "megpf/io.hpp"

namespace megpf {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
          c == '-' || c == '.')) {
      return false;
    }
  }
  return true;
}

// Removes a trailing comment, honoring double quotes.
std::string strip_comment(const std::string& s) {
  bool in_quotes = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_quotes = !in_quotes;
    if (s[i] == '#' && !in_quotes) return s.substr(0, i);
  }
  return s;
}

std::string unquote(const std::string& raw, int line_no) {
  if (raw.size() < 2 || raw.back() != '"') {
    throw ConfigError("config line " + std::to_string(line_no) +
                      ": unterminated string");
  }
  std::string out;
  for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
    if (raw[i] == '\\' && i + 2 < raw.size()) {
      ++i;
      if (raw[i] == '"' || raw[i] == '\\') {
        out.push_back(raw[i]);
        continue;
      }
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": unsupported escape");
    }
    out.push_back(raw[i]);
  }
  return out;
}

}  // namespace

ConfigFile ConfigFile::parse_string(const std::string& text) {
  ConfigFile cfg;
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;

    line = trim(strip_comment(line));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (!valid_name(section)) {
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": invalid section name");
      }
      cfg.data_[section];  // register even if empty
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!valid_name(key)) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": invalid key name");
    }
    if (section.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": key outside of any [section]");
    }
    if (value.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty value for key '" + key + "'");
    }
    if (value.front() == '"') value = unquote(value, line_no);
    auto& sec = cfg.data_[section];
    if (sec.count(key)) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": duplicate key '" + key + "'");
    }
    sec[key] = value;
  }
  return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
  return parse_string(read_text_file(path));
}

const std::string* ConfigFile::find(const std::string& section,
                                    const std::string& key) const {
  auto sit = data_.find(section);
  if (sit == data_.end()) return nullptr;
  auto kit = sit->second.find(key);
  if (kit == sit->second.end()) return nullptr;
  return &kit->second;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::vector<std::string> ConfigFile::sections() const {
  std::vector<std::string> out;
  for (const auto& kv : data_) out.push_back(kv.first);
  return out;
}

std::vector<std::string> ConfigFile::keys(const std::string& section) const {
  std::vector<std::string> out;
  auto sit = data_.find(section);
  if (sit == data_.end()) return out;
  for (const auto& kv : sit->second) out.push_back(kv.first);
  return out;
}

std::string ConfigFile::get_string(const std::string& section,
                                   const std::string& key,
                                   const std::string& fallback) const {
  const std::string* v = find(section, key);
  return v ? *v : fallback;
}

double ConfigFile::get_double(const std::string& section,
                              const std::string& key, double fallback) const {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  char* end = nullptr;
  const double d = std::strtod(v->c_str(), &end);
  if (end == v->c_str() || *end != '\0') {
    throw ConfigError("config [" + section + "] " + key +
                      ": expected a number, got '" + *v + "'");
  }
  return d;
}

std::int64_t ConfigFile::get_int(const std::string& section,
                                 const std::string& key,
                                 std::int64_t fallback) const {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  char* end = nullptr;
  const long long d = std::strtoll(v->c_str(), &end, 10);
  if (end == v->c_str() || *end != '\0') {
    throw ConfigError("config [" + section + "] " + key +
                      ": expected an integer, got '" + *v + "'");
  }
  return d;
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  if (*v == "true") return true;
  if (*v == "false") return false;
  throw ConfigError("config [" + section + "] " + key +
                    ": expected true or false, got '" + *v + "'");
}

void ConfigFile::require_known(const std::string& section,
                               const std::vector<std::string>& allowed) const {
  auto sit = data_.find(section);
  if (sit == data_.end()) return;
  for (const auto& kv : sit->second) {
    if (std::find(allowed.begin(), allowed.end(), kv.first) == allowed.end()) {
      throw ConfigError("config [" + section + "]: unknown key '" + kv.first +
                        "'");
    }
  }
}

VariantSpec parse_variant(const std::string& name) {
  VariantSpec v;
  if (name == "static-rm") {
    v = {ProposalKind::Designed, ModelKind::Static, true};
  } else if (name == "static-bootstrap") {
    v = {ProposalKind::Bootstrap, ModelKind::Static, false};
  } else if (name == "rw-designed") {
    v = {ProposalKind::Designed, ModelKind::RandomWalk, false};
  } else if (name == "rw-bootstrap") {
    v = {ProposalKind::Bootstrap, ModelKind::RandomWalk, false};
  } else {
    throw ConfigError("unknown variant '" + name +
                      "' (expected static-rm, static-bootstrap, rw-designed, "
                      "or rw-bootstrap)");
  }
  return v;
}

std::string variant_name(const VariantSpec& spec) {
  if (spec.model == ModelKind::Static) {
    return spec.proposal == ProposalKind::Designed ? "static-rm"
                                                   : "static-bootstrap";
  }
  return spec.proposal == ProposalKind::Designed ? "rw-designed"
                                                 : "rw-bootstrap";
}

std::vector<std::string> variant_names() {
  return {"static-rm", "static-bootstrap", "rw-designed", "rw-bootstrap"};
}

GeometryConfig load_geometry_config(const ConfigFile& cfg) {
  GeometryConfig g;
  g.conductor_radius_m =
      cfg.get_double("geometry", "conductor_radius_m", g.conductor_radius_m);
  g.source_shell_radius_m = cfg.get_double("geometry", "source_shell_radius_m",
                                           g.source_shell_radius_m);
  g.grid_spacing_m =
      cfg.get_double("geometry", "grid_spacing_m", g.grid_spacing_m);
  g.n_sensors =
      static_cast<int>(cfg.get_int("geometry", "n_sensors", g.n_sensors));
  g.sensor_radius_m =
      cfg.get_double("geometry", "sensor_radius_m", g.sensor_radius_m);
  g.sensor_cap_deg =
      cfg.get_double("geometry", "sensor_cap_deg", g.sensor_cap_deg);
  g.rm_neighbor_radius_m = cfg.get_double("geometry", "rm_neighbor_radius_m",
                                          g.rm_neighbor_radius_m);
  g.rw_neighbor_radius_m = cfg.get_double("geometry", "rw_neighbor_radius_m",
                                          g.rw_neighbor_radius_m);
  g.validate();
  return g;
}

ModelParams load_model_params(const ConfigFile& cfg) {
  ModelParams p;
  p.n_max = static_cast<int>(cfg.get_int("model", "n_max", p.n_max));
  p.p_birth = cfg.get_double("model", "p_birth", p.p_birth);
  p.death_rate = cfg.get_double("model", "death_rate", p.death_rate);
  p.birth_rate_poisson =
      cfg.get_double("model", "birth_rate", p.birth_rate_poisson);
  const double sigma_q_nam = cfg.get_double("model", "sigma_q_nam", 1.0);
  p.sigma_q = sigma_q_nam * 1e-9;
  const double step_std_nam =
      cfg.get_double("model", "moment_step_std_nam", sigma_q_nam / 10.0);
  p.delta_base_var = std::pow(step_std_nam * 1e-9, 2);
  const double birth_std_nam =
      cfg.get_double("model", "birth_moment_std_nam", step_std_nam);
  p.birth_moment_var = std::pow(birth_std_nam * 1e-9, 2);
  p.delta_parallel_factor =
      cfg.get_double("model", "parallel_factor", p.delta_parallel_factor);
  p.rw_sigma_d = cfg.get_double("model", "rw_sigma_d_m", p.rw_sigma_d);
  p.validate();
  return p;
}

NoisePooling load_noise_pooling(const ConfigFile& cfg) {
  const std::string mode = cfg.get_string("model", "noise_pooling", "pooled");
  if (mode == "pooled") return NoisePooling::Pooled;
  if (mode == "per_sensor") return NoisePooling::PerSensor;
  throw ConfigError(
      "config [model] noise_pooling: expected pooled or per_sensor, got '" +
      mode + "'");
}

ProposalParams load_proposal_params(const ConfigFile& cfg) {
  ProposalParams p;
  p.q_birth = cfg.get_double("proposal", "q_birth", p.q_birth);
  p.depth_gamma = cfg.get_double("proposal", "depth_gamma", p.depth_gamma);
  p.lambda_reg = cfg.get_double("proposal", "lambda_reg", p.lambda_reg);
  p.snr2 = cfg.get_double("proposal", "snr2", p.snr2);
  p.pmf_floor = cfg.get_double("proposal", "pmf_floor", p.pmf_floor);
  p.validate();
  return p;
}

FilterConfig load_filter_config(const ConfigFile& cfg) {
  FilterConfig f;
  f.n_particles =
      static_cast<int>(cfg.get_int("filter", "particles", f.n_particles));
  const VariantSpec spec =
      parse_variant(cfg.get_string("filter", "variant", "static-rm"));
  f.proposal = spec.proposal;
  f.model = spec.model;
  f.move_enabled = spec.move_enabled;
  const std::string resample = cfg.get_string("filter", "resample", "always");
  if (resample == "always") {
    f.resample_every_step = true;
  } else if (resample == "ess") {
    f.resample_every_step = false;
  } else {
    throw ConfigError("config [filter] resample: expected always or ess");
  }
  f.ess_threshold =
      cfg.get_double("filter", "ess_threshold", f.ess_threshold);
  f.seed = static_cast<std::uint64_t>(cfg.get_int("filter", "seed", 0));
  f.workers = static_cast<int>(cfg.get_int("filter", "workers", f.workers));
  f.debug_full_mixture =
      cfg.get_bool("filter", "debug_full_mixture", f.debug_full_mixture);
  f.validate();
  return f;
}

ScenarioConfig load_scenario_config(const ConfigFile& cfg) {
  ScenarioConfig s;
  s.n_datasets =
      static_cast<int>(cfg.get_int("scenario", "n_datasets", s.n_datasets));
  s.n_steps = static_cast<int>(cfg.get_int("scenario", "n_steps", s.n_steps));
  s.n_sources =
      static_cast<int>(cfg.get_int("scenario", "n_sources", s.n_sources));
  s.stagger = static_cast<int>(cfg.get_int("scenario", "stagger", s.stagger));
  s.min_separation_m =
      cfg.get_double("scenario", "min_separation_m", s.min_separation_m);
  s.moment_magnitude_nam = cfg.get_double("scenario", "moment_magnitude_nam",
                                          s.moment_magnitude_nam);
  const std::string mode = cfg.get_string("scenario", "noise_mode", "snr");
  if (mode == "snr") {
    s.noise_mode = ScenarioConfig::NoiseMode::Snr;
  } else if (mode == "absolute") {
    s.noise_mode = ScenarioConfig::NoiseMode::Absolute;
  } else {
    throw ConfigError("config [scenario] noise_mode: expected snr or absolute");
  }
  s.snr = cfg.get_double("scenario", "snr", s.snr);
  s.noise_std_t = cfg.get_double("scenario", "noise_std_t", s.noise_std_t);
  s.prestim_steps =
      static_cast<int>(cfg.get_int("scenario", "prestim_steps", s.prestim_steps));
  s.retry_budget =
      static_cast<int>(cfg.get_int("scenario", "retry_budget", s.retry_budget));
  s.seed = static_cast<std::uint64_t>(cfg.get_int("scenario", "seed", 0));
  s.validate();
  return s;
}

void validate_config(const ConfigFile& cfg) {
  static const std::map<std::string, std::vector<std::string>> kSchema = {
      {"geometry",
       {"conductor_radius_m", "source_shell_radius_m", "grid_spacing_m",
        "n_sensors", "sensor_radius_m", "sensor_cap_deg",
        "rm_neighbor_radius_m", "rw_neighbor_radius_m"}},
      {"model",
       {"n_max", "p_birth", "death_rate", "birth_rate", "sigma_q_nam",
        "moment_step_std_nam", "birth_moment_std_nam", "parallel_factor",
        "rw_sigma_d_m", "noise_pooling"}},
      {"proposal",
       {"q_birth", "depth_gamma", "lambda_reg", "snr2", "pmf_floor"}},
      {"filter",
       {"particles", "variant", "resample", "ess_threshold", "seed", "workers",
        "debug_full_mixture"}},
      {"scenario",
       {"n_datasets", "n_steps", "n_sources", "stagger", "min_separation_m",
        "moment_magnitude_nam", "noise_mode", "snr", "noise_std_t",
        "prestim_steps", "retry_budget", "seed"}},
  };
  for (const std::string& section : cfg.sections()) {
    auto it = kSchema.find(section);
    if (it == kSchema.end()) {
      throw ConfigError("config: unknown section [" + section + "]");
    }
    cfg.require_known(section, it->second);
  }
}

}  // namespace megpf
