#ifndef MEGPF_PIPELINE_HPP
#define MEGPF_PIPELINE_HPP

#include <cstdint>
#include <string>

#include "megpf/config.hpp"
#include "megpf/forward.hpp"
#include "megpf/geometry.hpp"

namespace megpf {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Geometry-derived objects shared by every pipeline stage.
struct Workspace {
  GeometryConfig geometry;
  SensorArray sensors;
  SourceGrid grid;
  Leadfield leadfield;
};

Workspace build_workspace(const GeometryConfig& geometry);

/// Command-line overrides layered on top of the config file.
struct RunOverrides {
  std::string variant;           ///< empty: use [filter] variant
  int particles = -1;            ///< <= 0: use [filter] particles
  int workers = -1;              ///< <= 0: config, then MEGPF_WORKERS env var
  std::int64_t seed = -1;        ///< < 0: use [filter] seed
  /// > 0: pick the particle count so one dataset costs about this many
  /// likelihood evaluations (pilot-run scaling).
  double matched_budget = 0.0;
};

/// Generates all datasets of the configured scenario plus the leadfield
/// cache and a manifest with content hashes.
void cmd_gen(const ConfigFile& cfg, const std::string& out_dir);

/// Runs one filter variant over every dataset under data_dir; writes
/// per-dataset evidence/posterior files, a deterministic manifest, and
/// wall-clock telemetry (kept out of the manifest so reruns byte-match).
void cmd_run(const ConfigFile& cfg, const std::string& data_dir,
             const std::string& out_dir, const RunOverrides& overrides);

/// Scores every variant found under runs_dir against the stored truth:
/// per-dataset metric rows plus cross-dataset aggregates.
void cmd_eval(const ConfigFile& cfg, const std::string& data_dir,
              const std::string& runs_dir, const std::string& out_dir);

/// Compares cumulative log evidence between two run variants.
void cmd_compare(const std::string& runs_dir, const std::string& variant_a,
                 const std::string& variant_b, const std::string& out_dir);

}  // namespace megpf

#endif  // MEGPF_PIPELINE_HPP
