#ifndef MEGPF_SYNTHGEN_HPP
#define MEGPF_SYNTHGEN_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "megpf/forward.hpp"
#include "megpf/geometry.hpp"
#include "megpf/metrics.hpp"

namespace megpf {

/// Parameters of a synthetic multi-source experiment.
struct ScenarioConfig {
  enum class NoiseMode { Snr, Absolute };

  int n_datasets = 100;
  int n_steps = 70;              ///< T; observations at t = 1..T
  int n_sources = 5;
  int stagger = 5;               ///< steps between consecutive onsets
  double min_separation_m = 0.03;
  double moment_magnitude_nam = 1.0;  ///< fixed |q| per source, nAm
  NoiseMode noise_mode = NoiseMode::Snr;
  /// Target ratio of signal to noise Frobenius norms (Snr mode).
  double snr = 5.0;
  /// Per-sensor noise standard deviation in tesla (Absolute mode).
  double noise_std_t = 0.0;
  int prestim_steps = 5;         ///< noise-only steps used for variance estimation
  int retry_budget = 10000;      ///< attempts for min-separation rejection sampling
  std::uint64_t seed = 0;

  void validate() const;
};

/// A simulated source: location on the grid, fixed moment, activity window.
struct SourceTruth {
  int grid_index = -1;
  Eigen::Vector3d location_m = Eigen::Vector3d::Zero();
  Eigen::Vector3d moment_nam = Eigen::Vector3d::Zero();
  int onset = 0;    ///< first active step
  int offset = 0;   ///< first inactive step; active while onset <= t < offset
  bool active_at(int t) const { return t >= onset && t < offset; }
};

/// One generated dataset, reconstructable bit-exactly from (seed, index).
struct ExperimentRecord {
  std::vector<SourceTruth> sources;
  Eigen::MatrixXd noiseless;     ///< T x N_sensors, tesla
  Eigen::MatrixXd measurements;  ///< noiseless + noise
  Eigen::MatrixXd prestim;       ///< prestim_steps x N_sensors, noise only
  double noise_std = 0.0;        ///< realized per-sensor std, tesla
  std::uint64_t seed = 0;
  int dataset_index = 0;

  int active_count(int t) const;
  DipolePointSet truth_at(int t) const;
};

/// Onset/offset windows for each source: onsets at stagger intervals, then
/// sources die in onset order so the active count returns to zero by T.
std::vector<std::pair<int, int>> lifetime_schedule(const ScenarioConfig& cfg);

/// Generates one dataset. Locations are uniform over the grid subject to the
/// pairwise minimum separation; orientations are uniform on the sphere
/// projected onto the tangent plane; the moment magnitude is constant over
/// each source's lifetime; noise is i.i.d. Gaussian per sensor and step.
ExperimentRecord generate(const ScenarioConfig& cfg, const SourceGrid& grid,
                          const Leadfield& leadfield, int dataset_index);

}  // namespace megpf

#endif  // MEGPF_SYNTHGEN_HPP
