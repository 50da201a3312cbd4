#include "megpf/synthgen.hpp"

#include <cmath>
#include <stdexcept>

#include "megpf/rng.hpp"

namespace megpf {

namespace {
constexpr double kNamToSi = 1e-9;
}

void ScenarioConfig::validate() const {
  if (n_datasets < 1) throw std::invalid_argument("scenario: n_datasets >= 1");
  if (n_steps < 1) throw std::invalid_argument("scenario: n_steps >= 1");
  if (n_sources < 1) throw std::invalid_argument("scenario: n_sources >= 1");
  if (stagger < 1) throw std::invalid_argument("scenario: stagger >= 1");
  if (n_sources * stagger >= n_steps) {
    throw std::invalid_argument(
        "scenario: n_sources * stagger must be < n_steps");
  }
  if (min_separation_m <= 0.0) {
    throw std::invalid_argument("scenario: min_separation must be > 0");
  }
  if (moment_magnitude_nam <= 0.0) {
    throw std::invalid_argument("scenario: moment_magnitude must be > 0");
  }
  if (noise_mode == NoiseMode::Snr && snr <= 0.0) {
    throw std::invalid_argument("scenario: snr must be > 0");
  }
  if (noise_mode == NoiseMode::Absolute && noise_std_t <= 0.0) {
    throw std::invalid_argument("scenario: noise_std must be > 0");
  }
  if (prestim_steps < 0) {
    throw std::invalid_argument("scenario: prestim_steps >= 0");
  }
  if (retry_budget < 1) throw std::invalid_argument("scenario: retry_budget >= 1");
}

int ExperimentRecord::active_count(int t) const {
  int n = 0;
  for (const SourceTruth& s : sources) n += s.active_at(t) ? 1 : 0;
  return n;
}

DipolePointSet ExperimentRecord::truth_at(int t) const {
  DipolePointSet set;
  for (const SourceTruth& s : sources) {
    if (!s.active_at(t)) continue;
    set.locations.push_back(s.location_m);
    set.moments.push_back(s.moment_nam);
  }
  return set;
}

std::vector<std::pair<int, int>> lifetime_schedule(const ScenarioConfig& cfg) {
  std::vector<std::pair<int, int>> windows;
  windows.reserve(cfg.n_sources);
  const int k_total = cfg.n_sources;
  for (int k = 1; k <= k_total; ++k) {
    const int onset = k * cfg.stagger;
    const int offset = cfg.n_steps - (k_total - k + 1) * cfg.stagger;
    windows.emplace_back(onset, offset);
  }
  return windows;
}

ExperimentRecord generate(const ScenarioConfig& cfg, const SourceGrid& grid,
                          const Leadfield& leadfield, int dataset_index) {
  cfg.validate();
  if (grid.size() != leadfield.n_vertices()) {
    throw std::invalid_argument("generate: grid/leadfield size mismatch");
  }
  const int n_grid = grid.size();
  const int n_sensors = leadfield.n_sensors();
  const int k_total = cfg.n_sources;

  RngStream rng = RngStream::stream(cfg.seed, dataset_index, 0,
                                    RngStream::Phase::Generate);

  // Joint rejection sampling: redraw the whole location set until every
  // pair respects the minimum separation.
  std::vector<int> indices(k_total);
  bool placed = false;
  for (int attempt = 0; attempt < cfg.retry_budget && !placed; ++attempt) {
    for (int k = 0; k < k_total; ++k) {
      indices[k] = static_cast<int>(rng.uniform_below(n_grid));
    }
    placed = true;
    for (int a = 0; a < k_total && placed; ++a) {
      for (int b = a + 1; b < k_total; ++b) {
        if ((grid.points[indices[a]] - grid.points[indices[b]]).norm() <
            cfg.min_separation_m) {
          placed = false;
          break;
        }
      }
    }
  }
  if (!placed) {
    throw std::runtime_error(
        "generate: could not place sources at the requested separation "
        "within the retry budget");
  }

  const auto windows = lifetime_schedule(cfg);
  ExperimentRecord rec;
  rec.seed = cfg.seed;
  rec.dataset_index = dataset_index;
  rec.sources.resize(k_total);
  for (int k = 0; k < k_total; ++k) {
    SourceTruth& s = rec.sources[k];
    s.grid_index = indices[k];
    s.location_m = grid.points[indices[k]];
    s.onset = windows[k].first;
    s.offset = windows[k].second;
    // Uniform direction on the sphere, projected to the tangent plane so
    // the source is magnetically visible.
    const Eigen::Vector3d radial = s.location_m.normalized();
    Eigen::Vector3d dir;
    for (;;) {
      Eigen::Vector3d v = rng.normal3();
      const double vn = v.norm();
      if (vn < 1e-12) continue;
      v /= vn;
      dir = v - v.dot(radial) * radial;
      const double dn = dir.norm();
      if (dn > 1e-9) {
        dir /= dn;
        break;
      }
    }
    s.moment_nam = cfg.moment_magnitude_nam * dir;
  }

  rec.noiseless = Eigen::MatrixXd::Zero(cfg.n_steps, n_sensors);
  for (int t = 1; t <= cfg.n_steps; ++t) {
    for (const SourceTruth& s : rec.sources) {
      if (!s.active_at(t)) continue;
      rec.noiseless.row(t - 1) +=
          (leadfield.block(s.grid_index) * (kNamToSi * s.moment_nam))
              .transpose();
    }
  }

  double sigma = cfg.noise_std_t;
  if (cfg.noise_mode == ScenarioConfig::NoiseMode::Snr) {
    const double signal_norm = rec.noiseless.norm();
    if (signal_norm <= 0.0) {
      throw std::runtime_error("generate: zero signal; cannot target an SNR");
    }
    sigma = signal_norm /
            (cfg.snr * std::sqrt(double(cfg.n_steps) * double(n_sensors)));
  }
  rec.noise_std = sigma;

  rec.measurements = rec.noiseless;
  for (int t = 0; t < cfg.n_steps; ++t) {
    for (int m = 0; m < n_sensors; ++m) {
      rec.measurements(t, m) += sigma * rng.normal();
    }
  }
  rec.prestim = Eigen::MatrixXd::Zero(cfg.prestim_steps, n_sensors);
  for (int t = 0; t < cfg.prestim_steps; ++t) {
    for (int m = 0; m < n_sensors; ++m) {
      rec.prestim(t, m) = sigma * rng.normal();
    }
  }
  return rec;
}

}  // namespace megpf
