#include "megpf/estimators.hpp"

#include <algorithm>
#include <stdexcept>

namespace megpf {

int PosteriorSummary::mode_count() const {
  int best = 0;
  for (int k = 1; k < static_cast<int>(n_pmf.size()); ++k) {
    if (n_pmf(k) > n_pmf(best)) best = k;
  }
  return best;
}

double PosteriorSummary::expected_count() const {
  double e = 0.0;
  for (int k = 0; k < static_cast<int>(n_pmf.size()); ++k) e += k * n_pmf(k);
  return e;
}

PosteriorSummary summarize(const std::vector<Particle>& particles,
                           const Eigen::VectorXd& weights, int n_max,
                           int n_grid) {
  if (static_cast<int>(particles.size()) != weights.size()) {
    throw std::invalid_argument("summarize: particle/weight size mismatch");
  }
  PosteriorSummary s;
  s.n_pmf = Eigen::VectorXd::Zero(n_max + 1);
  s.intensity = Eigen::VectorXd::Zero(n_grid);
  s.raw_moment.assign(n_grid, Eigen::Vector3d::Zero());
  for (std::size_t i = 0; i < particles.size(); ++i) {
    const double w = weights(static_cast<int>(i));
    const DipoleState& st = particles[i].state;
    const int n = std::min(st.count(), n_max);
    s.n_pmf(n) += w;
    for (const Dipole& d : st.dipoles) {
      s.intensity(d.location) += w;
      s.raw_moment[d.location] += w * d.moment;
    }
  }
  s.cond_moment.assign(n_grid, Eigen::Vector3d::Zero());
  for (int k = 0; k < n_grid; ++k) {
    if (s.intensity(k) > 0.0) s.cond_moment[k] = s.raw_moment[k] / s.intensity(k);
  }
  return s;
}

RepresentativeSet representative_set(const PosteriorSummary& summary,
                                     const SourceGrid& grid) {
  const int n_grid = static_cast<int>(summary.intensity.size());
  if (n_grid != grid.size()) {
    throw std::invalid_argument("representative_set: grid size mismatch");
  }
  RepresentativeSet out;
  const int n_hat = summary.mode_count();
  if (n_hat == 0) return out;

  std::vector<int> peaks;
  for (int k = 0; k < n_grid; ++k) {
    const double v = summary.intensity(k);
    if (v <= 0.0) continue;
    bool peak = true;
    for (int j : grid.neighbors_rm[k]) {
      if (summary.intensity(j) >= v) {
        peak = false;
        break;
      }
    }
    if (peak) peaks.push_back(k);
  }
  std::sort(peaks.begin(), peaks.end(), [&](int a, int b) {
    if (summary.intensity(a) != summary.intensity(b)) {
      return summary.intensity(a) > summary.intensity(b);
    }
    return a < b;
  });

  out.shortfall = static_cast<int>(peaks.size()) < n_hat;
  const int take = std::min<int>(n_hat, static_cast<int>(peaks.size()));
  out.dipoles.reserve(take);
  for (int i = 0; i < take; ++i) {
    RepresentativeDipole d;
    d.location = peaks[i];
    d.moment = summary.cond_moment[peaks[i]];
    d.intensity = summary.intensity(peaks[i]);
    out.dipoles.push_back(d);
  }
  return out;
}

}  // namespace megpf
