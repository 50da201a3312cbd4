#ifndef MEGPF_ESTIMATORS_HPP
#define MEGPF_ESTIMATORS_HPP

#include <Eigen/Dense>
#include <vector>

#include "megpf/geometry.hpp"
#include "megpf/smc.hpp"

namespace megpf {

/// Weighted-cloud summary of the posterior at a single time step.
struct PosteriorSummary {
  /// pmf of the dipole count over 0..n_max; sums to 1.
  Eigen::VectorXd n_pmf;
  /// Expected number of dipoles per grid point; sums to the posterior
  /// mean dipole count.
  Eigen::VectorXd intensity;
  /// Conditional mean moment at each grid point (A*m), i.e. the raw
  /// moment sum divided by the intensity; zero where intensity is zero.
  std::vector<Eigen::Vector3d> cond_moment;
  /// Unnormalized weighted moment sum per grid point (A*m).
  std::vector<Eigen::Vector3d> raw_moment;

  int mode_count() const;          ///< argmax of n_pmf, lowest index on ties
  double expected_count() const;   ///< sum_k k * n_pmf(k)
};

/// One entry of the representative dipole set.
struct RepresentativeDipole {
  int location = -1;                                 ///< grid index
  Eigen::Vector3d moment = Eigen::Vector3d::Zero();  ///< conditional mean (A*m)
  double intensity = 0.0;                            ///< peak height
};

struct RepresentativeSet {
  std::vector<RepresentativeDipole> dipoles;
  /// True when fewer intensity peaks exist than the count mode requests.
  bool shortfall = false;
};

/// Computes count pmf, intensity, and conditional moments from a weighted
/// particle cloud. Weights must be normalized.
PosteriorSummary summarize(const std::vector<Particle>& particles,
                           const Eigen::VectorXd& weights, int n_max,
                           int n_grid);

/// Extracts the representative dipole set: the count mode selects how many
/// dipoles to report, and strict local maxima of the intensity over the
/// summary neighborhood graph supply the locations, highest peaks first.
RepresentativeSet representative_set(const PosteriorSummary& summary,
                                     const SourceGrid& grid);

}  // namespace megpf

#endif  // MEGPF_ESTIMATORS_HPP
