#ifndef MEGPF_METRICS_HPP
#define MEGPF_METRICS_HPP

#include <Eigen/Dense>
#include <vector>

#include "megpf/geometry.hpp"

namespace megpf {

/// A finite set of point dipoles used for discrepancy evaluation.
/// Locations are in meters, moments in nAm.
struct DipolePointSet {
  std::vector<Eigen::Vector3d> locations;
  std::vector<Eigen::Vector3d> moments;
  int count() const { return static_cast<int>(locations.size()); }
};

/// Marker returned when a metric is undefined (an empty set was involved).
double metric_missing();
bool is_metric_missing(double v);

/// Average distance from each estimated dipole to its closest target
/// (meters). Missing if either set is empty. Not symmetric.
double adct(const DipolePointSet& est, const DipolePointSet& tgt);

/// Symmetrized set distance: adct(est, tgt) + adct(tgt, est).
double sd(const DipolePointSet& est, const DipolePointSet& tgt);

/// One-to-one matching distance (meters): the smaller set is optimally
/// injected into the larger one and the matched distances are averaged
/// over the smaller count. Exact assignment; missing on empty input.
double ospa(const DipolePointSet& est, const DipolePointSet& tgt);

/// Integrated absolute difference between amplitude-weighted Gaussian
/// intensity fields of the two sets, evaluated by quadrature over the
/// source shell grid. sigma_m is the Gaussian width in meters.
double wm(const DipolePointSet& est, const DipolePointSet& tgt,
          double sigma_m, const SourceGrid& grid);

}  // namespace megpf

#endif  // MEGPF_METRICS_HPP
