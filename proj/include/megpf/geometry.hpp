#ifndef MEGPF_GEOMETRY_HPP
#define MEGPF_GEOMETRY_HPP

#include <utility>
#include <vector>

#include <Eigen/Core>

namespace megpf {

struct GeometryConfig {
  double conductor_radius_m = 0.09;
  double source_shell_radius_m = 0.07;
  double grid_spacing_m = 0.005;
  int n_sensors = 102;
  double sensor_radius_m = 0.12;
  double sensor_cap_deg = 120.0;  // polar opening angle of the helmet cap
  double rm_neighbor_radius_m = 0.01;
  double rw_neighbor_radius_m = 0.01;

  void validate() const;
};

/// Radial magnetometers on a spherical cap around the conductor.
struct SensorArray {
  std::vector<Eigen::Vector3d> positions;
  std::vector<Eigen::Vector3d> orientations;  // unit radial

  int count() const { return static_cast<int>(positions.size()); }
};

/// Candidate source locations with the two neighbor relations used by the
/// location move (rm) and the random-walk location kernel (rw).
struct SourceGrid {
  std::vector<Eigen::Vector3d> points;
  std::vector<std::vector<int>> neighbors_rm;
  std::vector<std::vector<int>> neighbors_rw;
  double spacing = 0.0;

  int size() const { return static_cast<int>(points.size()); }
};

/// Builds neighbor lists by range query and checks the symmetric-relation
/// invariant; usable directly for hand-made test grids.
SourceGrid make_source_grid(std::vector<Eigen::Vector3d> points,
                            double rm_radius, double rw_radius,
                            double spacing);

/// Quasi-uniform Fibonacci lattice on a full sphere of the given radius.
std::vector<Eigen::Vector3d> fibonacci_sphere(int n, double radius);

/// Deterministic desk-scale geometry: sources on one spherical shell inside
/// the conductor, radial magnetometers on an outer cap.
std::pair<SensorArray, SourceGrid> build_geometry(const GeometryConfig& config);

}  // namespace megpf

#endif
