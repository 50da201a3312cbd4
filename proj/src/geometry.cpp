#include "megpf/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace megpf {

void GeometryConfig::validate() const {
  if (conductor_radius_m <= 0 || source_shell_radius_m <= 0 ||
      grid_spacing_m <= 0 || sensor_radius_m <= 0)
    throw std::invalid_argument("geometry: radii and spacing must be positive");
  if (grid_spacing_m > source_shell_radius_m)
    throw std::invalid_argument(
        "geometry: grid spacing exceeds the source shell radius");
  if (source_shell_radius_m >= conductor_radius_m)
    throw std::invalid_argument(
        "geometry: source shell must lie strictly inside the conductor");
  if (sensor_radius_m <= conductor_radius_m)
    throw std::invalid_argument(
        "geometry: sensor shell does not enclose the conductor");
  if (n_sensors < 1) throw std::invalid_argument("geometry: need >= 1 sensor");
  if (rm_neighbor_radius_m <= 0 || rw_neighbor_radius_m <= 0)
    throw std::invalid_argument("geometry: neighbor radii must be positive");
}

std::vector<Eigen::Vector3d> fibonacci_sphere(int n, double radius) {
  // z strides the open interval (-1, 1); azimuth advances by the golden angle
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(static_cast<std::size_t>(n));
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    pts.emplace_back(radius * rho * std::cos(phi), radius * rho * std::sin(phi),
                     radius * z);
  }
  return pts;
}

namespace {

std::vector<std::vector<int>> range_neighbors(
    const std::vector<Eigen::Vector3d>& pts, double radius) {
  const int n = static_cast<int>(pts.size());
  std::vector<std::vector<int>> nbr(static_cast<std::size_t>(n));
  const double r2 = radius * radius;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if ((pts[static_cast<std::size_t>(i)] - pts[static_cast<std::size_t>(j)])
              .squaredNorm() <= r2) {
        nbr[static_cast<std::size_t>(i)].push_back(j);
        nbr[static_cast<std::size_t>(j)].push_back(i);
      }
    }
  }
  return nbr;
}

}  // namespace

SourceGrid make_source_grid(std::vector<Eigen::Vector3d> points,
                            double rm_radius, double rw_radius,
                            double spacing) {
  SourceGrid grid;
  grid.points = std::move(points);
  grid.neighbors_rm = range_neighbors(grid.points, rm_radius);
  grid.neighbors_rw = range_neighbors(grid.points, rw_radius);
  grid.spacing = spacing;
  return grid;
}

std::pair<SensorArray, SourceGrid> build_geometry(
    const GeometryConfig& config) {
  config.validate();

  // point count picked so the lattice's mean nearest-neighbor distance
  // tracks the requested spacing (hexagonal-density constant, tuned on
  // Fibonacci lattices)
  const double ratio = config.source_shell_radius_m / config.grid_spacing_m;
  const int n_grid = std::max(8, static_cast<int>(std::lround(11.5 * ratio * ratio)));
  SourceGrid grid = make_source_grid(
      fibonacci_sphere(n_grid, config.source_shell_radius_m),
      config.rm_neighbor_radius_m, config.rw_neighbor_radius_m,
      config.grid_spacing_m);

  SensorArray sensors;
  sensors.positions.reserve(static_cast<std::size_t>(config.n_sensors));
  sensors.orientations.reserve(static_cast<std::size_t>(config.n_sensors));
  const double cos_cap = std::cos(config.sensor_cap_deg * M_PI / 180.0);
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < config.n_sensors; ++i) {
    const double z = 1.0 - (1.0 - cos_cap) * (i + 0.5) / config.n_sensors;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    const Eigen::Vector3d u(rho * std::cos(phi), rho * std::sin(phi), z);
    sensors.positions.push_back(config.sensor_radius_m * u);
    sensors.orientations.push_back(u);
  }

  return {std::move(sensors), std::move(grid)};
}

}  // namespace megpf
