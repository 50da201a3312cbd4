#ifndef MEGPF_FORWARD_HPP
#define MEGPF_FORWARD_HPP

#include <Eigen/Dense>
#include <string>

#include "megpf/geometry.hpp"
#include "megpf/state.hpp"

namespace megpf {

/// Radial magnetometer response of a current dipole inside a conducting
/// sphere centered at the origin (closed-form spherical-head solution).
/// Returns one value per sensor, in tesla.  Moments at the center or sources
/// outside the conductor are rejected.
Eigen::VectorXd dipole_field(const Eigen::Vector3d& location,
                             const Eigen::Vector3d& moment,
                             const SensorArray& sensors,
                             double conductor_radius_m);

/// Precomputed sensor responses for unit moments at every grid vertex.
/// Column block 3k..3k+2 holds the response to the x/y/z unit moments at
/// vertex k, so the field of moment q at vertex k is block(k) * q.
class Leadfield {
 public:
  Leadfield() = default;
  Leadfield(Eigen::MatrixXd matrix, int n_vertices);

  int n_sensors() const { return static_cast<int>(matrix_.rows()); }
  int n_vertices() const { return n_vertices_; }
  const Eigen::MatrixXd& matrix() const { return matrix_; }
  Eigen::Block<const Eigen::MatrixXd, Eigen::Dynamic, 3, true> block(
      int k) const {
    return matrix_.middleCols<3>(3 * k);
  }

 private:
  Eigen::MatrixXd matrix_;
  int n_vertices_ = 0;
};

Leadfield compute_leadfield(const SourceGrid& grid, const SensorArray& sensors,
                            double conductor_radius_m);

/// Noiseless field of a multi-source state, summed over dipoles.
Eigen::VectorXd predict_field(const DipoleState& state, const Leadfield& lf);

/// Binary cache with a JSON sidecar recording shape and a content hash;
/// load_leadfield verifies both and throws on mismatch.
void save_leadfield(const Leadfield& lf, const std::string& path);
Leadfield load_leadfield(const std::string& path);

}  // namespace megpf

#endif  // MEGPF_FORWARD_HPP
