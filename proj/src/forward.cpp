#include "megpf/forward.hpp"

#include <json.hpp>
#include <stdexcept>

#include "megpf/io.hpp"

namespace megpf {

namespace {
constexpr double kMu0Over4Pi = 1e-7;  // T*m/A
}

Eigen::VectorXd dipole_field(const Eigen::Vector3d& location,
                             const Eigen::Vector3d& moment,
                             const SensorArray& sensors,
                             double conductor_radius_m) {
  const double r0_norm = location.norm();
  if (r0_norm == 0.0)
    throw std::invalid_argument("dipole_field: source at conductor center");
  if (r0_norm >= conductor_radius_m)
    throw std::invalid_argument("dipole_field: source outside the conductor");

  const int n = sensors.count();
  Eigen::VectorXd out(n);
  const Eigen::Vector3d q_cross_r0 = moment.cross(location);
  for (int s = 0; s < n; ++s) {
    const Eigen::Vector3d& r = sensors.positions[static_cast<std::size_t>(s)];
    const Eigen::Vector3d a_vec = r - location;
    const double a = a_vec.norm();
    const double r_norm = r.norm();
    const double r0_dot_r = location.dot(r);
    const double a_dot_r = a_vec.dot(r);
    const double f = a * (r_norm * a + r_norm * r_norm - r0_dot_r);
    const Eigen::Vector3d grad_f =
        (a * a / r_norm + a_dot_r / a + 2.0 * a + 2.0 * r_norm) * r -
        (a + 2.0 * r_norm + a_dot_r / a) * location;
    const Eigen::Vector3d b =
        kMu0Over4Pi / (f * f) *
        (f * q_cross_r0 - q_cross_r0.dot(r) * grad_f);
    out(s) = b.dot(sensors.orientations[static_cast<std::size_t>(s)]);
  }
  return out;
}

Leadfield::Leadfield(Eigen::MatrixXd matrix, int n_vertices)
    : matrix_(std::move(matrix)), n_vertices_(n_vertices) {
  if (matrix_.cols() != 3 * static_cast<Eigen::Index>(n_vertices_))
    throw std::invalid_argument("leadfield: cols != 3 * vertices");
}

Leadfield compute_leadfield(const SourceGrid& grid, const SensorArray& sensors,
                            double conductor_radius_m) {
  const int n_v = grid.size();
  Eigen::MatrixXd m(sensors.count(), 3 * n_v);
  for (int k = 0; k < n_v; ++k) {
    const Eigen::Vector3d& r0 = grid.points[static_cast<std::size_t>(k)];
    for (int axis = 0; axis < 3; ++axis)
      m.col(3 * k + axis) = dipole_field(r0, Eigen::Vector3d::Unit(axis),
                                         sensors, conductor_radius_m);
  }
  return Leadfield(std::move(m), n_v);
}

Eigen::VectorXd predict_field(const DipoleState& state, const Leadfield& lf) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(lf.n_sensors());
  for (const Dipole& d : state.dipoles) b.noalias() += lf.block(d.location) * d.moment;
  return b;
}

void save_leadfield(const Leadfield& lf, const std::string& path) {
  write_matrix_binary(path, lf.matrix());
  nlohmann::json side;
  side["rows"] = lf.n_sensors();
  side["cols"] = 3 * lf.n_vertices();
  side["vertices"] = lf.n_vertices();
  side["hash"] = hash_hex(fnv1a64_file(path));
  write_text_file(path + ".json", side.dump(2) + "\n");
}

Leadfield load_leadfield(const std::string& path) {
  const auto side = nlohmann::json::parse(read_text_file(path + ".json"));
  const std::string want = side.at("hash").get<std::string>();
  if (hash_hex(fnv1a64_file(path)) != want)
    throw std::runtime_error("leadfield cache is stale or corrupt: " + path);
  Eigen::MatrixXd m = read_matrix_binary(path);
  const int n_v = side.at("vertices").get<int>();
  if (m.rows() != side.at("rows").get<Eigen::Index>() ||
      m.cols() != side.at("cols").get<Eigen::Index>())
    throw std::runtime_error("leadfield shape mismatch: " + path);
  return Leadfield(std::move(m), n_v);
}

}  // namespace megpf
