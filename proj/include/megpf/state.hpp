#ifndef MEGPF_STATE_HPP
#define MEGPF_STATE_HPP

#include <Eigen/Dense>
#include <vector>

namespace megpf {

/// A single source: grid vertex index plus a 3-d moment in SI units (A*m).
/// moment_history holds the moment at every step since birth (current value
/// last, so moment == moment_history.back()); the MH location move needs it
/// to rebuild past field contributions without re-simulation.
struct Dipole {
  int location = -1;
  Eigen::Vector3d moment = Eigen::Vector3d::Zero();
  int birth_time = 0;
  std::vector<Eigen::Vector3d> moment_history;

  int age_at(int t) const { return t - birth_time + 1; }
};

/// The multi-source state at one time step.  Dipoles are kept in birth order;
/// removing dipole j shifts the labels above j down by one.
struct DipoleState {
  std::vector<Dipole> dipoles;
  int count() const { return static_cast<int>(dipoles.size()); }
};

/// What the transition did at this step, for weight bookkeeping.
struct MoveTag {
  enum class Kind { Stay, Birth, Death };
  Kind kind = Kind::Stay;
  int victim = -1;  ///< index removed when kind == Death
};

}  // namespace megpf

#endif  // MEGPF_STATE_HPP
