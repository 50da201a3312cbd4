#ifndef MEGPF_MODEL_HPP
#define MEGPF_MODEL_HPP

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "megpf/forward.hpp"
#include "megpf/geometry.hpp"
#include "megpf/rng.hpp"
#include "megpf/state.hpp"

namespace megpf {

/// Parameters of the multi-dipole state-space model.  Moments are in SI
/// (ampere-meters); the config layer converts from nAm.  delta_base_var and
/// birth_moment_var default to (sigma_q/10)^2; callers that change sigma_q
/// directly should update them too (the config loader does).
struct ModelParams {
  int n_max = 7;
  double p_birth = 0.01;
  double death_rate = 1.0 / 30.0;   ///< per-dipole per-step hazard
  double birth_rate_poisson = 1.0;  ///< rate of the truncated count prior
  double sigma_q = 1e-9;            ///< prior moment std, A*m
  double delta_parallel_factor = 10.0;
  double delta_base_var = 1e-20;    ///< per-step moment variance, (A*m)^2
  double birth_moment_var = 1e-20;  ///< newborn moment variance, (A*m)^2
  double rw_sigma_d = 0.005;        ///< location-jump length scale, m

  /// P(one death | N alive): 1 - (1 - hazard)^N, monotone in N.
  double p_death(int n) const;
  /// Birth probability with the hard cap applied (0 when full).
  double p_birth_eff(int n) const { return n >= n_max ? 0.0 : p_birth; }

  /// Install per-sensor noise variances (tesla^2) and cache the Gaussian
  /// normalization; throws if any variance is not strictly positive.
  void set_noise(const Eigen::VectorXd& variances);
  const Eigen::VectorXd& noise_var() const { return noise_var_; }
  const Eigen::VectorXd& noise_inv() const { return noise_inv_; }
  double noise_log_norm() const { return noise_log_norm_; }

  void validate() const;

 private:
  Eigen::VectorXd noise_var_;
  Eigen::VectorXd noise_inv_;
  double noise_log_norm_ = 0.0;
};

/// Truncated-Poisson count, uniform locations, isotropic Gaussian moments.
DipoleState sample_prior(RngStream& rng, const ModelParams& p,
                         const SourceGrid& grid);

/// Log-pmf of the truncated Poisson count prior at n (normalized over
/// 0..n_max).
double count_prior_logpmf(int n, const ModelParams& p);

/// Anisotropic per-step moment covariance: delta_base_var everywhere,
/// inflated by delta_parallel_factor along q_prev; isotropic when q_prev
/// vanishes.
Eigen::Matrix3d moment_step_cov(const Eigen::Vector3d& q_prev,
                                const ModelParams& p);
Eigen::Vector3d sample_moment_step(RngStream& rng,
                                   const Eigen::Vector3d& q_prev,
                                   const ModelParams& p);
double moment_step_logpdf(const Eigen::Vector3d& q_next,
                          const Eigen::Vector3d& q_prev,
                          const ModelParams& p);

Eigen::Vector3d sample_birth_moment(RngStream& rng, const ModelParams& p);
double birth_moment_logpdf(const Eigen::Vector3d& q, const ModelParams& p);

/// One step of the prior dynamics: at most one birth or death, survivors
/// keep their locations and step their moments.  t stamps newborn dipoles.
std::pair<DipoleState, MoveTag> sample_transition(RngStream& rng,
                                                  const DipoleState& j_prev,
                                                  const ModelParams& p,
                                                  const SourceGrid& grid,
                                                  int t);

/// Exact log transition density p(j_next | j_prev) summed over every
/// mixture component whose count/location pattern matches; -inf when none
/// does (a surviving dipole may never change location).
double transition_logdensity(const DipoleState& j_prev,
                             const DipoleState& j_next, const ModelParams& p,
                             const SourceGrid& grid);

/// Gaussian log-likelihood of a measurement given a state (diagonal noise).
double log_likelihood(const Eigen::VectorXd& b, const DipoleState& j,
                      const Leadfield& lf, const ModelParams& p);
/// Same quantity evaluated from a precomputed residual b - predicted.
double gaussian_loglik_resid(const Eigen::VectorXd& resid,
                             const ModelParams& p);

/// Location-jump kernel of the Random Walk variant: from each point, mass
/// over {self} + neighbors with weight exp(-d^2 / (2 sigma_d^2)).  The row
/// form returns (candidate indices, normalized log-probabilities), self
/// first.
std::pair<std::vector<int>, Eigen::VectorXd> rw_kernel_row(
    int from, const SourceGrid& grid, const ModelParams& p);
double rw_kernel_logprob(int from, int to, const SourceGrid& grid,
                         const ModelParams& p);
int rw_sample_kernel(RngStream& rng, int from, const SourceGrid& grid,
                     const ModelParams& p);

std::pair<DipoleState, MoveTag> rw_sample_transition(RngStream& rng,
                                                     const DipoleState& j_prev,
                                                     const ModelParams& p,
                                                     const SourceGrid& grid,
                                                     int t);
double rw_transition_logdensity(const DipoleState& j_prev,
                                const DipoleState& j_next,
                                const ModelParams& p, const SourceGrid& grid);

/// Per-sensor sample variance over a pre-stimulus block (rows = time).
/// Throws if fewer than two rows or any variance is zero.
Eigen::VectorXd estimate_noise(const Eigen::MatrixXd& b_pre);
/// Pooled variant: one variance per sensor group, replicated across the
/// group's sensors.  groups[s] is the group id of sensor s.
Eigen::VectorXd estimate_noise_pooled(const Eigen::MatrixXd& b_pre,
                                      const std::vector<int>& groups);

}  // namespace megpf

#endif  // MEGPF_MODEL_HPP
