#ifndef MEGPF_SMC_HPP
#define MEGPF_SMC_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "megpf/forward.hpp"
#include "megpf/model.hpp"
#include "megpf/proposals.hpp"
#include "megpf/telemetry.hpp"

namespace megpf {

enum class ProposalKind { Designed, Bootstrap };
enum class ModelKind { Static, RandomWalk };

struct FilterConfig {
  int n_particles = 1000;
  ProposalKind proposal = ProposalKind::Designed;
  ModelKind model = ModelKind::Static;
  bool move_enabled = true;
  bool resample_every_step = true;  ///< else resample when ESS < threshold * N
  double ess_threshold = 0.5;
  std::uint64_t seed = 0;
  int workers = 1;
  /// Weight corrections via full mixture densities instead of the
  /// matched-component shortcut (cross-checking aid; Static model only).
  bool debug_full_mixture = false;
  /// When >= 0: start every particle with exactly one dipole at this grid
  /// vertex instead of drawing from the prior (conjugate-recursion checks).
  int init_fixed_location = -1;
  void validate() const;
};

/// One trajectory hypothesis.  residual_history[n-1] is b_n minus the field
/// predicted by the particle's state at step n, and loglik_history[n-1] its
/// Gaussian log-likelihood; both are kept only while the MH location move is
/// enabled, and updated in place when a move is accepted.
struct Particle {
  DipoleState state;
  std::vector<Eigen::VectorXd> residual_history;
  std::vector<double> loglik_history;
};

struct StepSummary {
  int t = 0;
  double ess = 0.0;
  double step_log_evidence = 0.0;
  double cum_log_evidence = 0.0;
  bool resampled = false;
  int move_proposals = 0;
  int move_accepts = 0;
};

struct FilterOutput {
  std::vector<StepSummary> steps;
  EvalStats evals;
  int n_particles = 0;
  double terminal_log_evidence = 0.0;
  double mean_ess_fraction = 0.0;
  /// End-of-step census supporting the eval-count model: total dipole
  /// slots over all particles and steps, and realized lifetimes (deaths
  /// during the run plus lifetimes censored at the final step).
  std::uint64_t dipole_steps = 0;
  std::uint64_t lifetime_events = 0;
  double lifetime_total = 0.0;
  /// Census averages: dipoles per particle-step, steps per lifetime.
  double mean_dipoles() const;
  double mean_lifetime() const;
};

/// Inverse sum of squared normalized weights, in [1, N].
double ess(const Eigen::VectorXd& weights);

/// One uniform draw in [0, 1/N) strided across the cumulative weights;
/// returns N parent indices in non-decreasing order.
std::vector<int> systematic_resample(RngStream& rng,
                                     const Eigen::VectorXd& weights);

struct MoveStats {
  int proposals = 0;
  int accepts = 0;
};

/// One MH sweep over the dipoles of one particle (Static model): each dipole
/// proposes a uniform neighbor of its location; acceptance multiplies the
/// neighbor-count asymmetry by the likelihood ratio over the dipole's
/// lifetime, evaluated through rank-one updates of the cached residuals.
MoveStats rm_move(RngStream& rng, Particle& particle, int t,
                  const Leadfield& lf, const SourceGrid& grid,
                  const ModelParams& mp, EvalCounter* counter);

/// Raised when every particle weight collapses to zero or non-finite.
struct NumericalCollapse : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Filter {
 public:
  Filter(FilterConfig cfg, ModelParams mp, ProposalParams pp,
         const Leadfield& lf, const SourceGrid& grid);

  /// Draw the initial cloud (deterministic in the seed); resets everything.
  void init();
  /// Advance one step on measurement b_t (tesla, one entry per sensor).
  StepSummary step(const Eigen::VectorXd& b_t);
  /// init() + one step per row of b; invokes on_step after each step.
  FilterOutput run(const Eigen::MatrixXd& b,
                   const std::function<void(const Filter&, const StepSummary&)>&
                       on_step = nullptr);

  int t() const { return t_; }
  const std::vector<Particle>& particles() const { return particles_; }
  /// Normalized weights (linear scale).
  const Eigen::VectorXd& weights() const { return weights_; }
  double cum_log_evidence() const { return cum_log_evidence_; }
  const FilterConfig& config() const { return cfg_; }
  EvalStats eval_stats() const { return counter_.snapshot(); }
  const FilterOutput& telemetry() const { return telemetry_; }

 private:
  void propose_range(int begin, int end, const Eigen::VectorXd& b_t,
                     const BirthLocationProposal* birth,
                     Eigen::VectorXd& increments);
  void resample();
  void move_range(int begin, int end, std::vector<MoveStats>& stats);

  FilterConfig cfg_;
  ModelParams mp_;
  ProposalParams pp_;
  const Leadfield& lf_;
  const SourceGrid& grid_;
  InverseSolverContext inv_ctx_;  // Designed proposal only

  std::vector<Particle> particles_;
  Eigen::VectorXd weights_;      // normalized
  Eigen::VectorXd log_weights_;  // normalized, log scale
  int t_ = 0;
  double cum_log_evidence_ = 0.0;
  EvalCounter counter_;
  FilterOutput telemetry_;  // census fields + steps accumulated by step()
  std::atomic<std::uint64_t> life_events_{0};
  std::atomic<std::uint64_t> life_steps_{0};
};

}  // namespace megpf

#endif  // MEGPF_SMC_HPP
