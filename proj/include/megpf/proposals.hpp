#ifndef MEGPF_PROPOSALS_HPP
#define MEGPF_PROPOSALS_HPP

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "megpf/forward.hpp"
#include "megpf/model.hpp"
#include "megpf/telemetry.hpp"

namespace megpf {

struct ProposalParams {
  double q_birth = 1.0 / 3.0;  ///< fixed birth proposal probability
  double depth_gamma = 0.6;    ///< depth-weighting exponent
  double lambda_reg = 0.0;     ///< regularizer; <= 0 selects the trace rule
  double snr2 = 9.0;           ///< assumed power SNR in the trace rule
  double pmf_floor = 1e-3;     ///< uniform mixing weight on the location pmf
  void validate() const;
};

/// Per-leadfield precomputation for the regularized-inverse birth proposal:
/// depth weights, the weighted sensor Gram matrix, the resolved regularizer,
/// and its Cholesky factor.  Built once, shared by every step and particle.
struct InverseSolverContext {
  Eigen::VectorXd depth_w;  ///< per-vertex weight; replicated over 3 columns
  double lambda = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt;  ///< of (G R G^T + lambda I)
};

InverseSolverContext make_inverse_context(const Leadfield& lf,
                                          const ProposalParams& pp);

/// Data-driven birth-location distribution for one time step: normalized
/// per-vertex amplitude of the regularized inverse estimate, floored by a
/// uniform mixture so every vertex stays proposable.
struct BirthLocationProposal {
  Eigen::VectorXd pmf;  ///< length N_grid, sums to 1
  Eigen::VectorXd cdf;  ///< inclusive prefix sums, for inverse-cdf sampling
};

BirthLocationProposal birth_location_pmf(const Eigen::VectorXd& b_t,
                                         const Leadfield& lf,
                                         const InverseSolverContext& ctx,
                                         const ProposalParams& pp);

/// Death-side quantities for one particle at one step: the death proposal
/// probability and the victim distribution, both driven by leave-one-out
/// likelihoods of the current measurement against the frozen previous state.
struct DeathWeights {
  double q_death = 0.0;
  Eigen::VectorXd p_dying;     ///< length N_prev (empty when N_prev = 0)
  Eigen::VectorXd loo_loglik;  ///< log p(b_t | state minus dipole k)
  double full_loglik = 0.0;    ///< log p(b_t | full previous state)
};

DeathWeights death_weights(const DipoleState& j_prev,
                           const Eigen::VectorXd& b_t, const Leadfield& lf,
                           const ModelParams& mp, const ProposalParams& pp,
                           EvalCounter* counter);

/// One proposal draw.  log_q is the full log-density of the realized move
/// (every factor, for cross-checks); log_prior_minus_q keeps only the
/// factors that do not cancel between the prior transition and the
/// proposal, so weight = log-likelihood + log_prior_minus_q exactly.
struct ProposalDraw {
  DipoleState next;
  MoveTag move;
  double log_q = 0.0;
  double log_prior_minus_q = 0.0;
};

ProposalDraw sample_proposal(RngStream& rng, const DipoleState& j_prev, int t,
                             const BirthLocationProposal& birth,
                             const DeathWeights& death, const ModelParams& mp,
                             const ProposalParams& pp, const SourceGrid& grid);

/// Full mixture log-density of the designed proposal at j_next (all matching
/// components summed); the debug-mode counterpart of log_q.
double proposal_logdensity(const DipoleState& j_prev,
                           const DipoleState& j_next,
                           const BirthLocationProposal& birth,
                           const DeathWeights& death, const ModelParams& mp,
                           const ProposalParams& pp, const SourceGrid& grid);

/// Random Walk designed proposal: birth/death exactly as above, then each
/// survivor (most recently born first) draws its moment from the dynamic
/// model and its location from kernel x likelihood over {self} + neighbors,
/// other dipoles held at their most recent values.
ProposalDraw rw_sample_proposal(RngStream& rng, const DipoleState& j_prev,
                                int t, const Eigen::VectorXd& b_t,
                                const BirthLocationProposal& birth,
                                const DeathWeights& death, const Leadfield& lf,
                                const ModelParams& mp, const ProposalParams& pp,
                                const SourceGrid& grid, EvalCounter* counter);

}  // namespace megpf

#endif  // MEGPF_PROPOSALS_HPP
