#include "megpf/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "megpf/numeric.hpp"

namespace megpf {

void ProposalParams::validate() const {
  if (q_birth <= 0.0 || q_birth >= 1.0)
    throw std::invalid_argument("proposal: q_birth out of (0, 1)");
  if (depth_gamma < 0.0)
    throw std::invalid_argument("proposal: depth_gamma must be >= 0");
  if (snr2 <= 0.0) throw std::invalid_argument("proposal: snr2 must be positive");
  if (pmf_floor < 0.0 || pmf_floor >= 1.0)
    throw std::invalid_argument("proposal: pmf_floor out of [0, 1)");
}

InverseSolverContext make_inverse_context(const Leadfield& lf,
                                          const ProposalParams& pp) {
  const int n_v = lf.n_vertices();
  const int n_s = lf.n_sensors();

  InverseSolverContext ctx;
  ctx.depth_w.resize(n_v);
  for (int k = 0; k < n_v; ++k) {
    const double fro = lf.block(k).norm();
    if (fro <= 0.0)
      throw std::invalid_argument("inverse context: zero-gain vertex");
    ctx.depth_w(k) = std::pow(fro, -2.0 * pp.depth_gamma);
  }

  // G R G^T accumulated as sum_k w_k B_k B_k^T via column scaling
  Eigen::MatrixXd scaled(n_s, 3 * n_v);
  for (int k = 0; k < n_v; ++k)
    scaled.middleCols<3>(3 * k) = std::sqrt(ctx.depth_w(k)) * lf.block(k);
  Eigen::MatrixXd gram = scaled * scaled.transpose();

  ctx.lambda = pp.lambda_reg > 0.0
                   ? pp.lambda_reg
                   : gram.trace() / (static_cast<double>(n_s) * pp.snr2);
  Eigen::MatrixXd reg = gram;
  reg.diagonal().array() += ctx.lambda;
  ctx.llt.compute(reg);
  if (ctx.llt.info() != Eigen::Success) {
    const double dmax = reg.diagonal().maxCoeff();
    const double dmin = reg.diagonal().minCoeff();
    throw std::runtime_error(
        "inverse context: regularized system not positive definite "
        "(diagonal spread " +
        std::to_string(dmax / std::max(dmin, 1e-300)) +
        "); increase lambda_reg");
  }
  return ctx;
}

BirthLocationProposal birth_location_pmf(const Eigen::VectorXd& b_t,
                                         const Leadfield& lf,
                                         const InverseSolverContext& ctx,
                                         const ProposalParams& pp) {
  const int n_v = lf.n_vertices();
  BirthLocationProposal out;
  out.pmf.resize(n_v);

  double total = 0.0;
  if (b_t.squaredNorm() > 0.0) {
    const Eigen::VectorXd w = ctx.llt.solve(b_t);
    const Eigen::VectorXd gtw = lf.matrix().transpose() * w;
    for (int k = 0; k < n_v; ++k) {
      const double amp =
          ctx.depth_w(k) * gtw.segment<3>(3 * k).norm();
      out.pmf(k) = amp;
      total += amp;
    }
  }
  if (total > 0.0)
    out.pmf /= total;
  else
    out.pmf.setConstant(1.0 / n_v);  // zero data: nothing to localize

  if (pp.pmf_floor > 0.0)
    out.pmf = (1.0 - pp.pmf_floor) * out.pmf +
              Eigen::VectorXd::Constant(n_v, pp.pmf_floor / n_v);

  out.cdf.resize(n_v);
  double acc = 0.0;
  for (int k = 0; k < n_v; ++k) {
    acc += out.pmf(k);
    out.cdf(k) = acc;
  }
  out.cdf(n_v - 1) = 1.0;
  return out;
}

namespace {

int sample_cdf(RngStream& rng, const Eigen::VectorXd& cdf) {
  const double u = rng.uniform();
  const double* begin = cdf.data();
  const double* end = begin + cdf.size();
  const double* it = std::upper_bound(begin, end, u);
  return static_cast<int>(std::min<std::ptrdiff_t>(it - begin, cdf.size() - 1));
}

int sample_pmf(RngStream& rng, const Eigen::VectorXd& pmf) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < pmf.size(); ++i) {
    acc += pmf(i);
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(pmf.size() - 1);
}

double effective_q_birth(int n_prev, const ModelParams& mp,
                         const ProposalParams& pp) {
  return n_prev >= mp.n_max ? 0.0 : pp.q_birth;
}

}  // namespace

DeathWeights death_weights(const DipoleState& j_prev,
                           const Eigen::VectorXd& b_t, const Leadfield& lf,
                           const ModelParams& mp, const ProposalParams& pp,
                           EvalCounter* counter) {
  DeathWeights out;
  const int n = j_prev.count();
  if (n == 0) return out;

  const Eigen::VectorXd resid_full = b_t - predict_field(j_prev, lf);
  out.full_loglik = gaussian_loglik_resid(resid_full, mp);
  out.loo_loglik.resize(n);
  for (int k = 0; k < n; ++k) {
    const Dipole& d = j_prev.dipoles[static_cast<std::size_t>(k)];
    const Eigen::VectorXd resid_k = resid_full + lf.block(d.location) * d.moment;
    out.loo_loglik(k) = gaussian_loglik_resid(resid_k, mp);
  }
  if (counter) counter->add_death(static_cast<std::uint64_t>(n) + 1);

  const double pd = mp.p_death(n);
  const double pb = mp.p_birth_eff(n);
  const double qb = effective_q_birth(n, mp, pp);
  if (pd <= 0.0) return out;  // deaths impossible under the prior

  // log of: (1/N) sum_k p(b|j^(-k)) P_death   versus   p(b|j) (1 - P_birth - P_death)
  const double log_a =
      logsumexp(out.loo_loglik) - std::log(static_cast<double>(n)) + std::log(pd);
  const double log_b = out.full_loglik + std::log(1.0 - pb - pd);
  out.q_death = (1.0 - qb) * std::exp(log_a - log_add(log_a, log_b));
  out.q_death = std::min(out.q_death, 1.0 - qb);

  out.p_dying = (out.loo_loglik.array() - logsumexp(out.loo_loglik)).exp();
  out.p_dying /= out.p_dying.sum();
  return out;
}

ProposalDraw sample_proposal(RngStream& rng, const DipoleState& j_prev, int t,
                             const BirthLocationProposal& birth,
                             const DeathWeights& death, const ModelParams& mp,
                             const ProposalParams& pp, const SourceGrid& grid) {
  const int n = j_prev.count();
  const double qb = effective_q_birth(n, mp, pp);
  const double qd = death.q_death;
  const double pb = mp.p_birth_eff(n);
  const double pd = mp.p_death(n);

  ProposalDraw draw;
  draw.next = j_prev;
  const double u = rng.uniform();

  int birth_loc = -1;
  if (u < qb) {
    draw.move.kind = MoveTag::Kind::Birth;
    birth_loc = sample_cdf(rng, birth.cdf);
  } else if (u < qb + qd) {
    draw.move.kind = MoveTag::Kind::Death;
    draw.move.victim = sample_pmf(rng, death.p_dying);
    draw.next.dipoles.erase(draw.next.dipoles.begin() + draw.move.victim);
  }

  double log_moments = 0.0;
  for (Dipole& d : draw.next.dipoles) {
    const Eigen::Vector3d q_prev = d.moment;
    d.moment = sample_moment_step(rng, q_prev, mp);
    d.moment_history.push_back(d.moment);
    log_moments += moment_step_logpdf(d.moment, q_prev, mp);
  }

  switch (draw.move.kind) {
    case MoveTag::Kind::Birth: {
      Dipole d;
      d.location = birth_loc;
      d.moment = sample_birth_moment(rng, mp);
      d.birth_time = t;
      d.moment_history.push_back(d.moment);
      draw.next.dipoles.push_back(std::move(d));
      draw.log_q = std::log(qb) + std::log(birth.pmf(birth_loc)) +
                   birth_moment_logpdf(draw.next.dipoles.back().moment, mp) +
                   log_moments;
      draw.log_prior_minus_q =
          std::log(pb) - std::log(qb) -
          std::log(static_cast<double>(grid.size())) -
          std::log(birth.pmf(birth_loc));
      break;
    }
    case MoveTag::Kind::Death: {
      const double p_vic = death.p_dying(draw.move.victim);
      draw.log_q = std::log(qd) + std::log(p_vic) + log_moments;
      draw.log_prior_minus_q = std::log(pd) -
                               std::log(static_cast<double>(n)) -
                               std::log(qd) - std::log(p_vic);
      break;
    }
    case MoveTag::Kind::Stay: {
      draw.log_q = std::log(1.0 - qb - qd) + log_moments;
      draw.log_prior_minus_q =
          std::log(1.0 - pb - pd) - std::log(1.0 - qb - qd);
      break;
    }
  }
  return draw;
}

double proposal_logdensity(const DipoleState& j_prev,
                           const DipoleState& j_next,
                           const BirthLocationProposal& birth,
                           const DeathWeights& death, const ModelParams& mp,
                           const ProposalParams& pp, const SourceGrid& grid) {
  (void)grid;
  const int n_prev = j_prev.count();
  const int n_next = j_next.count();
  const double qb = effective_q_birth(n_prev, mp, pp);
  const double qd = death.q_death;

  std::vector<double> terms;

  if (n_next == n_prev + 1 && qb > 0.0) {
    bool match = true;
    for (int i = 0; i < n_prev && match; ++i)
      match = j_next.dipoles[static_cast<std::size_t>(i)].location ==
              j_prev.dipoles[static_cast<std::size_t>(i)].location;
    if (match) {
      const Dipole& newborn = j_next.dipoles[static_cast<std::size_t>(n_prev)];
      double lp = std::log(qb) + std::log(birth.pmf(newborn.location)) +
                  birth_moment_logpdf(newborn.moment, mp);
      for (int i = 0; i < n_prev; ++i)
        lp += moment_step_logpdf(
            j_next.dipoles[static_cast<std::size_t>(i)].moment,
            j_prev.dipoles[static_cast<std::size_t>(i)].moment, mp);
      terms.push_back(lp);
    }
  }

  if (n_next == n_prev - 1 && qd > 0.0) {
    for (int victim = 0; victim < n_prev; ++victim) {
      bool match = true;
      for (int i = 0; i < n_next && match; ++i) {
        const int prev_i = i < victim ? i : i + 1;
        match = j_next.dipoles[static_cast<std::size_t>(i)].location ==
                j_prev.dipoles[static_cast<std::size_t>(prev_i)].location;
      }
      if (!match) continue;
      double lp = std::log(qd) + std::log(death.p_dying(victim));
      for (int i = 0; i < n_next; ++i) {
        const int prev_i = i < victim ? i : i + 1;
        lp += moment_step_logpdf(
            j_next.dipoles[static_cast<std::size_t>(i)].moment,
            j_prev.dipoles[static_cast<std::size_t>(prev_i)].moment, mp);
      }
      terms.push_back(lp);
    }
  }

  if (n_next == n_prev && 1.0 - qb - qd > 0.0) {
    bool match = true;
    for (int i = 0; i < n_prev && match; ++i)
      match = j_next.dipoles[static_cast<std::size_t>(i)].location ==
              j_prev.dipoles[static_cast<std::size_t>(i)].location;
    if (match) {
      double lp = std::log(1.0 - qb - qd);
      for (int i = 0; i < n_prev; ++i)
        lp += moment_step_logpdf(
            j_next.dipoles[static_cast<std::size_t>(i)].moment,
            j_prev.dipoles[static_cast<std::size_t>(i)].moment, mp);
      terms.push_back(lp);
    }
  }

  return logsumexp(terms);
}

ProposalDraw rw_sample_proposal(RngStream& rng, const DipoleState& j_prev,
                                int t, const Eigen::VectorXd& b_t,
                                const BirthLocationProposal& birth,
                                const DeathWeights& death, const Leadfield& lf,
                                const ModelParams& mp, const ProposalParams& pp,
                                const SourceGrid& grid, EvalCounter* counter) {
  const int n = j_prev.count();
  const double qb = effective_q_birth(n, mp, pp);
  const double qd = death.q_death;
  const double pb = mp.p_birth_eff(n);
  const double pd = mp.p_death(n);

  ProposalDraw draw;
  draw.next = j_prev;
  const double u = rng.uniform();

  int birth_loc = -1;
  if (u < qb) {
    draw.move.kind = MoveTag::Kind::Birth;
    birth_loc = sample_cdf(rng, birth.cdf);
    draw.log_q = std::log(qb) + std::log(birth.pmf(birth_loc));
    draw.log_prior_minus_q = std::log(pb) - std::log(qb) -
                             std::log(static_cast<double>(grid.size())) -
                             std::log(birth.pmf(birth_loc));
  } else if (u < qb + qd) {
    draw.move.kind = MoveTag::Kind::Death;
    draw.move.victim = sample_pmf(rng, death.p_dying);
    draw.next.dipoles.erase(draw.next.dipoles.begin() + draw.move.victim);
    const double p_vic = death.p_dying(draw.move.victim);
    draw.log_q = std::log(qd) + std::log(p_vic);
    draw.log_prior_minus_q = std::log(pd) - std::log(static_cast<double>(n)) -
                             std::log(qd) - std::log(p_vic);
  } else {
    draw.log_q = std::log(1.0 - qb - qd);
    draw.log_prior_minus_q = std::log(1.0 - pb - pd) - std::log(1.0 - qb - qd);
  }

  // survivors, most recently born (largest label) first; the running field
  // holds every other dipole at its most recent value
  Eigen::VectorXd field = Eigen::VectorXd::Zero(lf.n_sensors());
  for (const Dipole& d : draw.next.dipoles)
    field.noalias() += lf.block(d.location) * d.moment;

  for (int idx = draw.next.count() - 1; idx >= 0; --idx) {
    Dipole& d = draw.next.dipoles[static_cast<std::size_t>(idx)];
    field.noalias() -= lf.block(d.location) * d.moment;

    const Eigen::Vector3d q_prev = d.moment;
    d.moment = sample_moment_step(rng, q_prev, mp);
    d.moment_history.push_back(d.moment);
    draw.log_q += moment_step_logpdf(d.moment, q_prev, mp);

    const auto [cand, klw] = rw_kernel_row(d.location, grid, mp);
    Eigen::VectorXd score(klw.size());
    for (Eigen::Index c = 0; c < klw.size(); ++c) {
      const Eigen::VectorXd resid =
          b_t - field - lf.block(cand[static_cast<std::size_t>(c)]) * d.moment;
      score(c) = klw(c) + gaussian_loglik_resid(resid, mp);
    }
    if (counter) counter->add_rw_cond(static_cast<std::uint64_t>(klw.size()));

    const double norm = logsumexp(score);
    const Eigen::VectorXd cond = (score.array() - norm).exp();
    const int pick = sample_pmf(rng, cond / cond.sum());
    const double log_cond = score(pick) - norm;

    draw.log_q += log_cond;
    draw.log_prior_minus_q += klw(pick) - log_cond;

    d.location = cand[static_cast<std::size_t>(pick)];
    field.noalias() += lf.block(d.location) * d.moment;
  }

  if (draw.move.kind == MoveTag::Kind::Birth) {
    Dipole d;
    d.location = birth_loc;
    d.moment = sample_birth_moment(rng, mp);
    d.birth_time = t;
    d.moment_history.push_back(d.moment);
    draw.log_q += birth_moment_logpdf(d.moment, mp);
    draw.next.dipoles.push_back(std::move(d));
  }
  return draw;
}

}  // namespace megpf
