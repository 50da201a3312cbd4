#include "megpf/smc.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "megpf/numeric.hpp"

namespace megpf {

namespace {

/// Static partition of [0, n) over the workers; results must not depend on
/// the partition, which holds because every item owns its RNG stream and
/// output slot.
void parallel_for_ranges(int n, int workers,
                         const std::function<void(int, int)>& body) {
  const int k = std::max(1, std::min(workers, n));
  if (k == 1) {
    body(0, n);
    return;
  }
  const int chunk = (n + k - 1) / k;
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(k));
  threads.reserve(static_cast<std::size_t>(k - 1));
  for (int w = 1; w < k; ++w) {
    const int begin = w * chunk;
    const int end = std::min(n, begin + chunk);
    threads.emplace_back([&, w, begin, end] {
      try {
        if (begin < end) body(begin, end);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  try {
    body(0, std::min(n, chunk));
  } catch (...) {
    errors[0] = std::current_exception();
  }
  for (auto& th : threads) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double loglik_col(const Eigen::Ref<const Eigen::VectorXd>& resid,
                  const ModelParams& mp) {
  return mp.noise_log_norm() -
         0.5 * (resid.array().square() * mp.noise_inv().array()).sum();
}

}  // namespace

void FilterConfig::validate() const {
  if (n_particles < 2)
    throw std::invalid_argument("filter: need at least 2 particles");
  if (workers < 1) throw std::invalid_argument("filter: workers must be >= 1");
  if (ess_threshold < 0.0 || ess_threshold > 1.0)
    throw std::invalid_argument("filter: ess_threshold out of [0, 1]");
  if (move_enabled && model == ModelKind::RandomWalk)
    throw std::invalid_argument(
        "filter: the MH location move applies to the static model only");
  if (debug_full_mixture &&
      (model != ModelKind::Static || proposal != ProposalKind::Designed))
    throw std::invalid_argument(
        "filter: debug_full_mixture applies to the static designed filter");
}

double FilterOutput::mean_dipoles() const {
  if (steps.empty() || n_particles == 0) return 0.0;
  return static_cast<double>(dipole_steps) /
         (static_cast<double>(steps.size()) * n_particles);
}

double FilterOutput::mean_lifetime() const {
  return lifetime_events == 0 ? 0.0
                              : lifetime_total /
                                    static_cast<double>(lifetime_events);
}

double ess(const Eigen::VectorXd& weights) {
  return 1.0 / weights.array().square().sum();
}

std::vector<int> systematic_resample(RngStream& rng,
                                     const Eigen::VectorXd& weights) {
  const int n = static_cast<int>(weights.size());
  std::vector<int> idx(static_cast<std::size_t>(n));
  const double u0 = rng.uniform() / n;
  double cum = weights(0);
  int i = 0;
  for (int k = 0; k < n; ++k) {
    const double u = u0 + static_cast<double>(k) / n;
    while (u > cum && i + 1 < n) {
      ++i;
      cum += weights(i);
    }
    idx[static_cast<std::size_t>(k)] = i;
  }
  return idx;
}

MoveStats rm_move(RngStream& rng, Particle& particle, int t,
                  const Leadfield& lf, const SourceGrid& grid,
                  const ModelParams& mp, EvalCounter* counter) {
  MoveStats stats;
  Eigen::MatrixXd fresh_resid;
  std::vector<double> fresh_ll;

  for (Dipole& d : particle.state.dipoles) {
    const auto& nbrs = grid.neighbors_rm[static_cast<std::size_t>(d.location)];
    if (nbrs.empty()) continue;
    ++stats.proposals;

    const int r_star = nbrs[rng.uniform_below(nbrs.size())];
    const auto& nbrs_star = grid.neighbors_rm[static_cast<std::size_t>(r_star)];
    const int start_step = std::max(d.birth_time, 1);
    const int n_terms = t - start_step + 1;

    const Eigen::MatrixXd g_diff = lf.block(r_star) - lf.block(d.location);
    fresh_resid.resize(lf.n_sensors(), n_terms);
    fresh_ll.assign(static_cast<std::size_t>(n_terms), 0.0);

    double log_ratio = std::log(static_cast<double>(nbrs.size())) -
                       std::log(static_cast<double>(nbrs_star.size()));
    for (int j = 0; j < n_terms; ++j) {
      const int n = start_step + j;
      const Eigen::Vector3d& q_n =
          d.moment_history[static_cast<std::size_t>(n - d.birth_time)];
      fresh_resid.col(j) =
          particle.residual_history[static_cast<std::size_t>(n - 1)] -
          g_diff * q_n;
      fresh_ll[static_cast<std::size_t>(j)] = loglik_col(fresh_resid.col(j), mp);
      log_ratio += fresh_ll[static_cast<std::size_t>(j)] -
                   particle.loglik_history[static_cast<std::size_t>(n - 1)];
    }
    if (counter) counter->add_move(static_cast<std::uint64_t>(n_terms));

    if (std::log(rng.uniform_pos()) < log_ratio) {
      ++stats.accepts;
      d.location = r_star;
      for (int j = 0; j < n_terms; ++j) {
        const int n = start_step + j;
        particle.residual_history[static_cast<std::size_t>(n - 1)] =
            fresh_resid.col(j);
        particle.loglik_history[static_cast<std::size_t>(n - 1)] =
            fresh_ll[static_cast<std::size_t>(j)];
      }
    }
  }
  return stats;
}

Filter::Filter(FilterConfig cfg, ModelParams mp, ProposalParams pp,
               const Leadfield& lf, const SourceGrid& grid)
    : cfg_(cfg), mp_(std::move(mp)), pp_(pp), lf_(lf), grid_(grid) {
  cfg_.validate();
  mp_.validate();
  pp_.validate();
  if (mp_.noise_var().size() != lf_.n_sensors())
    throw std::invalid_argument("filter: noise model does not match sensors");
  if (cfg_.init_fixed_location >= grid_.size())
    throw std::invalid_argument("filter: init_fixed_location out of grid");
  if (cfg_.proposal == ProposalKind::Designed)
    inv_ctx_ = make_inverse_context(lf_, pp_);
  init();
}

void Filter::init() {
  const int n = cfg_.n_particles;
  t_ = 0;
  cum_log_evidence_ = 0.0;
  counter_.reset();
  life_events_ = 0;
  life_steps_ = 0;
  telemetry_ = FilterOutput{};
  telemetry_.n_particles = n;
  particles_.assign(static_cast<std::size_t>(n), Particle{});
  for (int i = 0; i < n; ++i) {
    auto rng = RngStream::stream(cfg_.seed, 0, i, RngStream::Phase::Init);
    Particle& p = particles_[static_cast<std::size_t>(i)];
    if (cfg_.init_fixed_location >= 0) {
      Dipole d;
      d.location = cfg_.init_fixed_location;
      d.moment = mp_.sigma_q * rng.normal3();
      d.birth_time = 0;
      d.moment_history.push_back(d.moment);
      p.state.dipoles.push_back(std::move(d));
    } else {
      p.state = sample_prior(rng, mp_, grid_);
    }
  }
  weights_ = Eigen::VectorXd::Constant(n, 1.0 / n);
  log_weights_ = Eigen::VectorXd::Constant(n, -std::log(static_cast<double>(n)));
}

void Filter::propose_range(int begin, int end, const Eigen::VectorXd& b_t,
                           const BirthLocationProposal* birth,
                           Eigen::VectorXd& increments) {
  const bool designed = cfg_.proposal == ProposalKind::Designed;
  const bool random_walk = cfg_.model == ModelKind::RandomWalk;
  const bool keep_history = cfg_.move_enabled;

  for (int i = begin; i < end; ++i) {
    auto rng = RngStream::stream(cfg_.seed, t_, i, RngStream::Phase::Propose);
    Particle& p = particles_[static_cast<std::size_t>(i)];

    DipoleState next;
    MoveTag tag;
    double correction = 0.0;

    if (designed) {
      const DeathWeights dw =
          death_weights(p.state, b_t, lf_, mp_, pp_, &counter_);
      if (random_walk) {
        ProposalDraw draw = rw_sample_proposal(rng, p.state, t_, b_t, *birth,
                                               dw, lf_, mp_, pp_, grid_,
                                               &counter_);
        tag = draw.move;
        correction = draw.log_prior_minus_q;
        next = std::move(draw.next);
      } else {
        ProposalDraw draw =
            sample_proposal(rng, p.state, t_, *birth, dw, mp_, pp_, grid_);
        tag = draw.move;
        correction = cfg_.debug_full_mixture
                         ? transition_logdensity(p.state, draw.next, mp_,
                                                 grid_) -
                               proposal_logdensity(p.state, draw.next, *birth,
                                                   dw, mp_, pp_, grid_)
                         : draw.log_prior_minus_q;
        next = std::move(draw.next);
      }
    } else {
      auto [drawn, drawn_tag] =
          random_walk ? rw_sample_transition(rng, p.state, mp_, grid_, t_)
                      : sample_transition(rng, p.state, mp_, grid_, t_);
      next = std::move(drawn);
      tag = drawn_tag;
    }

    if (tag.kind == MoveTag::Kind::Death) {
      const int born =
          p.state.dipoles[static_cast<std::size_t>(tag.victim)].birth_time;
      life_events_.fetch_add(1, std::memory_order_relaxed);
      life_steps_.fetch_add(static_cast<std::uint64_t>(t_ - born),
                            std::memory_order_relaxed);
    }

    Eigen::VectorXd resid = b_t - predict_field(next, lf_);
    const double ll = gaussian_loglik_resid(resid, mp_);
    counter_.add_weight(1);
    increments(i) = ll + correction;

    p.state = std::move(next);
    if (keep_history) {
      p.residual_history.push_back(std::move(resid));
      p.loglik_history.push_back(ll);
    }
  }
}

void Filter::resample() {
  auto rng = RngStream::stream(cfg_.seed, t_, 0, RngStream::Phase::Resample);
  const std::vector<int> idx = systematic_resample(rng, weights_);
  const int n = cfg_.n_particles;

  std::vector<Particle> next;
  next.reserve(static_cast<std::size_t>(n));
  int prev_parent = -1;
  std::size_t first_pos = 0;
  for (int k = 0; k < n; ++k) {
    const int parent = idx[static_cast<std::size_t>(k)];
    if (parent != prev_parent) {
      first_pos = next.size();
      next.push_back(std::move(particles_[static_cast<std::size_t>(parent)]));
      prev_parent = parent;
    } else {
      next.push_back(next[first_pos]);  // no reallocation: capacity reserved
    }
  }
  particles_ = std::move(next);
  weights_.setConstant(1.0 / n);
  log_weights_.setConstant(-std::log(static_cast<double>(n)));
}

void Filter::move_range(int begin, int end, std::vector<MoveStats>& stats) {
  for (int i = begin; i < end; ++i) {
    auto rng = RngStream::stream(cfg_.seed, t_, i, RngStream::Phase::Move);
    stats[static_cast<std::size_t>(i)] =
        rm_move(rng, particles_[static_cast<std::size_t>(i)], t_, lf_, grid_,
                mp_, &counter_);
  }
}

StepSummary Filter::step(const Eigen::VectorXd& b_t) {
  if (b_t.size() != lf_.n_sensors())
    throw std::invalid_argument("filter: measurement size != sensors");
  ++t_;
  const int n = cfg_.n_particles;

  BirthLocationProposal birth;
  const BirthLocationProposal* birth_ptr = nullptr;
  if (cfg_.proposal == ProposalKind::Designed) {
    birth = birth_location_pmf(b_t, lf_, inv_ctx_, pp_);
    birth_ptr = &birth;
  }

  Eigen::VectorXd increments(n);
  parallel_for_ranges(n, cfg_.workers, [&](int begin, int end) {
    propose_range(begin, end, b_t, birth_ptr, increments);
  });

  const Eigen::VectorXd unnorm = log_weights_ + increments;
  const double step_ev = logsumexp(unnorm);
  if (!std::isfinite(step_ev))
    throw NumericalCollapse(
        "all particle weights vanished at step " + std::to_string(t_) +
        "; the model cannot explain this measurement");
  log_weights_ = unnorm.array() - step_ev;
  weights_ = log_weights_.array().exp();
  weights_ /= weights_.sum();
  cum_log_evidence_ += step_ev;

  StepSummary summary;
  summary.t = t_;
  summary.ess = ess(weights_);
  summary.step_log_evidence = step_ev;
  summary.cum_log_evidence = cum_log_evidence_;

  if (cfg_.resample_every_step ||
      summary.ess < cfg_.ess_threshold * static_cast<double>(n)) {
    resample();
    summary.resampled = true;
  }

  if (cfg_.move_enabled && cfg_.model == ModelKind::Static) {
    std::vector<MoveStats> stats(static_cast<std::size_t>(n));
    parallel_for_ranges(n, cfg_.workers, [&](int begin, int end) {
      move_range(begin, end, stats);
    });
    for (const MoveStats& s : stats) {
      summary.move_proposals += s.proposals;
      summary.move_accepts += s.accepts;
    }
  }

  for (const Particle& p : particles_)
    telemetry_.dipole_steps += static_cast<std::uint64_t>(p.state.count());
  telemetry_.lifetime_events = life_events_.load(std::memory_order_relaxed);
  telemetry_.lifetime_total =
      static_cast<double>(life_steps_.load(std::memory_order_relaxed));
  telemetry_.steps.push_back(summary);
  return summary;
}

FilterOutput Filter::run(
    const Eigen::MatrixXd& b,
    const std::function<void(const Filter&, const StepSummary&)>& on_step) {
  init();
  for (Eigen::Index r = 0; r < b.rows(); ++r) {
    const StepSummary s = step(b.row(r).transpose());
    if (on_step) on_step(*this, s);
  }

  // close out lifetimes still running at the end of the series
  for (const Particle& p : particles_) {
    for (const Dipole& d : p.state.dipoles) {
      telemetry_.lifetime_events += 1;
      telemetry_.lifetime_total += static_cast<double>(t_ - d.birth_time + 1);
    }
  }

  telemetry_.evals = counter_.snapshot();
  telemetry_.terminal_log_evidence = cum_log_evidence_;
  if (!telemetry_.steps.empty()) {
    double acc = 0.0;
    for (const StepSummary& s : telemetry_.steps) acc += s.ess;
    telemetry_.mean_ess_fraction =
        acc / (static_cast<double>(telemetry_.steps.size()) * cfg_.n_particles);
  }
  return telemetry_;
}

}  // namespace megpf
