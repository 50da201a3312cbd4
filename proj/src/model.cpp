#include "megpf/model.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "megpf/numeric.hpp"

namespace megpf {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)
constexpr double kTinyMomentSq = 1e-30;         // |q|^2 below which the step is isotropic
}  // namespace

double ModelParams::p_death(int n) const {
  if (n <= 0) return 0.0;
  return 1.0 - std::pow(1.0 - death_rate, n);
}

void ModelParams::set_noise(const Eigen::VectorXd& variances) {
  if (variances.size() == 0)
    throw std::invalid_argument("model: empty noise variance vector");
  if ((variances.array() <= 0.0).any())
    throw std::invalid_argument("model: noise variances must be positive");
  noise_var_ = variances;
  noise_inv_ = variances.cwiseInverse();
  noise_log_norm_ =
      -0.5 * (kLog2Pi * static_cast<double>(variances.size()) +
              variances.array().log().sum());
}

void ModelParams::validate() const {
  if (n_max < 1) throw std::invalid_argument("model: n_max must be >= 1");
  if (p_birth < 0.0 || p_birth >= 1.0)
    throw std::invalid_argument("model: p_birth out of [0, 1)");
  if (death_rate < 0.0 || death_rate >= 1.0)
    throw std::invalid_argument("model: death_rate out of [0, 1)");
  if (p_birth + p_death(n_max) >= 1.0)
    throw std::invalid_argument(
        "model: p_birth + p_death(n_max) must stay below 1");
  if (birth_rate_poisson <= 0.0)
    throw std::invalid_argument("model: birth_rate_poisson must be positive");
  if (sigma_q <= 0.0 || delta_base_var <= 0.0 || birth_moment_var <= 0.0)
    throw std::invalid_argument("model: moment scales must be positive");
  if (delta_parallel_factor < 1.0)
    throw std::invalid_argument("model: delta_parallel_factor must be >= 1");
  if (rw_sigma_d <= 0.0)
    throw std::invalid_argument("model: rw_sigma_d must be positive");
}

double count_prior_logpmf(int n, const ModelParams& p) {
  if (n < 0 || n > p.n_max) return kNegInf;
  // unnormalized log pmf of Poisson(rate): n log(rate) - log(n!)
  std::vector<double> lw(static_cast<std::size_t>(p.n_max) + 1);
  double log_fact = 0.0;
  for (int k = 0; k <= p.n_max; ++k) {
    if (k > 0) log_fact += std::log(static_cast<double>(k));
    lw[static_cast<std::size_t>(k)] = k * std::log(p.birth_rate_poisson) - log_fact;
  }
  return lw[static_cast<std::size_t>(n)] - logsumexp(lw);
}

DipoleState sample_prior(RngStream& rng, const ModelParams& p,
                         const SourceGrid& grid) {
  std::vector<double> pmf(static_cast<std::size_t>(p.n_max) + 1);
  for (int k = 0; k <= p.n_max; ++k)
    pmf[static_cast<std::size_t>(k)] = std::exp(count_prior_logpmf(k, p));

  const double u = rng.uniform();
  int n = p.n_max;
  double acc = 0.0;
  for (int k = 0; k <= p.n_max; ++k) {
    acc += pmf[static_cast<std::size_t>(k)];
    if (u < acc) {
      n = k;
      break;
    }
  }

  DipoleState state;
  state.dipoles.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Dipole d;
    d.location = static_cast<int>(
        rng.uniform_below(static_cast<std::uint64_t>(grid.size())));
    d.moment = p.sigma_q * rng.normal3();
    d.birth_time = 0;
    d.moment_history.push_back(d.moment);
    state.dipoles.push_back(std::move(d));
  }
  return state;
}

Eigen::Matrix3d moment_step_cov(const Eigen::Vector3d& q_prev,
                                const ModelParams& p) {
  const double v = p.delta_base_var;
  if (q_prev.squaredNorm() < kTinyMomentSq)
    return v * Eigen::Matrix3d::Identity();
  const Eigen::Vector3d u = q_prev.normalized();
  return v * (Eigen::Matrix3d::Identity() +
              (p.delta_parallel_factor - 1.0) * u * u.transpose());
}

Eigen::Vector3d sample_moment_step(RngStream& rng,
                                   const Eigen::Vector3d& q_prev,
                                   const ModelParams& p) {
  const double sv = std::sqrt(p.delta_base_var);
  const Eigen::Vector3d z = rng.normal3();
  if (q_prev.squaredNorm() < kTinyMomentSq) return q_prev + sv * z;
  const Eigen::Vector3d u = q_prev.normalized();
  const double stretch = std::sqrt(p.delta_parallel_factor) - 1.0;
  return q_prev + sv * (z + stretch * u.dot(z) * u);
}

double moment_step_logpdf(const Eigen::Vector3d& q_next,
                          const Eigen::Vector3d& q_prev,
                          const ModelParams& p) {
  const double v = p.delta_base_var;
  const Eigen::Vector3d d = q_next - q_prev;
  if (q_prev.squaredNorm() < kTinyMomentSq)
    return -1.5 * (kLog2Pi + std::log(v)) - 0.5 * d.squaredNorm() / v;
  const double f = p.delta_parallel_factor;
  const Eigen::Vector3d u = q_prev.normalized();
  const double along = u.dot(d);
  const double quad = (d.squaredNorm() - (1.0 - 1.0 / f) * along * along) / v;
  const double logdet = 3.0 * std::log(v) + std::log(f);
  return -1.5 * kLog2Pi - 0.5 * logdet - 0.5 * quad;
}

Eigen::Vector3d sample_birth_moment(RngStream& rng, const ModelParams& p) {
  return std::sqrt(p.birth_moment_var) * rng.normal3();
}

double birth_moment_logpdf(const Eigen::Vector3d& q, const ModelParams& p) {
  const double v = p.birth_moment_var;
  return -1.5 * (kLog2Pi + std::log(v)) - 0.5 * q.squaredNorm() / v;
}

namespace {

void step_all_moments(RngStream& rng, DipoleState& state,
                      const ModelParams& p) {
  for (Dipole& d : state.dipoles) {
    d.moment = sample_moment_step(rng, d.moment, p);
    d.moment_history.push_back(d.moment);
  }
}

Dipole make_newborn(RngStream& rng, int location, const ModelParams& p,
                    int t) {
  Dipole d;
  d.location = location;
  d.moment = sample_birth_moment(rng, p);
  d.birth_time = t;
  d.moment_history.push_back(d.moment);
  return d;
}

}  // namespace

std::pair<DipoleState, MoveTag> sample_transition(RngStream& rng,
                                                  const DipoleState& j_prev,
                                                  const ModelParams& p,
                                                  const SourceGrid& grid,
                                                  int t) {
  const int n = j_prev.count();
  const double pb = p.p_birth_eff(n);
  const double pd = p.p_death(n);
  const double u = rng.uniform();

  DipoleState next = j_prev;
  MoveTag tag;
  if (u < pb) {
    tag.kind = MoveTag::Kind::Birth;
  } else if (u < pb + pd) {
    tag.kind = MoveTag::Kind::Death;
    tag.victim = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(n)));
    next.dipoles.erase(next.dipoles.begin() + tag.victim);
  }

  step_all_moments(rng, next, p);
  if (tag.kind == MoveTag::Kind::Birth) {
    const int loc = static_cast<int>(
        rng.uniform_below(static_cast<std::uint64_t>(grid.size())));
    next.dipoles.push_back(make_newborn(rng, loc, p, t));
  }
  return {std::move(next), tag};
}

double transition_logdensity(const DipoleState& j_prev,
                             const DipoleState& j_next, const ModelParams& p,
                             const SourceGrid& grid) {
  const int n_prev = j_prev.count();
  const int n_next = j_next.count();
  const double pb = p.p_birth_eff(n_prev);
  const double pd = p.p_death(n_prev);
  const double ps = 1.0 - pb - pd;

  std::vector<double> terms;

  if (n_next == n_prev + 1 && n_next <= p.n_max && pb > 0.0) {
    bool match = true;
    for (int i = 0; i < n_prev && match; ++i)
      match = j_next.dipoles[static_cast<std::size_t>(i)].location ==
              j_prev.dipoles[static_cast<std::size_t>(i)].location;
    if (match) {
      double lp = std::log(pb) - std::log(static_cast<double>(grid.size())) +
                  birth_moment_logpdf(
                      j_next.dipoles[static_cast<std::size_t>(n_prev)].moment, p);
      for (int i = 0; i < n_prev; ++i)
        lp += moment_step_logpdf(
            j_next.dipoles[static_cast<std::size_t>(i)].moment,
            j_prev.dipoles[static_cast<std::size_t>(i)].moment, p);
      terms.push_back(lp);
    }
  }

  if (n_next == n_prev - 1 && pd > 0.0) {
    for (int victim = 0; victim < n_prev; ++victim) {
      bool match = true;
      for (int i = 0; i < n_next && match; ++i) {
        const int prev_i = i < victim ? i : i + 1;
        match = j_next.dipoles[static_cast<std::size_t>(i)].location ==
                j_prev.dipoles[static_cast<std::size_t>(prev_i)].location;
      }
      if (!match) continue;
      double lp = std::log(pd) - std::log(static_cast<double>(n_prev));
      for (int i = 0; i < n_next; ++i) {
        const int prev_i = i < victim ? i : i + 1;
        lp += moment_step_logpdf(
            j_next.dipoles[static_cast<std::size_t>(i)].moment,
            j_prev.dipoles[static_cast<std::size_t>(prev_i)].moment, p);
      }
      terms.push_back(lp);
    }
  }

  if (n_next == n_prev && ps > 0.0) {
    bool match = true;
    for (int i = 0; i < n_prev && match; ++i)
      match = j_next.dipoles[static_cast<std::size_t>(i)].location ==
              j_prev.dipoles[static_cast<std::size_t>(i)].location;
    if (match) {
      double lp = std::log(ps);
      for (int i = 0; i < n_prev; ++i)
        lp += moment_step_logpdf(
            j_next.dipoles[static_cast<std::size_t>(i)].moment,
            j_prev.dipoles[static_cast<std::size_t>(i)].moment, p);
      terms.push_back(lp);
    }
  }

  return logsumexp(terms);
}

double gaussian_loglik_resid(const Eigen::VectorXd& resid,
                             const ModelParams& p) {
  if (resid.size() != p.noise_var().size())
    throw std::invalid_argument("likelihood: residual/noise size mismatch");
  return p.noise_log_norm() -
         0.5 * (resid.array().square() * p.noise_inv().array()).sum();
}

double log_likelihood(const Eigen::VectorXd& b, const DipoleState& j,
                      const Leadfield& lf, const ModelParams& p) {
  if (b.size() != lf.n_sensors())
    throw std::invalid_argument("likelihood: measurement/sensor size mismatch");
  return gaussian_loglik_resid(b - predict_field(j, lf), p);
}

std::pair<std::vector<int>, Eigen::VectorXd> rw_kernel_row(
    int from, const SourceGrid& grid, const ModelParams& p) {
  const auto& nbrs = grid.neighbors_rw[static_cast<std::size_t>(from)];
  std::vector<int> cand;
  cand.reserve(nbrs.size() + 1);
  cand.push_back(from);
  cand.insert(cand.end(), nbrs.begin(), nbrs.end());

  Eigen::VectorXd lw(static_cast<Eigen::Index>(cand.size()));
  const double inv2s2 = 1.0 / (2.0 * p.rw_sigma_d * p.rw_sigma_d);
  const Eigen::Vector3d& origin = grid.points[static_cast<std::size_t>(from)];
  for (std::size_t i = 0; i < cand.size(); ++i) {
    const double d2 =
        (grid.points[static_cast<std::size_t>(cand[i])] - origin).squaredNorm();
    lw(static_cast<Eigen::Index>(i)) = -d2 * inv2s2;
  }
  lw.array() -= logsumexp(lw);
  return {std::move(cand), std::move(lw)};
}

double rw_kernel_logprob(int from, int to, const SourceGrid& grid,
                         const ModelParams& p) {
  const auto [cand, lw] = rw_kernel_row(from, grid, p);
  for (std::size_t i = 0; i < cand.size(); ++i)
    if (cand[i] == to) return lw(static_cast<Eigen::Index>(i));
  return kNegInf;
}

int rw_sample_kernel(RngStream& rng, int from, const SourceGrid& grid,
                     const ModelParams& p) {
  const auto [cand, lw] = rw_kernel_row(from, grid, p);
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    acc += std::exp(lw(static_cast<Eigen::Index>(i)));
    if (u < acc) return cand[i];
  }
  return cand.back();
}

std::pair<DipoleState, MoveTag> rw_sample_transition(RngStream& rng,
                                                     const DipoleState& j_prev,
                                                     const ModelParams& p,
                                                     const SourceGrid& grid,
                                                     int t) {
  const int n = j_prev.count();
  const double pb = p.p_birth_eff(n);
  const double pd = p.p_death(n);
  const double u = rng.uniform();

  DipoleState next = j_prev;
  MoveTag tag;
  if (u < pb) {
    tag.kind = MoveTag::Kind::Birth;
  } else if (u < pb + pd) {
    tag.kind = MoveTag::Kind::Death;
    tag.victim = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(n)));
    next.dipoles.erase(next.dipoles.begin() + tag.victim);
  }

  for (Dipole& d : next.dipoles) {
    d.moment = sample_moment_step(rng, d.moment, p);
    d.moment_history.push_back(d.moment);
    d.location = rw_sample_kernel(rng, d.location, grid, p);
  }
  if (tag.kind == MoveTag::Kind::Birth) {
    const int loc = static_cast<int>(
        rng.uniform_below(static_cast<std::uint64_t>(grid.size())));
    next.dipoles.push_back(make_newborn(rng, loc, p, t));
  }
  return {std::move(next), tag};
}

double rw_transition_logdensity(const DipoleState& j_prev,
                                const DipoleState& j_next,
                                const ModelParams& p, const SourceGrid& grid) {
  const int n_prev = j_prev.count();
  const int n_next = j_next.count();
  const double pb = p.p_birth_eff(n_prev);
  const double pd = p.p_death(n_prev);
  const double ps = 1.0 - pb - pd;

  auto survivor_factor = [&](int prev_i, int next_i) {
    const Dipole& a = j_prev.dipoles[static_cast<std::size_t>(prev_i)];
    const Dipole& b = j_next.dipoles[static_cast<std::size_t>(next_i)];
    return moment_step_logpdf(b.moment, a.moment, p) +
           rw_kernel_logprob(a.location, b.location, grid, p);
  };

  std::vector<double> terms;

  if (n_next == n_prev + 1 && n_next <= p.n_max && pb > 0.0) {
    double lp = std::log(pb) - std::log(static_cast<double>(grid.size())) +
                birth_moment_logpdf(
                    j_next.dipoles[static_cast<std::size_t>(n_prev)].moment, p);
    for (int i = 0; i < n_prev; ++i) lp += survivor_factor(i, i);
    terms.push_back(lp);
  }

  if (n_next == n_prev - 1 && pd > 0.0) {
    for (int victim = 0; victim < n_prev; ++victim) {
      double lp = std::log(pd) - std::log(static_cast<double>(n_prev));
      for (int i = 0; i < n_next; ++i)
        lp += survivor_factor(i < victim ? i : i + 1, i);
      terms.push_back(lp);
    }
  }

  if (n_next == n_prev && ps > 0.0) {
    double lp = std::log(ps);
    for (int i = 0; i < n_prev; ++i) lp += survivor_factor(i, i);
    terms.push_back(lp);
  }

  return logsumexp(terms);
}

Eigen::VectorXd estimate_noise(const Eigen::MatrixXd& b_pre) {
  const Eigen::Index t0 = b_pre.rows();
  if (t0 < 2)
    throw std::invalid_argument(
        "noise estimate: need at least 2 pre-stimulus samples");
  const Eigen::RowVectorXd mean = b_pre.colwise().mean();
  Eigen::VectorXd var = (b_pre.rowwise() - mean)
                            .array()
                            .square()
                            .colwise()
                            .sum()
                            .transpose() /
                        static_cast<double>(t0 - 1);
  if ((var.array() <= 0.0).any())
    throw std::invalid_argument(
        "noise estimate: degenerate (zero-variance) pre-stimulus channel");
  return var;
}

Eigen::VectorXd estimate_noise_pooled(const Eigen::MatrixXd& b_pre,
                                      const std::vector<int>& groups) {
  if (static_cast<Eigen::Index>(groups.size()) != b_pre.cols())
    throw std::invalid_argument("noise estimate: group labels != sensors");
  const Eigen::VectorXd per_sensor = estimate_noise(b_pre);

  std::map<int, std::pair<double, int>> pool;  // group -> (sum, count)
  for (Eigen::Index s = 0; s < per_sensor.size(); ++s) {
    auto& [sum, count] = pool[groups[static_cast<std::size_t>(s)]];
    sum += per_sensor(s);
    ++count;
  }
  Eigen::VectorXd out(per_sensor.size());
  for (Eigen::Index s = 0; s < per_sensor.size(); ++s) {
    const auto& [sum, count] = pool[groups[static_cast<std::size_t>(s)]];
    out(s) = sum / count;
  }
  return out;
}

}  // namespace megpf
