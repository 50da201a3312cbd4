// Acceptance harness: eight end-to-end checks covering localization quality,
// model-comparison behavior, estimator calibration, MH-kernel invariance,
// oracle equivalences, cost telemetry, and bit-level determinism.  Each
// criterion prints exactly one PASS/FAIL line; the exit code is the number
// of failures.  Tolerances are fixed constants here; only scenario knobs
// (seeds, noise scales, source layouts) may be adjusted.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "megpf/config.hpp"
#include "megpf/estimators.hpp"
#include "megpf/forward.hpp"
#include "megpf/geometry.hpp"
#include "megpf/io.hpp"
#include "megpf/metrics.hpp"
#include "megpf/model.hpp"
#include "megpf/numeric.hpp"
#include "megpf/proposals.hpp"
#include "megpf/rng.hpp"
#include "megpf/smc.hpp"
#include "megpf/synthgen.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace megpf;

namespace {

struct CriterionResult {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

void progress(const std::string& msg) {
  std::fprintf(stderr, "[acceptance] %s\n", msg.c_str());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// ---------------------------------------------------------------------------
// Criteria 1-3 share one batch of filter runs: 20 staggered-source datasets
// on a ~1500-point grid, three filter variants at 2000 particles each.
// ---------------------------------------------------------------------------

constexpr int kScenarioDatasets = 20;
constexpr int kScenarioSteps = 70;
constexpr int kScenarioParticles = 2000;
constexpr double kScenarioSnr = 2.0;
constexpr std::uint64_t kScenarioSeed = 20260825;

// Newborn moment std, A*m.  Sources switch on at 1 nAm; the default newborn
// scale (0.1 nAm, tied to the per-step moment std) forces every fresh dipole
// to random-walk its amplitude up for ~10 steps before it explains the data,
// which drags acquisition for every variant.  0.5 nAm lets a birth at the
// right vertex become competitive within a step while staying broad enough
// not to overshoot weak sources.
constexpr double kScenarioBirthStd = 0.5e-9;

struct SharedRuns {
  bool done = false;
  double rm_adct = 0.0, boot_adct = 0.0;    // mean over covered active steps
  double rm_cover = 0.0, boot_cover = 0.0;  // covered / active step fraction
  double rm_ess = 0.0, boot_ess = 0.0;      // mean over datasets of ESS/N
  int evidence_wins = 0;                    // datasets with rm > rw-designed
  double rm_boot_seconds = 0.0;             // runtime of the rm + boot runs
  double rwd_seconds = 0.0;
};

const SharedRuns& shared_runs() {
  static SharedRuns cache;
  if (cache.done) return cache;

  GeometryConfig geometry;
  geometry.source_shell_radius_m = 0.0573;  // ~1500 vertices at 5 mm
  const auto [sensors, grid] = build_geometry(geometry);
  const Leadfield lf =
      compute_leadfield(grid, sensors, geometry.conductor_radius_m);
  progress(fmt("scenario grid: %d vertices, %d sensors", grid.size(),
               sensors.count()));

  ScenarioConfig scenario;
  scenario.n_datasets = kScenarioDatasets;
  scenario.n_steps = kScenarioSteps;
  scenario.n_sources = 3;
  scenario.stagger = 5;
  scenario.min_separation_m = 0.03;
  scenario.snr = kScenarioSnr;
  scenario.seed = kScenarioSeed;

  const ModelParams base_model;
  const ProposalParams pp;
  const std::vector<int> pooled_groups(static_cast<std::size_t>(
                                           sensors.count()),
                                       0);

  struct AdctAccum {
    double sum = 0.0;
    int covered = 0;
    int active = 0;
  };
  AdctAccum rm_acc, boot_acc;
  double rm_ess_sum = 0.0, boot_ess_sum = 0.0;

  for (int d = 0; d < kScenarioDatasets; ++d) {
    const ExperimentRecord rec = generate(scenario, grid, lf, d);
    ModelParams mp = base_model;
    mp.birth_moment_var = kScenarioBirthStd * kScenarioBirthStd;
    mp.set_noise(estimate_noise_pooled(rec.prestim, pooled_groups));

    auto make_cfg = [&](ProposalKind prop, ModelKind model, bool move,
                        int variant_id) {
      FilterConfig fc;
      fc.n_particles = kScenarioParticles;
      fc.proposal = prop;
      fc.model = model;
      fc.move_enabled = move;
      fc.seed = RngStream::stream(kScenarioSeed, d, variant_id,
                                  RngStream::Phase::Scratch)
                    .next_u64();
      return fc;
    };

    auto run_with_adct = [&](const FilterConfig& fc, AdctAccum& acc,
                             double& ess_sum, double& adct_ds) {
      Filter filter(fc, mp, pp, lf, grid);
      double ds_sum = 0.0;
      int ds_covered = 0;
      auto on_step = [&](const Filter& f, const StepSummary& s) {
        const DipolePointSet tgt = rec.truth_at(s.t);
        if (tgt.count() == 0) return;
        acc.active += 1;
        const PosteriorSummary summary =
            summarize(f.particles(), f.weights(), mp.n_max, grid.size());
        const RepresentativeSet rep = representative_set(summary, grid);
        DipolePointSet est;
        for (const RepresentativeDipole& rd : rep.dipoles) {
          est.locations.push_back(grid.points[rd.location]);
          est.moments.push_back(1e9 * rd.moment);
        }
        const double a = adct(est, tgt);
        if (!is_metric_missing(a)) {
          acc.sum += a;
          acc.covered += 1;
          ds_sum += a;
          ds_covered += 1;
        }
      };
      const FilterOutput out = filter.run(rec.measurements, on_step);
      ess_sum += out.mean_ess_fraction;
      adct_ds = ds_covered > 0 ? ds_sum / ds_covered : -1.0;
      return out;
    };

    const auto t0 = std::chrono::steady_clock::now();
    double rm_ds_adct = -1.0, boot_ds_adct = -1.0;
    const FilterOutput rm_out =
        run_with_adct(make_cfg(ProposalKind::Designed, ModelKind::Static,
                               true, 0),
                      rm_acc, rm_ess_sum, rm_ds_adct);
    const FilterOutput boot_out = run_with_adct(
        make_cfg(ProposalKind::Bootstrap, ModelKind::Static, false, 1),
        boot_acc, boot_ess_sum, boot_ds_adct);
    cache.rm_boot_seconds += seconds_since(t0);
    const double rm_ev = rm_out.terminal_log_evidence;

    const auto t1 = std::chrono::steady_clock::now();
    FilterConfig rwd_cfg = make_cfg(ProposalKind::Designed,
                                    ModelKind::RandomWalk, false, 2);
    Filter rwd(rwd_cfg, mp, pp, lf, grid);
    const double rwd_ev = rwd.run(rec.measurements).terminal_log_evidence;
    cache.rwd_seconds += seconds_since(t1);

    if (rm_ev > rwd_ev) cache.evidence_wins += 1;
    progress(fmt(
        "dataset %d/%d: ev rm-rwd %+.1f, adct rm %.1f boot %.1f mm, "
        "ess rm %.3f boot %.3f, elapsed %.0f s",
        d + 1, kScenarioDatasets, rm_ev - rwd_ev, 1e3 * rm_ds_adct,
        1e3 * boot_ds_adct, rm_out.mean_ess_fraction,
        boot_out.mean_ess_fraction,
        cache.rm_boot_seconds + cache.rwd_seconds));
  }

  cache.rm_adct = rm_acc.covered > 0 ? rm_acc.sum / rm_acc.covered : -1.0;
  cache.boot_adct =
      boot_acc.covered > 0 ? boot_acc.sum / boot_acc.covered : -1.0;
  cache.rm_cover =
      rm_acc.active > 0 ? double(rm_acc.covered) / rm_acc.active : 0.0;
  cache.boot_cover =
      boot_acc.active > 0 ? double(boot_acc.covered) / boot_acc.active : 0.0;
  cache.rm_ess = rm_ess_sum / kScenarioDatasets;
  cache.boot_ess = boot_ess_sum / kScenarioDatasets;
  cache.done = true;
  return cache;
}

CriterionResult criterion1() {
  const SharedRuns& r = shared_runs();
  CriterionResult res;
  const bool adct_ok = r.rm_adct >= 0.0 && r.rm_adct <= 0.010;
  const bool ratio_ok = r.boot_adct >= 1.5 * r.rm_adct;
  const bool time_ok = r.rm_boot_seconds < 1800.0;
  res.pass = adct_ok && ratio_ok && time_ok;
  res.detail = fmt(
      "rm adct %.1f mm (cover %.2f), boot adct %.1f mm (cover %.2f), "
      "ratio %.2f, runtime %.0f s",
      1e3 * r.rm_adct, r.rm_cover, 1e3 * r.boot_adct, r.boot_cover,
      r.rm_adct > 0.0 ? r.boot_adct / r.rm_adct : 0.0, r.rm_boot_seconds);
  return res;
}

CriterionResult criterion2() {
  const SharedRuns& r = shared_runs();
  CriterionResult res;
  res.pass = r.evidence_wins >= (kScenarioDatasets * 8 + 9) / 10;
  res.detail = fmt("static-rm beats rw-designed on %d/%d datasets (need 16)",
                   r.evidence_wins, kScenarioDatasets);
  return res;
}

CriterionResult criterion3() {
  const SharedRuns& r = shared_runs();
  CriterionResult res;
  res.pass = r.rm_ess >= 1.5 * r.boot_ess;
  res.detail = fmt("mean ESS/N: rm %.3f, boot %.3f, ratio %.2f (need 1.5)",
                   r.rm_ess, r.boot_ess,
                   r.boot_ess > 0.0 ? r.rm_ess / r.boot_ess : 0.0);
  return res;
}

// ---------------------------------------------------------------------------
// Criterion 4: with births and deaths switched off, an isotropic moment
// walk on one fixed dipole is linear-Gaussian, so the particle evidence
// must track the exact conjugate recursion and be unbiased on the ratio
// scale.
// ---------------------------------------------------------------------------

CriterionResult criterion4() {
  const auto t0 = std::chrono::steady_clock::now();

  GeometryConfig geometry;
  geometry.n_sensors = 16;
  geometry.grid_spacing_m = 0.02;
  const auto [sensors, grid] = build_geometry(geometry);
  const Leadfield lf =
      compute_leadfield(grid, sensors, geometry.conductor_radius_m);
  int vertex = 0;
  for (int i = 0; i < grid.size(); ++i) {
    if (grid.points[i].z() > grid.points[vertex].z()) vertex = i;
  }
  const Eigen::MatrixXd H = lf.block(vertex);
  const int m = static_cast<int>(H.rows());

  ModelParams mp;
  mp.p_birth = 0.0;
  mp.death_rate = 0.0;
  mp.delta_parallel_factor = 1.0;  // isotropic step: exactly Gaussian
  // Per-sensor noise at the typical per-sensor signal scale.
  const double sigma = mp.sigma_q * H.norm() / std::sqrt(double(m));
  mp.set_noise(Eigen::VectorXd::Constant(m, sigma * sigma));
  mp.validate();

  const int n_runs = 50;
  const int n_steps = 20;
  const int n_particles = 10000;
  const std::uint64_t seed = 41;

  const Eigen::MatrixXd p0 =
      mp.sigma_q * mp.sigma_q * Eigen::MatrixXd::Identity(3, 3);
  const Eigen::MatrixXd q_cov =
      mp.delta_base_var * Eigen::MatrixXd::Identity(3, 3);
  const Eigen::VectorXd r_diag =
      Eigen::VectorXd::Constant(m, sigma * sigma);

  double dlog_sum = 0.0;
  double ratio_sum = 0.0;
  for (int run = 0; run < n_runs; ++run) {
    // Fresh trajectory and measurements from the same law the filter assumes.
    RngStream gen = RngStream::stream(seed, run, 0, RngStream::Phase::Generate);
    Eigen::Vector3d x = mp.sigma_q * gen.normal3();
    Eigen::MatrixXd b(n_steps, m);
    const double step_std = std::sqrt(mp.delta_base_var);
    for (int t = 0; t < n_steps; ++t) {
      x += step_std * gen.normal3();
      const Eigen::VectorXd mean = H * x;
      for (int s = 0; s < m; ++s) b(t, s) = mean(s) + sigma * gen.normal();
    }

    FilterConfig fc;
    fc.n_particles = n_particles;
    fc.proposal = ProposalKind::Bootstrap;
    fc.model = ModelKind::Static;
    fc.move_enabled = false;
    fc.init_fixed_location = vertex;
    fc.seed = RngStream::stream(seed, run, 1, RngStream::Phase::Scratch)
                  .next_u64();
    Filter filter(fc, mp, ProposalParams{}, lf, grid);
    const double particle_ev = filter.run(b).terminal_log_evidence;
    const double exact_ev = oracles::kalman_log_evidence(b, H, p0, q_cov,
                                                         r_diag);
    dlog_sum += particle_ev - exact_ev;
    ratio_sum += std::exp(particle_ev - exact_ev);
  }
  const double mean_dlog = dlog_sum / n_runs;
  const double mean_ratio = ratio_sum / n_runs;
  const double elapsed = seconds_since(t0);

  CriterionResult res;
  res.pass = std::abs(mean_dlog) < 0.5 && mean_ratio >= 0.8 &&
             mean_ratio <= 1.2 && elapsed < 300.0;
  res.detail = fmt(
      "mean log gap %+.4f (|.| < 0.5), mean ratio %.4f (in [0.8, 1.2]), "
      "%d runs, %.0f s",
      mean_dlog, mean_ratio, n_runs, elapsed);
  return res;
}

// ---------------------------------------------------------------------------
// Criterion 5: the location move must leave the enumerated single-dipole
// posterior invariant.  Chains start from the exact posterior on a 3-point
// grid; after ten sweeps each, occupancy must still match it.
// ---------------------------------------------------------------------------

CriterionResult criterion5() {
  GeometryConfig geometry;
  geometry.n_sensors = 16;
  const SensorArray sensors = build_geometry(geometry).first;

  // Three mutually-neighboring vertices 4 mm apart.
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 3; ++i) {
    pts.emplace_back(0.004 * i - 0.004, 0.0, 0.055);
  }
  const SourceGrid grid =
      make_source_grid(std::move(pts), 0.01, 0.01, 0.004);
  const Leadfield lf =
      compute_leadfield(grid, sensors, geometry.conductor_radius_m);
  const int m = sensors.count();

  const int t_now = 6;
  std::vector<Eigen::Vector3d> q_hist;
  for (int n = 1; n <= t_now; ++n) {
    q_hist.push_back(1e-9 * Eigen::Vector3d(0.05 * n, 1.0, 0.1));
  }

  ModelParams mp;
  // Noise at the raw field scale keeps every vertex plausibly occupied.
  const double field_rms =
      (lf.block(1) * q_hist[0]).norm() / std::sqrt(double(m));
  mp.set_noise(Eigen::VectorXd::Constant(m, field_rms * field_rms));

  RngStream data_rng = RngStream::stream(57, 0, 0, RngStream::Phase::Generate);
  std::vector<Eigen::VectorXd> b;
  for (int n = 1; n <= t_now; ++n) {
    Eigen::VectorXd row = lf.block(1) * q_hist[static_cast<std::size_t>(n - 1)];
    for (int s = 0; s < m; ++s) row(s) += field_rms * data_rng.normal();
    b.push_back(row);
  }

  auto state_at = [&](int loc, int n) {
    DipoleState st;
    Dipole d;
    d.location = loc;
    d.birth_time = 1;
    d.moment = q_hist[static_cast<std::size_t>(n - 1)];
    d.moment_history.assign(q_hist.begin(), q_hist.begin() + n);
    st.dipoles.push_back(std::move(d));
    return st;
  };

  // Exact posterior over the location by enumeration.
  Eigen::Vector3d logpost;
  for (int k = 0; k < 3; ++k) {
    double total = 0.0;
    for (int n = 1; n <= t_now; ++n) {
      total += log_likelihood(b[static_cast<std::size_t>(n - 1)],
                              state_at(k, n), lf, mp);
    }
    logpost(k) = total;
  }
  const double shift = logpost.maxCoeff();
  Eigen::Vector3d post = (logpost.array() - shift).exp();
  post /= post.sum();
  if (post.minCoeff() < 0.005) {
    return {false, fmt("setup: posterior too concentrated (min %.2e)",
                       post.minCoeff())};
  }

  auto make_particle = [&](int loc) {
    Particle p;
    Dipole d;
    d.location = loc;
    d.birth_time = 1;
    d.moment_history = q_hist;
    d.moment = q_hist.back();
    p.state.dipoles.push_back(std::move(d));
    for (int n = 1; n <= t_now; ++n) {
      const DipoleState st = state_at(loc, n);
      p.residual_history.push_back(b[static_cast<std::size_t>(n - 1)] -
                                   predict_field(st, lf));
      p.loglik_history.push_back(
          log_likelihood(b[static_cast<std::size_t>(n - 1)], st, lf, mp));
    }
    return p;
  };

  const int n_chains = 10000;
  const int n_sweeps = 10;
  std::vector<double> counts(3, 0.0);
  for (int c = 0; c < n_chains; ++c) {
    RngStream rng = RngStream::stream(58, c, 0, RngStream::Phase::Move);
    // Start in the stationary distribution, so any occupancy drift after
    // the sweeps indicts the kernel.
    const double u = rng.uniform();
    int loc = 0;
    double acc = 0.0;
    for (int k = 0; k < 3; ++k) {
      acc += post(k);
      if (u < acc) {
        loc = k;
        break;
      }
    }
    Particle p = make_particle(loc);
    for (int sweep = 0; sweep < n_sweeps; ++sweep) {
      rm_move(rng, p, t_now, lf, grid, mp, nullptr);
    }
    counts[static_cast<std::size_t>(p.state.dipoles[0].location)] += 1.0;
  }

  std::vector<double> expected = {n_chains * post(0), n_chains * post(1),
                                  n_chains * post(2)};
  const double p_value = oracles::chi2_pvalue(counts, expected);

  CriterionResult res;
  res.pass = p_value > 0.001;
  res.detail = fmt(
      "occupancy %0.f/%0.f/%0.f vs expected %0.f/%0.f/%0.f, chi2 p %.4f "
      "(need > 0.001), %d sweeps",
      counts[0], counts[1], counts[2], expected[0], expected[1], expected[2],
      p_value, n_chains * n_sweeps);
  return res;
}

// ---------------------------------------------------------------------------
// Criterion 6: oracle equivalences.
//   a) set metrics against brute-force enumeration (and the closed-form
//      bump integral for the field-difference metric);
//   b) matched-component weights against full mixture densities;
//   c) transition-kernel mass by exhaustive structure enumeration;
//   d) systematic-resampling offspring expectations.
// ---------------------------------------------------------------------------

bool metrics_vs_brute(std::string& note) {
  RngStream rng = RngStream::stream(61, 0, 0, RngStream::Phase::Scratch);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto random_set = [&](int n) {
      DipolePointSet s;
      for (int i = 0; i < n; ++i) {
        s.locations.emplace_back(rng.uniform() * 0.2 - 0.1,
                                 rng.uniform() * 0.2 - 0.1,
                                 rng.uniform() * 0.2 - 0.1);
        s.moments.emplace_back(rng.normal(), rng.normal(), rng.normal());
      }
      return s;
    };
    const DipolePointSet est =
        random_set(1 + static_cast<int>(rng.uniform_below(4)));
    const DipolePointSet tgt =
        random_set(1 + static_cast<int>(rng.uniform_below(4)));
    worst = std::max(worst,
                     std::abs(adct(est, tgt) - oracles::adct_brute(est, tgt)));
    worst =
        std::max(worst, std::abs(sd(est, tgt) - oracles::sd_brute(est, tgt)));
    worst = std::max(worst,
                     std::abs(ospa(est, tgt) - oracles::ospa_brute(est, tgt)));
  }
  const bool exact_ok = worst < 1e-12;

  // Far-separated unit bumps against the closed-form sphere integral.
  GeometryConfig geometry;
  const auto [sensors, grid] = build_geometry(geometry);
  (void)sensors;
  int top = 0, bottom = 0;
  for (int i = 0; i < grid.size(); ++i) {
    if (grid.points[i].z() > grid.points[top].z()) top = i;
    if (grid.points[i].z() < grid.points[bottom].z()) bottom = i;
  }
  DipolePointSet est, tgt;
  est.locations.push_back(grid.points[top]);
  est.moments.push_back(Eigen::Vector3d::UnitX());
  tgt.locations.push_back(grid.points[bottom]);
  tgt.moments.push_back(Eigen::Vector3d::UnitY());
  const double sigma = 0.01;
  const double got = wm(est, tgt, sigma, grid);
  const double expect = 2.0 * oracles::wm_single_bump_integral(
                                  geometry.source_shell_radius_m, sigma);
  const double wm_rel = std::abs(got / expect - 1.0);
  const bool wm_ok = wm_rel < 0.05;

  note = fmt("metrics worst %.1e (<1e-12), wm rel %.3f (<0.05)", worst,
             wm_rel);
  return exact_ok && wm_ok;
}

bool matched_vs_full_mixture(std::string& note) {
  GeometryConfig geometry;
  geometry.n_sensors = 16;
  const SensorArray sensors = build_geometry(geometry).first;
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 3; ++i) {
    pts.emplace_back(0.004 * i - 0.004, 0.0, 0.055);
  }
  const SourceGrid grid =
      make_source_grid(std::move(pts), 0.01, 0.01, 0.004);
  const Leadfield lf =
      compute_leadfield(grid, sensors, geometry.conductor_radius_m);
  const int m = sensors.count();

  ModelParams mp;
  // Capacity equal to the grid size lets the at-capacity edge case keep
  // pairwise-distinct locations (see below).
  mp.n_max = 3;
  mp.set_noise(Eigen::VectorXd::Constant(m, 1e-26));
  const ProposalParams pp;

  // One persistent source plus sensor noise.
  RngStream data_rng = RngStream::stream(62, 0, 0, RngStream::Phase::Generate);
  const int n_steps = 10;
  const Eigen::Vector3d q = 1e-9 * Eigen::Vector3d(0.2, 1.0, 0.1);
  Eigen::MatrixXd b(n_steps, m);
  for (int t = 0; t < n_steps; ++t) {
    const Eigen::VectorXd mean = lf.block(1) * q;
    for (int s = 0; s < m; ++s) b(t, s) = mean(s) + 1e-13 * data_rng.normal();
  }

  // Harvest a diverse pool of particle states from an ordinary filter run.
  std::vector<DipoleState> pool;
  {
    FilterConfig fc;
    fc.n_particles = 200;
    fc.proposal = ProposalKind::Designed;
    fc.model = ModelKind::Static;
    fc.move_enabled = true;
    fc.init_fixed_location = 1;
    fc.seed = 63;
    Filter filter(fc, mp, pp, lf, grid);
    filter.run(b, [&](const Filter& f, const StepSummary&) {
      for (const Particle& p : f.particles()) pool.push_back(p.state);
    });
  }
  auto synth_state = [&](int n_dip) {
    DipoleState st;
    RngStream rng = RngStream::stream(66, n_dip, 0, RngStream::Phase::Scratch);
    for (int i = 0; i < n_dip; ++i) {
      Dipole d;
      d.location = i % grid.size();
      d.moment = mp.sigma_q * rng.normal3();
      d.birth_time = 0;
      d.moment_history.push_back(d.moment);
      st.dipoles.push_back(std::move(d));
    }
    return st;
  };
  pool.push_back(synth_state(0));         // birth-only edge
  pool.push_back(synth_state(mp.n_max));  // births disabled at capacity

  // Keep only states whose locations are pairwise distinct: there the
  // realized move is identifiable from (prev, next) and the matched
  // component is the full mixture.  (With two dipoles on one vertex,
  // several victim assignments match the same next state and the mixture
  // legitimately sums them; the matched shortcut stays a valid weighting
  // via the move identity as an auxiliary variable, but equality is no
  // longer a theorem.)
  std::vector<DipoleState> distinct;
  for (DipoleState& st : pool) {
    std::set<int> locs;
    for (const Dipole& d : st.dipoles) locs.insert(d.location);
    if (static_cast<int>(locs.size()) == st.count())
      distinct.push_back(std::move(st));
  }

  // Every draw's matched-component correction must equal the correction
  // recomputed from the full transition and full proposal-mixture densities.
  const InverseSolverContext ctx = make_inverse_context(lf, pp);
  const int t_next = n_steps + 1;
  const Eigen::VectorXd b_next = b.row(n_steps - 1).transpose();
  const BirthLocationProposal birth = birth_location_pmf(b_next, lf, ctx, pp);

  double worst = 0.0;
  long n_draws = 0;
  int counts_seen = 0;
  {
    std::set<int> seen;
    for (const DipoleState& st : distinct) seen.insert(st.count());
    counts_seen = static_cast<int>(seen.size());
  }
  for (std::size_t s = 0; s < distinct.size(); ++s) {
    const DipoleState& prev = distinct[s];
    const DeathWeights dw = death_weights(prev, b_next, lf, mp, pp, nullptr);
    for (int k = 0; k < 5; ++k) {
      RngStream rng = RngStream::stream(67, static_cast<int>(s), k,
                                        RngStream::Phase::Propose);
      const ProposalDraw draw =
          sample_proposal(rng, prev, t_next, birth, dw, mp, pp, grid);
      const double full =
          transition_logdensity(prev, draw.next, mp, grid) -
          proposal_logdensity(prev, draw.next, birth, dw, mp, pp, grid);
      worst = std::max(worst, std::abs(draw.log_prior_minus_q - full));
      ++n_draws;
    }
  }
  note = fmt(
      "matched vs full mixture worst gap %.1e over %ld draws, %d distinct "
      "counts (<1e-8)",
      worst, n_draws, counts_seen);
  return worst < 1e-8 && n_draws >= 1000 && counts_seen >= 3;
}

bool kernel_mass_enumeration(std::string& note) {
  // Equal previous moments make every death component share the same
  // survivor moment factors, so the factors divide out exactly and the
  // remaining structure masses must sum to one.
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 3; ++i) pts.emplace_back(0.006 * i, 0.0, 0.05);
  const SourceGrid grid = make_source_grid(std::move(pts), 0.0065, 0.0065,
                                           0.006);
  ModelParams p;
  RngStream rng = RngStream::stream(64, 0, 0, RngStream::Phase::Scratch);
  const Eigen::Vector3d q0(0.8e-9, -0.2e-9, 0.4e-9);

  auto make_dip = [](int loc, const Eigen::Vector3d& q, int birth) {
    Dipole d;
    d.location = loc;
    d.moment = q;
    d.birth_time = birth;
    d.moment_history.push_back(q);
    return d;
  };

  double worst = 0.0;

  // Fixed-location model, two previous dipoles.
  {
    const int n_prev = 2;
    DipoleState prev;
    for (int i = 0; i < n_prev; ++i) prev.dipoles.push_back(make_dip(i, q0, 0));
    std::vector<Eigen::Vector3d> q_next;
    for (int i = 0; i < n_prev; ++i)
      q_next.push_back(q0 + 1e-10 * rng.normal3());
    const Eigen::Vector3d q_new = 1e-10 * rng.normal3();
    auto survivors = [&](int count) {
      double f = 0.0;
      for (int i = 0; i < count; ++i)
        f += moment_step_logpdf(q_next[static_cast<std::size_t>(i)], q0, p);
      return f;
    };

    double mass = 0.0;
    {
      DipoleState next = prev;
      for (int i = 0; i < n_prev; ++i)
        next.dipoles[static_cast<std::size_t>(i)].moment =
            q_next[static_cast<std::size_t>(i)];
      mass += std::exp(transition_logdensity(prev, next, p, grid) -
                       survivors(n_prev));
    }
    for (int loc = 0; loc < grid.size(); ++loc) {
      DipoleState next = prev;
      for (int i = 0; i < n_prev; ++i)
        next.dipoles[static_cast<std::size_t>(i)].moment =
            q_next[static_cast<std::size_t>(i)];
      next.dipoles.push_back(make_dip(loc, q_new, 1));
      mass += std::exp(transition_logdensity(prev, next, p, grid) -
                       survivors(n_prev) - birth_moment_logpdf(q_new, p));
    }
    for (int victim = 0; victim < n_prev; ++victim) {
      DipoleState next;
      for (int i = 0; i < n_prev; ++i) {
        if (i == victim) continue;
        next.dipoles.push_back(
            make_dip(prev.dipoles[static_cast<std::size_t>(i)].location,
                     q_next[next.count()], 0));
      }
      mass += std::exp(transition_logdensity(prev, next, p, grid) -
                       survivors(n_prev - 1));
    }
    worst = std::max(worst, std::abs(mass - 1.0));
  }

  // Hopping-location model, one previous dipole; every destination and
  // newborn placement enumerated, unreachable combinations skipped.
  {
    DipoleState prev;
    prev.dipoles.push_back(make_dip(1, q0, 0));
    const Eigen::Vector3d q_next = q0 + 1e-10 * rng.normal3();
    const Eigen::Vector3d q_new = 1e-10 * rng.normal3();
    const double survivor = moment_step_logpdf(q_next, q0, p);

    double mass = 0.0;
    for (int a = 0; a < grid.size(); ++a) {
      DipoleState next;
      next.dipoles.push_back(make_dip(a, q_next, 0));
      const double dens = rw_transition_logdensity(prev, next, p, grid);
      if (std::isfinite(dens)) mass += std::exp(dens - survivor);
    }
    for (int a = 0; a < grid.size(); ++a) {
      for (int loc = 0; loc < grid.size(); ++loc) {
        DipoleState next;
        next.dipoles.push_back(make_dip(a, q_next, 0));
        next.dipoles.push_back(make_dip(loc, q_new, 1));
        const double dens = rw_transition_logdensity(prev, next, p, grid);
        if (std::isfinite(dens))
          mass += std::exp(dens - survivor - birth_moment_logpdf(q_new, p));
      }
    }
    {
      const DipoleState next;  // death of the only dipole
      const double dens = rw_transition_logdensity(prev, next, p, grid);
      if (std::isfinite(dens)) mass += std::exp(dens);
    }
    worst = std::max(worst, std::abs(mass - 1.0));
  }

  note = fmt("kernel mass gap %.1e (<1e-8)", worst);
  return worst < 1e-8;
}

bool resampling_expectations(std::string& note) {
  const int n = 8;
  Eigen::VectorXd w(n);
  w << 0.02, 0.03, 0.05, 0.10, 0.15, 0.20, 0.20, 0.25;
  const int n_reps = 100000;

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(n);
  for (int rep = 0; rep < n_reps; ++rep) {
    RngStream rng = RngStream::stream(65, rep, 0, RngStream::Phase::Resample);
    const std::vector<int> parents = systematic_resample(rng, w);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(n);
    for (int parent : parents) count(parent) += 1.0;
    sum += count;
    sum_sq += count.cwiseProduct(count);
  }

  double worst_z = 0.0;
  for (int i = 0; i < n; ++i) {
    const double mean = sum(i) / n_reps;
    const double var =
        (sum_sq(i) / n_reps - mean * mean) * n_reps / (n_reps - 1.0);
    const double se = std::sqrt(std::max(var, 0.0) / n_reps);
    const double gap = std::abs(mean - n * w(i));
    if (gap > 3.0 * se + 1e-12) {
      note = fmt("offspring mean %d: %.5f vs %.5f, gap %.2e > 3 se %.2e", i,
                 mean, n * w(i), gap, 3.0 * se);
      return false;
    }
    if (se > 0.0) worst_z = std::max(worst_z, gap / se);
  }
  note = fmt("offspring means within 3 se over %d replicates (worst z %.2f)",
             n_reps, worst_z);
  return true;
}

CriterionResult criterion6() {
  std::string note_a, note_b, note_c, note_d;
  const bool a = metrics_vs_brute(note_a);
  const bool b = matched_vs_full_mixture(note_b);
  const bool c = kernel_mass_enumeration(note_c);
  const bool d = resampling_expectations(note_d);
  CriterionResult res;
  res.pass = a && b && c && d;
  res.detail = fmt("a[%s] %s; b[%s] %s; c[%s] %s; d[%s] %s", a ? "ok" : "FAIL",
                   note_a.c_str(), b ? "ok" : "FAIL", note_b.c_str(),
                   c ? "ok" : "FAIL", note_c.c_str(), d ? "ok" : "FAIL",
                   note_d.c_str());
  return res;
}

// ---------------------------------------------------------------------------
// Criterion 7: the likelihood-evaluation telemetry must match the cost
// model: exactly T*N for the plain filter, and within 20% of
// T*N*(1 + mean_dipoles*mean_lifetime/2 + mean_dipoles) for the
// designed-proposal filter with the location move.
// ---------------------------------------------------------------------------

CriterionResult criterion7() {
  GeometryConfig geometry;
  geometry.n_sensors = 24;
  geometry.grid_spacing_m = 0.01;
  geometry.rm_neighbor_radius_m = 0.015;  // face + diagonal neighbors
  const auto [sensors, grid] = build_geometry(geometry);
  const Leadfield lf =
      compute_leadfield(grid, sensors, geometry.conductor_radius_m);
  const int m = sensors.count();

  // One source that lives out its whole span mid-series, so measured
  // death lifetimes represent the typical dipole age the cost model uses.
  ScenarioConfig scenario;
  scenario.n_datasets = 1;
  scenario.n_steps = 60;
  scenario.n_sources = 1;
  scenario.stagger = 5;
  scenario.snr = 5.0;
  scenario.seed = 71;
  const ExperimentRecord rec = generate(scenario, grid, lf, 0);

  ModelParams mp;
  // Rare births and a near-empty initial prior keep short-lived clutter
  // dipoles out of the lifetime statistics, so the measured mean lifetime
  // represents the typical dipole the cost model reasons about.
  mp.p_birth = 1e-4;
  mp.birth_rate_poisson = 1e-6;
  mp.set_noise(
      Eigen::VectorXd::Constant(m, rec.noise_std * rec.noise_std));

  const int n_steps = scenario.n_steps;
  const int n_particles = 500;

  FilterConfig boot_cfg;
  boot_cfg.n_particles = n_particles;
  boot_cfg.proposal = ProposalKind::Bootstrap;
  boot_cfg.model = ModelKind::Static;
  boot_cfg.move_enabled = false;
  boot_cfg.seed = 72;
  Filter boot(boot_cfg, mp, ProposalParams{}, lf, grid);
  const FilterOutput boot_out = boot.run(rec.measurements);
  const std::uint64_t tn =
      std::uint64_t(n_steps) * std::uint64_t(n_particles);
  const bool boot_exact =
      boot_out.evals.weight == tn && boot_out.evals.total() == tn;

  FilterConfig rm_cfg = boot_cfg;
  rm_cfg.proposal = ProposalKind::Designed;
  rm_cfg.move_enabled = true;
  rm_cfg.seed = 73;
  Filter rm(rm_cfg, mp, ProposalParams{}, lf, grid);
  const FilterOutput rm_out = rm.run(rec.measurements);
  const double n_dip = rm_out.mean_dipoles();
  const double t_life = rm_out.mean_lifetime();
  const double predicted =
      double(tn) * (1.0 + n_dip * t_life / 2.0 + n_dip);
  const double ratio = double(rm_out.evals.total()) / predicted;
  const bool rm_ok = ratio >= 0.8 && ratio <= 1.2;

  CriterionResult res;
  res.pass = boot_exact && rm_ok;
  res.detail = fmt(
      "boot evals %llu (exact T*N %llu), rm evals %llu "
      "(w %llu, d %llu, m %llu) vs model %.0f "
      "(ratio %.3f, need 0.8-1.2; mean dipoles %.2f, mean lifetime %.1f)",
      static_cast<unsigned long long>(boot_out.evals.total()),
      static_cast<unsigned long long>(tn),
      static_cast<unsigned long long>(rm_out.evals.total()),
      static_cast<unsigned long long>(rm_out.evals.weight),
      static_cast<unsigned long long>(rm_out.evals.death),
      static_cast<unsigned long long>(rm_out.evals.move), predicted, ratio,
      n_dip, t_life);
  return res;
}

// ---------------------------------------------------------------------------
// Criterion 8: the command-line pipeline must be byte-identical across a
// rerun with the same seed and across worker counts 1 and 8 (wall-clock
// telemetry excluded by design).
// ---------------------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(MEGPF_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

/// Byte-compares two directory trees, ignoring files named telemetry.json;
/// returns an empty string on success, else a description of the first
/// difference.
std::string compare_trees(const fs::path& a, const fs::path& b) {
  auto collect = [](const fs::path& root) {
    std::vector<std::string> rel;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (!entry.is_regular_file()) continue;
      if (entry.path().filename() == "telemetry.json") continue;
      rel.push_back(fs::relative(entry.path(), root).string());
    }
    std::sort(rel.begin(), rel.end());
    return rel;
  };
  const auto rel_a = collect(a);
  const auto rel_b = collect(b);
  if (rel_a != rel_b) return "file lists differ under " + b.string();
  for (const std::string& rel : rel_a) {
    if (slurp(a / rel) != slurp(b / rel)) {
      return "byte mismatch: " + rel;
    }
  }
  return "";
}

CriterionResult criterion8() {
  const fs::path root = fs::temp_directory_path() / "megpf_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  const std::string cfg_path = (root / "config.toml").string();
  std::ofstream(cfg_path) << "[geometry]\n"
                             "n_sensors = 12\n"
                             "grid_spacing_m = 0.02\n"
                             "[scenario]\n"
                             "n_datasets = 4\n"
                             "n_steps = 15\n"
                             "n_sources = 2\n"
                             "stagger = 2\n"
                             "min_separation_m = 0.02\n"
                             "prestim_steps = 6\n"
                             "seed = 11\n"
                             "[filter]\n"
                             "particles = 120\n"
                             "variant = static-rm\n"
                             "seed = 9\n";

  auto fail = [&](const std::string& why) {
    fs::remove_all(root);
    return CriterionResult{false, why};
  };

  const std::string data_a = (root / "data_a").string();
  const std::string data_b = (root / "data_b").string();
  if (run_cli("gen --config " + cfg_path + " --out " + data_a) != 0 ||
      run_cli("gen --config " + cfg_path + " --out " + data_b) != 0) {
    return fail("gen failed");
  }
  std::string diff = compare_trees(data_a, data_b);
  if (!diff.empty()) return fail("gen rerun: " + diff);

  const std::string runs_w1a = (root / "runs_w1a").string();
  const std::string runs_w1b = (root / "runs_w1b").string();
  const std::string runs_w8 = (root / "runs_w8").string();
  for (const auto& [dir, workers] :
       {std::pair<std::string, int>{runs_w1a, 1},
        {runs_w1b, 1},
        {runs_w8, 8}}) {
    if (run_cli("run --config " + cfg_path + " --data " + data_a + " --out " +
                dir + " --workers " + std::to_string(workers)) != 0) {
      return fail("run failed in " + dir);
    }
  }
  diff = compare_trees(runs_w1a, runs_w1b);
  if (!diff.empty()) return fail("run rerun: " + diff);
  diff = compare_trees(runs_w1a, runs_w8);
  if (!diff.empty()) return fail("workers 1 vs 8: " + diff);

  const std::string eval_a = (root / "eval_a").string();
  const std::string eval_b = (root / "eval_b").string();
  for (const std::string& dir : {eval_a, eval_b}) {
    if (run_cli("eval --config " + cfg_path + " --data " + data_a +
                " --runs " + runs_w1a + " --out " + dir) != 0) {
      return fail("eval failed in " + dir);
    }
  }
  diff = compare_trees(eval_a, eval_b);
  if (!diff.empty()) return fail("eval rerun: " + diff);

  fs::remove_all(root);
  return {true,
          "gen, run, and eval byte-identical across reruns and workers 1 vs 8"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--criterion" && i + 1 < argc) {
      wanted.insert(std::atoi(argv[++i]));
      ++i;
      --i;  // consumed the value
    }
  }
  if (wanted.empty()) wanted = {1, 2, 3, 4, 5, 6, 7, 8};

  using CriterionFn = CriterionResult (*)();
  const std::pair<int, CriterionFn> table[] = {
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},
      {5, criterion5}, {6, criterion6}, {7, criterion7}, {8, criterion8},
  };

  int failures = 0;
  for (const auto& [id, fn] : table) {
    if (!wanted.count(id)) continue;
    CriterionResult result;
    try {
      result = fn();
    } catch (const std::exception& e) {
      result = {false, fmt("exception: %s", e.what())};
    }
    if (!result.pass) ++failures;
    std::printf("criterion %d: %s (%s)\n", id, result.pass ? "PASS" : "FAIL",
                result.detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
