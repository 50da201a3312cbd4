#include "megpf/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <thread>
#include <vector>

#include <json.hpp>

#include "megpf/estimators.hpp"
#include "megpf/io.hpp"
#include "megpf/metrics.hpp"
#include "megpf/model.hpp"
#include "megpf/rng.hpp"
#include "megpf/smc.hpp"
#include "megpf/synthgen.hpp"

namespace megpf {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

constexpr double kWmSigmaM = 0.01;  // Gaussian width for the widespread metric
constexpr double kSiToNam = 1e9;

const char* kEvidenceCaveat =
    "Caveat: log-evidence totals are conditional on plug-in values of the "
    "fixed parameters (noise variance, dynamics scales) estimated from the "
    "data, not marginalized over. Read the totals as profile-likelihood "
    "comparisons between models, not as fully Bayesian marginal likelihoods "
    "or Bayes factors; the complexity penalty that full marginalization "
    "would provide is absent.";

std::string dataset_dir_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "dataset_%03d", i);
  return buf;
}

std::string sensor_column_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "m%03d", i);
  return buf;
}

std::vector<std::string> sensor_columns(int n) {
  std::vector<std::string> cols;
  cols.reserve(n);
  for (int i = 0; i < n; ++i) cols.push_back(sensor_column_name(i));
  return cols;
}

std::vector<std::string> list_dataset_dirs(const std::string& root) {
  if (!fs::is_directory(root)) {
    throw DataError("not a directory: " + root);
  }
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("dataset_", 0) == 0) names.push_back(name);
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) {
    throw DataError("no dataset_* directories under " + root);
  }
  return names;
}

Json vec3_json(const Eigen::Vector3d& v) {
  return Json::array({v(0), v(1), v(2)});
}

Eigen::Vector3d vec3_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw DataError("expected a 3-vector in JSON");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void write_json_file(const std::string& path, const Json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

Json read_json_file(const std::string& path) {
  return Json::parse(read_text_file(path));
}

std::uint64_t derive_dataset_seed(std::uint64_t base, int dataset_index) {
  return RngStream::stream(base, dataset_index, 0, RngStream::Phase::Scratch)
      .next_u64();
}

/// Runs fn(0..n-1) on a worker pool; rethrows the lowest-index failure.
void parallel_datasets(int workers, int n, const std::function<void(int)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<int> next{0};
  auto drain = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int extra = std::min(workers, n) - 1;
  std::vector<std::thread> pool;
  pool.reserve(std::max(0, extra));
  for (int w = 0; w < extra; ++w) pool.emplace_back(drain);
  drain();
  for (auto& th : pool) th.join();
  for (int i = 0; i < n; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
  }
}

Json geometry_echo(const GeometryConfig& g) {
  Json j;
  j["conductor_radius_m"] = g.conductor_radius_m;
  j["source_shell_radius_m"] = g.source_shell_radius_m;
  j["grid_spacing_m"] = g.grid_spacing_m;
  j["n_sensors"] = g.n_sensors;
  j["sensor_radius_m"] = g.sensor_radius_m;
  j["sensor_cap_deg"] = g.sensor_cap_deg;
  j["rm_neighbor_radius_m"] = g.rm_neighbor_radius_m;
  j["rw_neighbor_radius_m"] = g.rw_neighbor_radius_m;
  return j;
}

Json scenario_echo(const ScenarioConfig& s) {
  Json j;
  j["n_datasets"] = s.n_datasets;
  j["n_steps"] = s.n_steps;
  j["n_sources"] = s.n_sources;
  j["stagger"] = s.stagger;
  j["min_separation_m"] = s.min_separation_m;
  j["moment_magnitude_nam"] = s.moment_magnitude_nam;
  j["noise_mode"] =
      s.noise_mode == ScenarioConfig::NoiseMode::Snr ? "snr" : "absolute";
  j["snr"] = s.snr;
  j["noise_std_t"] = s.noise_std_t;
  j["prestim_steps"] = s.prestim_steps;
  j["seed"] = s.seed;
  return j;
}

Json model_echo(const ModelParams& p) {
  Json j;
  j["n_max"] = p.n_max;
  j["p_birth"] = p.p_birth;
  j["death_rate"] = p.death_rate;
  j["birth_rate"] = p.birth_rate_poisson;
  j["sigma_q_am"] = p.sigma_q;
  j["moment_step_var_am2"] = p.delta_base_var;
  j["birth_moment_var_am2"] = p.birth_moment_var;
  j["parallel_factor"] = p.delta_parallel_factor;
  j["rw_sigma_d_m"] = p.rw_sigma_d;
  return j;
}

Json proposal_echo(const ProposalParams& p) {
  Json j;
  j["q_birth"] = p.q_birth;
  j["depth_gamma"] = p.depth_gamma;
  j["lambda_reg"] = p.lambda_reg;
  j["snr2"] = p.snr2;
  j["pmf_floor"] = p.pmf_floor;
  return j;
}

struct TruthData {
  std::vector<SourceTruth> sources;
  int n_steps = 0;

  DipolePointSet at(int t) const {
    DipolePointSet set;
    for (const SourceTruth& s : sources) {
      if (!s.active_at(t)) continue;
      set.locations.push_back(s.location_m);
      set.moments.push_back(s.moment_nam);
    }
    return set;
  }
};

TruthData read_truth(const std::string& path) {
  const Json j = read_json_file(path);
  TruthData truth;
  truth.n_steps = j.at("n_steps").get<int>();
  for (const Json& sj : j.at("sources")) {
    SourceTruth s;
    s.grid_index = sj.at("grid_index").get<int>();
    s.location_m = vec3_from_json(sj.at("location_m"));
    s.moment_nam = vec3_from_json(sj.at("moment_nam"));
    s.onset = sj.at("onset").get<int>();
    s.offset = sj.at("offset").get<int>();
    truth.sources.push_back(s);
  }
  return truth;
}

/// Representative sets per step as written by cmd_run.
std::vector<DipolePointSet> read_representative(const std::string& path,
                                                int n_steps) {
  const Json j = read_json_file(path);
  std::vector<DipolePointSet> sets(n_steps);
  for (const Json& step : j.at("steps")) {
    const int t = step.at("t").get<int>();
    if (t < 1 || t > n_steps) {
      throw DataError("representative step index out of range in " + path);
    }
    DipolePointSet& set = sets[t - 1];
    for (const Json& dj : step.at("dipoles")) {
      set.locations.push_back(vec3_from_json(dj.at("location_m")));
      set.moments.push_back(vec3_from_json(dj.at("moment_nam")));
    }
  }
  return sets;
}

int find_column(const std::vector<std::string>& columns,
                const std::string& name, const std::string& path) {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) {
    throw DataError("column '" + name + "' missing in " + path);
  }
  return static_cast<int>(it - columns.begin());
}

struct DatasetRunResult {
  std::vector<std::pair<std::string, std::uint64_t>> file_hashes;
  double seconds = 0.0;
  double terminal_log_evidence = 0.0;
  double mean_ess_fraction = 0.0;
  EvalStats evals;
};

DatasetRunResult run_one_dataset(const std::string& data_dir,
                                 const std::string& out_dir,
                                 const FilterConfig& fcfg,
                                 const ModelParams& base_model,
                                 const ProposalParams& pp, const Leadfield& lf,
                                 const SourceGrid& grid,
                                 NoisePooling pooling) {
  const auto t_start = std::chrono::steady_clock::now();

  const Eigen::MatrixXd b = read_csv(data_dir + "/measurements.csv");
  const Eigen::MatrixXd pre = read_csv(data_dir + "/prestim.csv");
  if (static_cast<int>(b.cols()) != lf.n_sensors()) {
    throw DataError("measurement channel count does not match the leadfield: " +
                    data_dir);
  }
  if (pre.cols() != b.cols()) {
    throw DataError("prestim channel count mismatch: " + data_dir);
  }

  ModelParams mp = base_model;
  if (pooling == NoisePooling::Pooled) {
    const std::vector<int> groups(static_cast<std::size_t>(pre.cols()), 0);
    mp.set_noise(estimate_noise_pooled(pre, groups));
  } else {
    mp.set_noise(estimate_noise(pre));
  }

  Filter filter(fcfg, mp, pp, lf, grid);
  const int n_steps = static_cast<int>(b.rows());
  const int n_pmf_len = mp.n_max + 1;

  Eigen::MatrixXd evidence(n_steps, 7);
  Eigen::MatrixXd n_pmf_rows(n_steps, 1 + n_pmf_len);
  std::vector<double> intensity_triplets;
  Json rep_steps = Json::array();

  auto on_step = [&](const Filter& f, const StepSummary& s) {
    const int row = s.t - 1;
    evidence(row, 0) = s.t;
    evidence(row, 1) = s.step_log_evidence;
    evidence(row, 2) = s.cum_log_evidence;
    evidence(row, 3) = s.ess;
    evidence(row, 4) = s.resampled ? 1.0 : 0.0;
    evidence(row, 5) = s.move_proposals;
    evidence(row, 6) = s.move_accepts;

    const PosteriorSummary summary =
        summarize(f.particles(), f.weights(), mp.n_max, grid.size());
    n_pmf_rows(row, 0) = s.t;
    for (int k = 0; k < n_pmf_len; ++k) {
      n_pmf_rows(row, 1 + k) = summary.n_pmf(k);
    }
    for (int k = 0; k < grid.size(); ++k) {
      if (summary.intensity(k) > 0.0) {
        intensity_triplets.push_back(s.t);
        intensity_triplets.push_back(k);
        intensity_triplets.push_back(summary.intensity(k));
      }
    }
    const RepresentativeSet rep = representative_set(summary, grid);
    Json step_json;
    step_json["t"] = s.t;
    step_json["shortfall"] = rep.shortfall;
    Json dipoles = Json::array();
    for (const RepresentativeDipole& d : rep.dipoles) {
      Json dj;
      dj["grid_index"] = d.location;
      dj["location_m"] = vec3_json(grid.points[d.location]);
      dj["moment_nam"] = vec3_json(kSiToNam * d.moment);
      dj["intensity"] = d.intensity;
      dipoles.push_back(dj);
    }
    step_json["dipoles"] = dipoles;
    rep_steps.push_back(step_json);
  };

  const FilterOutput out = filter.run(b, on_step);

  fs::create_directories(out_dir);
  write_csv(out_dir + "/evidence.csv", evidence,
            {"t", "step_log_evidence", "cum_log_evidence", "ess", "resampled",
             "move_proposals", "move_accepts"});
  {
    std::vector<std::string> cols = {"t"};
    for (int k = 0; k < n_pmf_len; ++k) cols.push_back("p" + std::to_string(k));
    write_csv(out_dir + "/n_pmf.csv", n_pmf_rows, cols);
  }
  {
    const int rows = static_cast<int>(intensity_triplets.size() / 3);
    Eigen::MatrixXd m(rows, 3);
    for (int r = 0; r < rows; ++r) {
      m(r, 0) = intensity_triplets[3 * r];
      m(r, 1) = intensity_triplets[3 * r + 1];
      m(r, 2) = intensity_triplets[3 * r + 2];
    }
    write_csv(out_dir + "/intensity.csv", m, {"t", "grid_index", "intensity"});
  }
  Json rep_json;
  rep_json["schema"] = "megpf-representative-1";
  rep_json["steps"] = rep_steps;
  write_json_file(out_dir + "/representative.json", rep_json);

  Json summary_json;
  summary_json["schema"] = "megpf-run-summary-1";
  summary_json["n_steps"] = n_steps;
  summary_json["seed"] = fcfg.seed;
  summary_json["terminal_log_evidence"] = out.terminal_log_evidence;
  summary_json["mean_ess_fraction"] = out.mean_ess_fraction;
  summary_json["mean_dipoles"] = out.mean_dipoles();
  summary_json["mean_lifetime"] = out.mean_lifetime();
  summary_json["noise_std_t"] = std::sqrt(mp.noise_var()(0));
  Json evals;
  evals["weight"] = out.evals.weight;
  evals["death"] = out.evals.death;
  evals["move"] = out.evals.move;
  evals["rw_cond"] = out.evals.rw_cond;
  evals["total"] = out.evals.total();
  summary_json["likelihood_evals"] = evals;
  write_json_file(out_dir + "/summary.json", summary_json);

  DatasetRunResult result;
  for (const char* name : {"evidence.csv", "n_pmf.csv", "intensity.csv",
                           "representative.json", "summary.json"}) {
    result.file_hashes.emplace_back(name,
                                    fnv1a64_file(out_dir + "/" + name));
  }
  result.terminal_log_evidence = out.terminal_log_evidence;
  result.mean_ess_fraction = out.mean_ess_fraction;
  result.evals = out.evals;
  result.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - t_start)
                       .count();
  return result;
}

}  // namespace

Workspace build_workspace(const GeometryConfig& geometry) {
  geometry.validate();
  auto [sensors, grid] = build_geometry(geometry);
  Leadfield lf = compute_leadfield(grid, sensors, geometry.conductor_radius_m);
  return Workspace{geometry, std::move(sensors), std::move(grid),
                   std::move(lf)};
}

void cmd_gen(const ConfigFile& cfg, const std::string& out_dir) {
  validate_config(cfg);
  const GeometryConfig geometry = load_geometry_config(cfg);
  const ScenarioConfig scenario = load_scenario_config(cfg);
  const Workspace ws = build_workspace(geometry);
  const auto columns = sensor_columns(ws.sensors.count());

  fs::create_directories(out_dir);
  save_leadfield(ws.leadfield, out_dir + "/leadfield.bin");

  Json datasets = Json::array();
  for (int d = 0; d < scenario.n_datasets; ++d) {
    const ExperimentRecord rec = generate(scenario, ws.grid, ws.leadfield, d);
    const std::string name = dataset_dir_name(d);
    const std::string dir = out_dir + "/" + name;
    fs::create_directories(dir);
    write_csv(dir + "/measurements.csv", rec.measurements, columns);
    write_csv(dir + "/prestim.csv", rec.prestim, columns);

    Json truth;
    truth["schema"] = "megpf-truth-1";
    truth["dataset_index"] = d;
    truth["seed"] = scenario.seed;
    truth["n_steps"] = scenario.n_steps;
    truth["prestim_steps"] = scenario.prestim_steps;
    truth["noise_std_t"] = rec.noise_std;
    Json sources = Json::array();
    for (const SourceTruth& s : rec.sources) {
      Json sj;
      sj["grid_index"] = s.grid_index;
      sj["location_m"] = vec3_json(s.location_m);
      sj["moment_nam"] = vec3_json(s.moment_nam);
      sj["onset"] = s.onset;
      sj["offset"] = s.offset;
      sources.push_back(sj);
    }
    truth["sources"] = sources;
    write_json_file(dir + "/truth.json", truth);

    Json entry;
    entry["dir"] = name;
    Json files;
    for (const char* fname :
         {"measurements.csv", "prestim.csv", "truth.json"}) {
      files[fname] = hash_hex(fnv1a64_file(dir + "/" + std::string(fname)));
    }
    entry["files"] = files;
    datasets.push_back(entry);
  }

  Json manifest;
  manifest["schema"] = "megpf-data-manifest-1";
  manifest["geometry"] = geometry_echo(geometry);
  manifest["scenario"] = scenario_echo(scenario);
  Json lf_json;
  lf_json["file"] = "leadfield.bin";
  lf_json["n_sensors"] = ws.leadfield.n_sensors();
  lf_json["n_vertices"] = ws.leadfield.n_vertices();
  lf_json["hash"] = hash_hex(fnv1a64_file(out_dir + "/leadfield.bin"));
  manifest["leadfield"] = lf_json;
  manifest["datasets"] = datasets;
  write_json_file(out_dir + "/manifest.json", manifest);

  std::cout << "generated " << scenario.n_datasets << " datasets under "
            << out_dir << "\n";
}

void cmd_run(const ConfigFile& cfg, const std::string& data_dir,
             const std::string& out_dir, const RunOverrides& overrides) {
  validate_config(cfg);
  const GeometryConfig geometry = load_geometry_config(cfg);
  const ModelParams base_model = load_model_params(cfg);
  const ProposalParams pp = load_proposal_params(cfg);
  const NoisePooling pooling = load_noise_pooling(cfg);
  FilterConfig fcfg = load_filter_config(cfg);

  if (!overrides.variant.empty()) {
    const VariantSpec spec = parse_variant(overrides.variant);
    fcfg.proposal = spec.proposal;
    fcfg.model = spec.model;
    fcfg.move_enabled = spec.move_enabled;
  }
  if (overrides.particles > 0) fcfg.n_particles = overrides.particles;
  if (overrides.seed >= 0) {
    fcfg.seed = static_cast<std::uint64_t>(overrides.seed);
  }
  int workers = fcfg.workers;
  if (const char* env = std::getenv("MEGPF_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) workers = v;
  }
  if (overrides.workers > 0) workers = overrides.workers;
  // The pool runs whole datasets; each filter stays single-threaded so
  // outputs cannot depend on the worker count.
  fcfg.workers = 1;
  fcfg.validate();

  const VariantSpec spec{fcfg.proposal, fcfg.model, fcfg.move_enabled};
  const std::string variant = variant_name(spec);

  const Workspace ws = build_workspace(geometry);
  Leadfield lf;
  const std::string lf_cache = data_dir + "/leadfield.bin";
  if (fs::exists(lf_cache)) {
    lf = load_leadfield(lf_cache);
    if (lf.n_sensors() != ws.sensors.count() ||
        lf.n_vertices() != ws.grid.size()) {
      throw DataError(
          "cached leadfield does not match the configured geometry: " +
          lf_cache);
    }
  } else {
    lf = ws.leadfield;
  }

  const std::vector<std::string> names = list_dataset_dirs(data_dir);
  const std::string variant_dir = out_dir + "/" + variant;
  fs::create_directories(variant_dir);

  const std::uint64_t base_seed = fcfg.seed;
  Json budget_json;
  if (overrides.matched_budget > 0.0) {
    // Pilot run on the first dataset to price one particle, then scale the
    // particle count to the requested likelihood-evaluation budget.
    const int pilot_n = std::min(200, fcfg.n_particles);
    FilterConfig pilot_cfg = fcfg;
    pilot_cfg.n_particles = pilot_n;
    pilot_cfg.seed = derive_dataset_seed(base_seed, 0);
    const std::string pilot_out = variant_dir + "/pilot";
    const DatasetRunResult pilot =
        run_one_dataset(data_dir + "/" + names[0], pilot_out, pilot_cfg,
                        base_model, pp, lf, ws.grid, pooling);
    fs::remove_all(pilot_out);
    const double per_particle =
        static_cast<double>(pilot.evals.total()) / pilot_n;
    const long long scaled =
        std::llround(overrides.matched_budget / std::max(per_particle, 1.0));
    const int chosen =
        static_cast<int>(std::clamp<long long>(scaled, 2, 2000000));
    budget_json["target_evals"] = overrides.matched_budget;
    budget_json["pilot_particles"] = pilot_n;
    budget_json["pilot_evals"] = pilot.evals.total();
    budget_json["chosen_particles"] = chosen;
    fcfg.n_particles = chosen;
  }

  const int n_data = static_cast<int>(names.size());
  std::vector<DatasetRunResult> results(n_data);
  parallel_datasets(workers, n_data, [&](int d) {
    FilterConfig run_cfg = fcfg;
    run_cfg.seed = derive_dataset_seed(base_seed, d);
    results[d] = run_one_dataset(data_dir + "/" + names[d],
                                 variant_dir + "/" + names[d], run_cfg,
                                 base_model, pp, lf, ws.grid, pooling);
  });

  Json manifest;
  manifest["schema"] = "megpf-run-manifest-1";
  manifest["variant"] = variant;
  manifest["particles"] = fcfg.n_particles;
  manifest["base_seed"] = base_seed;
  manifest["resample"] = fcfg.resample_every_step ? "always" : "ess";
  manifest["ess_threshold"] = fcfg.ess_threshold;
  manifest["noise_pooling"] =
      pooling == NoisePooling::Pooled ? "pooled" : "per_sensor";
  manifest["geometry"] = geometry_echo(geometry);
  manifest["model"] = model_echo(base_model);
  manifest["proposal"] = proposal_echo(pp);
  if (!budget_json.is_null()) manifest["matched_budget"] = budget_json;
  Json datasets = Json::array();
  for (int d = 0; d < n_data; ++d) {
    Json entry;
    entry["dir"] = names[d];
    entry["seed"] = derive_dataset_seed(base_seed, d);
    entry["terminal_log_evidence"] = results[d].terminal_log_evidence;
    entry["mean_ess_fraction"] = results[d].mean_ess_fraction;
    Json files;
    for (const auto& [fname, hash] : results[d].file_hashes) {
      files[fname] = hash_hex(hash);
    }
    entry["files"] = files;
    datasets.push_back(entry);
  }
  manifest["datasets"] = datasets;
  write_json_file(variant_dir + "/manifest.json", manifest);

  Json telemetry;
  telemetry["schema"] = "megpf-run-telemetry-1";
  telemetry["workers"] = workers;
  double total_seconds = 0.0;
  Json tel_datasets = Json::array();
  for (int d = 0; d < n_data; ++d) {
    Json entry;
    entry["dir"] = names[d];
    entry["seconds"] = results[d].seconds;
    tel_datasets.push_back(entry);
    total_seconds += results[d].seconds;
  }
  telemetry["total_seconds"] = total_seconds;
  telemetry["datasets"] = tel_datasets;
  write_json_file(variant_dir + "/telemetry.json", telemetry);

  for (int d = 0; d < n_data; ++d) {
    std::printf("%s %s: log evidence %.4f, mean ESS fraction %.3f\n",
                variant.c_str(), names[d].c_str(),
                results[d].terminal_log_evidence,
                results[d].mean_ess_fraction);
  }
  std::printf("%s: %d datasets, %d particles, %.1f s total\n", variant.c_str(),
              n_data, fcfg.n_particles, total_seconds);
}

void cmd_eval(const ConfigFile& cfg, const std::string& data_dir,
              const std::string& runs_dir, const std::string& out_dir) {
  validate_config(cfg);
  const GeometryConfig geometry = load_geometry_config(cfg);
  auto [sensors, grid] = build_geometry(geometry);
  (void)sensors;

  const std::vector<std::string> names = list_dataset_dirs(data_dir);
  std::vector<std::string> variants;
  for (const std::string& v : variant_names()) {
    if (fs::is_directory(runs_dir + "/" + v)) variants.push_back(v);
  }
  if (variants.empty()) {
    throw DataError("no variant directories under " + runs_dir);
  }

  const std::vector<std::string> metric_names = {"adct", "sd", "ospa", "wm"};
  for (const std::string& variant : variants) {
    // per (t, metric): accumulated non-missing values across datasets
    int n_steps = 0;
    std::vector<std::vector<std::vector<double>>> values;  // [metric][t]
    std::vector<double> n_est_sum, n_true_sum;
    std::vector<int> n_rows;
    // means over active steps (true count > 0), pooled over datasets
    std::vector<double> active_sum(metric_names.size(), 0.0);
    std::vector<int> active_n(metric_names.size(), 0);
    double active_count_abs_err = 0.0;
    int active_steps = 0;

    for (const std::string& name : names) {
      const std::string run_dir = runs_dir + "/" + variant + "/" + name;
      if (!fs::is_directory(run_dir)) {
        throw DataError("missing run output: " + run_dir);
      }
      const TruthData truth = read_truth(data_dir + "/" + name + "/truth.json");
      const std::vector<DipolePointSet> est_sets =
          read_representative(run_dir + "/representative.json", truth.n_steps);
      if (n_steps == 0) {
        n_steps = truth.n_steps;
        values.assign(metric_names.size(),
                      std::vector<std::vector<double>>(n_steps));
        n_est_sum.assign(n_steps, 0.0);
        n_true_sum.assign(n_steps, 0.0);
        n_rows.assign(n_steps, 0);
      } else if (truth.n_steps != n_steps) {
        throw DataError("datasets disagree on series length under " +
                        data_dir);
      }

      Eigen::MatrixXd rows(n_steps, 7);
      for (int t = 1; t <= n_steps; ++t) {
        const DipolePointSet tgt = truth.at(t);
        const DipolePointSet& est = est_sets[t - 1];
        const double m_adct = adct(est, tgt);
        const double m_sd = sd(est, tgt);
        const double m_ospa = ospa(est, tgt);
        const double m_wm = wm(est, tgt, kWmSigmaM, grid);
        rows(t - 1, 0) = t;
        rows(t - 1, 1) = m_adct;
        rows(t - 1, 2) = m_sd;
        rows(t - 1, 3) = m_ospa;
        rows(t - 1, 4) = m_wm;
        rows(t - 1, 5) = est.count();
        rows(t - 1, 6) = tgt.count();

        const double metric_vals[4] = {m_adct, m_sd, m_ospa, m_wm};
        for (std::size_t m = 0; m < metric_names.size(); ++m) {
          if (!is_metric_missing(metric_vals[m])) {
            values[m][t - 1].push_back(metric_vals[m]);
          }
        }
        n_est_sum[t - 1] += est.count();
        n_true_sum[t - 1] += tgt.count();
        n_rows[t - 1] += 1;
        if (tgt.count() > 0) {
          ++active_steps;
          active_count_abs_err += std::abs(est.count() - tgt.count());
          for (std::size_t m = 0; m < metric_names.size(); ++m) {
            if (!is_metric_missing(metric_vals[m])) {
              active_sum[m] += metric_vals[m];
              active_n[m] += 1;
            }
          }
        }
      }
      const std::string eval_dir = out_dir + "/" + variant + "/" + name;
      fs::create_directories(eval_dir);
      write_csv(eval_dir + "/metrics.csv", rows,
                {"t", "adct", "sd", "ospa", "wm", "n_est", "n_true"});
    }

    // Aggregate across datasets: mean, standard error, and coverage (the
    // fraction of datasets where the metric was defined).
    Eigen::MatrixXd agg(n_steps, 2 + 3 * metric_names.size() + 2);
    std::vector<std::string> cols = {"t", "datasets"};
    for (const std::string& m : metric_names) {
      cols.push_back(m + "_mean");
      cols.push_back(m + "_se");
      cols.push_back(m + "_coverage");
    }
    cols.push_back("n_est_mean");
    cols.push_back("n_true_mean");
    for (int t = 0; t < n_steps; ++t) {
      agg(t, 0) = t + 1;
      agg(t, 1) = n_rows[t];
      for (std::size_t m = 0; m < metric_names.size(); ++m) {
        const std::vector<double>& vals = values[m][t];
        double mean = metric_missing();
        double se = metric_missing();
        if (!vals.empty()) {
          double s = 0.0;
          for (double v : vals) s += v;
          mean = s / vals.size();
          if (vals.size() > 1) {
            double ss = 0.0;
            for (double v : vals) ss += (v - mean) * (v - mean);
            se = std::sqrt(ss / (vals.size() - 1) / vals.size());
          }
        }
        agg(t, 2 + 3 * m) = mean;
        agg(t, 3 + 3 * m) = se;
        agg(t, 4 + 3 * m) =
            n_rows[t] > 0 ? static_cast<double>(vals.size()) / n_rows[t] : 0.0;
      }
      agg(t, 2 + 3 * metric_names.size()) =
          n_rows[t] > 0 ? n_est_sum[t] / n_rows[t] : metric_missing();
      agg(t, 3 + 3 * metric_names.size()) =
          n_rows[t] > 0 ? n_true_sum[t] / n_rows[t] : metric_missing();
    }
    write_csv(out_dir + "/" + variant + "/aggregate.csv", agg, cols);

    Json summary;
    summary["schema"] = "megpf-eval-summary-1";
    summary["variant"] = variant;
    summary["n_datasets"] = static_cast<int>(names.size());
    summary["n_steps"] = n_steps;
    summary["active_steps"] = active_steps;
    for (std::size_t m = 0; m < metric_names.size(); ++m) {
      const std::string key = "active_" + metric_names[m] + "_mean";
      if (active_n[m] > 0) {
        summary[key] = active_sum[m] / active_n[m];
      } else {
        summary[key] = nullptr;
      }
      summary["active_" + metric_names[m] + "_count"] = active_n[m];
    }
    summary["active_count_abs_err_mean"] =
        active_steps > 0 ? active_count_abs_err / active_steps : 0.0;
    summary["wm_sigma_m"] = kWmSigmaM;
    write_json_file(out_dir + "/" + variant + "/summary.json", summary);

    std::printf("eval %s: %d datasets scored\n", variant.c_str(),
                static_cast<int>(names.size()));
  }
}

void cmd_compare(const std::string& runs_dir, const std::string& variant_a,
                 const std::string& variant_b, const std::string& out_dir) {
  const std::string dir_a = runs_dir + "/" + variant_a;
  const std::string dir_b = runs_dir + "/" + variant_b;
  const std::vector<std::string> names_a = list_dataset_dirs(dir_a);
  const std::vector<std::string> names_b = list_dataset_dirs(dir_b);
  std::vector<std::string> names;
  std::set_intersection(names_a.begin(), names_a.end(), names_b.begin(),
                        names_b.end(), std::back_inserter(names));
  if (names.empty()) {
    throw DataError("no common datasets between " + dir_a + " and " + dir_b);
  }

  int n_steps = 0;
  Eigen::VectorXd cum_a, cum_b;
  Json per_dataset = Json::array();
  int wins_a = 0, wins_b = 0, ties = 0;
  double gap_sum = 0.0;
  for (const std::string& name : names) {
    auto read_cum = [&](const std::string& dir) {
      std::vector<std::string> columns;
      const std::string path = dir + "/" + name + "/evidence.csv";
      const Eigen::MatrixXd m = read_csv(path, &columns);
      return Eigen::VectorXd(
          m.col(find_column(columns, "cum_log_evidence", path)));
    };
    const Eigen::VectorXd a = read_cum(dir_a);
    const Eigen::VectorXd b = read_cum(dir_b);
    if (a.size() != b.size()) {
      throw DataError("series length mismatch for " + name);
    }
    if (n_steps == 0) {
      n_steps = static_cast<int>(a.size());
      cum_a = Eigen::VectorXd::Zero(n_steps);
      cum_b = Eigen::VectorXd::Zero(n_steps);
    } else if (a.size() != n_steps) {
      throw DataError("datasets disagree on series length under " + runs_dir);
    }
    cum_a += a;
    cum_b += b;
    const double gap = a(n_steps - 1) - b(n_steps - 1);
    gap_sum += gap;
    if (gap > 0.0) {
      ++wins_a;
    } else if (gap < 0.0) {
      ++wins_b;
    } else {
      ++ties;
    }
    Json entry;
    entry["dir"] = name;
    entry["terminal_" + variant_a] = a(n_steps - 1);
    entry["terminal_" + variant_b] = b(n_steps - 1);
    entry["gap"] = gap;
    per_dataset.push_back(entry);
  }
  const int n_data = static_cast<int>(names.size());
  cum_a /= n_data;
  cum_b /= n_data;

  fs::create_directories(out_dir);
  Eigen::MatrixXd rows(n_steps, 4);
  for (int t = 0; t < n_steps; ++t) {
    rows(t, 0) = t + 1;
    rows(t, 1) = cum_a(t);
    rows(t, 2) = cum_b(t);
    rows(t, 3) = cum_a(t) - cum_b(t);
  }
  write_csv(out_dir + "/compare.csv", rows,
            {"t", "mean_cum_" + variant_a, "mean_cum_" + variant_b,
             "mean_gap"});

  Json report;
  report["schema"] = "megpf-compare-1";
  report["caveat"] = kEvidenceCaveat;
  report["variant_a"] = variant_a;
  report["variant_b"] = variant_b;
  report["n_datasets"] = n_data;
  report["wins_a"] = wins_a;
  report["wins_b"] = wins_b;
  report["ties"] = ties;
  report["mean_terminal_gap"] = gap_sum / n_data;
  report["datasets"] = per_dataset;
  write_json_file(out_dir + "/compare.json", report);

  std::string text;
  text += std::string(kEvidenceCaveat) + "\n\n";
  text += "comparison: " + variant_a + " vs " + variant_b + " over " +
          std::to_string(n_data) + " datasets\n";
  text += "terminal log-evidence wins: " + variant_a + " " +
          std::to_string(wins_a) + ", " + variant_b + " " +
          std::to_string(wins_b) + ", ties " + std::to_string(ties) + "\n";
  text += "mean terminal gap (" + variant_a + " - " + variant_b +
          "): " + format_double(gap_sum / n_data) + "\n";
  write_text_file(out_dir + "/report.txt", text);

  std::printf("compare %s vs %s: wins %d-%d (ties %d), mean gap %.4f\n",
              variant_a.c_str(), variant_b.c_str(), wins_a, wins_b, ties,
              gap_sum / n_data);
}

}  // namespace megpf
