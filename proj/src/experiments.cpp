#include "repton/experiments.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "repton/analysis.hpp"
#include "repton/errors.hpp"
#include "repton/io.hpp"

namespace repton {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// pCN chains draw from the stream space far above the trajectory indices
constexpr std::uint64_t kChainStream = std::uint64_t{1} << 32;

void log_line(const fs::path& dir, const std::string& what) {
  std::ofstream log(dir / "run.log", std::ios::app);
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char stamp[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  log << "[" << stamp << "] " << what << "\n";
}

json estimate_json(const ObservableEstimate& e) {
  return json{{"name", e.name}, {"value", e.value}, {"se", e.se}, {"n_eff", e.n_eff}};
}

std::string csv_meta(const ExperimentConfig& cfg, const std::string& hash) {
  return std::string("repton ") + kVersion + " config=" + hash +
         " seed=" + std::to_string(cfg.seed);
}

// ---------------------------------------------------------------------------

int run_simulate(const ExperimentConfig& cfg, const SpectralBasis& basis,
                 const Model& model, const fs::path& dir, const std::string& hash,
                 json& report) {
  NoiseGenerator gen(basis, cfg.noise, cfg.seed, 0);
  const Field init = build_initial(basis, cfg.initial, cfg.stepper.floor);
  const Trajectory traj = run_trajectory(model, cfg.stepper, gen, init);

  write_text_file((dir / "trajectory.csv").string(),
                  trajectory_csv(traj, csv_meta(cfg, hash)));
  write_snapshot((dir / "state.bin").string(), traj.final_state.coeffs);

  Stepper probe(model, cfg.stepper);
  report["steps"] = traj.steps;
  report["rows"] = traj.rows.size();
  report["final_mass"] = traj.final_state.mass();
  report["penalty_total_mass"] = traj.ledger.total_mass;
  report["ledger_entries"] = traj.ledger.entries.size();
  report["stability_number"] = probe.stability_number();
  report["stability_warning"] = probe.stability_warning();
  report["incomplete"] = traj.failed;
  if (traj.failed) {
    report["error"] = traj.error;
    report["verdict"] = "aborted";
    return 1;
  }
  report["verdict"] = "ok";
  return 0;
}

int run_contract(const ExperimentConfig& cfg, const SpectralBasis& basis,
                 const Model& model, const fs::path& dir, const std::string& hash,
                 json& report) {
  const Field i1 = build_initial(basis, cfg.initial, cfg.stepper.floor);
  const Field i2 = build_initial(basis, cfg.initial2, cfg.stepper.floor);
  const ContractionResult r =
      contraction_experiment(model, cfg.stepper, cfg.noise, cfg.seed, i1, i2,
                             cfg.stepper.record_every);

  std::string csv = "# " + csv_meta(cfg, hash) + "\nt, d_hminus1\n";
  for (std::size_t i = 0; i < r.t.size(); ++i)
    csv += format_double(r.t[i]) + "," + format_double(r.d[i]) + "\n";
  write_text_file((dir / "distance.csv").string(), csv);

  const double tol = 1e-10;
  report["initial_distance"] = r.initial;
  report["final_distance"] = r.final;
  report["max_upward_step"] = r.max_upward;
  report["tolerance"] = tol;
  const bool pass = r.max_upward <= tol;
  report["verdict"] = pass ? "pass" : "fail";
  return pass ? 0 : 2;
}

int run_gibbs(const ExperimentConfig& cfg, const SpectralBasis& basis,
              const Model& model, const fs::path& dir, const std::string& hash,
              json& report) {
  if (cfg.mobility.kind != MobilitySpec::Kind::Constant)
    throw ConfigError("the gibbs comparison requires constant mobility");
  const GaussianReference ref(basis, cfg.potential.alpha, cfg.noise,
                              cfg.mobility.value);
  const Field init = build_initial(basis, cfg.initial, cfg.stepper.floor);
  const EnergyFn energy =
      gibbs_energy(basis, cfg.potential, cfg.analysis.energy_scale);

  PcnConfig pc;
  pc.samples = cfg.analysis.samples;
  pc.burn_in = cfg.analysis.burn_in;
  pc.thin = cfg.analysis.thin;
  pc.beta = cfg.analysis.beta;
  pc.adapt_beta = cfg.analysis.adapt_beta;
  pc.seed = cfg.seed;
  pc.stream = kChainStream;
  const PcnResult chain = gibbs_sample(ref, energy, init.mass(), pc);

  const int threads = resolve_threads(cfg.threads);
  const auto lhs = pcn_observables(chain, cfg.analysis.observable_modes);
  const auto rhs =
      dynamic_observables(model, cfg.stepper, cfg.noise, init, cfg.analysis.burn_time,
                          cfg.analysis.n_traj, cfg.analysis.observable_modes,
                          cfg.seed, threads);
  const CompareReport cmp = compare_invariant_measures(lhs, rhs);

  std::string csv =
      "# " + csv_meta(cfg, hash) +
      "\nname, chain, chain_se, dynamic, dynamic_se, z, verdict\n";
  json rows = json::array();
  for (const auto& e : cmp.rows) {
    csv += e.name + "," + format_double(e.lhs) + "," + format_double(e.lhs_se) + "," +
           format_double(e.rhs) + "," + format_double(e.rhs_se) + "," +
           format_double(e.z) + "," + e.verdict + "\n";
    rows.push_back(json{{"name", e.name},
                        {"chain", e.lhs},
                        {"chain_se", e.lhs_se},
                        {"dynamic", e.rhs},
                        {"dynamic_se", e.rhs_se},
                        {"z", e.z},
                        {"verdict", e.verdict}});
  }
  write_text_file((dir / "gibbs.csv").string(), csv);

  json jl = json::array(), jr = json::array();
  for (const auto& e : lhs) jl.push_back(estimate_json(e));
  for (const auto& e : rhs) jr.push_back(estimate_json(e));
  report["chain"] = {{"acceptance_rate", chain.acceptance_rate},
                     {"beta_used", chain.beta_used},
                     {"ess_mode_1", chain.ess},
                     {"tuning_failure", chain.tuning_failure},
                     {"observables", jl}};
  report["dynamic"] = {{"observables", jr}};
  report["rows"] = rows;
  std::string verdict = cmp.overall;
  if (chain.tuning_failure && verdict == "pass") verdict = "inconclusive";
  report["verdict"] = verdict;
  return verdict == "fail" ? 2 : 0;
}

int run_scan(const ExperimentConfig& cfg, const SpectralBasis& basis,
             const Model& model, const fs::path& dir, const std::string& hash,
             json& report) {
  (void)model;
  const GaussianReference ref(basis, cfg.potential.alpha, cfg.noise,
                              cfg.mobility.value);
  const Field init = build_initial(basis, cfg.initial, cfg.stepper.floor);

  std::vector<ScanObservable> psis;
  psis.push_back({"one", [](const Vec&) { return 1.0; }});
  psis.push_back({"tanh_mode1_sq", [](const Vec& c) { return std::tanh(c[1] * c[1]); }});
  psis.push_back({"exp_neg_norm2", [](const Vec& c) {
                    return std::exp(-c.tail(c.size() - 1).squaredNorm());
                  }});

  const ScanResult r = measure_convergence_scan(
      ref, cfg.potential, cfg.analysis.energy_scale, init.mass(), cfg.analysis.levels,
      static_cast<int>(cfg.analysis.samples), psis, cfg.seed);

  std::string csv = "# " + csv_meta(cfg, hash) + "\nn, z, probe_plus_one, probe_minus_one";
  for (const auto& p : psis) csv += ", " + p.name;
  csv += ", limit_gap\n";
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const ScanRow& row = r.rows[i];
    csv += std::to_string(row.n) + "," + format_double(row.z) + "," +
           format_double(row.probe_plus_one) + "," + format_double(row.probe_minus_one);
    for (double v : row.psi) csv += "," + format_double(v);
    csv += "," + format_double(r.limit_gap[i]) + "\n";
  }
  write_text_file((dir / "scan.csv").string(), csv);

  bool z_monotone = true;
  for (std::size_t i = 0; i + 1 < r.rows.size(); ++i)
    if (r.rows[i + 1].z > r.rows[i].z) z_monotone = false;
  bool probe_decreasing = true;
  for (std::size_t i = 0; i + 1 < r.rows.size(); ++i)
    if (r.rows[i + 1].probe_minus_one > r.rows[i].probe_minus_one)
      probe_decreasing = false;

  report["z_limit"] = r.z_limit;
  report["psi_limit"] = r.psi_limit;
  report["per_sample_monotone"] = r.per_sample_monotone;
  report["first_violation_sample"] = r.first_violation_sample;
  report["z_monotone"] = z_monotone;
  report["probe_minus_one_decreasing"] = probe_decreasing;
  report["gap_trend"] = {{"intercept", r.gap_trend.intercept},
                         {"slope", r.gap_trend.slope}};
  const bool pass = r.per_sample_monotone && z_monotone && probe_decreasing;
  report["verdict"] = pass ? "pass" : "fail";
  return pass ? 0 : 2;
}

int run_check(const ExperimentConfig& cfg, const SpectralBasis& basis,
              const Model& model, const fs::path& dir, const std::string& hash,
              json& report) {
  (void)dir;
  (void)hash;
  OperatorFixture fixture;
  if (cfg.analysis.fixture == "linear")
    fixture = linear_fixture(basis, cfg.potential.alpha, cfg.noise);
  else if (cfg.analysis.fixture == "regularized")
    fixture = regularized_fixture(model, cfg.noise);
  else
    fixture = unfloored_noise_fixture(model, cfg.noise);

  const AssumptionReport rep =
      check_assumptions(basis, fixture, cfg.analysis.check_samples, cfg.seed);

  report["fixture"] = fixture.name;
  report["pairing"] = rep.pairing;
  report["samples"] = rep.samples;
  report["hemi_modulus"] = rep.hemi_modulus;
  report["hemi_ratio"] = rep.hemi_ratio;
  report["monotonicity_violations"] = rep.monotonicity_violations;
  report["fitted_c"] = rep.fitted_c;
  report["worst_bracket"] = rep.worst_bracket;
  report["fitted_c2"] = rep.fitted_c2;
  report["fitted_c2_v"] = rep.fitted_c2_v;
  report["fitted_c1"] = rep.fitted_c1;
  report["fitted_f"] = rep.fitted_f;
  report["fitted_c3"] = rep.fitted_c3;
  report["f_const"] = rep.f_const;

  bool pass = rep.monotonicity_violations == 0;
  if (cfg.analysis.fixture == "linear") {
    const double c2_expect = 2.0 * cfg.potential.alpha * basis.lambda(1) * basis.lambda(1);
    report["c2_expected"] = c2_expect;
    pass = pass && std::abs(rep.fitted_c) <= 1e-8 &&
           std::abs(rep.fitted_c2 - c2_expect) <= 1e-8;
  }
  report["verdict"] = pass ? "pass" : "fail";
  return pass ? 0 : 2;
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg) {
  const std::string hash = config_hash(cfg);
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  write_text_file((dir / "config.json").string(), canonical_json(cfg));
  log_line(dir, "start kind=" + cfg.kind + " config=" + hash);

  const SpectralBasis basis(cfg.modes, cfg.grid);
  const Model model(basis, cfg.potential, cfg.mobility);

  json report;
  report["experiment"] = cfg.kind;
  report["version"] = kVersion;
  report["config_hash"] = hash;
  report["seed"] = cfg.seed;
  report["threads_requested"] = cfg.threads;
  report["incomplete"] = false;

  int code = 0;
  try {
    if (cfg.kind == "simulate")
      code = run_simulate(cfg, basis, model, dir, hash, report);
    else if (cfg.kind == "contract")
      code = run_contract(cfg, basis, model, dir, hash, report);
    else if (cfg.kind == "gibbs")
      code = run_gibbs(cfg, basis, model, dir, hash, report);
    else if (cfg.kind == "scan")
      code = run_scan(cfg, basis, model, dir, hash, report);
    else if (cfg.kind == "check")
      code = run_check(cfg, basis, model, dir, hash, report);
    else
      throw ConfigError("unknown experiment kind: " + cfg.kind);
  } catch (...) {
    log_line(dir, "abort kind=" + cfg.kind);
    throw;
  }

  write_text_file((dir / "report.json").string(), report.dump(2) + "\n");
  log_line(dir, "done kind=" + cfg.kind + " exit=" + std::to_string(code));
  return code;
}

}  // namespace repton
