#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "repton/integrator.hpp"
#include "repton/model.hpp"
#include "repton/noise.hpp"

namespace repton {

inline constexpr const char* kVersion = "0.1.0";

struct InitialSpec {
  enum class Kind { Constant, Cosine, Coeffs };
  Kind kind = Kind::Constant;
  double value = 1.0;      // constant level / cosine mean
  double amplitude = 0.0;  // cosine bump size
  int mode = 1;            // cosine wavenumber
  std::vector<double> coeffs;
};

// analysis-experiment knobs; each experiment kind reads its own subset
struct AnalysisSpec {
  long samples = 20000;    // kept chain draws / gamma samples
  long burn_in = 2000;     // chain burn-in steps
  int thin = 1;
  double beta = 0.25;
  bool adapt_beta = true;
  int n_traj = 8;          // dynamic ensemble size
  double burn_time = 1.0;  // dynamic ensemble burn-in (time units)
  int observable_modes = 3;
  std::vector<int> levels = {1, 2, 5, 10, 50, 200};  // scan regularization ladder
  std::string fixture = "linear";                    // check: linear | regularized | unfloored
  int check_samples = 2000;
  int pairs = 16;           // mixing pairs
  int record_every = 10;
  std::vector<double> horizons = {1.0, 2.0, 4.0, 8.0};
  int substeps = 1;         // noise increments per step (dt-refinement coupling)
  double energy_scale = 1.0;
};

struct ExperimentConfig {
  std::string kind = "simulate";
  int modes = 16;
  int grid = -1;  // collocation points; -1 means 2 * modes
  PotentialSpec potential;
  MobilitySpec mobility;
  NoiseSpec noise;
  StepperConfig stepper;
  InitialSpec initial;
  InitialSpec initial2;  // second state for contract runs
  AnalysisSpec analysis;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: --threads flag, then REPTON_THREADS, then hardware
  std::string output_dir = "out";
};

// strict parse: unknown keys are rejected by name, types checked, defaults
// filled
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// every result-determining field, sorted keys; a fixed point of parse.
// threads and output_dir are deliberately absent, so runs that differ only
// in where they write or how many workers they use share one hash
std::string canonical_json(const ExperimentConfig& c);
std::string config_hash(const ExperimentConfig& c);  // sha256 of canonical_json

// grid construction + projection + flooring of the configured initial state
Field build_initial(const SpectralBasis& basis, const InitialSpec& init, double floor);

}  // namespace repton
