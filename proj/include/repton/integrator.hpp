#pragma once

#include <string>
#include <vector>

#include "repton/model.hpp"
#include "repton/noise.hpp"

namespace repton {

enum class Scheme { SemiImplicitAlpha, FullyExplicit };

struct StepperConfig {
  double dt = 1e-4;
  double t_end = 1.0;
  Scheme scheme = Scheme::SemiImplicitAlpha;
  double floor = 1e-4;    // positivity floor delta: singular terms are
                          // evaluated at max(rho, delta), and the penalty
                          // activates below it
  double penalty = 1e6;   // kappa; 0 disables the penalty
  int record_every = 1;
  bool record_coeffs = false;
  bool moving_boundary = false;
  double boundary_minus = 0.0;
  double boundary_plus = 1.0;
};

struct LedgerEntry {
  long step;
  double mass;                // integral kappa (delta - rho)_+ ds dt since last entry
  std::vector<int> support;   // grid cells with rho < delta at the entry time
};

// Running account of the penalty surrogate for the reflection measure.
struct ReflectionLedger {
  std::vector<LedgerEntry> entries;
  double total_mass = 0.0;
};

struct MonitorRow {
  double t;
  double mass;
  double l2_norm;
  double free_energy;  // evaluated at the floored grid when floor > 0
  double min_value;    // true (unfloored) grid minimum
  double penalty_mass; // deposited since the previous record
};

struct BoundaryState {
  double minus = 0.0;
  double plus = 1.0;
};

struct Trajectory {
  std::vector<MonitorRow> rows;
  std::vector<Vec> coeffs;               // filled when record_coeffs
  std::vector<BoundaryState> boundaries; // filled when moving_boundary
  ReflectionLedger ledger;
  Field final_state;
  long steps = 0;
  bool failed = false;
  std::string error;
};

// Edge-evaluated inputs of the boundary SDE (reference coordinates).
struct EdgeData {
  double rho;     // density at the edge
  double dmu_ds;  // d mu / ds at the edge, reference domain
  double dW;      // amplitude-weighted Wiener increment at the edge
};

// One Euler-Maruyama update of the moving endpoints:
//   dL = -(1/rho) [ (1/(2 rho)) (d mu/dx) dt + dW / sqrt(rho) ],
// with d/dx = (1/(L+ - L-)) d/ds. Throws BoundaryCollapseError when the
// update makes the endpoints cross, PreconditionError on nonpositive edge
// density. Diagnostic mode: bulk mass stays defined on the reference domain.
BoundaryState step_boundaries(const BoundaryState& b, const EdgeData& lo,
                              const EdgeData& hi, double dt);

// Semi-implicit Euler-Maruyama step for
//   d rho = [ 1/2 d/ds(M(rho) d/ds mu_eff) - alpha_eff Delta^2 rho ] dt + dB,
//   mu_eff = V'(max(rho, delta)) - kappa (delta - rho)_+,
// i.e. (I + dt alpha_eff Delta^2) rho^+ = rho + dt * transport + noise with a
// diagonal spectral solve. The penalty rides inside the chemical potential,
// so mode 0 is conserved exactly (to the last bit) penalty or not.
class Stepper {
 public:
  Stepper(const Model& model, StepperConfig cfg);

  // advance by dt with the given increment; returns the penalty mass deposited
  double step(Field& state, const Vec& noise);

  const std::vector<int>& last_support() const { return support_; }
  double stability_number() const { return stability_number_; }
  bool stability_warning() const { return stability_number_ > 2.0; }
  const StepperConfig& config() const { return cfg_; }

 private:
  const Model* model_;
  const SpectralBasis* basis_;
  StepperConfig cfg_;
  Vec divisor_;     // 1 + dt alpha_eff lambda^2
  Vec eval_grid_;
  Vec pen_;
  std::vector<int> support_;
  double stability_number_;
};

// Projects onto the cosine span after flooring the values at 2*floor.
Field prepare_initial(const SpectralBasis& basis, const Vec& grid_values, double floor);

Trajectory run_trajectory(const Model& model, const StepperConfig& cfg,
                          NoiseGenerator& noise, Field initial);

}  // namespace repton
