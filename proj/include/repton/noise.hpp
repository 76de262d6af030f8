#pragma once

#include <cstdint>
#include <vector>

#include "repton/rng.hpp"
#include "repton/spectral.hpp"

namespace repton {

// Wiener increments in conservative form: the driving noise is expanded in
// the sine modes ŝ_k = sqrt(2) sin(k pi s) (orthonormal in L2(0,1), zero at
// the endpoints) and the outer d/ds maps ŝ_k to sqrt(lambda_k) e_k, so the
// cosine-mode-k coefficient of an additive increment has variance
// lambda_k sigma^2 q_k dt and mode 0 is never touched.
enum class NoiseKind { Scalar, Cylindrical, QDiagonal };
enum class NoiseAmplitude { Additive, MultiplicativeFloored };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::Cylindrical;
  int modes = -1;  // driven sine modes; -1 or anything >= K means all (K-1)
  std::vector<double> q;  // QDiagonal weights for modes 1..q.size()
  NoiseAmplitude amplitude = NoiseAmplitude::Additive;
  double sigma = 1.0;
  double floor = 1e-3;      // multiplicative amplitude sigma/sqrt(max(rho, floor))
  bool conservative = true; // apply the outer d/ds (default); if false the
                            // increment is expanded directly in cosine modes
                            // 1..modes (still mean-free)
};

class NoiseGenerator {
 public:
  NoiseGenerator(const SpectralBasis& basis, NoiseSpec spec, std::uint64_t seed,
                 std::uint64_t stream = 0);

  // One increment over dt as cosine coefficients. Multiplicative amplitudes
  // need the current density grid. substeps > 1 draws that many increments
  // over dt/substeps and sums them: same law, but a run at dt with
  // substeps=2 consumes the identical normal sequence as two steps of a run
  // at dt/2 (common random numbers across dt refinement).
  Vec increment(double dt, const Vec* rho_grid = nullptr, int substeps = 1);

  // amplitude-weighted increment field before the outer divergence, from the
  // last call; used by the moving-boundary diagnostic
  const SineCoeffs& last_pre_divergence() const { return last_raw_; }

  // sum_k ||B ŝ_k||^2_{L2} for the current amplitude: the Ito-correction
  // trace of the energy estimate. Additive: sigma^2 sum q_k lambda_k.
  double trace(const Vec* rho_grid = nullptr) const;

  int active_modes() const { return n_modes_; }
  const Vec& mode_weights() const { return weights_; }

 private:
  Vec one_increment(double dt, const Vec* rho_grid);

  const SpectralBasis* basis_;
  NoiseSpec spec_;
  CounterRng rng_;
  int n_modes_;   // driven sine (or cosine) modes, indices 1..n_modes_
  Vec weights_;   // sigma * sqrt(q_k), index 0 unused
  SineCoeffs last_raw_;
};

// Least-squares affine fit of the trace against ||rho||^2 over random
// positive densities: trace <= c1 + c2 ||rho||^2 (Def 2.1(g) shape).
struct TraceBoundReport {
  double c1 = 0.0;
  double c2 = 0.0;
  double max_residual = 0.0;  // max positive deviation above the fitted line
  int samples = 0;
};

TraceBoundReport trace_bound_report(const SpectralBasis& basis, const NoiseSpec& spec,
                                    int n_samples, std::uint64_t seed);

}  // namespace repton
