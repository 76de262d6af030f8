#pragma once

#include "repton/spectral.hpp"

namespace repton {

// Potential families for the free energy E(rho) = int V(rho) + alpha |d rho/ds|^2.
//   singular_p2:     V(r) = r + 1/r (+ C r),        V'(r) = 1 - 1/r^2 (+ C)
//   singular_p3:     V(r) = 1/(2 r^2) (+ C r),      V'(r) = -1/r^3 (+ C)
//   regularized(n):  singular_p2 for r >= 1/n, quadratic C2 extension below,
//                    so V^n is convex on all of R and V^n <= V^{n+1} <= V
//   polynomial_test: V(r) = quad_coeff r^2 / 2 (+ C r); quad_coeff = 0 gives
//                    the zero potential, i.e. the pure bilaplacian flow used
//                    as the linear fixture
enum class PotentialFamily { SingularP2, SingularP3, Regularized, PolynomialTest };

struct PotentialSpec {
  PotentialFamily family = PotentialFamily::Regularized;
  int n = 10;               // regularization index; threshold 1/n
  double alpha = 0.0;       // gradient-penalty weight, >= 0
  double constant = 0.0;    // additive constant C in the chemical potential
  double quad_coeff = 1.0;  // polynomial_test curvature
  double eps_eval = 1e-8;   // singular families refuse evaluation at r <= this
};

struct MobilitySpec {
  enum class Kind { Inverse, Constant };
  Kind kind = Kind::Constant;
  double value = 1.0;  // constant mobility M
  double floor = 1e-6; // inverse mobility: M(r) = 1 / max(r, floor)
};

bool potential_is_singular(const PotentialSpec& p);
double potential_value(const PotentialSpec& p, double r);
double potential_deriv(const PotentialSpec& p, double r);   // includes + C
double potential_second(const PotentialSpec& p, double r);
double mobility_value(const MobilitySpec& m, double r);

// Spatial model on a fixed basis. Drift of the density equation:
//   d rho = [ 1/2 d/ds ( M(rho) d/ds mu_loc(rho) ) - alpha_eff Delta^2 rho ] dt + ...
// with mu_loc = V'(rho) (+ any extra pointwise term, e.g. the reflection
// penalty). For constant mobility alpha_eff = M alpha, so the composition
// equals 1/2 d/ds(M d/ds mu) with the full mu = V'(rho) - 2 alpha Delta rho;
// for non-constant mobility the bilaplacian is applied to rho directly
// (alpha_eff = alpha), matching the weak form the solver discretizes.
class Model {
 public:
  Model(const SpectralBasis& basis, PotentialSpec pot, MobilitySpec mob);

  const SpectralBasis& basis() const { return *basis_; }
  const PotentialSpec& potential() const { return pot_; }
  const MobilitySpec& mobility() const { return mob_; }
  double alpha_effective() const { return alpha_eff_; }

  // grid values of mu = V'(rho) + C - 2 alpha Delta rho
  Vec chemical_potential(const Field& rho) const;

  // cosine coefficients of the full drift (including the alpha term)
  Vec drift(const Field& rho) const;

  // nonlinear transport part only: 1/2 d/ds(M(eval) d/ds [V'(eval) + extra]);
  // eval_grid may be a clipped copy of the true grid (the integrator's
  // positivity floor), extra_mu_grid is an optional pointwise addition to
  // the local chemical potential. Mode 0 of the result is exactly zero.
  Vec drift_transport(const Vec& eval_grid, const Vec* extra_mu_grid = nullptr) const;

  double free_energy(const Field& rho) const;

  // explicit-stiffness scale of the transport term: max over a probe range
  // of 1/2 M V'' lambda_{K-1}; used for the dt stability warning
  double explicit_rate_bound(double r_min, double r_max) const;

 private:
  const SpectralBasis* basis_;
  PotentialSpec pot_;
  MobilitySpec mob_;
  double alpha_eff_;
};

}  // namespace repton
