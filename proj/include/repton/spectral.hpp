#pragma once

#include <Eigen/Dense>

namespace repton {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Coefficients of a sine expansion: entry k multiplies sqrt(2) sin(k pi s),
// entry 0 is identically zero. Sine fields only appear as intermediates of
// derivative/divergence compositions; public state is always cosine-basis.
struct SineCoeffs {
  Vec c;
};

// A density field in both representations, kept consistent by the basis
// methods that construct it. coeffs[0] is the mass (mode 0 is e_0 = 1 and
// the domain has unit length).
struct Field {
  Vec coeffs;  // cosine coefficients, size K
  Vec grid;    // values at the collocation midpoints, size G

  double mass() const { return coeffs[0]; }
  double l2_norm() const { return coeffs.norm(); }
  double min_value() const { return grid.minCoeff(); }
};

// Galerkin basis of Neumann eigenfunctions on [0,1]:
//   e_0 = 1, e_k(s) = sqrt(2) cos(k pi s), -Delta e_k = lambda_k e_k,
//   lambda_k = (k pi)^2.
// Collocation grid: G midpoints s_j = (j + 1/2)/G. With G >= K the discrete
// product (1/G) sum_j f(s_j) g(s_j) is the exact L2 inner product on
// span{e_0..e_{K-1}} (and on the matching sine span), so transforms are
// exact projections; nonlinear terms are de-aliased by oversampling with
// the default G = 2K. Transforms are dense precomputed matrices.
class SpectralBasis {
 public:
  explicit SpectralBasis(int modes, int grid_points = -1);

  int modes() const { return K_; }
  int grid_points() const { return G_; }
  double lambda(int k) const { return lam_[k]; }
  const Vec& lambdas() const { return lam_; }
  const Vec& nodes() const { return s_; }

  Vec to_grid(const Vec& coeffs) const;
  Vec to_spectral(const Vec& grid) const;

  Field field_from_coeffs(Vec coeffs) const;
  Field field_from_grid(const Vec& grid) const;

  // d/ds maps the cosine span to the sine span and back:
  //   d/ds e_k = -k pi ŝ_k,  d/ds ŝ_k = k pi e_k,
  // so divergence(derivative(f)) = laplacian(f) exactly, and mode 0 of any
  // divergence is identically zero (conservative form).
  SineCoeffs derivative(const Vec& coeffs) const;
  Vec divergence(const SineCoeffs& f) const;
  Vec sine_to_grid(const SineCoeffs& f) const;
  SineCoeffs grid_to_sine(const Vec& grid) const;

  Vec laplacian(const Vec& coeffs) const;    // multiplies by -lambda_k
  Vec bilaplacian(const Vec& coeffs) const;  // multiplies by +lambda_k^2

  double quadrature(const Vec& grid) const;  // integral over [0,1]
  double inner(const Vec& grid_f, const Vec& grid_g) const;

  // H^-1 inner product <(-Delta)^{-1} f, g> = sum_k f_k g_k / lambda_k.
  // Defined on mean-zero fields; rejects |mode 0| > 1e-10.
  double hminus1_inner(const Vec& f_coeffs, const Vec& g_coeffs) const;

  double eval(const Vec& coeffs, double s) const;
  double eval_sine(const SineCoeffs& f, double s) const;

 private:
  int K_;
  int G_;
  Vec s_;
  Vec lam_;
  Mat cos_eval_;  // G x K, e_k(s_j)
  Mat cos_proj_;  // K x G, (1/G) e_k(s_j)
  Mat sin_eval_;  // G x K, ŝ_k(s_j), column 0 zero
  Mat sin_proj_;  // K x G
};

}  // namespace repton
