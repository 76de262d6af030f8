#include "repton/spectral.hpp"

#include <cmath>
#include <stdexcept>

#include "repton/errors.hpp"

namespace repton {

SpectralBasis::SpectralBasis(int modes, int grid_points)
    : K_(modes), G_(grid_points < 0 ? 2 * modes : grid_points) {
  if (K_ < 1) throw ConfigError("spectral basis needs at least one mode");
  if (G_ < K_)
    throw ConfigError("collocation grid must have at least as many points as modes");

  s_.resize(G_);
  for (int j = 0; j < G_; ++j) s_[j] = (j + 0.5) / G_;

  lam_.resize(K_);
  for (int k = 0; k < K_; ++k) lam_[k] = (k * M_PI) * (k * M_PI);

  cos_eval_.resize(G_, K_);
  sin_eval_.resize(G_, K_);
  const double rt2 = std::sqrt(2.0);
  for (int j = 0; j < G_; ++j) {
    cos_eval_(j, 0) = 1.0;
    sin_eval_(j, 0) = 0.0;
    for (int k = 1; k < K_; ++k) {
      cos_eval_(j, k) = rt2 * std::cos(k * M_PI * s_[j]);
      sin_eval_(j, k) = rt2 * std::sin(k * M_PI * s_[j]);
    }
  }
  cos_proj_ = cos_eval_.transpose() / G_;
  sin_proj_ = sin_eval_.transpose() / G_;
}

Vec SpectralBasis::to_grid(const Vec& coeffs) const { return cos_eval_ * coeffs; }

Vec SpectralBasis::to_spectral(const Vec& grid) const { return cos_proj_ * grid; }

Field SpectralBasis::field_from_coeffs(Vec coeffs) const {
  Field f;
  f.grid = to_grid(coeffs);
  f.coeffs = std::move(coeffs);
  return f;
}

Field SpectralBasis::field_from_grid(const Vec& grid) const {
  Field f;
  f.coeffs = to_spectral(grid);
  f.grid = to_grid(f.coeffs);  // projection of out-of-span input
  return f;
}

SineCoeffs SpectralBasis::derivative(const Vec& coeffs) const {
  SineCoeffs d;
  d.c = Vec::Zero(K_);
  for (int k = 1; k < K_; ++k) d.c[k] = -k * M_PI * coeffs[k];
  return d;
}

Vec SpectralBasis::divergence(const SineCoeffs& f) const {
  Vec out = Vec::Zero(K_);  // mode 0 stays exactly zero
  for (int k = 1; k < K_; ++k) out[k] = k * M_PI * f.c[k];
  return out;
}

Vec SpectralBasis::sine_to_grid(const SineCoeffs& f) const {
  return sin_eval_ * f.c;
}

SineCoeffs SpectralBasis::grid_to_sine(const Vec& grid) const {
  SineCoeffs out;
  out.c = sin_proj_ * grid;
  out.c[0] = 0.0;
  return out;
}

Vec SpectralBasis::laplacian(const Vec& coeffs) const {
  return -lam_.cwiseProduct(coeffs);
}

Vec SpectralBasis::bilaplacian(const Vec& coeffs) const {
  return lam_.cwiseProduct(lam_).cwiseProduct(coeffs);
}

double SpectralBasis::quadrature(const Vec& grid) const { return grid.mean(); }

double SpectralBasis::inner(const Vec& grid_f, const Vec& grid_g) const {
  return grid_f.dot(grid_g) / G_;
}

double SpectralBasis::hminus1_inner(const Vec& f_coeffs, const Vec& g_coeffs) const {
  if (std::abs(f_coeffs[0]) > 1e-10 || std::abs(g_coeffs[0]) > 1e-10)
    throw PreconditionError("hminus1_inner needs mean-zero fields (|mode 0| > 1e-10)");
  double acc = 0.0;
  for (int k = 1; k < K_; ++k) acc += f_coeffs[k] * g_coeffs[k] / lam_[k];
  return acc;
}

double SpectralBasis::eval(const Vec& coeffs, double s) const {
  double v = coeffs[0];
  const double rt2 = std::sqrt(2.0);
  for (int k = 1; k < K_; ++k) v += coeffs[k] * rt2 * std::cos(k * M_PI * s);
  return v;
}

double SpectralBasis::eval_sine(const SineCoeffs& f, double s) const {
  double v = 0.0;
  const double rt2 = std::sqrt(2.0);
  for (int k = 1; k < K_; ++k) v += f.c[k] * rt2 * std::sin(k * M_PI * s);
  return v;
}

}  // namespace repton
