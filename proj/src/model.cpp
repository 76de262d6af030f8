#include "repton/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "repton/errors.hpp"

namespace repton {

namespace {

void require_positive(const PotentialSpec& p, double r) {
  if (r <= p.eps_eval)
    throw PositivityError("singular potential evaluated at r = " + std::to_string(r) +
                          " <= eps_eval = " + std::to_string(p.eps_eval));
}

// quadratic extension data of V(r) = r + 1/r at the threshold t = 1/n
struct Extension {
  double t, v, dv, d2v;
};

Extension extension_at(int n) {
  Extension e;
  e.t = 1.0 / n;
  e.v = e.t + 1.0 / e.t;
  e.dv = 1.0 - 1.0 / (e.t * e.t);
  e.d2v = 2.0 / (e.t * e.t * e.t);
  return e;
}

}  // namespace

bool potential_is_singular(const PotentialSpec& p) {
  return p.family == PotentialFamily::SingularP2 ||
         p.family == PotentialFamily::SingularP3;
}

double potential_value(const PotentialSpec& p, double r) {
  switch (p.family) {
    case PotentialFamily::SingularP2:
      require_positive(p, r);
      return r + 1.0 / r + p.constant * r;
    case PotentialFamily::SingularP3:
      require_positive(p, r);
      return 0.5 / (r * r) + p.constant * r;
    case PotentialFamily::Regularized: {
      if (r >= 1.0 / p.n) return r + 1.0 / r + p.constant * r;
      Extension e = extension_at(p.n);
      double d = r - e.t;
      return e.v + e.dv * d + 0.5 * e.d2v * d * d + p.constant * r;
    }
    case PotentialFamily::PolynomialTest:
      return 0.5 * p.quad_coeff * r * r + p.constant * r;
  }
  throw ConfigError("unknown potential family");
}

double potential_deriv(const PotentialSpec& p, double r) {
  switch (p.family) {
    case PotentialFamily::SingularP2:
      require_positive(p, r);
      return 1.0 - 1.0 / (r * r) + p.constant;
    case PotentialFamily::SingularP3:
      require_positive(p, r);
      return -1.0 / (r * r * r) + p.constant;
    case PotentialFamily::Regularized: {
      if (r >= 1.0 / p.n) return 1.0 - 1.0 / (r * r) + p.constant;
      Extension e = extension_at(p.n);
      return e.dv + e.d2v * (r - e.t) + p.constant;
    }
    case PotentialFamily::PolynomialTest:
      return p.quad_coeff * r + p.constant;
  }
  throw ConfigError("unknown potential family");
}

double potential_second(const PotentialSpec& p, double r) {
  switch (p.family) {
    case PotentialFamily::SingularP2:
      require_positive(p, r);
      return 2.0 / (r * r * r);
    case PotentialFamily::SingularP3:
      require_positive(p, r);
      return 3.0 / (r * r * r * r);
    case PotentialFamily::Regularized:
      if (r >= 1.0 / p.n) return 2.0 / (r * r * r);
      return extension_at(p.n).d2v;
    case PotentialFamily::PolynomialTest:
      return p.quad_coeff;
  }
  throw ConfigError("unknown potential family");
}

double mobility_value(const MobilitySpec& m, double r) {
  if (m.kind == MobilitySpec::Kind::Constant) return m.value;
  return 1.0 / std::max(r, m.floor);
}

Model::Model(const SpectralBasis& basis, PotentialSpec pot, MobilitySpec mob)
    : basis_(&basis), pot_(pot), mob_(mob) {
  if (pot_.alpha < 0) throw ConfigError("alpha must be >= 0");
  if (pot_.family == PotentialFamily::Regularized && pot_.n < 1)
    throw ConfigError("regularization index n must be a positive integer");
  if (mob_.kind == MobilitySpec::Kind::Constant && mob_.value < 0)
    throw ConfigError("constant mobility must be >= 0");
  alpha_eff_ = mob_.kind == MobilitySpec::Kind::Constant ? mob_.value * pot_.alpha
                                                         : pot_.alpha;
}

Vec Model::chemical_potential(const Field& rho) const {
  Vec mu(rho.grid.size());
  for (int j = 0; j < mu.size(); ++j) mu[j] = potential_deriv(pot_, rho.grid[j]);
  if (pot_.alpha != 0.0)
    mu -= 2.0 * pot_.alpha * basis_->to_grid(basis_->laplacian(rho.coeffs));
  return mu;
}

Vec Model::drift(const Field& rho) const {
  Vec d = drift_transport(rho.grid);
  if (alpha_eff_ != 0.0) d -= alpha_eff_ * basis_->bilaplacian(rho.coeffs);
  return d;
}

Vec Model::drift_transport(const Vec& eval_grid, const Vec* extra_mu_grid) const {
  const int G = basis_->grid_points();
  // constant V' has no gradient: the transport vanishes identically
  if (pot_.family == PotentialFamily::PolynomialTest && pot_.quad_coeff == 0.0 &&
      !extra_mu_grid)
    return Vec::Zero(basis_->modes());
  Vec mu_loc(G);
  for (int j = 0; j < G; ++j) mu_loc[j] = potential_deriv(pot_, eval_grid[j]);
  if (extra_mu_grid) mu_loc += *extra_mu_grid;

  // 1/2 d/ds ( M d/ds mu_loc ); the product with M is pseudo-spectral on the
  // grid, except that constant mobility commutes with the projection exactly
  SineCoeffs dmu = basis_->derivative(basis_->to_spectral(mu_loc));
  if (mob_.kind == MobilitySpec::Kind::Constant) {
    dmu.c *= 0.5 * mob_.value;
    return basis_->divergence(dmu);
  }
  Vec flux = basis_->sine_to_grid(dmu);
  for (int j = 0; j < G; ++j) flux[j] *= 0.5 * mobility_value(mob_, eval_grid[j]);
  return basis_->divergence(basis_->grid_to_sine(flux));
}

double Model::free_energy(const Field& rho) const {
  double e = 0.0;
  for (int j = 0; j < rho.grid.size(); ++j) e += potential_value(pot_, rho.grid[j]);
  e /= rho.grid.size();
  if (pot_.alpha != 0.0) {
    double grad2 = 0.0;
    for (int k = 1; k < basis_->modes(); ++k)
      grad2 += basis_->lambda(k) * rho.coeffs[k] * rho.coeffs[k];
    e += pot_.alpha * grad2;
  }
  return e;
}

double Model::explicit_rate_bound(double r_min, double r_max) const {
  double worst = 0.0;
  const int probes = 64;
  for (int i = 0; i <= probes; ++i) {
    double r = r_min + (r_max - r_min) * i / probes;
    if (potential_is_singular(pot_) && r <= pot_.eps_eval) continue;
    double a = 0.5 * mobility_value(mob_, r) * std::abs(potential_second(pot_, r));
    worst = std::max(worst, a);
  }
  return worst * basis_->lambda(basis_->modes() - 1);
}

}  // namespace repton
