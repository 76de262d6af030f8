#include "repton/noise.hpp"

#include <algorithm>
#include <cmath>

#include "repton/errors.hpp"

namespace repton {

NoiseGenerator::NoiseGenerator(const SpectralBasis& basis, NoiseSpec spec,
                               std::uint64_t seed, std::uint64_t stream)
    : basis_(&basis), spec_(spec), rng_(seed, stream) {
  if (spec_.sigma < 0) throw ConfigError("noise sigma must be >= 0");
  const int max_modes = basis.modes() - 1;
  switch (spec_.kind) {
    case NoiseKind::Scalar:
      n_modes_ = max_modes >= 1 ? 1 : 0;
      break;
    case NoiseKind::Cylindrical:
      n_modes_ = spec_.modes < 0 ? max_modes : std::min(spec_.modes, max_modes);
      break;
    case NoiseKind::QDiagonal:
      if (spec_.q.empty()) throw ConfigError("q_diagonal noise needs a q spectrum");
      for (double q : spec_.q)
        if (q < 0) throw ConfigError("q spectrum entries must be >= 0");
      n_modes_ = std::min<int>(spec_.q.size(), max_modes);
      break;
    default:
      throw ConfigError("unknown noise kind");
  }
  weights_ = Vec::Zero(basis.modes());
  for (int k = 1; k <= n_modes_; ++k) {
    double q = spec_.kind == NoiseKind::QDiagonal ? spec_.q[k - 1] : 1.0;
    weights_[k] = spec_.sigma * std::sqrt(q);
  }
  last_raw_.c = Vec::Zero(basis.modes());
}

Vec NoiseGenerator::one_increment(double dt, const Vec* rho_grid) {
  const int K = basis_->modes();
  const double rtdt = std::sqrt(dt);

  if (spec_.amplitude == NoiseAmplitude::MultiplicativeFloored && !rho_grid)
    throw PreconditionError("multiplicative noise needs the current density grid");

  SineCoeffs w;
  w.c = Vec::Zero(K);
  for (int k = 1; k <= n_modes_; ++k) w.c[k] = weights_[k] * rtdt * rng_.normal();

  if (!spec_.conservative) {
    // direct cosine expansion on the fluctuation modes; mode 0 untouched
    last_raw_ = w;
    Vec out = Vec::Zero(K);
    for (int k = 1; k <= n_modes_; ++k) out[k] = w.c[k];
    return out;
  }

  if (spec_.amplitude == NoiseAmplitude::MultiplicativeFloored) {
    Vec wg = basis_->sine_to_grid(w);
    for (int j = 0; j < wg.size(); ++j)
      wg[j] /= std::sqrt(std::max((*rho_grid)[j], spec_.floor));
    w = basis_->grid_to_sine(wg);
  }
  last_raw_ = w;
  return basis_->divergence(w);
}

Vec NoiseGenerator::increment(double dt, const Vec* rho_grid, int substeps) {
  if (substeps <= 1) return one_increment(dt, rho_grid);
  Vec acc = one_increment(dt / substeps, rho_grid);
  for (int i = 1; i < substeps; ++i) acc += one_increment(dt / substeps, rho_grid);
  return acc;
}

double NoiseGenerator::trace(const Vec* rho_grid) const {
  if (spec_.amplitude == NoiseAmplitude::Additive || !spec_.conservative) {
    double tr = 0.0;
    for (int k = 1; k <= n_modes_; ++k) {
      double col = weights_[k] * weights_[k];
      tr += spec_.conservative ? col * basis_->lambda(k) : col;
    }
    return tr;
  }
  if (!rho_grid)
    throw PreconditionError("multiplicative trace needs the current density grid");
  // column k of B is d/ds( amp(rho) ŝ_k ), pseudo-spectral
  double tr = 0.0;
  for (int k = 1; k <= n_modes_; ++k) {
    SineCoeffs col;
    col.c = Vec::Zero(basis_->modes());
    col.c[k] = weights_[k];
    Vec g = basis_->sine_to_grid(col);
    for (int j = 0; j < g.size(); ++j)
      g[j] /= std::sqrt(std::max((*rho_grid)[j], spec_.floor));
    tr += basis_->divergence(basis_->grid_to_sine(g)).squaredNorm();
  }
  return tr;
}

TraceBoundReport trace_bound_report(const SpectralBasis& basis, const NoiseSpec& spec,
                                    int n_samples, std::uint64_t seed) {
  NoiseGenerator gen(basis, spec, seed, /*stream=*/0);
  CounterRng rng(seed, 1);
  Eigen::MatrixXd X(n_samples, 2);
  Vec y(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    // random positive density: mass in [0.5, 2.5], decaying fluctuations
    Vec c = Vec::Zero(basis.modes());
    c[0] = 0.5 + 2.0 * rng.uniform();
    for (int k = 1; k < basis.modes(); ++k)
      c[k] = 0.5 * c[0] * rng.normal() / (1.0 + basis.lambda(k));
    Field rho = basis.field_from_coeffs(c);
    X(i, 0) = 1.0;
    X(i, 1) = rho.coeffs.squaredNorm();
    y[i] = gen.trace(&rho.grid);
  }
  Eigen::Vector2d beta = (X.transpose() * X).ldlt().solve(X.transpose() * y);
  TraceBoundReport rep;
  rep.c1 = beta[0];
  rep.c2 = beta[1];
  rep.max_residual = (y - X * beta).maxCoeff();
  rep.samples = n_samples;
  return rep;
}

}  // namespace repton
