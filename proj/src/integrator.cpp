#include "repton/integrator.hpp"

#include <algorithm>
#include <cmath>

#include "repton/errors.hpp"

namespace repton {

BoundaryState step_boundaries(const BoundaryState& b, const EdgeData& lo,
                              const EdgeData& hi, double dt) {
  double width = b.plus - b.minus;
  if (width <= 0) throw BoundaryCollapseError("boundary width is not positive");
  if (lo.rho <= 0 || hi.rho <= 0)
    throw PreconditionError("boundary update needs positive edge density");

  auto increment = [&](const EdgeData& e) {
    double flux = (0.5 / e.rho) * (e.dmu_ds / width) * dt + e.dW / std::sqrt(e.rho);
    return -flux / e.rho;
  };
  BoundaryState out;
  out.minus = b.minus + increment(lo);
  out.plus = b.plus + increment(hi);
  if (out.minus >= out.plus)
    throw BoundaryCollapseError("moving boundaries crossed");
  return out;
}

Stepper::Stepper(const Model& model, StepperConfig cfg)
    : model_(&model), basis_(&model.basis()), cfg_(cfg) {
  if (cfg_.dt <= 0) throw ConfigError("dt must be positive");
  if (cfg_.floor < 0) throw ConfigError("positivity floor must be >= 0");
  if (cfg_.penalty < 0) throw ConfigError("penalty must be >= 0");

  const int K = basis_->modes();
  divisor_.resize(K);
  for (int k = 0; k < K; ++k) {
    double l = basis_->lambda(k);
    divisor_[k] = 1.0 + cfg_.dt * model.alpha_effective() * l * l;
  }
  eval_grid_.resize(basis_->grid_points());
  pen_.resize(basis_->grid_points());

  double r_lo = cfg_.floor > 0 ? cfg_.floor : 0.05;  // probe range heuristic
  stability_number_ = cfg_.dt * model.explicit_rate_bound(r_lo, 4.0);
  if (cfg_.scheme == Scheme::FullyExplicit) {
    double l_max = basis_->lambda(K - 1);
    stability_number_ =
        std::max(stability_number_, cfg_.dt * model.alpha_effective() * l_max * l_max);
  }
}

double Stepper::step(Field& state, const Vec& noise) {
  const int G = basis_->grid_points();
  const double delta = cfg_.floor;

  const Vec* eval = &state.grid;
  if (delta > 0) {
    eval_grid_ = state.grid.cwiseMax(delta);
    eval = &eval_grid_;
  }

  double deposited = 0.0;
  support_.clear();
  const Vec* extra = nullptr;
  if (cfg_.penalty > 0 && delta > 0) {
    bool active = false;
    for (int j = 0; j < G; ++j) {
      double gap = delta - state.grid[j];
      if (gap > 0) {
        pen_[j] = -cfg_.penalty * gap;  // lowers mu in the depleted cells
        deposited += cfg_.penalty * gap;
        support_.push_back(j);
        active = true;
      } else {
        pen_[j] = 0.0;
      }
    }
    deposited = deposited / G * cfg_.dt;
    if (active) extra = &pen_;
  }

  Vec y = model_->drift_transport(*eval, extra);
  if (cfg_.scheme == Scheme::FullyExplicit && model_->alpha_effective() != 0.0)
    y -= model_->alpha_effective() * basis_->bilaplacian(state.coeffs);
  y = state.coeffs + cfg_.dt * y + noise;
  if (cfg_.scheme == Scheme::SemiImplicitAlpha) y.array() /= divisor_.array();

  if (!y.allFinite()) throw BlowUpError("non-finite state after step", -1);
  state.coeffs = std::move(y);
  state.grid = basis_->to_grid(state.coeffs);
  return deposited;
}

Field prepare_initial(const SpectralBasis& basis, const Vec& grid_values, double floor) {
  Vec g = floor > 0 ? grid_values.cwiseMax(2.0 * floor).eval() : grid_values;
  return basis.field_from_grid(g);
}

Trajectory run_trajectory(const Model& model, const StepperConfig& cfg,
                          NoiseGenerator& noise, Field initial) {
  const SpectralBasis& basis = model.basis();
  Stepper stepper(model, cfg);
  Trajectory out;
  long n_steps = std::lround(cfg.t_end / cfg.dt);
  out.steps = n_steps;

  Field state = std::move(initial);
  BoundaryState bnd{cfg.boundary_minus, cfg.boundary_plus};
  double interval_mass = 0.0;

  auto monitors = [&](long step, double pen_mass) {
    MonitorRow row;
    row.t = step * cfg.dt;
    row.mass = state.mass();
    row.l2_norm = state.l2_norm();
    if (cfg.floor > 0) {
      Field clipped;
      clipped.coeffs = state.coeffs;
      clipped.grid = state.grid.cwiseMax(cfg.floor);
      row.free_energy = model.free_energy(clipped);
    } else {
      row.free_energy = model.free_energy(state);
    }
    row.min_value = state.min_value();
    row.penalty_mass = pen_mass;
    out.rows.push_back(row);
    if (cfg.record_coeffs) out.coeffs.push_back(state.coeffs);
    if (cfg.moving_boundary) out.boundaries.push_back(bnd);
    out.ledger.entries.push_back({step, pen_mass, stepper.last_support()});
  };

  monitors(0, 0.0);
  long at_step = 0;
  try {
    for (long step = 1; step <= n_steps; ++step) {
      at_step = step;
      Vec inc = noise.increment(cfg.dt, &state.grid);
      double pen = stepper.step(state, inc);
      interval_mass += pen;
      out.ledger.total_mass += pen;

      if (cfg.moving_boundary) {
        // edge data sampled at the boundary-adjacent collocation nodes: the
        // sine representations of both d mu/ds and the raw increment vanish
        // identically at s = 0,1 under the Neumann basis
        Field eval_field;
        eval_field.coeffs = state.coeffs;
        eval_field.grid =
            cfg.floor > 0 ? state.grid.cwiseMax(cfg.floor).eval() : state.grid;
        Vec mu = model.chemical_potential(eval_field);
        SineCoeffs dmu = basis.derivative(basis.to_spectral(mu));
        double s_lo = basis.nodes()[0];
        double s_hi = basis.nodes()[basis.grid_points() - 1];
        EdgeData lo{std::max(eval_field.grid[0], cfg.floor),
                    basis.eval_sine(dmu, s_lo),
                    basis.eval_sine(noise.last_pre_divergence(), s_lo)};
        EdgeData hi{std::max(eval_field.grid[basis.grid_points() - 1], cfg.floor),
                    basis.eval_sine(dmu, s_hi),
                    basis.eval_sine(noise.last_pre_divergence(), s_hi)};
        bnd = step_boundaries(bnd, lo, hi, cfg.dt);
      }

      if (step % cfg.record_every == 0 || step == n_steps) {
        monitors(step, interval_mass);
        interval_mass = 0.0;
      }
    }
  } catch (const BlowUpError& e) {
    out.failed = true;
    out.error = std::string(e.what()) + " at step " + std::to_string(at_step);
  } catch (const PositivityError& e) {
    out.failed = true;
    out.error = std::string(e.what()) + " at step " + std::to_string(at_step);
  } catch (const BoundaryCollapseError& e) {
    out.failed = true;
    out.error = std::string(e.what()) + " at step " + std::to_string(at_step);
  }
  out.final_state = std::move(state);
  return out;
}

}  // namespace repton
