#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "repton/analysis.hpp"
#include "repton/errors.hpp"

using namespace repton;

namespace {

NoiseSpec cyl(double sigma = 1.0) {
  NoiseSpec s;
  s.kind = NoiseKind::Cylindrical;
  s.sigma = sigma;
  return s;
}

Model quad_model(const SpectralBasis& b, double quad_coeff, double alpha) {
  PotentialSpec p;
  p.family = PotentialFamily::PolynomialTest;
  p.quad_coeff = quad_coeff;
  p.alpha = alpha;
  MobilitySpec m;  // constant, M = 1
  return Model(b, p, m);
}

Model regularized_model(const SpectralBasis& b, int n, double alpha) {
  PotentialSpec p;
  p.family = PotentialFamily::Regularized;
  p.n = n;
  p.alpha = alpha;
  MobilitySpec m;
  return Model(b, p, m);
}

}  // namespace

// ---------------------------------------------------------------------------
// statistics helpers

TEST_CASE("least-squares line fit is exact on affine data") {
  const std::vector<double> x{0.0, 1.0, 2.0, 3.0, 4.0};
  std::vector<double> y;
  for (double v : x) y.push_back(2.0 + 3.0 * v);
  const LinearFit f = fit_line(x, y);
  CHECK(f.intercept == doctest::Approx(2.0).epsilon(1e-13));
  CHECK(f.slope == doctest::Approx(3.0).epsilon(1e-13));
  CHECK_THROWS_AS(fit_line({1.0}, {2.0}), PreconditionError);
  CHECK_THROWS_AS(fit_line({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}), PreconditionError);
}

TEST_CASE("trimmed fit ignores a gross outlier") {
  std::vector<double> x, y;
  for (int i = 0; i < 50; ++i) {
    x.push_back(0.1 * i);
    y.push_back(1.0 + 2.0 * 0.1 * i);
  }
  y[20] += 100.0;
  const LinearFit f = fit_line_trimmed(x, y, 0.05);
  CHECK(f.intercept == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(f.slope == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("batch-means SE matches the iid rate") {
  CounterRng rng(11, 0);
  std::vector<double> xs(4096);
  for (double& v : xs) v = 2.0 * rng.normal();
  const double se = batch_means_se(xs);  // iid: sigma / sqrt(n) = 0.03125
  CHECK(se > 0.6 * 0.03125);
  CHECK(se < 1.4 * 0.03125);
  CHECK(batch_means_se({1.0, 2.0, 3.0}) == 0.0);
}

TEST_CASE("effective sample size: iid versus AR(1)") {
  CounterRng rng(13, 0);
  std::vector<double> iid(4000);
  for (double& v : iid) v = rng.normal();
  const double e0 = effective_sample_size(iid);
  CHECK(e0 > 1800.0);
  CHECK(e0 <= 4000.0 + 1e-9);

  // x_{i+1} = phi x_i + sqrt(1-phi^2) xi, tau = (1+phi)/(1-phi) = 19
  std::vector<double> ar(20000);
  double x = 0.0;
  const double phi = 0.9, amp = std::sqrt(1.0 - phi * phi);
  for (double& v : ar) {
    x = phi * x + amp * rng.normal();
    v = x;
  }
  const double e1 = effective_sample_size(ar);
  CHECK(e1 > 400.0);
  CHECK(e1 < 2600.0);

  CHECK(effective_sample_size({1.0, 2.0, 3.0, 4.0, 5.0}) == 5.0);
}

TEST_CASE("KS statistic separates correct and wrong variance") {
  CounterRng rng(5, 0);
  std::vector<double> xs(2000);
  for (double& v : xs) v = std::sqrt(2.0) * rng.normal();
  CHECK(ks_statistic_normal(xs, 2.0) < 1.628);  // asymptotic 1% critical value
  CHECK(ks_statistic_normal(xs, 8.0) > 1.628);
  CHECK_THROWS_AS(ks_statistic_normal({}, 1.0), PreconditionError);
  CHECK_THROWS_AS(ks_statistic_normal({1.0, 2.0}, 0.0), PreconditionError);
}

TEST_CASE("parallel map is index-keyed and propagates exceptions") {
  std::vector<double> out(101, -1.0);
  parallel_for_indices(101, 3, [&](int i) { out[i] = double(i) * i; });
  for (int i = 0; i < 101; ++i) CHECK(out[i] == double(i) * i);
  CHECK_THROWS_AS(parallel_for_indices(50, 4,
                                       [](int i) {
                                         if (i == 17) throw std::runtime_error("boom");
                                       }),
                  std::runtime_error);
  CHECK(resolve_threads(3) == 3);
  CHECK(resolve_threads(0) >= 1);
}

// ---------------------------------------------------------------------------
// Gaussian reference

TEST_CASE("reference variances follow sigma^2 q_k / (2 M alpha lambda_k)") {
  const SpectralBasis b(6);
  const GaussianReference ref(b, 0.2, cyl(0.8), 1.5);
  CHECK(ref.variances()[0] == 0.0);
  for (int k = 1; k < 6; ++k)
    CHECK(ref.variances()[k] ==
          doctest::Approx(0.64 / (2.0 * 1.5 * 0.2 * b.lambda(k))).epsilon(1e-13));

  NoiseSpec nc = cyl(0.8);
  nc.conservative = false;  // no outer d/ds: one more lambda in the denominator
  const GaussianReference ref2(b, 0.2, nc, 1.5);
  for (int k = 1; k < 6; ++k)
    CHECK(ref2.variances()[k] ==
          doctest::Approx(0.64 / (2.0 * 1.5 * 0.2 * b.lambda(k) * b.lambda(k)))
              .epsilon(1e-13));

  CHECK_THROWS_AS(GaussianReference(b, 0.0, cyl()), ConfigError);
  CHECK_THROWS_AS(GaussianReference(b, 0.2, cyl(), 0.0), ConfigError);
  NoiseSpec mult = cyl();
  mult.amplitude = NoiseAmplitude::MultiplicativeFloored;
  CHECK_THROWS_AS(GaussianReference(b, 0.2, mult), ConfigError);
}

TEST_CASE("reference sampling hits the prescribed spectrum") {
  const SpectralBasis b(4);
  const GaussianReference ref(b, 0.25, cyl(1.0));
  CounterRng rng(101, 0);
  const int n = 20000;
  Vec acc = Vec::Zero(4);
  for (int i = 0; i < n; ++i) {
    const Vec x = ref.sample_fluctuation(rng);
    CHECK(x[0] == 0.0);
    acc += x.cwiseProduct(x);
  }
  for (int k = 1; k < 4; ++k) {
    const double v = acc[k] / n;
    CHECK(v == doctest::Approx(ref.variances()[k]).epsilon(0.05));
  }
}

// ---------------------------------------------------------------------------
// Gibbs energies

TEST_CASE("gibbs energy integrates the potential over the grid") {
  const SpectralBasis b(4);
  PotentialSpec p2;
  p2.family = PotentialFamily::SingularP2;
  const EnergyFn e = gibbs_energy(b, p2, 3.0);
  Vec flat = Vec::Zero(4);
  flat[0] = 2.0;  // V(2) = 2 + 1/2
  CHECK(e(flat) == doctest::Approx(3.0 * 2.5).epsilon(1e-12));

  Vec dip = Vec::Zero(4);
  dip[0] = 0.2;
  dip[1] = 0.3;  // grid min 0.2 - 0.3 sqrt(2) < 0
  CHECK(std::isinf(e(dip)));

  PotentialSpec poly;
  poly.family = PotentialFamily::PolynomialTest;
  poly.quad_coeff = 2.0;
  Vec three = Vec::Zero(4);
  three[0] = 3.0;
  CHECK(gibbs_energy(b, poly)(three) == doctest::Approx(9.0).epsilon(1e-12));
}

TEST_CASE("singular limit of the regularized energy") {
  const SpectralBasis b(4);
  PotentialSpec reg;
  reg.family = PotentialFamily::Regularized;
  reg.n = 10;
  const EnergyFn lim = gibbs_energy_limit(b, reg);
  const EnergyFn raw = gibbs_energy(b, reg);

  Vec flat = Vec::Zero(4);
  flat[0] = 2.0;
  CHECK(lim(flat) == doctest::Approx(2.5).epsilon(1e-12));  // p2 value

  Vec neg = Vec::Zero(4);
  neg[0] = -0.5;
  CHECK(std::isinf(lim(neg)));
  CHECK(std::isfinite(raw(neg)));  // the extension is defined on all of R

  PotentialSpec poly;
  poly.family = PotentialFamily::PolynomialTest;
  CHECK_THROWS_AS(gibbs_energy_limit(b, poly), ConfigError);
}

// ---------------------------------------------------------------------------
// pCN / RWM samplers

TEST_CASE("pCN with zero energy reproduces the reference law") {
  const SpectralBasis b(5);
  const GaussianReference ref(b, 0.25, cyl(1.0));
  PcnConfig pc;
  pc.samples = 30000;
  pc.burn_in = 2000;
  pc.seed = 9;
  const PcnResult r = gibbs_sample(ref, [](const Vec&) { return 0.0; }, 1.0, pc);

  CHECK(r.acceptance_rate == 1.0);  // log-ratio identically zero
  CHECK(r.beta_used == doctest::Approx(0.999));
  CHECK_FALSE(r.tuning_failure);
  CHECK(r.samples.rows() == 30000);
  CHECK(r.samples.cols() == 4);
  for (int k = 1; k < 5; ++k)
    CHECK(r.mode_variance[k] == doctest::Approx(ref.variances()[k]).epsilon(0.05));
  CHECK(r.ess > 5000.0);

  std::vector<double> col0(30000);
  for (long i = 0; i < 30000; ++i) col0[i] = r.samples(i, 0);
  CHECK(ks_statistic_normal(col0, ref.variances()[1]) < 1.628);
}

TEST_CASE("pCN against a quadratic tilt matches the conjugate posterior") {
  const SpectralBasis b(4);
  const GaussianReference ref(b, 0.3, cyl(1.0));
  // E(x) = (q/2) sum_k x_k^2 tilts each mode to 1/(1/v_k + q)
  const double q = 5.0;
  const EnergyFn e = [q](const Vec& x) {
    double s = 0.0;
    for (int k = 1; k < x.size(); ++k) s += x[k] * x[k];
    return 0.5 * q * s;
  };
  PcnConfig pc;
  pc.samples = 40000;
  pc.burn_in = 4000;
  pc.seed = 12;
  const PcnResult r = gibbs_sample(ref, e, 1.0, pc);

  CHECK(r.acceptance_rate > 0.05);
  CHECK(r.acceptance_rate < 0.95);
  CHECK_FALSE(r.tuning_failure);
  CHECK(r.ess > 500.0);
  for (int k = 1; k < 4; ++k) {
    const double post = 1.0 / (1.0 / ref.variances()[k] + q);
    CHECK(std::abs(r.mode_variance[k] - post) < 0.1 * post);
  }
}

TEST_CASE("random-walk cross-check agrees with pCN") {
  const SpectralBasis b(4);
  const GaussianReference ref(b, 0.3, cyl(1.0));
  const double q = 5.0;
  const EnergyFn e = [q](const Vec& x) {
    double s = 0.0;
    for (int k = 1; k < x.size(); ++k) s += x[k] * x[k];
    return 0.5 * q * s;
  };
  PcnConfig pc;
  pc.samples = 30000;
  pc.burn_in = 3000;
  pc.seed = 13;
  const PcnResult rp = gibbs_sample(ref, e, 1.0, pc);
  pc.seed = 14;
  const PcnResult rr = rwm_sample(ref, e, 1.0, pc);
  CHECK(rr.acceptance_rate > 0.05);
  CHECK_FALSE(rr.tuning_failure);
  for (int k = 1; k < 4; ++k) {
    const double tol = 5.0 * std::hypot(rp.mode_variance_se[k], rr.mode_variance_se[k]) +
                       0.02 * rp.mode_variance[k];
    CHECK(std::abs(rp.mode_variance[k] - rr.mode_variance[k]) < tol);
  }

  const SpectralBasis wide(6);
  const GaussianReference refw(wide, 0.3, cyl(1.0));
  CHECK_THROWS_AS(rwm_sample(refw, e, 1.0, pc), ConfigError);
}

TEST_CASE("hard rejections keep the chain inside the positivity cone") {
  const SpectralBasis b(4);
  const GaussianReference ref(b, 0.3, cyl(1.0));
  PotentialSpec p2;
  p2.family = PotentialFamily::SingularP2;
  const EnergyFn e = gibbs_energy(b, p2);
  PcnConfig pc;
  pc.samples = 2000;
  pc.burn_in = 500;
  pc.seed = 21;
  const PcnResult r = gibbs_sample(ref, e, 0.3, pc);
  CHECK(r.acceptance_rate < 1.0);
  CHECK(r.acceptance_rate > 0.0);
  Vec full = Vec::Zero(4);
  full[0] = 0.3;
  for (long i = 0; i < r.samples.rows(); ++i) {
    full.tail(3) = r.samples.row(i).transpose();
    CHECK(b.to_grid(full).minCoeff() > 0.0);
  }
  // flat start at negative mass has infinite energy: nothing to correct from
  CHECK_THROWS_AS(gibbs_sample(ref, e, -0.5, pc), PreconditionError);
}

// ---------------------------------------------------------------------------
// measure convergence scan

TEST_CASE("measure scan decreases monotonically to the singular limit") {
  const SpectralBasis b(4);
  const GaussianReference ref(b, 0.5, cyl(1.0));
  PotentialSpec base;
  base.family = PotentialFamily::Regularized;

  std::vector<ScanObservable> psis;
  psis.push_back({"one", [](const Vec&) { return 1.0; }});
  psis.push_back({"tanhsq", [](const Vec& c) { return std::tanh(c[1] * c[1]); }});

  const std::vector<int> ns{1, 2, 5, 10, 50, 200};
  const ScanResult res = measure_convergence_scan(ref, base, 1.0, 1.0, ns, 3000, psis, 7);

  REQUIRE(res.rows.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(res.rows[i].n == ns[i]);

  CHECK(res.per_sample_monotone);
  CHECK(res.first_violation_sample == -1);
  for (int i = 0; i + 1 < 6; ++i) {
    CHECK(res.rows[i + 1].z <= res.rows[i].z + 1e-12);
    CHECK(res.rows[i + 1].psi[1] <= res.rows[i].psi[1] + 1e-12);
    CHECK(res.rows[i + 1].probe_minus_one <= res.rows[i].probe_minus_one);
  }
  CHECK(res.rows[0].z > res.rows[5].z);

  for (const ScanRow& row : res.rows) {
    CHECK(row.psi[0] == row.z);  // psi == 1 accumulates the weights themselves
    CHECK(row.psi[1] <= row.z + 1e-15);
    // V^n(1) = 2 for every level: r = 1 is above all thresholds 1/n
    CHECK(row.probe_plus_one == res.rows[0].probe_plus_one);
  }
  CHECK(res.rows[0].probe_plus_one == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  // level 1 extension at r = -1: V = 2 + 0 (1-1/1^2)(-2) + (2/2)(-2)^2 = 6
  CHECK(res.rows[0].probe_minus_one == doctest::Approx(std::exp(-6.0)).epsilon(1e-12));
  CHECK(res.rows[5].probe_minus_one < res.rows[0].probe_minus_one);

  CHECK(res.z_limit <= res.rows[5].z + 1e-12);
  CHECK(res.z_limit > 0.0);
  REQUIRE(res.limit_gap.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(res.limit_gap[i] >= 0.0);
  for (int i = 0; i + 1 < 6; ++i) CHECK(res.limit_gap[i + 1] <= res.limit_gap[i] + 1e-12);
  CHECK(std::isfinite(res.gap_trend.slope));
  CHECK(res.gap_trend.slope < 0.0);

  PotentialSpec poly;
  poly.family = PotentialFamily::PolynomialTest;
  CHECK_THROWS_AS(measure_convergence_scan(ref, poly, 1.0, 1.0, ns, 100, psis, 7),
                  ConfigError);
  CHECK_THROWS_AS(measure_convergence_scan(ref, base, 1.0, 1.0, {5, 2}, 100, psis, 7),
                  ConfigError);
  CHECK_THROWS_AS(measure_convergence_scan(ref, base, 1.0, 1.0, {}, 100, psis, 7),
                  ConfigError);
}

// ---------------------------------------------------------------------------
// assumption checkers

TEST_CASE("checker on the exactly solvable linear fixture") {
  const SpectralBasis b(8);
  const NoiseSpec spec = cyl(0.5);
  const OperatorFixture fx = linear_fixture(b, 0.15, spec);
  const AssumptionReport rep = check_assumptions(b, fx, 2000, 3);

  CHECK(rep.pairing == "l2");
  CHECK(rep.samples == 2001);  // designed e1 probe rides along
  CHECK(rep.monotonicity_violations == 0);
  // the designed mass pair attains the bound: A annihilates constants
  CHECK(rep.fitted_c == 0.0);
  CHECK(rep.worst_bracket == 0.0);
  // strict dissipativity is sharp on e_1
  CHECK(std::abs(rep.fitted_c2 - 2.0 * 0.15 * b.lambda(1) * b.lambda(1)) <= 1e-8);
  CHECK(rep.fitted_c2_v > 0.0);
  NoiseGenerator gen(b, spec, 0, 0);
  CHECK(rep.f_const == doctest::Approx(gen.trace()).epsilon(1e-12));
  CHECK(rep.fitted_c3 > 0.0);
  CHECK(std::isfinite(rep.fitted_c3));
  // A is linear, so the secant modulus halves exactly under refinement
  CHECK(rep.hemi_ratio == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("checker recovers the affine energy identity on a diagonal operator") {
  const SpectralBasis b(6);
  OperatorFixture fx;
  fx.name = "diagonal_probe";
  fx.pairing = OperatorFixture::Pairing::L2;
  fx.A = [](const Vec& c) {
    Vec f = c;
    f[0] = 0.0;
    return Vec(-1.5 * f);
  };
  fx.hs_diff = [](const Vec&, const Vec&) { return 0.0; };
  fx.hs_norm = [](const Vec&) { return 0.7; };
  fx.sample = [](CounterRng& rng) {
    Vec c(6);
    for (int k = 0; k < 6; ++k) c[k] = rng.normal() / (1.0 + k);
    return c;
  };
  const AssumptionReport rep = check_assumptions(b, fx, 300, 5);

  CHECK(rep.monotonicity_violations == 0);
  CHECK(rep.fitted_c < 0.0);  // brackets are -3 ||du_f||^2 < 0
  CHECK(rep.fitted_c2 == doctest::Approx(3.0).epsilon(1e-12));
  // -2<Au,u> + ||B||^2 = -3 ||u_f||^2 + 0.7 exactly: the LS fit is sharp
  CHECK(rep.fitted_c1 == doctest::Approx(-3.0).epsilon(1e-9));
  CHECK(rep.fitted_f == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(rep.f_const == 0.7);
  CHECK(rep.fitted_c3 > 0.0);
  CHECK(rep.fitted_c3 < 1.5 + 1e-9);
  CHECK(rep.hemi_ratio == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("checker accepts the regularized drift") {
  const SpectralBasis b(8);
  const Model model = regularized_model(b, 10, 0.1);
  const NoiseSpec spec = cyl(0.5);
  const OperatorFixture fx = regularized_fixture(model, spec);
  const AssumptionReport rep = check_assumptions(b, fx, 2000, 11);

  CHECK(rep.pairing == "hminus1");
  CHECK(rep.monotonicity_violations == 0);
  CHECK(rep.fitted_c < -1.0);  // strictly dissipative, rate >= 2 alpha lambda_1^2
  CHECK(rep.f_const == doctest::Approx(0.25 * 7.0).epsilon(1e-12));  // sum w_k^2
  CHECK(rep.fitted_c2 > 0.0);

  const Model p2 = [&] {
    PotentialSpec p;
    p.family = PotentialFamily::SingularP2;
    p.alpha = 0.1;
    return Model(b, p, MobilitySpec{});
  }();
  CHECK_THROWS_AS(regularized_fixture(p2, spec), ConfigError);
}

TEST_CASE("checker flags the un-floored multiplicative amplitude") {
  const SpectralBasis b(8);
  const Model model = regularized_model(b, 10, 0.1);
  const OperatorFixture fx = unfloored_noise_fixture(model, cyl(0.5));
  const AssumptionReport rep = check_assumptions(b, fx, 400, 13);

  CHECK(rep.pairing == "hminus1");
  // the designed near-vacuum pairs break any uniform Lipschitz constant
  CHECK(rep.monotonicity_violations >= 1);
  CHECK(rep.fitted_c > 100.0);
}

// ---------------------------------------------------------------------------
// coupled trajectories

TEST_CASE("shared-noise contraction is exactly geometric for the quadratic model") {
  const SpectralBasis b(2);
  const Model model = quad_model(b, 2.0, 0.05);
  StepperConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_end = 0.4;
  cfg.floor = 0.0;
  cfg.penalty = 0.0;
  const Field f1 = b.field_from_coeffs((Vec(2) << 1.0, 0.2).finished());
  const Field f2 = b.field_from_coeffs((Vec(2) << 1.0, -0.1).finished());
  const ContractionResult res =
      contraction_experiment(model, cfg, cyl(0.1), 17, f1, f2, 1);

  const double lam = b.lambda(1);
  const double rho = (1.0 - 1e-3 * 0.5 * 2.0 * lam) / (1.0 + 1e-3 * 0.05 * lam * lam);
  CHECK(res.initial == doctest::Approx(0.09 / lam).epsilon(1e-12));
  CHECK(res.final == doctest::Approx(res.initial * std::pow(rho, 800)).epsilon(1e-9));
  CHECK(res.max_upward == 0.0);
  REQUIRE(res.t.size() == 401);
  CHECK(res.d.front() == res.initial);
  CHECK(res.d.back() == res.final);
  CHECK(res.t.back() == doctest::Approx(0.4).epsilon(1e-12));

  const ContractionResult same =
      contraction_experiment(model, cfg, cyl(0.1), 17, f1, f1, 50);
  for (double d : same.d) CHECK(d == 0.0);
  CHECK(same.max_upward == 0.0);

  NoiseSpec mult = cyl(0.1);
  mult.amplitude = NoiseAmplitude::MultiplicativeFloored;
  CHECK_THROWS_AS(contraction_experiment(model, cfg, mult, 17, f1, f2, 1),
                  PreconditionError);
  const Field heavy = b.field_from_coeffs((Vec(2) << 1.1, 0.0).finished());
  CHECK_THROWS_AS(contraction_experiment(model, cfg, cyl(0.1), 17, f1, heavy, 1),
                  PreconditionError);
}

TEST_CASE("mixing gap decays at the contraction rate") {
  const SpectralBasis b(2);
  const Model model = quad_model(b, 2.0, 0.05);
  StepperConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_end = 0.2;
  cfg.floor = 0.0;
  cfg.penalty = 0.0;
  const Field f1 = b.field_from_coeffs((Vec(2) << 1.0, 0.3).finished());
  const Field f2 = b.field_from_coeffs((Vec(2) << 1.0, 0.0).finished());
  const auto phi = [](const Field& f) { return f.coeffs[1]; };

  const MixingResult res = mixing_diagnostic(model, cfg, cyl(0.1), phi, f1, f2, 3, 10, 19);
  const double lam = b.lambda(1);
  const double rho = (1.0 - 1e-3 * lam) / (1.0 + 1e-3 * 0.05 * lam * lam);
  CHECK(res.pairs == 3);
  REQUIRE(res.gap.size() == 21);
  CHECK(res.gap.front() == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(res.gap.back() == doctest::Approx(0.3 * std::pow(rho, 200)).epsilon(1e-9));
  CHECK(res.fitted_rate == doctest::Approx(-std::log(rho) / 1e-3).epsilon(1e-9));

  // scheduling cannot leak into the estimate: streams are keyed by pair index
  const MixingResult par =
      mixing_diagnostic(model, cfg, cyl(0.1), phi, f1, f2, 3, 10, 19, 2);
  CHECK(par.fitted_rate == res.fitted_rate);
  for (std::size_t i = 0; i < res.gap.size(); ++i) CHECK(par.gap[i] == res.gap[i]);

  CHECK_THROWS_AS(mixing_diagnostic(model, cfg, cyl(0.1), phi, f1, f2, 0, 10, 19),
                  ConfigError);
}

// ---------------------------------------------------------------------------
// ensemble statistics

TEST_CASE("a priori bound: envelope growth and refinement coupling") {
  const SpectralBasis b(8);
  const Model model = quad_model(b, 0.0, 0.2);
  StepperConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_end = 1.0;
  cfg.floor = 0.0;
  cfg.penalty = 0.0;
  Vec c0 = Vec::Zero(8);
  c0[0] = 1.0;
  const Field init = b.field_from_coeffs(c0);
  const std::vector<double> horizons{0.25, 0.5, 1.0};

  const AprioriResult res =
      apriori_bound_experiment(model, cfg, cyl(0.5), init, horizons, 6, 1, 23);
  REQUIRE(res.sup_mean.size() == 3);
  CHECK(res.sup_mean[0] >= 1.0);  // the initial state is part of the sup
  CHECK(res.sup_mean[1] >= res.sup_mean[0]);
  CHECK(res.sup_mean[2] >= res.sup_mean[1]);
  CHECK(res.envelope.slope > 0.0);

  // halved dt with the doubled-substep driver rides the same Brownian path
  StepperConfig fine = cfg;
  fine.dt = 5e-4;
  const AprioriResult refd =
      apriori_bound_experiment(model, fine, cyl(0.5), init, horizons, 6, 1, 23);
  const AprioriResult coupled =
      apriori_bound_experiment(model, cfg, cyl(0.5), init, horizons, 6, 2, 23);
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(coupled.sup_mean[i] - refd.sup_mean[i]) < 0.05 * refd.sup_mean[i]);

  CHECK_THROWS_AS(apriori_bound_experiment(model, cfg, cyl(0.5), init, {}, 6, 1, 23),
                  ConfigError);
  CHECK_THROWS_AS(
      apriori_bound_experiment(model, cfg, cyl(0.5), init, {2.0, 1.0}, 6, 1, 23),
      ConfigError);
  CHECK_THROWS_AS(
      apriori_bound_experiment(model, cfg, cyl(0.5), init, {1e-9}, 6, 1, 23),
      ConfigError);
  CHECK_THROWS_AS(
      apriori_bound_experiment(model, cfg, cyl(0.5), init, horizons, 0, 1, 23),
      ConfigError);
}

TEST_CASE("mode-variance ensemble: exact mass column and OU spectrum") {
  const SpectralBasis b(4);
  const Model model = quad_model(b, 0.0, 0.25);
  StepperConfig cfg;
  cfg.dt = 2e-4;
  cfg.t_end = 5.0;
  cfg.floor = 0.0;
  cfg.penalty = 0.0;
  Vec c0 = Vec::Zero(4);
  c0[0] = 1.0;
  const Field init = b.field_from_coeffs(c0);

  const ModeVarianceResult res =
      mode_variance_experiment(model, cfg, cyl(1.0), init, 1.0, 6, 29);
  CHECK(res.samples == 6L * 20000L);
  CHECK(res.variance[0] == 1.0);  // the mass mode never moves
  CHECK(res.se[0] == 0.0);
  CHECK(res.se[1] > 0.0);
  // OU spectrum sigma^2 lambda_k / (2 alpha lambda_k^2) = 1/(2 alpha lambda_k)
  CHECK(res.variance[1] == doctest::Approx(1.0 / (0.5 * b.lambda(1))).epsilon(0.15));
  CHECK(res.variance[2] == doctest::Approx(1.0 / (0.5 * b.lambda(2))).epsilon(0.20));

  CHECK_THROWS_AS(mode_variance_experiment(model, cfg, cyl(1.0), init, 1.0, 1, 29),
                  ConfigError);
  CHECK_THROWS_AS(mode_variance_experiment(model, cfg, cyl(1.0), init, 6.0, 6, 29),
                  ConfigError);
}

// ---------------------------------------------------------------------------
// comparison and observables

TEST_CASE("invariant-measure comparison verdicts") {
  const auto est = [](const char* n, double v, double se, double neff) {
    ObservableEstimate o;
    o.name = n;
    o.value = v;
    o.se = se;
    o.n_eff = neff;
    return o;
  };

  const std::vector<ObservableEstimate> lhs{est("var_mode_1", 1.00, 0.01, 500),
                                            est("var_mode_2", 0.50, 0.02, 400),
                                            est("only_lhs", 1.0, 0.1, 100)};
  const std::vector<ObservableEstimate> bad{est("var_mode_1", 1.02, 0.012, 800),
                                            est("var_mode_2", 0.70, 0.02, 900)};
  const CompareReport r1 = compare_invariant_measures(lhs, bad);
  REQUIRE(r1.rows.size() == 2);  // the unmatched name is skipped
  CHECK(r1.rows[0].verdict == "pass");
  CHECK(r1.rows[1].verdict == "fail");
  CHECK(r1.rows[1].z > 3.0);
  CHECK(r1.overall == "fail");

  const std::vector<ObservableEstimate> good{est("var_mode_1", 1.02, 0.012, 800),
                                             est("var_mode_2", 0.52, 0.02, 900)};
  CHECK(compare_invariant_measures(lhs, good).overall == "pass");

  const std::vector<ObservableEstimate> thin{est("var_mode_1", 1.00, 0.01, 10),
                                             est("var_mode_2", 0.50, 0.02, 400)};
  const CompareReport r3 = compare_invariant_measures(thin, good);
  CHECK(r3.rows[0].verdict == "inconclusive");
  CHECK(r3.overall == "inconclusive");

  // exact agreement with zero SE passes; any gap with zero SE cannot
  const CompareReport r4 = compare_invariant_measures({est("a", 1.0, 0.0, 100)},
                                                      {est("a", 1.0, 0.0, 100)});
  CHECK(r4.rows[0].verdict == "pass");
  const CompareReport r5 = compare_invariant_measures({est("a", 1.0, 0.0, 100)},
                                                      {est("a", 2.0, 0.0, 100)});
  CHECK(r5.rows[0].verdict == "fail");
}

TEST_CASE("observable extraction from kept pCN draws") {
  PcnResult r;
  r.samples = Mat(8, 2);
  for (int i = 0; i < 2; ++i) {
    r.samples.row(4 * i + 0) << 1.0, 0.0;
    r.samples.row(4 * i + 1) << -1.0, 0.0;
    r.samples.row(4 * i + 2) << 2.0, 2.0;
    r.samples.row(4 * i + 3) << -2.0, -2.0;
  }
  const std::vector<ObservableEstimate> obs = pcn_observables(r, 2);
  REQUIRE(obs.size() == 4);
  CHECK(obs[0].name == "var_mode_1");
  CHECK(obs[1].name == "var_mode_2");
  CHECK(obs[2].name == "tanh_mode_1");
  CHECK(obs[3].name == "tanh_norm2");
  CHECK(obs[0].value == doctest::Approx(2.5).epsilon(1e-13));
  CHECK(obs[1].value == doctest::Approx(2.0).epsilon(1e-13));
  CHECK(std::abs(obs[2].value) < 1e-15);  // tanh is odd: the rows cancel
  CHECK(obs[3].value ==
        doctest::Approx(0.5 * (std::tanh(1.0) + std::tanh(8.0))).epsilon(1e-13));
  for (const auto& o : obs) CHECK(o.n_eff > 0.0);
  CHECK_THROWS_AS(pcn_observables(r, 3), ConfigError);
  CHECK_THROWS_AS(pcn_observables(r, 0), ConfigError);
}

TEST_CASE("dynamic observables: ergodic average and guards") {
  const SpectralBasis b(3);
  const Model model = quad_model(b, 0.0, 0.25);
  StepperConfig cfg;
  cfg.dt = 2e-4;
  cfg.t_end = 2.0;
  cfg.floor = 0.0;
  cfg.penalty = 0.0;
  Vec c0 = Vec::Zero(3);
  c0[0] = 1.0;
  const Field init = b.field_from_coeffs(c0);

  const std::vector<ObservableEstimate> obs =
      dynamic_observables(model, cfg, cyl(1.0), init, 0.5, 2, 1, 31);
  REQUIRE(obs.size() == 3);
  CHECK(obs[0].name == "var_mode_1");
  CHECK(obs[1].name == "tanh_mode_1");
  CHECK(obs[2].name == "tanh_norm2");
  CHECK(obs[0].value == doctest::Approx(1.0 / (0.5 * b.lambda(1))).epsilon(0.3));
  CHECK(obs[0].se > 0.0);
  CHECK(obs[0].n_eff > 10.0);

  CHECK_THROWS_AS(dynamic_observables(model, cfg, cyl(0.0), init, 0.5, 2, 1, 31),
                  ConfigError);
  CHECK_THROWS_AS(dynamic_observables(model, cfg, cyl(1.0), init, 0.5, 1, 1, 31),
                  ConfigError);
  CHECK_THROWS_AS(dynamic_observables(model, cfg, cyl(1.0), init, 0.5, 2, 3, 31),
                  ConfigError);
  CHECK_THROWS_AS(dynamic_observables(model, cfg, cyl(1.0), init, 2.5, 2, 1, 31),
                  ConfigError);
}

// ---------------------------------------------------------------------------
// drift equivalence

TEST_CASE("finite-difference forms of the mobility identity converge together") {
  const DriftEquivalenceResult res = drift_equivalence_scan({64, 128, 256});
  REQUIRE(res.grids.size() == 3);
  REQUIRE(res.ratio.size() == 2);
  CHECK(res.max_error[1] < res.max_error[0]);
  CHECK(res.max_error[2] < res.max_error[1]);
  for (double r : res.ratio) {
    CHECK(r > 3.2);  // second order: errors divide by ~4 per doubling
    CHECK(r < 4.8);
  }
  CHECK_THROWS_AS(drift_equivalence_scan({}), ConfigError);
  CHECK_THROWS_AS(drift_equivalence_scan({4}), ConfigError);
}
