#include "repton/config.hpp"

#include <cmath>
#include <initializer_list>

#include <json.hpp>

#include "repton/errors.hpp"
#include "repton/io.hpp"

namespace repton {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

void check_keys(const json& obj, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail("`" + ctx + "` must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed)
      if (it.key() == a) {
        ok = true;
        break;
      }
    if (!ok) fail("unknown key `" + it.key() + "` in `" + ctx + "`");
  }
}

double get_num(const json& o, const std::string& ctx, const char* key, double def) {
  if (!o.contains(key)) return def;
  const json& v = o.at(key);
  if (!v.is_number()) fail("`" + ctx + "." + key + "` must be a number");
  return v.get<double>();
}

long get_int(const json& o, const std::string& ctx, const char* key, long def) {
  if (!o.contains(key)) return def;
  const json& v = o.at(key);
  if (!v.is_number_integer()) fail("`" + ctx + "." + key + "` must be an integer");
  return v.get<long>();
}

std::uint64_t get_u64(const json& o, const std::string& ctx, const char* key,
                      std::uint64_t def) {
  if (!o.contains(key)) return def;
  const json& v = o.at(key);
  if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0)))
    fail("`" + ctx + "." + key + "` must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

bool get_bool(const json& o, const std::string& ctx, const char* key, bool def) {
  if (!o.contains(key)) return def;
  const json& v = o.at(key);
  if (!v.is_boolean()) fail("`" + ctx + "." + key + "` must be a boolean");
  return v.get<bool>();
}

std::string get_str(const json& o, const std::string& ctx, const char* key,
                    const std::string& def) {
  if (!o.contains(key)) return def;
  const json& v = o.at(key);
  if (!v.is_string()) fail("`" + ctx + "." + key + "` must be a string");
  return v.get<std::string>();
}

std::vector<double> get_num_list(const json& o, const std::string& ctx,
                                 const char* key, std::vector<double> def) {
  if (!o.contains(key)) return def;
  const json& v = o.at(key);
  if (!v.is_array()) fail("`" + ctx + "." + key + "` must be an array of numbers");
  std::vector<double> out;
  for (const json& e : v) {
    if (!e.is_number()) fail("`" + ctx + "." + key + "` must be an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<int> get_int_list(const json& o, const std::string& ctx, const char* key,
                              std::vector<int> def) {
  if (!o.contains(key)) return def;
  const json& v = o.at(key);
  if (!v.is_array()) fail("`" + ctx + "." + key + "` must be an array of integers");
  std::vector<int> out;
  for (const json& e : v) {
    if (!e.is_number_integer()) fail("`" + ctx + "." + key + "` must be an array of integers");
    out.push_back(e.get<int>());
  }
  return out;
}

PotentialFamily parse_family(const std::string& s) {
  if (s == "singular_p2") return PotentialFamily::SingularP2;
  if (s == "singular_p3") return PotentialFamily::SingularP3;
  if (s == "regularized") return PotentialFamily::Regularized;
  if (s == "polynomial_test") return PotentialFamily::PolynomialTest;
  fail("`model.family` must be one of singular_p2 | singular_p3 | regularized | polynomial_test");
}

const char* family_name(PotentialFamily f) {
  switch (f) {
    case PotentialFamily::SingularP2: return "singular_p2";
    case PotentialFamily::SingularP3: return "singular_p3";
    case PotentialFamily::Regularized: return "regularized";
    case PotentialFamily::PolynomialTest: return "polynomial_test";
  }
  fail("unreachable family");
}

PotentialSpec parse_model(const json& o) {
  check_keys(o, "model", {"family", "n", "alpha", "constant", "quad_coeff", "eps_eval"});
  PotentialSpec p;
  p.family = parse_family(get_str(o, "model", "family", "regularized"));
  p.n = static_cast<int>(get_int(o, "model", "n", p.n));
  if (p.n < 1) fail("`model.n` must be a positive integer");
  p.alpha = get_num(o, "model", "alpha", p.alpha);
  if (p.alpha < 0) fail("`model.alpha` must be a nonnegative number");
  p.constant = get_num(o, "model", "constant", p.constant);
  p.quad_coeff = get_num(o, "model", "quad_coeff", p.quad_coeff);
  p.eps_eval = get_num(o, "model", "eps_eval", p.eps_eval);
  if (p.eps_eval <= 0) fail("`model.eps_eval` must be positive");
  return p;
}

MobilitySpec parse_mobility(const json& o) {
  check_keys(o, "mobility", {"kind", "value", "floor"});
  MobilitySpec m;
  const std::string kind = get_str(o, "mobility", "kind", "constant");
  if (kind == "constant")
    m.kind = MobilitySpec::Kind::Constant;
  else if (kind == "inverse")
    m.kind = MobilitySpec::Kind::Inverse;
  else
    fail("`mobility.kind` must be constant | inverse");
  m.value = get_num(o, "mobility", "value", m.value);
  if (m.value < 0) fail("`mobility.value` must be nonnegative");
  m.floor = get_num(o, "mobility", "floor", m.floor);
  if (m.kind == MobilitySpec::Kind::Inverse && m.floor <= 0)
    fail("`mobility.floor` must be positive for the inverse mobility");
  return m;
}

NoiseSpec parse_noise(const json& o) {
  check_keys(o, "noise",
             {"kind", "modes", "q", "amplitude", "sigma", "floor", "conservative"});
  NoiseSpec n;
  const std::string kind = get_str(o, "noise", "kind", "cylindrical");
  if (kind == "scalar")
    n.kind = NoiseKind::Scalar;
  else if (kind == "cylindrical")
    n.kind = NoiseKind::Cylindrical;
  else if (kind == "q_diagonal")
    n.kind = NoiseKind::QDiagonal;
  else
    fail("`noise.kind` must be scalar | cylindrical | q_diagonal");
  n.modes = static_cast<int>(get_int(o, "noise", "modes", n.modes));
  n.q = get_num_list(o, "noise", "q", n.q);
  for (double q : n.q)
    if (q < 0) fail("`noise.q` entries must be nonnegative");
  const std::string amp = get_str(o, "noise", "amplitude", "additive");
  if (amp == "additive")
    n.amplitude = NoiseAmplitude::Additive;
  else if (amp == "multiplicative_floored")
    n.amplitude = NoiseAmplitude::MultiplicativeFloored;
  else
    fail("`noise.amplitude` must be additive | multiplicative_floored");
  n.sigma = get_num(o, "noise", "sigma", n.sigma);
  if (n.sigma < 0) fail("`noise.sigma` must be nonnegative");
  n.floor = get_num(o, "noise", "floor", n.floor);
  if (n.amplitude == NoiseAmplitude::MultiplicativeFloored && n.floor <= 0)
    fail("`noise.floor` must be positive for the multiplicative amplitude");
  n.conservative = get_bool(o, "noise", "conservative", n.conservative);
  return n;
}

StepperConfig parse_stepper(const json& o) {
  check_keys(o, "stepper",
             {"dt", "t_end", "scheme", "floor", "penalty", "record_every",
              "record_coeffs", "moving_boundary", "boundary_minus", "boundary_plus"});
  StepperConfig s;
  s.dt = get_num(o, "stepper", "dt", s.dt);
  if (s.dt <= 0) fail("`stepper.dt` must be positive");
  s.t_end = get_num(o, "stepper", "t_end", s.t_end);
  if (s.t_end < 0) fail("`stepper.t_end` must be nonnegative");
  const std::string scheme = get_str(o, "stepper", "scheme", "semi_implicit_alpha");
  if (scheme == "semi_implicit_alpha")
    s.scheme = Scheme::SemiImplicitAlpha;
  else if (scheme == "fully_explicit")
    s.scheme = Scheme::FullyExplicit;
  else
    fail("`stepper.scheme` must be semi_implicit_alpha | fully_explicit");
  s.floor = get_num(o, "stepper", "floor", s.floor);
  if (s.floor < 0) fail("`stepper.floor` must be nonnegative");
  s.penalty = get_num(o, "stepper", "penalty", s.penalty);
  if (s.penalty < 0) fail("`stepper.penalty` must be nonnegative");
  s.record_every = static_cast<int>(get_int(o, "stepper", "record_every", s.record_every));
  if (s.record_every < 1) fail("`stepper.record_every` must be >= 1");
  s.record_coeffs = get_bool(o, "stepper", "record_coeffs", s.record_coeffs);
  s.moving_boundary = get_bool(o, "stepper", "moving_boundary", s.moving_boundary);
  s.boundary_minus = get_num(o, "stepper", "boundary_minus", s.boundary_minus);
  s.boundary_plus = get_num(o, "stepper", "boundary_plus", s.boundary_plus);
  if (s.moving_boundary && s.boundary_minus >= s.boundary_plus)
    fail("`stepper.boundary_minus` must be below `stepper.boundary_plus`");
  return s;
}

InitialSpec parse_initial(const json& o, const std::string& ctx) {
  check_keys(o, ctx, {"kind", "value", "amplitude", "mode", "coeffs"});
  InitialSpec i;
  const std::string kind = get_str(o, ctx, "kind", "constant");
  if (kind == "constant")
    i.kind = InitialSpec::Kind::Constant;
  else if (kind == "cosine")
    i.kind = InitialSpec::Kind::Cosine;
  else if (kind == "coeffs")
    i.kind = InitialSpec::Kind::Coeffs;
  else
    fail("`" + ctx + ".kind` must be constant | cosine | coeffs");
  i.value = get_num(o, ctx, "value", i.value);
  i.amplitude = get_num(o, ctx, "amplitude", i.amplitude);
  i.mode = static_cast<int>(get_int(o, ctx, "mode", i.mode));
  if (i.mode < 1) fail("`" + ctx + ".mode` must be >= 1");
  i.coeffs = get_num_list(o, ctx, "coeffs", i.coeffs);
  if (i.kind == InitialSpec::Kind::Coeffs && i.coeffs.empty())
    fail("`" + ctx + ".coeffs` must be provided for kind coeffs");
  return i;
}

AnalysisSpec parse_analysis(const json& o) {
  check_keys(o, "analysis",
             {"samples", "burn_in", "thin", "beta", "adapt_beta", "n_traj",
              "burn_time", "observable_modes", "levels", "fixture", "check_samples",
              "pairs", "record_every", "horizons", "substeps", "energy_scale"});
  AnalysisSpec a;
  a.samples = get_int(o, "analysis", "samples", a.samples);
  if (a.samples < 1) fail("`analysis.samples` must be >= 1");
  a.burn_in = get_int(o, "analysis", "burn_in", a.burn_in);
  if (a.burn_in < 0) fail("`analysis.burn_in` must be nonnegative");
  a.thin = static_cast<int>(get_int(o, "analysis", "thin", a.thin));
  if (a.thin < 1) fail("`analysis.thin` must be >= 1");
  a.beta = get_num(o, "analysis", "beta", a.beta);
  if (!(a.beta > 0) || a.beta > 1) fail("`analysis.beta` must be in (0, 1]");
  a.adapt_beta = get_bool(o, "analysis", "adapt_beta", a.adapt_beta);
  a.n_traj = static_cast<int>(get_int(o, "analysis", "n_traj", a.n_traj));
  if (a.n_traj < 1) fail("`analysis.n_traj` must be >= 1");
  a.burn_time = get_num(o, "analysis", "burn_time", a.burn_time);
  if (a.burn_time < 0) fail("`analysis.burn_time` must be nonnegative");
  a.observable_modes =
      static_cast<int>(get_int(o, "analysis", "observable_modes", a.observable_modes));
  if (a.observable_modes < 1) fail("`analysis.observable_modes` must be >= 1");
  a.levels = get_int_list(o, "analysis", "levels", a.levels);
  a.fixture = get_str(o, "analysis", "fixture", a.fixture);
  if (a.fixture != "linear" && a.fixture != "regularized" && a.fixture != "unfloored")
    fail("`analysis.fixture` must be linear | regularized | unfloored");
  a.check_samples = static_cast<int>(get_int(o, "analysis", "check_samples", a.check_samples));
  if (a.check_samples < 4) fail("`analysis.check_samples` must be >= 4");
  a.pairs = static_cast<int>(get_int(o, "analysis", "pairs", a.pairs));
  if (a.pairs < 1) fail("`analysis.pairs` must be >= 1");
  a.record_every = static_cast<int>(get_int(o, "analysis", "record_every", a.record_every));
  if (a.record_every < 1) fail("`analysis.record_every` must be >= 1");
  a.horizons = get_num_list(o, "analysis", "horizons", a.horizons);
  a.substeps = static_cast<int>(get_int(o, "analysis", "substeps", a.substeps));
  if (a.substeps < 1) fail("`analysis.substeps` must be >= 1");
  a.energy_scale = get_num(o, "analysis", "energy_scale", a.energy_scale);
  if (a.energy_scale <= 0) fail("`analysis.energy_scale` must be positive");
  return a;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root, "config",
             {"kind", "space", "model", "mobility", "noise", "stepper", "initial",
              "initial2", "analysis", "seed", "threads", "output_dir"});
  ExperimentConfig c;
  c.kind = get_str(root, "config", "kind", c.kind);
  if (c.kind != "simulate" && c.kind != "contract" && c.kind != "gibbs" &&
      c.kind != "scan" && c.kind != "check")
    fail("`kind` must be simulate | contract | gibbs | scan | check");
  if (root.contains("space")) {
    const json& sp = root.at("space");
    check_keys(sp, "space", {"modes", "grid"});
    c.modes = static_cast<int>(get_int(sp, "space", "modes", c.modes));
    c.grid = static_cast<int>(get_int(sp, "space", "grid", c.grid));
  }
  if (c.modes < 1) fail("`space.modes` must be >= 1");
  if (c.grid != -1 && c.grid < c.modes)
    fail("`space.grid` must be -1 or at least `space.modes`");
  if (root.contains("model")) c.potential = parse_model(root.at("model"));
  if (root.contains("mobility")) c.mobility = parse_mobility(root.at("mobility"));
  if (root.contains("noise")) c.noise = parse_noise(root.at("noise"));
  if (root.contains("stepper")) c.stepper = parse_stepper(root.at("stepper"));
  if (root.contains("initial")) c.initial = parse_initial(root.at("initial"), "initial");
  if (root.contains("initial2"))
    c.initial2 = parse_initial(root.at("initial2"), "initial2");
  if (root.contains("analysis")) c.analysis = parse_analysis(root.at("analysis"));
  c.seed = get_u64(root, "config", "seed", c.seed);
  c.threads = static_cast<int>(get_int(root, "config", "threads", c.threads));
  if (c.threads < 0) fail("`threads` must be nonnegative");
  c.output_dir = get_str(root, "config", "output_dir", c.output_dir);
  if (c.output_dir.empty()) fail("`output_dir` must not be empty");
  return c;
}

ExperimentConfig parse_config_file(const std::string& path) {
  return parse_config_text(read_text_file(path));
}

namespace {

json initial_json(const InitialSpec& i) {
  const char* kind = i.kind == InitialSpec::Kind::Constant ? "constant"
                     : i.kind == InitialSpec::Kind::Cosine ? "cosine"
                                                           : "coeffs";
  return json{{"kind", kind},
              {"value", i.value},
              {"amplitude", i.amplitude},
              {"mode", i.mode},
              {"coeffs", i.coeffs}};
}

}  // namespace

std::string canonical_json(const ExperimentConfig& c) {
  json root;
  root["kind"] = c.kind;
  root["space"] = {{"modes", c.modes}, {"grid", c.grid}};
  root["model"] = {{"family", family_name(c.potential.family)},
                   {"n", c.potential.n},
                   {"alpha", c.potential.alpha},
                   {"constant", c.potential.constant},
                   {"quad_coeff", c.potential.quad_coeff},
                   {"eps_eval", c.potential.eps_eval}};
  root["mobility"] = {
      {"kind", c.mobility.kind == MobilitySpec::Kind::Constant ? "constant" : "inverse"},
      {"value", c.mobility.value},
      {"floor", c.mobility.floor}};
  root["noise"] = {{"kind", c.noise.kind == NoiseKind::Scalar        ? "scalar"
                            : c.noise.kind == NoiseKind::Cylindrical ? "cylindrical"
                                                                     : "q_diagonal"},
                   {"modes", c.noise.modes},
                   {"q", c.noise.q},
                   {"amplitude", c.noise.amplitude == NoiseAmplitude::Additive
                                     ? "additive"
                                     : "multiplicative_floored"},
                   {"sigma", c.noise.sigma},
                   {"floor", c.noise.floor},
                   {"conservative", c.noise.conservative}};
  root["stepper"] = {
      {"dt", c.stepper.dt},
      {"t_end", c.stepper.t_end},
      {"scheme", c.stepper.scheme == Scheme::SemiImplicitAlpha ? "semi_implicit_alpha"
                                                               : "fully_explicit"},
      {"floor", c.stepper.floor},
      {"penalty", c.stepper.penalty},
      {"record_every", c.stepper.record_every},
      {"record_coeffs", c.stepper.record_coeffs},
      {"moving_boundary", c.stepper.moving_boundary},
      {"boundary_minus", c.stepper.boundary_minus},
      {"boundary_plus", c.stepper.boundary_plus}};
  root["initial"] = initial_json(c.initial);
  root["initial2"] = initial_json(c.initial2);
  root["analysis"] = {{"samples", c.analysis.samples},
                      {"burn_in", c.analysis.burn_in},
                      {"thin", c.analysis.thin},
                      {"beta", c.analysis.beta},
                      {"adapt_beta", c.analysis.adapt_beta},
                      {"n_traj", c.analysis.n_traj},
                      {"burn_time", c.analysis.burn_time},
                      {"observable_modes", c.analysis.observable_modes},
                      {"levels", c.analysis.levels},
                      {"fixture", c.analysis.fixture},
                      {"check_samples", c.analysis.check_samples},
                      {"pairs", c.analysis.pairs},
                      {"record_every", c.analysis.record_every},
                      {"horizons", c.analysis.horizons},
                      {"substeps", c.analysis.substeps},
                      {"energy_scale", c.analysis.energy_scale}};
  root["seed"] = c.seed;
  // threads and output_dir are execution details: they never change the
  // result, so they stay out of the canonical form and the config hash
  return root.dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& c) {
  return sha256_hex(canonical_json(c));
}

Field build_initial(const SpectralBasis& basis, const InitialSpec& init, double floor) {
  const int G = basis.grid_points();
  const int K = basis.modes();
  Vec g(G);
  switch (init.kind) {
    case InitialSpec::Kind::Constant:
      g.setConstant(init.value);
      break;
    case InitialSpec::Kind::Cosine:
      for (int j = 0; j < G; ++j)
        g[j] = init.value + init.amplitude * std::cos(init.mode * M_PI * basis.nodes()[j]);
      break;
    case InitialSpec::Kind::Coeffs: {
      if (static_cast<int>(init.coeffs.size()) > K)
        throw ConfigError("`initial.coeffs` has more entries than `space.modes`");
      Vec c = Vec::Zero(K);
      for (std::size_t k = 0; k < init.coeffs.size(); ++k)
        c[static_cast<int>(k)] = init.coeffs[k];
      g = basis.to_grid(c);
      break;
    }
  }
  return prepare_initial(basis, g, floor);
}

}  // namespace repton
