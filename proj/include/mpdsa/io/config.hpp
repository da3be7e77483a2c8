#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "mpdsa/experiments.hpp"
#include "mpdsa/io/hash.hpp"

namespace mpdsa::io {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Reads one JSON object, remembering which keys were consumed so leftovers can be rejected.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) throw ConfigError(where_ + ": missing key '" + key + "'");
    return j_.at(key);
  }

  template <class T>
  T req(const std::string& key) {
    return convert<T>(raw(key), key);
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    return j_.contains(key) ? convert<T>(j_.at(key), key) : fallback;
  }

  template <class T>
  std::optional<T> opt(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return convert<T>(j_.at(key), key);
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
  }

 private:
  template <class T>
  T convert(const json& v, const std::string& key) const {
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError(where_ + "." + key + ": expected a number");
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer()) throw ConfigError(where_ + "." + key + ": expected an integer");
      if (std::is_unsigned_v<T> && v.get<long long>() < 0 && !v.is_number_unsigned())
        throw ConfigError(where_ + "." + key + ": expected a nonnegative integer");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where_ + "." + key + ": expected a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where_ + "." + key + ": expected a string");
    }
    try {
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Experiment blocks

struct SpectrumExperiment {
  Configuration center;
  std::optional<int> L;
};

struct PredicatesExperiment {
  Configuration center;
  std::optional<int> L;
  std::vector<double> energies{0.0};
  std::optional<double> m;
  int ell = 1;
  SubBallPolicy cnr;
};

struct CenterMix {
  double pi_fraction = 0.2;
  std::pair<int, int> pi_range{129, 200};
  std::pair<int, int> fi_range{1, 32};
  uint64_t seed = 1234;
};

struct AuditExperiment {
  std::optional<Configuration> center;
  std::optional<CenterMix> mix;  // 1D two-particle centers (s, 0) drawn per trial
  std::vector<int> ladder;
  int k_max = 1;
  std::optional<double> m;
  size_t matrix_cap = 2500;
  AuditOptions audit;
};

struct ProbabilityExperiment {
  EventKind event = EventKind::EmS;
  Configuration center;
  std::optional<int> L;
  double E = 0.0;
  std::optional<double> m;
  int ell = 1;
  std::optional<Configuration> partner;
};

struct EvcExperiment {
  Configuration center_x, center_y;
  int L = 0;
  std::vector<double> s_grid;
  W3Constants constants;
};

struct DynamicsExperiment {
  Configuration center;
  std::optional<int> L;
  EnergyWindow window;
  size_t t_points = 10000;
  double t_min = 1e-2, t_max = 1e3;
  size_t max_pairs = 64;  // x = center, y over the ball in canonical order
};

struct DlExperiment {
  Configuration domain_center;
  int domain_radius = 8;
  Configuration x, y;
  int L = 2;
  std::optional<double> m;
  EnergyWindow window;
};

using ExperimentParams = std::variant<SpectrumExperiment, PredicatesExperiment, AuditExperiment, ProbabilityExperiment,
                                      EvcExperiment, DynamicsExperiment, DlExperiment>;

struct ExperimentConfig {
  std::string kind;
  std::string name;
  std::optional<size_t> trials;
  ExperimentParams params;
};

struct SweepConfig {
  std::string axis;
  std::vector<double> values;
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  TrialSetup setup;
  BoundSchedule schedule;
  size_t trials = 30;
  uint64_t seed = 1;
  unsigned threads = 1;
  std::optional<std::string> output_dir;
  std::vector<ExperimentConfig> experiments;
  std::optional<SweepConfig> sweep;
  std::string hash;  // sha256 of the config text
};

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> k{"spectrum", "predicates", "audit", "probability", "evc", "dynamics", "dl"};
  return k;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline Configuration parse_configuration(const json& j, const LatticeGeometry& g, int N, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": a configuration is a nonempty list of sites");
  std::vector<Site> sites;
  for (const auto& s : j) {
    Site site;
    if (s.is_number_integer()) site = {s.get<int>()};
    else if (s.is_array() && std::all_of(s.begin(), s.end(), [](const json& v) { return v.is_number_integer(); }))
      site = s.get<Site>();
    else throw ConfigError(where + ": a site is an integer or a list of integers");
    if (static_cast<int>(site.size()) != g.coords()) throw ConfigError(where + ": site has the wrong number of coordinates");
    if (!g.contains(site)) throw ConfigError(where + ": site outside the geometry");
    sites.push_back(std::move(site));
  }
  if (static_cast<int>(sites.size()) > N) throw ConfigError(where + ": more particles than N");
  try {
    return Configuration::from_sites(sites);
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline LatticeGeometry parse_geometry(const json& j) {
  ObjectReader r(j, "geometry");
  const auto kind = r.req<std::string>("kind");
  LatticeGeometry g = LatticeGeometry::lattice(1);
  try {
    if (kind == "lattice") {
      g = LatticeGeometry::lattice(r.get<int>("d", 1));
    } else if (kind == "path") {
      const int n = r.req<int>("vertices");
      if (n < 1) throw ConfigError("geometry.vertices must be positive");
      std::vector<std::vector<int>> adj(static_cast<size_t>(n));
      for (int v = 0; v + 1 < n; ++v) {
        adj[static_cast<size_t>(v)].push_back(v + 1);
        adj[static_cast<size_t>(v + 1)].push_back(v);
      }
      g = LatticeGeometry::graph(std::move(adj), 1);
    } else if (kind == "graph") {
      g = LatticeGeometry::graph(r.req<std::vector<std::vector<int>>>("adjacency"), r.get<int>("growth_dim", 1));
    } else {
      throw ConfigError("geometry.kind must be lattice, path or graph");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("geometry: ") + e.what());
  }
  r.finish();
  return g;
}

inline Marginal parse_marginal(const std::string& s) {
  if (s == "uniform") return Marginal::uniform;
  if (s == "gaussian") return Marginal::gaussian;
  throw ConfigError("disorder.marginal must be uniform or gaussian");
}

inline FieldModel parse_disorder(const json& j) {
  ObjectReader r(j, "disorder");
  const auto kind = r.get<std::string>("kind", "iid");
  const auto marginal = parse_marginal(r.get<std::string>("marginal", "uniform"));
  FieldModel f;
  try {
    if (kind == "iid") f = FieldModel::iid(marginal);
    else if (kind == "moving_average") f = FieldModel::moving_average(marginal, r.req<std::vector<double>>("kernel"));
    else throw ConfigError("disorder.kind must be iid or moving_average");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("disorder: ") + e.what());
  }
  r.finish();
  return f;
}

inline InteractionModel parse_interaction(const json& j) {
  ObjectReader r(j, "interaction");
  const auto kind = r.get<std::string>("kind", "none");
  InteractionModel m;
  try {
    if (kind == "none") m = InteractionModel::none();
    else if (kind == "step") m = InteractionModel::step(r.req<double>("u"), r.req<int>("r0"));
    else if (kind == "subexponential")
      m = InteractionModel::subexponential(r.req<double>("C"), r.req<double>("c"), r.req<double>("theta"));
    else if (kind == "table") {
      std::map<int, double> t;
      const auto& vals = r.raw("values");
      if (!vals.is_object()) throw ConfigError("interaction.values must map distances to values");
      for (const auto& [k, v] : vals.items()) {
        size_t pos = 0;
        const int d = std::stoi(k, &pos);
        if (pos != k.size() || d < 0 || !v.is_number()) throw ConfigError("interaction.values: bad entry '" + k + "'");
        t[d] = v.get<double>();
      }
      m = InteractionModel::from_table(std::move(t));
    } else {
      throw ConfigError("interaction.kind must be none, step, subexponential or table");
    }
    if (auto R = r.opt<int>("truncation")) m = truncate_interaction(m, *R);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("interaction: ") + e.what());
  }
  r.finish();
  return m;
}

inline ScalingParams parse_params(const json& j, int N, int d) {
  ObjectReader r(j, "params");
  const auto regime = r.get<std::string>("regime", "finite_range");
  ScalingParams p;
  if (regime == "finite_range") p = ScalingParams::defaults(N, d);
  else if (regime == "infinite_range") p = ScalingParams::infinite_range(N, d, r.get<double>("delta", 0.05));
  else throw ConfigError("params.regime must be finite_range or infinite_range");
  p.alpha = r.get("alpha", p.alpha);
  p.beta = r.get("beta", p.beta);
  p.beta_prime = r.get("beta_prime", p.beta_prime);
  p.tau = r.get("tau", p.tau);
  p.varrho = r.get("varrho", p.varrho);
  p.delta = r.get("delta", p.delta);
  p.theta = r.get("theta", p.theta);
  p.m = r.get("m", p.m);
  p.L0 = r.get("L0", p.L0);
  const auto dc = r.get<std::string>("distant_constant", "eleven_n");
  if (dc == "eleven_n") p.distant_constant = DistantConstant::eleven_n;
  else if (dc == "two_a_plus_three") p.distant_constant = DistantConstant::two_a_plus_three;
  else throw ConfigError("params.distant_constant must be eleven_n or two_a_plus_three");
  r.finish();
  if (p.L0 <= 2) throw ConfigError("params.L0 must exceed 2");
  if (!(p.m > 0)) throw ConfigError("params.m must be positive");
  if (!(p.alpha > 1)) throw ConfigError("params.alpha must exceed 1");
  return p;
}

inline EnergyWindow parse_window(ObjectReader& r) {
  EnergyWindow w;
  if (r.has("window")) {
    const auto& a = r.raw("window");
    if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number())
      throw ConfigError(r.path("window") + ": expected [lo, hi]");
    w = {a[0].get<double>(), a[1].get<double>()};
    if (!(w.lo <= w.hi)) throw ConfigError(r.path("window") + ": lo exceeds hi");
  }
  return w;
}

inline std::optional<double> positive_opt(ObjectReader& r, const std::string& key) {
  auto v = r.opt<double>(key);
  if (v && !(*v > 0)) throw ConfigError(r.path(key) + " must be positive");
  return v;
}

inline std::optional<int> radius_opt(ObjectReader& r, const std::string& key) {
  auto v = r.opt<int>(key);
  if (v && *v < 0) throw ConfigError(r.path(key) + " must be nonnegative");
  return v;
}

inline ExperimentConfig parse_experiment(const json& j, size_t index, const LatticeGeometry& g, int N,
                                         const ScalingParams& p) {
  const std::string where = "experiments[" + std::to_string(index) + "]";
  ObjectReader r(j, where);
  ExperimentConfig e;
  e.kind = r.req<std::string>("kind");
  e.name = r.get<std::string>("name", e.kind);
  if (e.name.empty() || e.name.find_first_of("/\\ .") != std::string::npos)
    throw ConfigError(where + ".name must be a plain file stem");
  e.trials = r.opt<size_t>("trials");
  auto config = [&](const std::string& key) { return parse_configuration(r.raw(key), g, N, r.path(key)); };
  if (e.kind == "spectrum") {
    e.params = SpectrumExperiment{config("center"), radius_opt(r, "L")};
  } else if (e.kind == "predicates") {
    PredicatesExperiment x;
    x.center = config("center");
    x.L = radius_opt(r, "L");
    x.energies = r.get("energies", x.energies);
    if (x.energies.empty()) throw ConfigError(where + ".energies is empty");
    x.m = positive_opt(r, "m");
    x.ell = r.get("ell", x.ell);
    x.cnr.radii = r.get("cnr_radii", x.cnr.radii);
    x.cnr.stride = r.get("cnr_stride", x.cnr.stride);
    e.params = std::move(x);
  } else if (e.kind == "audit") {
    AuditExperiment x;
    if (r.has("center")) x.center = config("center");
    if (r.has("center_mix")) {
      ObjectReader m(r.raw("center_mix"), r.path("center_mix"));
      CenterMix c;
      c.pi_fraction = m.get("pi_fraction", c.pi_fraction);
      c.pi_range = m.get("pi_range", c.pi_range);
      c.fi_range = m.get("fi_range", c.fi_range);
      c.seed = m.get("seed", c.seed);
      m.finish();
      if (!(c.pi_fraction >= 0 && c.pi_fraction <= 1)) throw ConfigError(where + ".center_mix.pi_fraction must lie in [0, 1]");
      for (auto [lo, hi] : {c.pi_range, c.fi_range})
        if (lo < 1 || hi < lo) throw ConfigError(where + ".center_mix ranges must satisfy 1 <= lo <= hi");
      if (!g.is_lattice() || g.d() != 1 || N != 2) throw ConfigError(where + ".center_mix needs N = 2 on the 1D lattice");
      x.mix = c;
    }
    if (x.center.has_value() == x.mix.has_value()) throw ConfigError(where + ": give exactly one of center, center_mix");
    x.ladder = r.get("ladder", x.ladder);
    x.k_max = r.get("k_max", x.k_max);
    if (x.k_max < 0) throw ConfigError(where + ".k_max must be nonnegative");
    if (!x.ladder.empty() && static_cast<int>(x.ladder.size()) < x.k_max + 1)
      throw ConfigError(where + ".ladder must have k_max + 1 entries");
    for (size_t i = 0; i < x.ladder.size(); ++i)
      if (x.ladder[i] < 1 || (i && x.ladder[i] <= x.ladder[i - 1])) throw ConfigError(where + ".ladder must increase");
    x.m = positive_opt(r, "m");
    x.matrix_cap = r.get("matrix_cap", x.matrix_cap);
    x.audit.small_stride = r.get("small_stride", x.audit.small_stride);
    x.audit.first_witness = r.get("first_witness", x.audit.first_witness);
    x.audit.cnr.radii = r.get("cnr_radii", x.audit.cnr.radii);
    x.audit.cnr.stride = r.get("cnr_stride", x.audit.cnr.stride);
    e.params = std::move(x);
  } else if (e.kind == "probability") {
    ProbabilityExperiment x;
    try {
      x.event = event_from_string(r.req<std::string>("event"));
    } catch (const InputError& err) {
      throw ConfigError(where + ": " + err.what());
    }
    x.center = config("center");
    x.L = radius_opt(r, "L");
    x.E = r.get("E", x.E);
    x.m = positive_opt(r, "m");
    x.ell = r.get("ell", x.ell);
    if (r.has("partner")) x.partner = config("partner");
    if (x.event == EventKind::distant_pair_EmS) {
      if (!x.partner) throw ConfigError(where + ": distant_pair_EmS needs a partner");
      if (!p.is_distant(rho(g, x.center, *x.partner), x.L.value_or(p.L0)))
        throw ConfigError(where + ": partner is not distant from center");
    }
    e.params = std::move(x);
  } else if (e.kind == "evc") {
    EvcExperiment x;
    x.center_x = config("center_x");
    x.center_y = config("center_y");
    x.L = r.get("L", x.L);
    if (x.L < 0) throw ConfigError(where + ".L must be nonnegative");
    x.s_grid = r.req<std::vector<double>>("s_grid");
    if (x.s_grid.empty()) throw ConfigError(where + ".s_grid is empty");
    for (double s : x.s_grid)
      if (!(s >= 0) || !std::isfinite(s)) throw ConfigError(where + ".s_grid entries must be finite and nonnegative");
    if (r.has("constants")) {
      ObjectReader c(r.raw("constants"), r.path("constants"));
      auto& k = x.constants;
      k.C1 = c.get("C1", k.C1);
      k.A1 = c.get("A1", k.A1);
      k.b1 = c.get("b1", k.b1);
      k.C2 = c.get("C2", k.C2);
      k.A2 = c.get("A2", k.A2);
      k.b2 = c.get("b2", k.b2);
      c.finish();
    }
    e.params = std::move(x);
  } else if (e.kind == "dynamics") {
    DynamicsExperiment x;
    x.center = config("center");
    x.L = radius_opt(r, "L");
    x.window = parse_window(r);
    x.t_points = r.get("t_points", x.t_points);
    x.t_min = r.get("t_min", x.t_min);
    x.t_max = r.get("t_max", x.t_max);
    x.max_pairs = r.get("max_pairs", x.max_pairs);
    if (x.t_points < 2 || !(x.t_min > 0) || !(x.t_max > x.t_min)) throw ConfigError(where + ": bad t grid");
    e.params = std::move(x);
  } else if (e.kind == "dl") {
    DlExperiment x;
    x.domain_center = config("domain_center");
    x.domain_radius = r.get("domain_radius", x.domain_radius);
    x.x = config("x");
    x.y = config("y");
    x.L = r.get("L", x.L);
    x.m = positive_opt(r, "m");
    x.window = parse_window(r);
    if (rho(g, x.x, x.y) <= 2 * x.L + 1) throw ConfigError(where + ": dl needs rho(x, y) > 2L + 1");
    e.params = std::move(x);
  } else {
    throw ConfigError(where + ".kind '" + e.kind + "' is not a known experiment");
  }
  r.finish();
  return e;
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  ObjectReader r(j, "config");
  RunConfig c;
  c.hash = sha256_hex(text);
  c.schema_version = r.req<int>("schema_version");
  if (c.schema_version != kSchemaVersion) throw ConfigError("unsupported schema_version");
  auto& s = c.setup;
  s.spec.geometry = detail::parse_geometry(r.raw("geometry"));
  s.spec.N = r.req<int>("N");
  if (s.spec.N < 1 || s.spec.N > 8) throw ConfigError("N must lie in [1, 8]");
  s.spec.g = r.get("g", s.spec.g);
  if (!std::isfinite(s.spec.g)) throw ConfigError("g must be finite");
  if (r.has("disorder")) s.field = detail::parse_disorder(r.raw("disorder"));
  if (r.has("interaction")) s.spec.interaction = detail::parse_interaction(r.raw("interaction"));
  const auto diag = r.get<std::string>("diagonal", "induced_degree");
  if (diag == "induced_degree") s.spec.diagonal = DiagonalConvention::induced_degree;
  else if (diag == "fixed") s.spec.diagonal = DiagonalConvention::fixed;
  else throw ConfigError("diagonal must be induced_degree or fixed");
  s.spec.half_pairs = r.get("half_pairs", false);
  s.params = detail::parse_params(r.has("params") ? r.raw("params") : json::object(), s.spec.N, s.spec.geometry.d());
  if (r.has("schedule")) {
    ObjectReader b(r.raw("schedule"), "schedule");
    c.schedule.p = b.get("p", c.schedule.p);
    c.schedule.b = b.get("b", c.schedule.b);
    b.finish();
  }
  c.trials = r.get("trials", c.trials);
  c.seed = r.get("seed", c.seed);
  c.threads = r.get("threads", c.threads);
  if (c.threads < 1) throw ConfigError("threads must be positive");
  c.output_dir = r.opt<std::string>("output_dir");
  const auto& ex = r.raw("experiments");
  if (!ex.is_array() || ex.empty()) throw ConfigError("experiments must be a nonempty list");
  std::set<std::string> names;
  for (size_t i = 0; i < ex.size(); ++i) {
    c.experiments.push_back(detail::parse_experiment(ex[i], i, s.spec.geometry, s.spec.N, s.params));
    if (!names.insert(c.experiments.back().name).second)
      throw ConfigError("experiment name '" + c.experiments.back().name + "' is repeated");
  }
  if (r.has("sweep")) {
    ObjectReader w(r.raw("sweep"), "sweep");
    c.sweep = SweepConfig{w.req<std::string>("axis"), w.req<std::vector<double>>("values")};
    w.finish();
  }
  r.finish();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_run_config(text);
}

}  // namespace mpdsa::io
