#pragma once

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mpdsa/experiments.hpp"
#include "mpdsa/io/config.hpp"
#include "mpdsa/io/csv.hpp"
#include "mpdsa/io/manifest.hpp"

namespace mpdsa::cli {

using nlohmann::json;
using io::CsvTable;
using io::format_config;

enum ExitCode { kOk = 0, kViolations = 1, kBadInput = 2, kNumerical = 3 };

struct Overrides {
  std::optional<std::string> out;
  std::optional<uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<size_t> trials;
};

struct ExperimentResult {
  std::map<std::string, std::string> files;
  json summary;
  size_t violations = 0;
  std::optional<ProbabilityEstimate> headline;
};

struct RunContext {
  const io::RunConfig& cfg;
  uint64_t seed;
  unsigned threads;
  std::optional<size_t> trials_override;

  size_t trials(const io::ExperimentConfig& e) const { return trials_override.value_or(e.trials.value_or(cfg.trials)); }
  int radius(std::optional<int> L) const { return L.value_or(cfg.setup.params.L0); }
  double mass(std::optional<double> m) const { return m.value_or(cfg.setup.params.m); }
};

inline json estimate_json(const ProbabilityEstimate& e) {
  return {{"successes", e.successes}, {"trials", e.trials}, {"p_hat", e.p_hat}, {"ci_lo", e.lo}, {"ci_hi", e.hi}};
}

inline Ball ball_for(const RunContext& c, const Configuration& center, int L) {
  return enumerate_ball(c.cfg.setup.spec.geometry, center, L);
}

// ---------------------------------------------------------------------------
// Experiments

inline ExperimentResult run_spectrum(const RunContext& c, const io::ExperimentConfig& e, const io::SpectrumExperiment& x) {
  const auto& s = c.cfg.setup;
  const Ball ball = ball_for(c, x.center, c.radius(x.L));
  const size_t T = c.trials(e);
  auto spectra = parallel_map<Eigen::VectorXd>(T, c.threads, [&](size_t t) {
    const FieldSample v = sample_for(s, {&ball.members}, rng::trial_seed(c.seed, t));
    return eigenvalues(assemble_hamiltonian(s.spec, v, ball).matrix);
  });
  CsvTable csv({"trial", "index", "eigenvalue"});
  for (size_t t = 0; t < T; ++t)
    for (Eigen::Index i = 0; i < spectra[t].size(); ++i) csv.row() << t << static_cast<long>(i) << spectra[t](i);
  ExperimentResult r;
  r.files[e.name + ".csv"] = csv.str();
  r.summary = {{"ball_size", ball.members.size()}, {"trials", T}};
  return r;
}

inline ExperimentResult run_predicates(const RunContext& c, const io::ExperimentConfig& e, const io::PredicatesExperiment& x) {
  const auto& s = c.cfg.setup;
  const Ball ball = ball_for(c, x.center, c.radius(x.L));
  const size_t T = c.trials(e);
  const double m = c.mass(x.m);
  auto reports = parallel_map<std::vector<PredicateReport>>(T, c.threads, [&](size_t t) {
    const FieldSample v = sample_for(s, {&ball.members}, rng::trial_seed(c.seed, t));
    const OperatorMatrix h = assemble_hamiltonian(s.spec, v, ball);
    const EigenSystem es = diagonalize(h);
    std::vector<PredicateReport> out;
    for (double E : x.energies) out.push_back(evaluate_predicates(h, es, E, m, s.params, x.ell, x.cnr));
    return out;
  });
  CsvTable csv({"trial", "energy", "e_nr", "e_cnr", "ns", "ns_resolved", "ns_worst", "ns_threshold", "loc",
                "loc_worst_log_excess", "tunneling"});
  std::map<std::string, size_t> counts;
  for (size_t t = 0; t < T; ++t)
    for (const auto& p : reports[t]) {
      csv.row() << t << p.energy << p.e_nr << p.e_cnr << p.ns.ns << p.ns.resolved << p.ns.worst << p.ns.threshold
                << p.loc.loc << p.loc.worst_log_excess << p.tunneling.tunneling;
      counts["e_nr"] += p.e_nr;
      counts["e_cnr"] += p.e_cnr;
      counts["ns"] += p.ns.ns;
      counts["loc"] += p.loc.loc;
      counts["tunneling"] += p.tunneling.tunneling;
    }
  ExperimentResult r;
  r.files[e.name + ".csv"] = csv.str();
  r.summary = {{"ball_size", ball.members.size()}, {"trials", T}, {"energies", x.energies.size()}, {"true_counts", counts}};
  return r;
}

/// Two-particle 1D centers (s, 0), partially interactive with probability pi_fraction.
inline Configuration mixed_center(const io::CenterMix& mix, size_t t) {
  rng::Stream st(rng::trial_seed(mix.seed, t));
  const bool pi = st.next_unit() < mix.pi_fraction;
  const auto [lo, hi] = pi ? mix.pi_range : mix.fi_range;
  return Configuration::line({st.next_int(lo, hi), 0});
}

inline ExperimentResult run_audit(const RunContext& c, const io::ExperimentConfig& e, const io::AuditExperiment& x) {
  ScalingAuditRequest req;
  if (x.center) req.center = *x.center;
  if (x.mix) req.center_for = [mix = *x.mix](size_t t) { return mixed_center(mix, t); };
  req.ladder = x.ladder;
  req.k_max = x.k_max;
  req.m = c.mass(x.m);
  req.trials = c.trials(e);
  req.seed = c.seed;
  req.matrix_cap = x.matrix_cap;
  req.threads = c.threads;
  req.schedule = c.cfg.schedule;
  req.audit = x.audit;
  const auto rows = run_scaling_audit(c.cfg.setup, req);
  CsvTable table({"k", "L", "max_ball_size", "trials", "nonloc", "p_hat", "ci_lo", "ci_hi", "schedule_bound", "violations",
                  "skipped"});
  CsvTable lemmas({"k", "lemma", "instances", "hypotheses_held", "conclusions_checked", "unresolved", "violations"});
  CsvTable viol({"k", "lemma", "energy", "lhs", "rhs", "detail"});
  ExperimentResult r;
  json jrows = json::array();
  for (const auto& row : rows) {
    table.row() << row.k << row.L << row.max_ball_size << row.nloc.trials << row.nloc.successes << row.nloc.p_hat
                << row.nloc.lo << row.nloc.hi << row.schedule_bound << row.violations << row.skipped;
    json jl = json::object();
    for (const auto& [name, l] : row.lemmas) {
      lemmas.row() << row.k << name << l.instances << l.hypotheses_held << l.conclusions_checked << l.unresolved
                   << l.violations;
      jl[name] = {{"instances", l.instances}, {"hypotheses_held", l.hypotheses_held},
                  {"conclusions_checked", l.conclusions_checked}, {"unresolved", l.unresolved}, {"violations", l.violations}};
    }
    for (const auto& v : row.witnesses) viol.row() << row.k << v.lemma << v.energy << v.lhs << v.rhs << v.detail;
    json jr{{"k", row.k}, {"L", row.L}, {"max_ball_size", row.max_ball_size}, {"schedule_bound", row.schedule_bound},
            {"violations", row.violations}, {"skipped", row.skipped}, {"lemmas", jl}};
    if (row.skipped) jr["notice"] = row.notice;
    else {
      jr["nonloc"] = estimate_json(row.nloc);
      r.headline = row.nloc;
    }
    jrows.push_back(std::move(jr));
    r.violations += row.violations;
  }
  r.files[e.name + ".csv"] = table.str();
  r.files[e.name + "_lemmas.csv"] = lemmas.str();
  r.files[e.name + "_violations.csv"] = viol.str();
  r.summary = {{"rows", jrows}, {"violations", r.violations}};
  return r;
}

inline ExperimentResult run_probability(const RunContext& c, const io::ExperimentConfig& e,
                                        const io::ProbabilityExperiment& x) {
  EventQuery q{x.event, x.center, c.radius(x.L), x.E, c.mass(x.m), x.ell, x.partner};
  const auto run = estimate_event_probability(c.cfg.setup, q, c.trials(e), c.seed, c.threads);
  CsvTable csv({"trial", "outcome"});
  for (size_t t = 0; t < run.outcomes.size(); ++t) csv.row() << t << static_cast<bool>(run.outcomes[t]);
  ExperimentResult r;
  r.files[e.name + ".csv"] = csv.str();
  r.summary = {{"event", to_string(x.event)}, {"L", q.L}, {"E", q.E}, {"m", q.m}, {"estimate", estimate_json(run.estimate)}};
  r.headline = run.estimate;
  return r;
}

inline ExperimentResult run_evc(const RunContext& c, const io::ExperimentConfig& e, const io::EvcExperiment& x) {
  const Ball bx = ball_for(c, x.center_x, x.L), by = ball_for(c, x.center_y, x.L);
  const auto rep = evc_experiment(c.cfg.setup, bx, by, c.trials(e), x.s_grid, c.seed, x.constants, c.threads);
  CsvTable csv({"s", "cdf", "stderr", "lemma_bound", "theorem_bound", "closed_form"});
  for (size_t i = 0; i < rep.s_grid.size(); ++i)
    csv.row() << rep.s_grid[i] << rep.cdf[i] << rep.stderr_[i] << rep.lemma_bound[i] << rep.theorem_bound[i]
              << (rep.closed_form.empty() ? NAN : rep.closed_form[i]);
  CsvTable dist({"trial", "distance"});
  for (size_t t = 0; t < rep.distances.size(); ++t) dist.row() << t << rep.distances[t];
  ExperimentResult r;
  r.files[e.name + ".csv"] = csv.str();
  r.files[e.name + "_distances.csv"] = dist.str();
  r.summary = {{"trials", rep.distances.size()}, {"monotone", rep.monotone}, {"separable", rep.separable},
               {"fit_exponent", rep.fit_exponent}, {"fit_prefactor", rep.fit_prefactor}};
  if (!rep.separable) r.summary["warning"] = "balls are not weakly separable; exploratory run";
  if (!rep.closed_form.empty()) {
    r.summary["closed_form_pass"] = rep.closed_form_pass;
    r.summary["closed_form_worst_z"] = rep.worst_z;
  }
  if (!rep.monotone) ++r.violations;
  return r;
}

inline ExperimentResult run_dynamics(const RunContext& c, const io::ExperimentConfig& e, const io::DynamicsExperiment& x) {
  const auto& s = c.cfg.setup;
  const auto& g = s.spec.geometry;
  const Ball ball = ball_for(c, x.center, c.radius(x.L));
  // y spread over the ball ordered by distance from the center
  std::vector<Configuration> ys(ball.members.begin(), ball.members.end());
  std::stable_sort(ys.begin(), ys.end(), [&](const auto& a, const auto& b) { return rho(g, x.center, a) < rho(g, x.center, b); });
  std::vector<std::pair<Configuration, Configuration>> pairs;
  const size_t k = std::min(x.max_pairs, ys.size());
  for (size_t i = 0; i < k; ++i) pairs.emplace_back(x.center, ys[k > 1 ? i * (ys.size() - 1) / (k - 1) : 0]);
  const auto t_grid = default_t_grid(x.t_points, x.t_min, x.t_max);
  const bool full = std::isinf(x.window.lo) && std::isinf(x.window.hi);
  const size_t T = c.trials(e);
  auto rows = parallel_map<std::vector<CorrelatorRow>>(T, c.threads, [&](size_t t) {
    const FieldSample v = sample_for(s, {&ball.members}, rng::trial_seed(c.seed, t));
    return correlator_rows(diagonalize(assemble_hamiltonian(s.spec, v, ball)), pairs, x.window, t_grid);
  });
  CsvTable csv({"trial", "x", "y", "rho", "q", "q_signed", "propagator"});
  std::map<int, std::pair<double, size_t>> by_rho;
  ExperimentResult r;
  size_t bessel = 0, dominated = 0, completeness = 0;
  for (size_t t = 0; t < T; ++t)
    for (const auto& row : rows[t]) {
      csv.row() << t << format_config(row.x) << format_config(row.y) << row.rho << row.q << row.q_signed << row.propagator;
      by_rho[row.rho].first += row.q;
      by_rho[row.rho].second += 1;
      if (row.q > 1 + 1e-10) ++bessel;
      if (row.propagator > row.q + 1e-10) ++dominated;
      if (full && std::abs(row.q_signed - (row.x == row.y ? 1.0 : 0.0)) >= 1e-10) ++completeness;
    }
  CsvTable decay({"rho", "mean_q", "count"});
  std::vector<std::pair<double, double>> data;
  for (const auto& [d, acc] : by_rho) {
    const double mean = acc.first / static_cast<double>(acc.second);
    decay.row() << d << mean << acc.second;
    if (d > 0) data.emplace_back(d, mean);
  }
  r.files[e.name + ".csv"] = csv.str();
  r.files[e.name + "_decay.csv"] = decay.str();
  r.violations = bessel + dominated + completeness;
  r.summary = {{"ball_size", ball.members.size()}, {"pairs", pairs.size()}, {"trials", T},
               {"bessel_violations", bessel}, {"propagator_violations", dominated},
               {"completeness_violations", completeness}, {"t_points", t_grid.size()}};
  try {
    const DecayFit f = decay_fit(data);
    r.summary["fit"] = {{"m_eff", f.m_eff}, {"intercept", f.intercept}, {"residual_exp", f.residual_exp}, {"a", f.a},
                        {"c", f.c}, {"b", f.b}, {"residual_log", f.residual_log}, {"used", f.used}, {"excluded", f.excluded}};
  } catch (const InputError& err) {
    r.summary["fit"] = {{"notice", err.what()}};
  }
  return r;
}

inline ExperimentResult run_dl(const RunContext& c, const io::ExperimentConfig& e, const io::DlExperiment& x) {
  DlAuditRequest req{x.domain_center, x.domain_radius, x.x, x.y, x.L, c.mass(x.m), x.window, c.trials(e), c.seed, c.threads};
  const auto rep = dl_audit(c.cfg.setup, req);
  CsvTable csv({"trials", "singular", "p_hat", "ci_lo", "ci_hi", "mean_q", "max_q_regular", "effective_mass",
                "boundary_pairs", "regular_bound", "bound", "regular_holds", "holds"});
  csv.row() << rep.singular_pair.trials << rep.singular_pair.successes << rep.singular_pair.p_hat << rep.singular_pair.lo
            << rep.singular_pair.hi << rep.mean_q << rep.max_q_regular << rep.effective_mass << rep.boundary_pairs
            << rep.regular_bound << rep.bound << rep.regular_holds << rep.holds;
  ExperimentResult r;
  r.files[e.name + ".csv"] = csv.str();
  r.summary = {{"singular_pair", estimate_json(rep.singular_pair)}, {"mean_q", rep.mean_q}, {"bound", rep.bound},
               {"holds", rep.holds}, {"regular_holds", rep.regular_holds}};
  r.headline = rep.singular_pair;
  if (!rep.regular_holds) ++r.violations;
  return r;
}

inline ExperimentResult run_experiment(const RunContext& c, const io::ExperimentConfig& e) {
  return std::visit(
      [&](const auto& x) -> ExperimentResult {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, io::SpectrumExperiment>) return run_spectrum(c, e, x);
        else if constexpr (std::is_same_v<T, io::PredicatesExperiment>) return run_predicates(c, e, x);
        else if constexpr (std::is_same_v<T, io::AuditExperiment>) return run_audit(c, e, x);
        else if constexpr (std::is_same_v<T, io::ProbabilityExperiment>) return run_probability(c, e, x);
        else if constexpr (std::is_same_v<T, io::EvcExperiment>) return run_evc(c, e, x);
        else if constexpr (std::is_same_v<T, io::DynamicsExperiment>) return run_dynamics(c, e, x);
        else return run_dl(c, e, x);
      },
      e.params);
}

// ---------------------------------------------------------------------------
// Runs

struct RunOutput {
  std::map<std::string, std::string> files;
  json summary = json::object();
  size_t violations = 0;
  std::map<std::string, std::optional<ProbabilityEstimate>> headlines;
  std::map<std::string, size_t> experiment_violations;
};

inline RunOutput run_config(const io::RunConfig& cfg, const std::vector<const io::ExperimentConfig*>& selected,
                            const Overrides& o, std::ostream& log, const std::string& prefix = "") {
  RunContext ctx{cfg, o.seed.value_or(cfg.seed), o.threads.value_or(cfg.threads), o.trials};
  RunOutput out;
  out.summary["seed"] = ctx.seed;
  out.summary["config_sha256"] = cfg.hash;
  for (const auto* e : selected) {
    ExperimentResult r = run_experiment(ctx, *e);
    for (auto& [name, data] : r.files) out.files[prefix + name] = std::move(data);
    r.summary["kind"] = e->kind;
    r.summary["violations"] = r.violations;
    out.summary["experiments"][e->name] = r.summary;
    out.violations += r.violations;
    out.headlines[e->name] = r.headline;
    out.experiment_violations[e->name] = r.violations;
    log << prefix << e->name << " (" << e->kind << "): " << r.violations << " violations";
    if (r.headline) log << ", p_hat " << r.headline->p_hat << " [" << r.headline->lo << ", " << r.headline->hi << "]";
    log << "\n";
  }
  out.summary["violations"] = out.violations;
  return out;
}

inline io::RunConfig with_axis(io::RunConfig cfg, const std::string& axis, double v) {
  if (axis == "g") {
    cfg.setup.spec.g = v;
  } else if (axis == "L0") {
    if (v != std::floor(v) || v <= 2 || v > 1e6) throw ConfigError("L0 sweep values must be integers above 2");
    cfg.setup.params.L0 = static_cast<int>(v);
  } else if (axis == "m") {
    if (!(v > 0)) throw ConfigError("m sweep values must be positive");
    cfg.setup.params.m = v;
  } else {
    throw ConfigError("sweep axis must be g, L0 or m");
  }
  return cfg;
}

inline std::filesystem::path output_dir(const Overrides& o, const io::RunConfig& cfg) {
  if (o.out) return *o.out;
  if (const char* env = std::getenv("MPDSA_OUT"); env && *env) return env;
  if (cfg.output_dir) return *cfg.output_dir;
  return "out";
}

struct CommandArgs {
  std::string config;
  Overrides overrides;
  std::optional<std::string> axis;
  std::vector<double> values;
  bool values_given = false;
};

inline int execute(const std::string& command, const CommandArgs& a, std::ostream& log, std::ostream& err) {
  const std::string started = io::utc_now();
  io::RunConfig cfg;
  std::vector<const io::ExperimentConfig*> selected;
  std::map<std::string, std::string> files;
  size_t violations = 0;
  std::filesystem::path dir;
  try {
    cfg = io::load_run_config(a.config);
    if (a.overrides.trials && *a.overrides.trials == 0) throw ConfigError("--trials must be positive");
    if (a.overrides.threads && *a.overrides.threads == 0) throw ConfigError("--threads must be positive");
    for (const auto& e : cfg.experiments)
      if (command == "run" || command == "sweep" || e.kind == command) selected.push_back(&e);
    if (selected.empty()) throw ConfigError("config has no '" + command + "' experiment");
    dir = output_dir(a.overrides, cfg);
    if (command == "sweep") {
      const std::string axis = a.axis ? *a.axis : (cfg.sweep ? cfg.sweep->axis : "");
      const std::vector<double> values = a.values_given ? a.values : (cfg.sweep ? cfg.sweep->values : std::vector<double>{});
      if (axis.empty()) throw ConfigError("sweep needs an axis");
      if (values.empty()) throw ConfigError("sweep needs at least one value");
      std::vector<io::RunConfig> runs;
      for (double v : values) runs.push_back(with_axis(cfg, axis, v));
      std::vector<std::string> cols{"axis", "value"};
      for (const auto* e : selected)
        for (const char* suffix : {"_p_hat", "_ci_lo", "_ci_hi", "_violations"}) cols.push_back(e->name + suffix);
      CsvTable trend(cols);
      json summary{{"axis", axis}, {"values", values}, {"runs", json::array()}};
      for (size_t i = 0; i < values.size(); ++i) {
        std::vector<const io::ExperimentConfig*> sel;
        for (const auto& e : runs[i].experiments) sel.push_back(&e);
        const std::string prefix = axis + "=" + io::format_double(values[i]) + "/";
        RunOutput r = run_config(runs[i], sel, a.overrides, log, prefix);
        files.merge(r.files);
        files[prefix + "summary.json"] = r.summary.dump(2) + "\n";
        summary["runs"].push_back({{"value", values[i]}, {"dir", prefix}, {"violations", r.violations}});
        auto row = trend.row();
        row << axis << values[i];
        for (const auto* e : sel) {
          const auto& h = r.headlines[e->name];
          row << (h ? h->p_hat : NAN) << (h ? h->lo : NAN) << (h ? h->hi : NAN) << r.experiment_violations[e->name];
        }
        violations += r.violations;
      }
      files["trend.csv"] = trend.str();
      summary["violations"] = violations;
      files["summary.json"] = summary.dump(2) + "\n";
    } else {
      RunOutput r = run_config(cfg, selected, a.overrides, log);
      files = std::move(r.files);
      files["summary.json"] = r.summary.dump(2) + "\n";
      violations = r.violations;
    }
  } catch (const std::invalid_argument& e) {  // ConfigError is a runtime_error; handled below
    err << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  }
  try {
    io::RunManifest m;
    m.command = command;
    m.config_hash = cfg.hash;
    m.started = started;
    m.seed = a.overrides.seed.value_or(cfg.seed);
    m.threads = a.overrides.threads.value_or(cfg.threads);
    m.files = io::write_outputs(dir, files);
    m.finished = io::utc_now();
    io::write_outputs(dir, {{"manifest.json", m.to_json().dump(2) + "\n"}});
    if (auto bad = io::verify_manifest(dir, m.files); !bad.empty()) {
      err << "checksum mismatch after writing " << bad.front() << "\n";
      return kNumerical;
    }
  } catch (const std::exception& e) {
    err << "cannot write outputs: " << e.what() << "\n";
    return kNumerical;
  }
  log << "wrote " << files.size() << " files to " << dir.string() << "\n";
  return violations ? kViolations : kOk;
}

/// Entry point shared by the executable and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Multi-particle disordered-system localization audits"};
  app.require_subcommand(1);
  CommandArgs a;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", a.config, "run config (JSON)")->required();
    sub->add_option("--out", a.overrides.out, "output directory");
    sub->add_option("--seed", a.overrides.seed, "master seed");
    sub->add_option("--threads", a.overrides.threads, "worker cap");
    sub->add_option("--trials", a.overrides.trials, "trial count override");
  };
  const std::vector<std::pair<std::string, std::string>> commands{
      {"spectrum", "eigenvalues per trial"},
      {"predicates", "NR/CNR/NS/loc/tunneling per trial"},
      {"audit", "scaling audit with implication checks"},
      {"probability", "event probability estimate"},
      {"evc", "spectral distance distribution"},
      {"dynamics", "eigenfunction correlators and propagator"},
      {"dl", "finite-volume dynamical localization bound"},
      {"run", "every experiment in the config"},
      {"sweep", "rerun the config along one axis"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub);
    if (name == "sweep") {
      sub->add_option("--axis", a.axis, "g, L0 or m");
      sub->add_option("--values", a.values, "comma-separated values")->delimiter(',')->each([&](const std::string&) {
        a.values_given = true;
      });
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, log, err);
    return code == 0 ? kOk : kBadInput;
  }
  std::string command;
  for (const auto* sub : app.get_subcommands()) command = sub->get_name();
  return execute(command, a, log, err);
}

}  // namespace mpdsa::cli
