#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mpdsa/config_space.hpp"
#include "mpdsa/disorder.hpp"
#include "mpdsa/msa.hpp"
#include "mpdsa/operators.hpp"
#include "mpdsa/parallel.hpp"
#include "mpdsa/params.hpp"
#include "mpdsa/spectral.hpp"

namespace mpdsa {

// ---------------------------------------------------------------------------
// Binomial estimates

struct ProbabilityEstimate {
  size_t successes = 0;
  size_t trials = 0;
  double p_hat = 0.0;
  double lo = 0.0;  // 95% Wilson interval
  double hi = 1.0;
};

inline ProbabilityEstimate wilson(size_t successes, size_t trials, double z = 1.959964) {
  if (trials == 0) throw InputError("wilson: no trials");
  if (successes > trials) throw InputError("wilson: more successes than trials");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * n)) / (1 + z2 / n);
  const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n);
  return {successes, trials, p, std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

inline bool intervals_overlap(const ProbabilityEstimate& a, const ProbabilityEstimate& b) {
  return a.lo <= b.hi && b.lo <= a.hi;
}

// ---------------------------------------------------------------------------
// Trial plumbing

/// Everything a trial needs besides the sample: operator recipe, field law and scaling parameters.
struct TrialSetup {
  HamiltonianSpec spec;
  FieldModel field = FieldModel::iid(Marginal::uniform);
  ScalingParams params;
};

inline FieldSample sample_for(const TrialSetup& s, const std::vector<const ConfigSet*>& sets, uint64_t seed) {
  std::vector<Site> region;
  for (const auto* set : sets) {
    auto p = projection(*set);
    region.insert(region.end(), p.begin(), p.end());
  }
  std::sort(region.begin(), region.end());
  region.erase(std::unique(region.begin(), region.end()), region.end());
  return sample_field(s.field, region, seed);
}

enum class EventKind { always_true, always_false, EmS, m_nloc, m_tunneling, distant_pair_EmS };

inline std::string to_string(EventKind e) {
  switch (e) {
    case EventKind::always_true: return "always_true";
    case EventKind::always_false: return "always_false";
    case EventKind::EmS: return "EmS";
    case EventKind::m_nloc: return "m_nloc";
    case EventKind::m_tunneling: return "m_tunneling";
    case EventKind::distant_pair_EmS: return "distant_pair_EmS";
  }
  return "?";
}

inline EventKind event_from_string(const std::string& s) {
  for (auto e : {EventKind::always_true, EventKind::always_false, EventKind::EmS, EventKind::m_nloc,
                 EventKind::m_tunneling, EventKind::distant_pair_EmS})
    if (to_string(e) == s) return e;
  throw InputError("unknown event '" + s + "'");
}

struct EventQuery {
  EventKind kind = EventKind::EmS;
  Configuration center;
  int L = 6;
  double E = 0.0;
  double m = 1.0;
  int ell = 1;                           // sub-scale for tunneling
  std::optional<Configuration> partner;  // second center for distant pairs
};

struct EventRun {
  ProbabilityEstimate estimate;
  std::vector<char> outcomes;  // per trial
};

/// Called once per trial with the diagonalized ball (inspection hooks: invariants, correlators).
using TrialInspector = std::function<void(size_t trial, const EigenSystem&)>;

inline bool is_EmS_at(const EigenSystem& es, const Configuration& u, int L, double E, double m, const ScalingParams& p) {
  return !NsEvaluator(es, u, L, u.particles(), m, p).evaluate(E).ns;
}

inline EventRun estimate_event_probability(const TrialSetup& s, const EventQuery& q, size_t trials, uint64_t seed,
                                           unsigned threads = 1, const TrialInspector& inspect = {}) {
  if (trials < 30) throw InputError("estimate_event_probability needs at least 30 trials");
  const auto& g = s.spec.geometry;
  const Ball ball = enumerate_ball(g, q.center, q.L);
  std::optional<Ball> other;
  if (q.kind == EventKind::distant_pair_EmS) {
    if (!q.partner) throw InputError("distant-pair event needs a partner center");
    if (!s.params.is_distant(rho(g, q.center, *q.partner), q.L)) throw InputError("partner ball is not distant");
    other = enumerate_ball(g, *q.partner, q.L);
  }
  auto outcomes = parallel_map<char>(trials, threads, [&](size_t t) -> char {
    const uint64_t ts = rng::trial_seed(seed, t);
    if (q.kind == EventKind::always_true) return 1;
    if (q.kind == EventKind::always_false) return 0;
    std::vector<const ConfigSet*> sets{&ball.members};
    if (other) sets.push_back(&other->members);
    const FieldSample v = sample_for(s, sets, ts);
    const OperatorMatrix h = assemble_hamiltonian(s.spec, v, ball);
    const EigenSystem es = diagonalize(h);
    if (inspect) inspect(t, es);
    switch (q.kind) {
      case EventKind::EmS: return is_EmS_at(es, q.center, q.L, q.E, q.m, s.params);
      case EventKind::m_nloc: return !is_m_loc(es, q.m, s.params, q.L, q.center.particles(), true).loc;
      case EventKind::m_tunneling: return is_m_tunneling(h, q.m, s.params, q.ell).tunneling;
      case EventKind::distant_pair_EmS: {
        if (!is_EmS_at(es, q.center, q.L, q.E, q.m, s.params)) return 0;
        const EigenSystem eo = diagonalize(assemble_hamiltonian(s.spec, v, *other));
        if (inspect) inspect(t, eo);
        return is_EmS_at(eo, *q.partner, q.L, q.E, q.m, s.params);
      }
      default: return 0;
    }
  });
  size_t hits = 0;
  for (char c : outcomes) hits += c ? 1 : 0;
  return {wilson(hits, trials), std::move(outcomes)};
}

// ---------------------------------------------------------------------------
// Scaling audit

struct ScalingAuditRequest {
  Configuration center;
  std::function<Configuration(size_t trial)> center_for;  // overrides center when set
  std::vector<int> ladder;                                // empty: scales(L0, alpha, k_max + 1)
  int k_max = 1;
  double m = 1.0;
  size_t trials = 100;
  uint64_t seed = 1;
  size_t matrix_cap = 2500;
  unsigned threads = 1;
  BoundSchedule schedule;
  AuditOptions audit;
  TrialInspector inspect;  // sees the top-scale eigensystem of each audited trial
};

struct ScalingAuditRow {
  int k = 0;
  int L = 0;
  size_t max_ball_size = 0;
  ProbabilityEstimate nloc;
  double schedule_bound = 0.0;  // L^{-P(N, k)}
  size_t violations = 0;
  std::map<std::string, LemmaTally> lemmas;
  std::vector<Violation> witnesses;  // first few violations, with trial index in the detail
  bool skipped = false;
  std::string notice;
};

inline std::vector<ScalingAuditRow> run_scaling_audit(const TrialSetup& s, const ScalingAuditRequest& r) {
  if (r.k_max < 0) throw InputError("k_max must be nonnegative");
  const auto& g = s.spec.geometry;
  const auto& p = s.params;
  std::vector<int> ladder = r.ladder.empty() ? scales(p.L0, p.alpha, r.k_max + 1) : r.ladder;
  if (static_cast<int>(ladder.size()) < r.k_max + 1) throw InputError("ladder shorter than k_max + 1");
  auto center_of = [&](size_t t) { return r.center_for ? r.center_for(t) : r.center; };
  std::vector<ScalingAuditRow> rows;
  for (int k = 0; k <= r.k_max; ++k) {
    ScalingAuditRow row;
    row.k = k;
    row.L = ladder[static_cast<size_t>(k)];
    row.schedule_bound = std::pow(static_cast<double>(row.L), -r.schedule.P(p.N, k, p.N));
    for (size_t t = 0; t < r.trials; ++t)
      row.max_ball_size = std::max(row.max_ball_size, enumerate_ball(g, center_of(t), row.L).members.size());
    if (row.max_ball_size > r.matrix_cap) {
      row.skipped = true;
      row.notice = "ball size " + std::to_string(row.max_ball_size) + " exceeds the matrix cap " + std::to_string(r.matrix_cap);
      rows.push_back(std::move(row));
      break;
    }
    struct Outcome {
      bool nloc = false;
      ImplicationAudit audit;
    };
    const int Lk = row.L;
    const int Lprev = k > 0 ? ladder[static_cast<size_t>(k - 1)] : 0;
    auto outcomes = parallel_map<Outcome>(r.trials, r.threads, [&](size_t t) {
      Outcome o;
      const Configuration c = center_of(t);
      const Ball ball = enumerate_ball(g, c, Lk);
      const FieldSample v = sample_for(s, {&ball.members}, rng::trial_seed(r.seed, t));
      if (k == 0) {
        const EigenSystem es = diagonalize(assemble_hamiltonian(s.spec, v, ball));
        if (r.inspect) r.inspect(t, es);
        o.nloc = !is_m_loc(es, r.m, p, Lk, c.particles(), true).loc;
        return o;
      }
      AuditOptions opt = r.audit;
      opt.keep_eigensystem = opt.keep_eigensystem || static_cast<bool>(r.inspect);
      o.audit = verify_implications(s.spec, v, c, Lk, Lprev, r.m, p, opt);
      o.nloc = !o.audit.loc.loc;
      if (r.inspect) r.inspect(t, *o.audit.eigensystem);
      o.audit.eigensystem.reset();
      o.audit.hamiltonian.reset();
      return o;
    });
    size_t hits = 0;
    for (size_t t = 0; t < outcomes.size(); ++t) {
      const auto& o = outcomes[t];
      hits += o.nloc ? 1 : 0;
      for (const auto& [name, tally] : o.audit.lemmas) {
        auto& dst = row.lemmas[name];
        dst.instances += tally.instances;
        dst.hypotheses_held += tally.hypotheses_held;
        dst.conclusions_checked += tally.conclusions_checked;
        dst.unresolved += tally.unresolved;
        dst.violations += tally.violations;
      }
      row.violations += o.audit.violations.size();
      for (const auto& v : o.audit.violations)
        if (row.witnesses.size() < 20) {
          Violation w = v;
          w.detail = "trial " + std::to_string(t) + ": " + w.detail;
          row.witnesses.push_back(std::move(w));
        }
    }
    row.nloc = wilson(hits, r.trials);
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Eigenvalue concentration

/// C'' L^{A''} (2s)^{b''} + |B'| |B''| C' L^{A'} (2s)^{b'}.
inline double h_L(double s, int L, const W3Constants& c, size_t size_x, size_t size_y) {
  if (s < 0) throw InputError("h_L needs s >= 0");
  if (s == 0) return 0.0;
  const double l = L;
  return c.C2 * std::pow(l, c.A2) * std::pow(2 * s, c.b2) +
         static_cast<double>(size_x) * static_cast<double>(size_y) * c.C1 * std::pow(l, c.A1) * std::pow(2 * s, c.b1);
}

/// min |lambda - mu| over two ascending spectra.
inline double spectra_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double d = INFINITY;
  Eigen::Index i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    d = std::min(d, std::abs(a(i) - b(j)));
    if (a(i) < b(j)) ++i;
    else ++j;
  }
  return d;
}

struct EvcReport {
  std::vector<double> s_grid;
  std::vector<double> cdf;
  std::vector<double> stderr_;
  std::vector<double> lemma_bound;    // h_L(2s)
  std::vector<double> theorem_bound;  // (2L+1)^{2Nd} h_L(2s)
  std::vector<double> closed_form;    // empty unless the one-site analytic case applies
  bool closed_form_pass = false;
  double worst_z = 0.0;  // max |cdf - closed form| / stderr
  bool monotone = true;
  bool separable = false;
  std::optional<SeparabilityWitness> witness;
  double fit_exponent = NAN;  // least squares of ln cdf against ln s over positive values
  double fit_prefactor = NAN;
  W3Constants constants;
  std::vector<double> distances;
};

struct PowerFit {
  double exponent = NAN;
  double prefactor = NAN;
};

inline PowerFit fit_power_law(const std::vector<double>& s, const std::vector<double>& v) {
  std::vector<double> xs, ys;
  for (size_t i = 0; i < s.size(); ++i)
    if (s[i] > 0 && v[i] > 0) {
      xs.push_back(std::log(s[i]));
      ys.push_back(std::log(v[i]));
    }
  if (xs.size() < 2) return {};
  Eigen::MatrixXd A(static_cast<Eigen::Index>(xs.size()), 2);
  Eigen::VectorXd y(static_cast<Eigen::Index>(xs.size()));
  for (size_t i = 0; i < xs.size(); ++i) {
    A(static_cast<Eigen::Index>(i), 0) = xs[i];
    A(static_cast<Eigen::Index>(i), 1) = 1.0;
    y(static_cast<Eigen::Index>(i)) = ys[i];
  }
  const Eigen::Vector2d c = A.colPivHouseholderQr().solve(y);
  return {c(0), std::exp(c(1))};
}

inline EvcReport evc_experiment(const TrialSetup& s, const Ball& bx, const Ball& by, size_t trials,
                                std::vector<double> s_grid, uint64_t seed, const W3Constants& c = {},
                                unsigned threads = 1) {
  if (trials == 0) throw InputError("evc_experiment needs trials");
  std::sort(s_grid.begin(), s_grid.end());
  const auto& g = s.spec.geometry;
  EvcReport r;
  r.s_grid = s_grid;
  r.constants = c;
  const bool one_site = bx.members.size() == 1 && by.members.size() == 1 && bx.center.particles() == 1 &&
                        by.center.particles() == 1 && bx.center != by.center;
  if (g.is_lattice() && !one_site) {
    try {
      r.witness = find_separability_witness(g, bx, by);
      if (!r.witness) r.witness = find_separability_witness(g, by, bx);
    } catch (const std::exception&) {
      r.witness.reset();
    }
  }
  r.separable = one_site || r.witness.has_value();
  r.distances = parallel_map<double>(trials, threads, [&](size_t t) {
    const FieldSample v = sample_for(s, {&bx.members, &by.members}, rng::trial_seed(seed, t));
    return spectra_distance(eigenvalues(assemble_hamiltonian(s.spec, v, bx).matrix),
                            eigenvalues(assemble_hamiltonian(s.spec, v, by).matrix));
  });
  std::vector<double> sorted = r.distances;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(trials);
  const int L = std::max(bx.radius, by.radius);
  const double vol = std::pow(2.0 * L + 1.0, 2.0 * s.params.N * s.params.d);
  const bool analytic = one_site && s.field.kind == FieldModel::Kind::iid && s.field.marginal == Marginal::uniform &&
                        s.spec.g != 0.0;
  r.closed_form_pass = analytic;
  double prev = 0.0;
  for (double sv : s_grid) {
    const double cdf = static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), sv) - sorted.begin()) / n;
    r.monotone = r.monotone && cdf >= prev;
    prev = cdf;
    r.cdf.push_back(cdf);
    r.stderr_.push_back(std::sqrt(cdf * (1 - cdf) / n));
    const double hb = h_L(2 * sv, L, c, bx.members.size(), by.members.size());
    r.lemma_bound.push_back(hb);
    r.theorem_bound.push_back(vol * hb);
    if (analytic) {
      const double u = std::min(1.0, sv / std::abs(s.spec.g));
      const double cf = 2 * u - u * u;
      r.closed_form.push_back(cf);
      const double se = std::sqrt(cf * (1 - cf) / n);
      const double diff = std::abs(cdf - cf);
      if (se > 0) r.worst_z = std::max(r.worst_z, diff / se);
      if (diff > 3 * se) r.closed_form_pass = false;
    }
  }
  const PowerFit f = fit_power_law(s_grid, r.cdf);
  r.fit_exponent = f.exponent;
  r.fit_prefactor = f.prefactor;
  return r;
}

// ---------------------------------------------------------------------------
// Eigenfunction correlators and dynamics

struct EnergyWindow {
  double lo = -INFINITY;
  double hi = INFINITY;
  bool contains(double e) const { return e >= lo && e <= hi; }
};

/// Sum over eigenvalues in the window of |Psi_j(x) Psi_j(y)| (or the signed sum).
inline double ef_correlator(const EigenSystem& es, const Configuration& x, const Configuration& y, EnergyWindow w = {},
                            bool signed_sum = false) {
  const auto i = es.index_of(x), k = es.index_of(y);
  if (i < 0 || k < 0) throw GeometryError("ef_correlator: points outside the ball");
  double q = 0.0;
  for (Eigen::Index j = 0; j < es.size(); ++j) {
    if (!w.contains(es.values(j))) continue;
    const double t = es.vectors(i, j) * es.vectors(k, j);
    q += signed_sum ? t : std::abs(t);
  }
  return q;
}

/// t = 0 plus 10^4 logarithmic points on [1e-2, 1e3].
inline std::vector<double> default_t_grid(size_t points = 10000, double t_min = 1e-2, double t_max = 1e3) {
  std::vector<double> t{0.0};
  t.reserve(points + 1);
  const double a = std::log(t_min), b = std::log(t_max);
  for (size_t i = 0; i < points; ++i)
    t.push_back(std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1)));
  return t;
}

/// max over the grid of |<1_x| e^{-itH} P_I |1_y>|: a lower bound on the sup over all t.
inline double propagator_sup(const EigenSystem& es, const Configuration& x, const Configuration& y,
                             const std::vector<double>& t_grid, EnergyWindow w = {}) {
  const auto i = es.index_of(x), k = es.index_of(y);
  if (i < 0 || k < 0) throw GeometryError("propagator_sup: points outside the ball");
  std::vector<double> lam, amp;
  for (Eigen::Index j = 0; j < es.size(); ++j)
    if (w.contains(es.values(j))) {
      lam.push_back(es.values(j));
      amp.push_back(es.vectors(i, j) * es.vectors(k, j));
    }
  double best = 0.0;
  for (double t : t_grid) {
    double re = 0.0, im = 0.0;
    for (size_t j = 0; j < lam.size(); ++j) {
      re += amp[j] * std::cos(t * lam[j]);
      im -= amp[j] * std::sin(t * lam[j]);
    }
    best = std::max(best, std::hypot(re, im));
  }
  return best;
}

struct CorrelatorRow {
  Configuration x, y;
  int rho = 0;
  double q = 0.0;
  double q_signed = 0.0;
  double propagator = 0.0;
};

inline std::vector<CorrelatorRow> correlator_rows(const EigenSystem& es, const std::vector<std::pair<Configuration, Configuration>>& pairs,
                                                  EnergyWindow w, const std::vector<double>& t_grid) {
  std::vector<CorrelatorRow> out;
  for (const auto& [x, y] : pairs)
    out.push_back({x, y, rho(es.geometry, x, y), ef_correlator(es, x, y, w), ef_correlator(es, x, y, w, true),
                   propagator_sup(es, x, y, t_grid, w)});
  return out;
}

struct DecayFit {
  double m_eff = NAN;
  double intercept = NAN;
  double residual_exp = NAN;
  double a = NAN;  // -ln v ~ a ln^{1+c} rho + b
  double c = NAN;
  double b = NAN;
  double residual_log = NAN;
  size_t used = 0;
  size_t excluded = 0;  // nonpositive values
};

inline DecayFit decay_fit(const std::vector<std::pair<double, double>>& data) {
  DecayFit f;
  std::vector<double> r, y;
  for (const auto& [rho_i, v] : data) {
    if (!(v > 0)) {
      ++f.excluded;
      continue;
    }
    r.push_back(rho_i);
    y.push_back(-std::log(v));
  }
  f.used = r.size();
  if (r.size() < 3) throw InputError("decay_fit needs at least 3 positive values");
  auto line = [](const std::vector<double>& x, const std::vector<double>& yy, double& slope, double& icpt) {
    Eigen::MatrixXd A(static_cast<Eigen::Index>(x.size()), 2);
    Eigen::VectorXd b(static_cast<Eigen::Index>(x.size()));
    for (size_t i = 0; i < x.size(); ++i) {
      A(static_cast<Eigen::Index>(i), 0) = x[i];
      A(static_cast<Eigen::Index>(i), 1) = 1.0;
      b(static_cast<Eigen::Index>(i)) = yy[i];
    }
    const Eigen::Vector2d c = A.colPivHouseholderQr().solve(b);
    slope = c(0);
    icpt = c(1);
    return (A * c - b).norm();
  };
  f.residual_exp = line(r, y, f.m_eff, f.intercept);
  std::vector<double> rl, yl;
  for (size_t i = 0; i < r.size(); ++i)
    if (r[i] >= 1.0) {
      rl.push_back(std::log(r[i]));
      yl.push_back(y[i]);
    }
  if (rl.size() >= 3) {
    for (int k = 1; k <= 20; ++k) {
      const double c = 0.1 * k;
      std::vector<double> x;
      for (double l : rl) x.push_back(std::pow(l, 1.0 + c));
      double a = 0, b = 0;
      const double res = line(x, yl, a, b);
      if (!(res >= f.residual_log)) {
        f.residual_log = res;
        f.a = a;
        f.b = b;
        f.c = c;
      }
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Finite-volume dynamical localization

/// Edge-boundary pairs of B_L(x) and B_L(y) inside the domain (the set S of the correlator bound).
inline size_t boundary_pair_count(const LatticeGeometry& g, const ConfigSet& domain, const Configuration& x,
                                  const Configuration& y, int L) {
  return boundary_index_pairs(g, enumerate_ball(g, x, L).members, domain).size() +
         boundary_index_pairs(g, enumerate_ball(g, y, L).members, domain).size();
}

/// f(L) + 2 |S| e^{-m L}.
inline double finite_volume_dl_bound(size_t boundary_pairs, int L, double m, double f_L) {
  return f_L + 2.0 * static_cast<double>(boundary_pairs) * std::exp(-m * L);
}

inline double finite_volume_dl_bound(const LatticeGeometry& g, const ConfigSet& domain, const Configuration& x,
                                     const Configuration& y, int L, double m, double f_L) {
  return finite_volume_dl_bound(boundary_pair_count(g, domain, x, y, L), L, m, f_L);
}

struct DlAuditRequest {
  Configuration domain_center;
  int domain_radius = 8;
  Configuration x, y;
  int L = 2;
  double m = 1.0;
  EnergyWindow window;
  size_t trials = 200;
  uint64_t seed = 1;
  unsigned threads = 1;
};

struct DlAuditReport {
  ProbabilityEstimate singular_pair;  // exists E = lambda_i in I with both balls (E, m)-S
  double mean_q = 0.0;
  double max_q_regular = 0.0;         // largest Q over trials without the singular event
  double effective_mass = 0.0;        // gamma(m, L) - 2 L^{beta - 1}, the decay NS delivers
  size_t boundary_pairs = 0;
  double regular_bound = 0.0;         // 2 |S| e^{-m' L}
  double bound = 0.0;                 // finite_volume_dl_bound at the Wilson upper limit
  bool regular_holds = true;
  bool holds = false;
};

inline DlAuditReport dl_audit(const TrialSetup& s, const DlAuditRequest& r) {
  const auto& g = s.spec.geometry;
  const auto& p = s.params;
  if (rho(g, r.x, r.y) <= 2 * r.L + 1) throw InputError("dl_audit needs rho(x, y) > 2L + 1");
  const Ball dom = enumerate_ball(g, r.domain_center, r.domain_radius);
  const Ball bx = enumerate_ball(g, r.x, r.L), by = enumerate_ball(g, r.y, r.L);
  for (const auto* b : {&bx, &by})
    for (const auto& c : b->members)
      if (!dom.members.contains(c)) throw GeometryError("dl_audit: balls must lie inside the domain");
  DlAuditReport rep;
  rep.boundary_pairs = boundary_pair_count(g, dom.members, r.x, r.y, r.L);
  const int n = r.x.particles();
  rep.effective_mass = -p.ns_log_threshold(r.m, r.L, n) / r.L;
  rep.regular_bound = finite_volume_dl_bound(rep.boundary_pairs, r.L, rep.effective_mass, 0.0);
  struct Out {
    bool singular = false;
    double q = 0.0;
    double floor = 0.0;
  };
  auto outs = parallel_map<Out>(r.trials, r.threads, [&](size_t t) {
    const FieldSample v = sample_for(s, {&dom.members}, rng::trial_seed(r.seed, t));
    const OperatorMatrix h = assemble_hamiltonian(s.spec, v, dom);
    const EigenSystem es = diagonalize(h);
    const EigenSystem ex = diagonalize(h.restrict_to(bx)), ey = diagonalize(h.restrict_to(by));
    std::vector<double> E;
    for (Eigen::Index j = 0; j < es.size(); ++j)
      if (r.window.contains(es.values(j))) E.push_back(es.values(j));
    const auto nx = NsEvaluator(ex, r.x, r.L, n, r.m, p).evaluate(E);
    const auto ny = NsEvaluator(ey, r.y, r.L, n, r.m, p).evaluate(E);
    Out o;
    for (size_t i = 0; i < E.size(); ++i) {
      if (!nx[i].ns && !ny[i].ns) o.singular = true;
      o.floor = std::max({o.floor, nx[i].noise_floor, ny[i].noise_floor});
    }
    o.q = ef_correlator(es, r.x, r.y, r.window);
    return o;
  });
  size_t hits = 0;
  double sum = 0.0;
  for (const auto& o : outs) {
    hits += o.singular ? 1 : 0;
    sum += o.q;
    if (!o.singular) {
      rep.max_q_regular = std::max(rep.max_q_regular, o.q);
      const double slack = 2.0 * static_cast<double>(rep.boundary_pairs) * o.floor;
      if (o.q > rep.regular_bound * (1 + 1e-9) + slack) rep.regular_holds = false;
    }
  }
  rep.singular_pair = wilson(hits, r.trials);
  rep.mean_q = sum / static_cast<double>(r.trials);
  rep.bound = finite_volume_dl_bound(rep.boundary_pairs, r.L, rep.effective_mass, rep.singular_pair.hi);
  rep.holds = rep.mean_q <= rep.bound;
  return rep;
}

}  // namespace mpdsa
