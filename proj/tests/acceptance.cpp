// Acceptance checks 1-10. One line per criterion; tolerances and budgets are pinned below.
// Exit status is 0 when every criterion passes or fails only as a documented known failure.

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>

#include "app.hpp"

using namespace mpdsa;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kSpectrumTol1 = 1e-9;
constexpr double kBudget1 = 1.0;
constexpr double kKroneckerTol = 1e-10;
constexpr double kBudget2 = 30.0;
constexpr double kGriSlack = 1e-9;
constexpr double kBudget3 = 120.0;
constexpr double kBudget4 = 60.0;
constexpr double kBudget5 = 600.0;
constexpr double kZ6 = 3.0;
constexpr double kBudget6 = 60.0;
constexpr double kBudget7 = 300.0;
constexpr double kCorrelatorTol = 1e-10;
constexpr double kBudget9 = 60.0;

// Known failures, each analysed in the README. A pass on one of these is reported as XPASS.
const std::set<int> kKnownRed{5};

const LatticeGeometry Z1 = LatticeGeometry::lattice(1);
const LatticeGeometry Z2 = LatticeGeometry::lattice(2);

struct Outcome {
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

fs::path source_path(const std::string& rel) { return fs::path(MPDSA_SOURCE_DIR) / rel; }

io::RunConfig load(const std::string& name) { return io::load_run_config(source_path("configs/" + name).string()); }

template <class T>
const T& experiment(const io::RunConfig& c) {
  for (const auto& e : c.experiments)
    if (const auto* x = std::get_if<T>(&e.params)) return *x;
  throw std::runtime_error("config lacks the expected experiment");
}

Eigen::VectorXd sorted_eigs(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> s(m, Eigen::EigenvaluesOnly);
  return s.eigenvalues();
}

// ---------------------------------------------------------------------------
// 8: correlator invariants, collected from the eigensystems of criteria 5 and 7

struct CorrelatorTally {
  std::mutex mu;
  size_t instances = 0;
  size_t bessel = 0, completeness = 0, propagator = 0;
  double worst_q = 0.0, worst_delta = 0.0, worst_excess = -INFINITY;
  double seconds = 0.0;
};

CorrelatorTally g_corr;
const std::vector<double> g_t_grid = default_t_grid();

void inspect_correlators(const EigenSystem& es, const Configuration& center) {
  Stopwatch sw;
  const Eigen::Index n = es.size();
  const Eigen::Index ic = es.index_of(center);
  Eigen::Index ifar = ic;
  int far = -1;
  for (Eigen::Index k = 0; k < n; ++k)
    if (int r = rho(es.geometry, center, es.members[k]); r > far) far = r, ifar = k;
  const Eigen::MatrixXd a = es.vectors.cwiseAbs();
  size_t bessel = 0, completeness = 0, propagator = 0;
  double wq = 0.0, wd = 0.0, we = -INFINITY;
  for (Eigen::Index i : {ic, ifar}) {
    const Eigen::VectorXd q = a * a.row(i).transpose();  // sum_j |psi_j(x) psi_j(y)| over all y
    const Eigen::VectorXd s = es.vectors * es.vectors.row(i).transpose();
    for (Eigen::Index k = 0; k < n; ++k) {
      wq = std::max(wq, q(k));
      if (q(k) > 1 + kCorrelatorTol) ++bessel;
      const double dev = std::abs(s(k) - (k == i ? 1.0 : 0.0));
      wd = std::max(wd, dev);
      if (dev >= kCorrelatorTol) ++completeness;
    }
  }
  for (const auto& [x, y] : {std::pair{ic, ic}, std::pair{ic, ifar}}) {
    const double q = ef_correlator(es, es.members[x], es.members[y]);
    const double p = propagator_sup(es, es.members[x], es.members[y], g_t_grid);
    we = std::max(we, p - q);
    if (p > q + kCorrelatorTol) ++propagator;
  }
  std::lock_guard lock(g_corr.mu);
  ++g_corr.instances;
  g_corr.bessel += bessel;
  g_corr.completeness += completeness;
  g_corr.propagator += propagator;
  g_corr.worst_q = std::max(g_corr.worst_q, wq);
  g_corr.worst_delta = std::max(g_corr.worst_delta, wd);
  g_corr.worst_excess = std::max(g_corr.worst_excess, we);
  g_corr.seconds += sw.seconds();
}

// ---------------------------------------------------------------------------
// 1: sector Laplacian vs antisymmetric part of the box Laplacian

Outcome criterion1() {
  Stopwatch sw;
  constexpr int n = 8;
  std::vector<Configuration> pts;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < a; ++b) pts.push_back(Configuration::line({a, b}));
  const ConfigSet sector(pts);
  const Eigen::VectorXd lib = diagonalize(laplacian_matrix(Z1, sector, DiagonalConvention::fixed)).values;

  // distinguishable particles on the 8 x 8 box, Dirichlet outside
  Eigen::MatrixXd box = Eigen::MatrixXd::Zero(n * n, n * n);
  auto id = [](int a, int b) { return a * n + b; };
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      box(id(a, b), id(a, b)) = 4.0;
      for (auto [da, db] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
        const int a2 = a + da, b2 = b + db;
        if (a2 >= 0 && a2 < n && b2 >= 0 && b2 < n) box(id(a, b), id(a2, b2)) = -1.0;
      }
    }
  // orthonormal basis of antisymmetric functions: (e_ab - e_ba) / sqrt 2, a > b
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(n * n, n * (n - 1) / 2);
  int col = 0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < a; ++b, ++col) {
      basis(id(a, b), col) = M_SQRT1_2;
      basis(id(b, a), col) = -M_SQRT1_2;
    }
  const Eigen::VectorXd oracle = sorted_eigs(basis.transpose() * box * basis);
  // the antisymmetric subspace is invariant: no leakage into the symmetric part
  const Eigen::MatrixXd proj = basis * basis.transpose();
  const double leak = ((Eigen::MatrixXd::Identity(n * n, n * n) - proj) * box * proj).cwiseAbs().maxCoeff();
  Outcome o;
  o.seconds = sw.seconds();
  const double diff = lib.size() == oracle.size() ? (lib - oracle).cwiseAbs().maxCoeff() : INFINITY;
  o.pass = diff < kSpectrumTol1 && leak < kSpectrumTol1 && o.seconds < kBudget1;
  o.detail = fmt("28 sector eigenvalues, max discrepancy %.2e (limit %.0e), leakage %.1e", diff, kSpectrumTol1, leak);
  return o;
}

// ---------------------------------------------------------------------------
// 2: Kronecker-sum law on partially interactive balls

Outcome criterion2() {
  Stopwatch sw;
  std::mt19937_64 rng(2);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  double worst = 0.0;
  size_t balls = 0, rejected = 0;
  for (int i = 0; i < 50; ++i) {
    const int N = 2 + i % 2, L = 1 + (i / 2) % 3, r0 = pick(1, 2);
    HamiltonianSpec spec;
    spec.N = N;
    spec.g = 5.0;
    spec.interaction = InteractionModel::step(std::uniform_real_distribution<double>(0.5, 2.0)(rng), r0);
    const auto p = ScalingParams::defaults(N, 1);
    const int gap = std::max(2 * L + r0, static_cast<int>(p.pi_threshold(L))) + pick(1, 6);
    std::vector<int> sites{0};
    if (N == 3) sites.push_back(pick(1, 3));
    sites.push_back(sites.back() + gap);
    if (N == 3 && pick(0, 1)) sites = {0, gap, gap + pick(1, 3)};
    std::sort(sites.rbegin(), sites.rend());
    const Configuration c = Configuration::line(sites);
    const Ball ball = enumerate_ball(Z1, c, L);
    if (classify_ball(Z1, ball, p) != BallClass::PI) {
      ++rejected;
      continue;
    }
    const Decomposition d = canonical_decomposition(Z1, ball, p);
    if (d.separation <= 2 * L + r0) {
      ++rejected;
      continue;
    }
    const FieldSample v = sample_field(FieldModel::iid(Marginal::uniform), projection(ball.members), 1000 + i);
    const Eigen::VectorXd joint = eigenvalues(assemble_hamiltonian(spec, v, ball).matrix);
    const Eigen::VectorXd ea = sorted_eigs(assemble_hamiltonian(spec, v, enumerate_ball(Z1, d.x_j, L)).matrix);
    const Eigen::VectorXd eb = sorted_eigs(assemble_hamiltonian(spec, v, enumerate_ball(Z1, d.x_jc, L)).matrix);
    std::vector<double> sums;
    for (double a : ea)
      for (double b : eb) sums.push_back(a + b);
    std::sort(sums.begin(), sums.end());
    if (static_cast<Eigen::Index>(sums.size()) != joint.size()) {
      worst = INFINITY;
      continue;
    }
    for (Eigen::Index k = 0; k < joint.size(); ++k) worst = std::max(worst, std::abs(joint(k) - sums[static_cast<size_t>(k)]));
    ++balls;
  }
  Outcome o;
  o.seconds = sw.seconds();
  o.pass = balls == 50 && worst < kKroneckerTol && o.seconds < kBudget2;
  o.detail = fmt("%zu PI balls (N=2,3, L=1..3), %zu rejected, max discrepancy %.2e (limit %.0e)", balls, rejected, worst,
                 kKroneckerTol);
  return o;
}

// ---------------------------------------------------------------------------
// 3: geometric resolvent inequality, Green function and eigenfunction forms

Outcome criterion3() {
  Stopwatch sw;
  constexpr int L = 8, ell = 2;
  size_t green = 0, green_resolved = 0, green_bad = 0, ef = 0, ef_resolved = 0, ef_bad = 0, resonant = 0;
  for (uint64_t seed = 1; seed <= 200; ++seed) {
    std::mt19937_64 rng(seed);
    HamiltonianSpec spec;
    spec.N = 2;
    spec.g = seed % 2 ? 3.0 : 30.0;
    spec.interaction = InteractionModel::step(1.0, 1);
    const Configuration c = Configuration::line({std::uniform_int_distribution<int>(1, 40)(rng), 0});
    const Ball ball = enumerate_ball(Z1, c, L);
    const FieldSample v = sample_field(FieldModel::iid(Marginal::uniform), projection(ball.members), seed);
    const OperatorMatrix big = assemble_hamiltonian(spec, v, ball);
    const EigenSystem el = diagonalize(big);
    // x with B_l(x) inside the big ball
    std::vector<Configuration> inner;
    for (const auto& x : ball.members) {
      const Ball b = enumerate_ball(Z1, x, ell);
      if (std::all_of(b.members.begin(), b.members.end(), [&](const auto& y) { return ball.members.contains(y); }))
        inner.push_back(x);
    }
    const Configuration x = inner[std::uniform_int_distribution<size_t>(0, inner.size() - 1)(rng)];
    const Ball bs = enumerate_ball(Z1, x, ell);
    const EigenSystem es = diagonalize(big.restrict_to(bs));
    std::uniform_real_distribution<double> energy(el.values(0) - 1, el.values(el.size() - 1) + 1);
    for (int k = 0; k < 5; ++k) {
      Configuration y;
      do y = ball.members[std::uniform_int_distribution<size_t>(0, ball.members.size() - 1)(rng)];
      while (bs.members.contains(y));
      const auto r = verify_gri(es, el, energy(rng), x, y, kGriSlack);
      ++green;
      green_resolved += r.resolved;
      green_bad += !r.satisfied;
    }
    for (Eigen::Index j = 0; j < el.size(); ++j) {
      try {
        const auto r = verify_gri_eigenfunction(es, el, j, x, ell, kGriSlack);
        ++ef;
        ef_resolved += r.resolved;
        ef_bad += !r.satisfied;
      } catch (const ResonanceError&) {
        ++resonant;
      }
    }
  }
  Outcome o;
  o.seconds = sw.seconds();
  o.pass = green_bad == 0 && ef_bad == 0 && green > 0 && ef > 0 && o.seconds < kBudget3;
  o.detail = fmt("200 instances: Green form %zu checks (%zu resolved) %zu violations; eigenfunction form %zu checks "
                 "(%zu resolved, %zu resonant skipped) %zu violations",
                 green, green_resolved, green_bad, ef, ef_resolved, resonant, ef_bad);
  return o;
}

// ---------------------------------------------------------------------------
// 4: radial descent, synthetic subharmonic functions and eigenfunction-correlator kernels

Outcome criterion4() {
  Stopwatch sw;
  size_t synth_bad = 0;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> U(0, 1);
  for (int t = 0; t < 100; ++t) {
    // max of a_k q0^{dist(., z_k)} over sources outside the ball, times mild noise
    const auto& g = t % 2 ? Z2 : Z1;
    const int L = 3 + static_cast<int>(U(rng) * 6);
    const int ell = 1 + static_cast<int>(U(rng) * 2);
    const Configuration u = g.coords() == 1 ? Configuration::line({0}) : Configuration::from_sites({{0, 0}});
    const Ball dom = enumerate_ball(g, u, L);
    const double q0 = 0.2 + 0.6 * U(rng);
    std::vector<std::pair<Site, double>> src;
    for (int k = 0; k < 3; ++k) {
      Site z(static_cast<size_t>(g.coords()));
      for (auto& cz : z) cz = static_cast<int>(std::lround((U(rng) * 2 - 1) * (L + 6)));
      z[0] = (U(rng) < 0.5 ? -1 : 1) * (L + 1 + static_cast<int>(U(rng) * 4));
      src.emplace_back(z, 0.5 + U(rng));
    }
    std::vector<double> f;
    for (const auto& y : dom.members) {
      double val = 0;
      for (const auto& [z, a] : src) val = std::max(val, a * std::pow(q0, g.site_distance(y.site(0), z)));
      f.push_back(val * (0.9 + 0.1 * U(rng)));
    }
    const auto probe = subharmonic_check(g, f, dom.members, ell, 0.999999);
    const double q = std::min(0.999999, probe.worst_ratio * (1 + 1e-12));
    const bool sub = probe.worst_ratio < 1.0 && subharmonic_check(g, f, dom.members, ell, q).holds;
    const double M = *std::max_element(f.begin(), f.end());
    const double fu = f[static_cast<size_t>(dom.members.index_of(u))];
    if (!sub || fu > radial_descent_bound(L, ell, q, M) * (1 + 1e-12)) ++synth_bad;
  }

  // kernels |psi_j(x) psi_j(y0)| of strongly disordered single-particle balls, j peaked at y0
  constexpr int L = 24, ell = 1;
  constexpr double mass = 2.0;
  HamiltonianSpec spec;
  spec.N = 1;
  spec.g = 100.0;
  const auto p = ScalingParams::defaults(1, 1);
  const Configuration c = Configuration::line({0}), x0 = Configuration::line({-8}), y0 = Configuration::line({10});
  const Ball ball = enumerate_ball(Z1, c, L);
  const int R = std::min(rho(Z1, x0, y0) - (ell + 2), L - rho(Z1, c, x0) - ell);
  size_t kernels = 0, drawn = 0, kernel_bad = 0;
  for (uint64_t seed = 1; kernels < 100 && seed <= 1000; ++seed) {
    ++drawn;
    const FieldSample v = sample_field(FieldModel::iid(Marginal::uniform), projection(ball.members), seed);
    const OperatorMatrix h = assemble_hamiltonian(spec, v, ball);
    const EigenSystem es = diagonalize(h);
    Eigen::Index j;
    es.vectors.row(es.index_of(y0)).cwiseAbs().maxCoeff(&j);
    const auto r = check_kernel_descent(h, es, j, x0, y0, R, ell, mass, p);
    if (!r.hypotheses) continue;
    ++kernels;
    if (!r.subharmonic.holds || !r.bound_holds) ++kernel_bad;
  }
  Outcome o;
  o.seconds = sw.seconds();
  o.pass = synth_bad == 0 && kernels == 100 && kernel_bad == 0 && o.seconds < kBudget4;
  o.detail = fmt("synthetic 100 functions, %zu violations; kernels %zu accepted of %zu drawn, %zu violations", synth_bad,
                 kernels, drawn, kernel_bad);
  return o;
}

// ---------------------------------------------------------------------------
// 5: implication audit at (L0, L1) = (6, 16)

Outcome criterion5() {
  Stopwatch sw;
  const io::RunConfig cfg = load("criterion5_audit.json");
  const auto& x = experiment<io::AuditExperiment>(cfg);
  ScalingAuditRequest req;
  req.center_for = [mix = *x.mix](size_t t) { return cli::mixed_center(mix, t); };
  req.ladder = x.ladder;
  req.k_max = x.k_max;
  req.m = x.m.value_or(cfg.setup.params.m);
  req.trials = cfg.trials;
  req.seed = cfg.seed;
  req.matrix_cap = x.matrix_cap;
  req.threads = cfg.threads;
  req.schedule = cfg.schedule;
  req.audit = x.audit;
  const double hook_before = g_corr.seconds;
  req.inspect = [&](size_t t, const EigenSystem& es) { inspect_correlators(es, req.center_for(t)); };
  const auto rows = run_scaling_audit(cfg.setup, req);
  Outcome o;
  o.seconds = sw.seconds() - (g_corr.seconds - hook_before);
  size_t violations = 0;
  std::string lemmas;
  for (const auto& row : rows) {
    violations += row.violations;
    if (row.k == 0) continue;
    for (const auto& [name, t] : row.lemmas)
      lemmas += fmt(" %s: %zu held/%zu checked/%zu viol;", name.c_str(), t.hypotheses_held, t.conclusions_checked,
                    t.violations);
  }
  const bool complete = rows.size() == 2 && !rows.back().skipped;
  o.pass = complete && violations == 0 && o.seconds < kBudget5;
  o.detail = fmt("%zu trials at L=%d->%d, %zu violations;", cfg.trials, x.ladder.front(), x.ladder.back(), violations) +
             lemmas;
  for (const auto& row : rows)
    for (size_t i = 0; i < std::min<size_t>(2, row.witnesses.size()); ++i)
      o.detail += fmt("\n      e.g. lemma %s at E=%.6g: %.3e > %.3e (%s)", row.witnesses[i].lemma.c_str(),
                      row.witnesses[i].energy, row.witnesses[i].lhs, row.witnesses[i].rhs,
                      row.witnesses[i].detail.c_str());
  return o;
}

// ---------------------------------------------------------------------------
// 6: eigenvalue concentration for two single-site balls

Outcome criterion6() {
  Stopwatch sw;
  const io::RunConfig cfg = load("criterion6_evc.json");
  const auto& x = experiment<io::EvcExperiment>(cfg);
  const Ball bx = enumerate_ball(Z1, x.center_x, x.L), by = enumerate_ball(Z1, x.center_y, x.L);
  const auto rep = evc_experiment(cfg.setup, bx, by, cfg.trials, x.s_grid, cfg.seed, x.constants, cfg.threads);
  // oracle distances straight from the field: |g V(a) - g V(b)|
  const double g = cfg.setup.spec.g;
  std::vector<double> d;
  size_t mismatch = 0;
  for (size_t t = 0; t < cfg.trials; ++t) {
    const FieldSample v = sample_for(cfg.setup, {&bx.members, &by.members}, rng::trial_seed(cfg.seed, t));
    d.push_back(std::abs(g * v.values.at(x.center_x.site_vec(0)) - g * v.values.at(x.center_y.site_vec(0))));
    if (std::abs(d.back() - rep.distances[t]) > 1e-12 * std::max(1.0, d.back())) ++mismatch;
  }
  const double n = static_cast<double>(cfg.trials);
  double worst_z = 0.0, prev = 0.0;
  bool within = true, monotone = rep.monotone;
  for (size_t i = 0; i < x.s_grid.size(); ++i) {
    const double s = x.s_grid[i], u = s / g;
    const double cdf = static_cast<double>(std::count_if(d.begin(), d.end(), [&](double e) { return e <= s; })) / n;
    const double cf = 2 * u - u * u;
    const double se = std::sqrt(cf * (1 - cf) / n);
    worst_z = std::max(worst_z, std::abs(cdf - cf) / se);
    within = within && std::abs(cdf - cf) <= kZ6 * se;
    monotone = monotone && rep.cdf[i] >= prev && cdf == rep.cdf[i];
    prev = rep.cdf[i];
  }
  Outcome o;
  o.seconds = sw.seconds();
  o.pass = mismatch == 0 && within && monotone && o.seconds < kBudget6;
  o.detail = fmt("%zu trials, s/g in [%.2f, %.2f] (%zu points): worst |z| %.2f (limit %.0f), monotone %s, distance "
                 "mismatches %zu",
                 cfg.trials, x.s_grid.front() / g, x.s_grid.back() / g, x.s_grid.size(), worst_z, kZ6,
                 monotone ? "yes" : "no", mismatch);
  return o;
}

// ---------------------------------------------------------------------------
// 7: singular-ball probability falls with disorder strength

Outcome criterion7() {
  Stopwatch sw;
  const io::RunConfig cfg = load("criterion7_ems.json");
  const auto& x = experiment<io::ProbabilityExperiment>(cfg);
  const EventQuery q{x.event, x.center, x.L.value_or(cfg.setup.params.L0), x.E, x.m.value_or(cfg.setup.params.m), x.ell,
                     x.partner};
  const double hook_before = g_corr.seconds;
  auto estimate = [&](double g, const FieldModel& field, bool hook) {
    io::RunConfig c = cli::with_axis(cfg, "g", g);
    c.setup.field = field;
    TrialInspector inspect;
    if (hook) inspect = [&](size_t, const EigenSystem& es) { inspect_correlators(es, q.center); };
    return estimate_event_probability(c.setup, q, cfg.trials, cfg.seed, cfg.threads, inspect).estimate;
  };
  const auto weak = estimate(3.0, cfg.setup.field, true), strong = estimate(30.0, cfg.setup.field, true);
  // the uniform [0, 1] marginal puts E = 0 at the spectral edge; shown for reference only
  const auto uw = estimate(3.0, FieldModel::iid(Marginal::uniform), false);
  const auto us = estimate(30.0, FieldModel::iid(Marginal::uniform), false);
  Outcome o;
  o.seconds = sw.seconds() - (g_corr.seconds - hook_before);
  o.pass = strong.hi < weak.lo && o.seconds < kBudget7;
  o.detail = fmt("gaussian marginal, %zu trials each: g=3 p=%.3f [%.3f, %.3f], g=30 p=%.3f [%.3f, %.3f]; uniform "
                 "marginal (reference): g=3 p=%.3f, g=30 p=%.3f",
                 cfg.trials, weak.p_hat, weak.lo, weak.hi, strong.p_hat, strong.lo, strong.hi, uw.p_hat, us.p_hat);
  return o;
}

// ---------------------------------------------------------------------------
// 8: correlator invariants over the instances of 5 and 7

Outcome criterion8() {
  Outcome o;
  o.seconds = g_corr.seconds;
  o.pass = g_corr.instances > 0 && g_corr.bessel == 0 && g_corr.completeness == 0 && g_corr.propagator == 0;
  o.detail = fmt("%zu eigensystems: max Q %.12f, max completeness defect %.1e, max propagator - Q %.1e (limit %.0e); "
                 "violations %zu/%zu/%zu",
                 g_corr.instances, g_corr.worst_q, g_corr.worst_delta, g_corr.worst_excess, kCorrelatorTol,
                 g_corr.bessel, g_corr.completeness, g_corr.propagator);
  return o;
}

// ---------------------------------------------------------------------------
// 9: cross-interaction of split configurations vs epsilon_bound

Outcome criterion9() {
  Stopwatch sw;
  constexpr int N = 2;
  const auto model = InteractionModel::subexponential(1.0, 1.0, 0.0);
  auto bu = [](const std::vector<int>& xs) {  // ordered pairs, C e^{-c r}
    double e = 0.0;
    for (size_t i = 0; i < xs.size(); ++i)
      for (size_t j = 0; j < xs.size(); ++j)
        if (i != j) e += std::exp(-std::abs(xs[i] - xs[j]));
    return e;
  };
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> site(-60, 60);
  size_t splits = 0, bad = 0, lib_mismatch = 0;
  double worst_ratio = 0.0;
  for (int R : {2, 4, 8}) {
    const double eps = epsilon_bound(model, N, R);
    for (int k = 0; k < 200; ++k) {
      std::vector<int> xs;
      do {
        xs.clear();
        std::set<int> used;
        while (static_cast<int>(used.size()) < N) used.insert(site(rng));
        xs.assign(used.rbegin(), used.rend());
      } while (xs.front() - xs.back() <= R);
      if (std::abs(interaction_energy(Z1, Configuration::line(xs), model) - bu(xs)) > 1e-14) ++lib_mismatch;
      for (uint32_t mask = 1; mask + 1 < (1u << N); mask += 2) {  // particle 0 always in the first part
        std::vector<int> a, b;
        for (int j = 0; j < N; ++j) (mask >> j & 1u ? a : b).push_back(xs[static_cast<size_t>(j)]);
        int sep = INT32_MAX;
        for (int s : a)
          for (int t : b) sep = std::min(sep, std::abs(s - t));
        if (sep <= R) continue;
        ++splits;
        const double cross = std::abs(bu(xs) - bu(a) - bu(b));
        worst_ratio = std::max(worst_ratio, cross / eps);
        if (cross > eps) ++bad;
      }
    }
  }
  Outcome o;
  o.seconds = sw.seconds();
  o.pass = bad == 0 && lib_mismatch == 0 && splits > 0 && o.seconds < kBudget9;
  o.detail = fmt("%zu splits over R in {2,4,8}: %zu violations, max |cross| / eps %.3f, library energy mismatches %zu",
                 splits, bad, worst_ratio, lib_mismatch);
  return o;
}

// ---------------------------------------------------------------------------
// 10: byte-identical reruns through the CLI

std::map<std::string, std::string> csv_checksums(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  const json m = json::parse(in);
  std::map<std::string, std::string> out;
  for (const auto& f : m["files"]) {
    const std::string name = f["file"];
    if (name.size() > 4 && name.substr(name.size() - 4) == ".csv") out[name] = f["sha256"];
  }
  return out;
}

Outcome criterion10() {
  Stopwatch sw;
  const fs::path root = fs::temp_directory_path() / ("mpdsa_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  struct Case {
    std::string command, config, trials;
  };
  const std::vector<Case> cases{{"audit", "criterion5_audit.json", "6"},
                                {"evc", "criterion6_evc.json", "5000"},
                                {"sweep", "criterion7_ems.json", "200"},
                                {"run", "demo.json", "40"}};
  size_t files = 0, mismatched = 0, failed = 0;
  for (const auto& c : cases) {
    std::vector<std::map<std::string, std::string>> sums;
    for (const char* threads : {"1", "1", "2"}) {
      const fs::path out = root / (c.command + "_" + std::to_string(sums.size()));
      const std::string cfg = source_path("configs/" + c.config).string(), o = out.string();
      const char* argv[] = {"mpdsa", c.command.c_str(), "--config", cfg.c_str(), "--out", o.c_str(),
                            "--trials", c.trials.c_str(), "--threads", threads};
      std::ostringstream log, err;
      const int code = cli::run_cli(10, argv, log, err);
      if (code != cli::kOk && code != cli::kViolations) {
        ++failed;
        break;
      }
      sums.push_back(csv_checksums(out));
    }
    if (sums.size() != 3) continue;
    files += sums[0].size();
    for (size_t k = 1; k < sums.size(); ++k)
      for (const auto& [name, hash] : sums[0])
        if (sums[k].count(name) == 0 || sums[k].at(name) != hash) ++mismatched;
  }
  fs::remove_all(root);
  Outcome o;
  o.seconds = sw.seconds();
  o.pass = failed == 0 && mismatched == 0 && files > 0;
  o.detail = fmt("%zu configs x 3 runs (threads 1, 1, 2): %zu CSV files, %zu checksum mismatches, %zu failed runs",
                 cases.size(), files, mismatched, failed);
  return o;
}

}  // namespace

// Optional arguments select criteria by number; 8 reads the instances of 5 and 7.
int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
      {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}};
  int unexpected = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const bool known = kKnownRed.count(id) > 0;
    const char* tag = o.pass ? (known ? "XPASS" : "PASS") : (known ? "FAIL (known)" : "FAIL");
    std::cout << "criterion " << id << ": " << tag << fmt(" [%.1fs] ", o.seconds) << o.detail << std::endl;
    if (!o.pass && !known) ++unexpected;
  }
  std::cout << (unexpected ? "acceptance: unexpected failures: " + std::to_string(unexpected)
                           : std::string("acceptance: no unexpected failures"))
            << std::endl;
  return unexpected ? 1 : 0;
}
