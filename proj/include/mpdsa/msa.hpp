#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mpdsa/config_space.hpp"
#include "mpdsa/disorder.hpp"
#include "mpdsa/operators.hpp"
#include "mpdsa/params.hpp"
#include "mpdsa/spectral.hpp"

namespace mpdsa {

// ---------------------------------------------------------------------------
// Sub-ball bookkeeping

struct SubBallPolicy {
  std::vector<int> radii;  // empty: ceil(L^{1/alpha}), ladder values in between, and L
  int stride = 0;          // 0: max(1, r / 2)
};

inline std::vector<int> cnr_radii(int L, const ScalingParams& p, const SubBallPolicy& pol = {}) {
  std::set<int> out;
  if (!pol.radii.empty()) {
    for (int r : pol.radii)
      if (r >= 0 && r <= L) out.insert(r);
    return {out.begin(), out.end()};
  }
  const int r0 = std::min(p.cnr_min_radius(L), L);
  out.insert(r0);
  out.insert(L);
  if (p.L0 > 2) {
    double v = p.L0;
    while (v <= L) {
      if (v >= r0) out.insert(static_cast<int>(v));
      v = std::ceil(std::pow(v, p.alpha) - 1e-12);
    }
  }
  return {out.begin(), out.end()};
}

inline int sub_ball_stride(int r, const SubBallPolicy& pol = {}) { return pol.stride > 0 ? pol.stride : std::max(1, r / 2); }

/// Centers v of radius-r sub-balls inside the ball: rho(center, v) <= R - r, coordinate offsets on a stride grid.
inline std::vector<Configuration> sub_ball_centers(const LatticeGeometry& g, const Ball& ball, int r, int stride) {
  std::vector<Configuration> out;
  if (r > ball.radius) return out;
  const auto& c = ball.center.flat();
  for (const auto& v : ball.members) {
    if (rho(g, ball.center, v) > ball.radius - r) continue;
    if (g.is_lattice() && stride > 1) {
      bool on = true;
      for (size_t i = 0; i < c.size() && on; ++i) on = (v.flat()[i] - c[i]) % stride == 0;
      if (!on) continue;
    }
    out.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Non-resonance

/// ||G(E)|| <= e^{L^beta}, i.e. dist(E, spectrum) >= e^{-L^beta}.
inline bool is_E_NR(const Eigen::VectorXd& values, double E, int L, const ScalingParams& p) {
  return spectral_distance(values, E) >= p.nr_distance(L);
}

inline bool is_E_NR(const EigenSystem& es, double E, int L, const ScalingParams& p) { return is_E_NR(es.values, E, L, p); }

inline bool is_E_NR(const EigenSystem& es, double E, const ScalingParams& p) {
  if (es.radius < 0) throw InputError("is_E_NR: eigensystem carries no ball radius");
  return is_E_NR(es.values, E, es.radius, p);
}

struct SubBallSpectrum {
  Configuration center;
  int radius = 0;
  Eigen::VectorXd values;
};

/// Spectra of the CNR sub-balls of one ball; answers E-CNR queries by binary search.
class CnrAnalyzer {
 public:
  CnrAnalyzer(const OperatorMatrix& h, const ScalingParams& p, const SubBallPolicy& pol = {},
              const EigenSystem* whole = nullptr)
      : p_(p) {
    if (!h.center || h.radius < 0) throw InputError("CnrAnalyzer: operator is not attached to a ball");
    const Ball big{*h.center, h.radius, BallMetric::max_distance, h.members};
    for (int r : cnr_radii(h.radius, p, pol)) {
      if (r == h.radius) {
        SubBallSpectrum s{*h.center, r, whole ? whole->values : eigenvalues(h.matrix)};
        subs_.push_back(std::move(s));
        continue;
      }
      for (const auto& v : sub_ball_centers(h.geometry, big, r, sub_ball_stride(r, pol))) {
        const Ball b = enumerate_ball(h.geometry, v, r);
        subs_.push_back({v, r, eigenvalues(h.restrict_to(b.members).matrix)});
      }
    }
  }

  /// Index of the first E-resonant sub-ball, if any.
  std::optional<size_t> resonant(double E) const {
    for (size_t i = 0; i < subs_.size(); ++i)
      if (!is_E_NR(subs_[i].values, E, subs_[i].radius, p_)) return i;
    return std::nullopt;
  }
  bool is_cnr(double E) const { return !resonant(E); }
  const std::vector<SubBallSpectrum>& sub_balls() const { return subs_; }

 private:
  ScalingParams p_;
  std::vector<SubBallSpectrum> subs_;
};

inline bool is_E_CNR(const OperatorMatrix& h, double E, const ScalingParams& p, const SubBallPolicy& pol = {}) {
  return CnrAnalyzer(h, p, pol).is_cnr(E);
}

// ---------------------------------------------------------------------------
// Non-singularity

struct NsReport {
  bool ns = false;
  bool singular_by_convention = false;  // E on the spectrum: G undefined, counted as S
  bool resolved = true;                 // |worst - threshold| exceeds the rounding floor
  double worst = 0.0;                   // max over the inner boundary of |G(u, y; E)|
  double threshold = 0.0;
  double noise_floor = 0.0;
  std::optional<Configuration> worst_y;
};

/// Boundary Green values G(u, y; E), y on the inner boundary, for many energies of one ball.
class NsEvaluator {
 public:
  NsEvaluator(const EigenSystem& es, const Configuration& u, int L, int n, double mass, const ScalingParams& p)
      : es_(&es), L_(L), threshold_(p.ns_threshold(mass, L, n)) {
    const auto ui = es.index_of(u);
    if (ui < 0) throw GeometryError("NsEvaluator: center outside the ball");
    boundary_ = inner_boundary(es.geometry, es.members);
    const Eigen::Index nn = es.size();
    // drop eigenpairs whose total contribution stays far below the threshold at NR energies
    const double tol = 1e-3 * threshold_ * p.nr_distance(L) / static_cast<double>(std::max<Eigen::Index>(nn, 1));
    for (Eigen::Index j = 0; j < nn; ++j) {
      double mb = 0.0;
      for (int b : boundary_) mb = std::max(mb, std::abs(es.vectors(b, j)));
      const double c = std::abs(es.vectors(ui, j)) * mb;
      if (c > tol) kept_.push_back(j);
      else dropped_ += c;
      coef_.push_back(es.vector_error(j) * (std::abs(es.vectors(ui, j)) + es.vector_max(j)));
    }
    psi_u_.resize(static_cast<Eigen::Index>(kept_.size()));
    psi_b_.resize(static_cast<Eigen::Index>(boundary_.size()), static_cast<Eigen::Index>(kept_.size()));
    for (size_t k = 0; k < kept_.size(); ++k) {
      psi_u_(static_cast<Eigen::Index>(k)) = es.vectors(ui, kept_[k]);
      for (size_t b = 0; b < boundary_.size(); ++b)
        psi_b_(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) = es.vectors(boundary_[b], kept_[k]);
    }
  }

  double threshold() const { return threshold_; }
  const std::vector<int>& boundary() const { return boundary_; }

  std::vector<NsReport> evaluate(const std::vector<double>& energies) const {
    std::vector<NsReport> out(energies.size());
    const double cutoff = kResonanceCutoff * std::max(1.0, es_->norm);
    const double eps = std::numeric_limits<double>::epsilon();
    const Eigen::Index nn = es_->size();
    constexpr size_t chunk = 512;
    for (size_t s0 = 0; s0 < energies.size(); s0 += chunk) {
      const size_t s1 = std::min(energies.size(), s0 + chunk);
      const Eigen::Index w = static_cast<Eigen::Index>(s1 - s0);
      Eigen::MatrixXd weights(psi_u_.size(), w);
      std::vector<double> dist(s1 - s0);
      for (size_t s = s0; s < s1; ++s) {
        const double E = energies[s];
        dist[s - s0] = spectral_distance(es_->values, E);
        const bool sing = dist[s - s0] <= cutoff;
        for (Eigen::Index k = 0; k < psi_u_.size(); ++k)
          weights(k, static_cast<Eigen::Index>(s - s0)) =
              sing ? 0.0 : psi_u_(k) / (es_->values(kept_[static_cast<size_t>(k)]) - E);
      }
      const Eigen::MatrixXd gb = psi_b_ * weights;
      for (size_t s = s0; s < s1; ++s) {
        NsReport& r = out[s];
        const Eigen::Index col = static_cast<Eigen::Index>(s - s0);
        r.threshold = threshold_;
        if (dist[s - s0] <= cutoff) {
          r.singular_by_convention = true;
          r.ns = false;
          r.worst = INFINITY;
          r.noise_floor = INFINITY;
          continue;
        }
        Eigen::Index at = 0;
        r.worst = boundary_.empty() ? 0.0 : gb.col(col).cwiseAbs().maxCoeff(&at);
        if (!boundary_.empty()) r.worst_y = es_->members[static_cast<size_t>(boundary_[static_cast<size_t>(at)])];
        double gap_floor = 4.0 * static_cast<double>(nn) * eps / dist[s - s0];
        for (Eigen::Index j = 0; j < nn; ++j) gap_floor += coef_[static_cast<size_t>(j)] / std::abs(es_->values(j) - energies[s]);
        r.noise_floor = std::min(gap_floor, backward_green_floor(*es_, dist[s - s0])) + dropped_ / dist[s - s0];
        r.ns = r.worst <= threshold_ + r.noise_floor;
        r.resolved = std::abs(r.worst - threshold_) > r.noise_floor;
      }
    }
    return out;
  }

  NsReport evaluate(double E) const { return evaluate(std::vector<double>{E}).front(); }

 private:
  const EigenSystem* es_;
  int L_;
  double threshold_;
  std::vector<int> boundary_;
  std::vector<Eigen::Index> kept_;
  std::vector<double> coef_;
  double dropped_ = 0.0;
  Eigen::VectorXd psi_u_;
  Eigen::MatrixXd psi_b_;
};

/// (E, m)-NS of the ball behind es (center and radius taken from es).
inline NsReport is_EmNS(const EigenSystem& es, double E, double mass, const ScalingParams& p) {
  if (!es.center || es.radius < 0) throw InputError("is_EmNS: eigensystem carries no ball");
  return NsEvaluator(es, *es.center, es.radius, es.center->particles(), mass, p).evaluate(E);
}

// ---------------------------------------------------------------------------
// Localization

struct LocReport {
  bool loc = true;
  Eigen::Index eigen_index = -1;
  std::optional<Configuration> x, y;
  int rho = 0;
  double worst_log_excess = -INFINITY;  // max ln(|psi(x) psi(y)| / e^{-gamma rho}) over resolved violations
  size_t pairs_checked = 0;
  size_t unresolved = 0;  // (eigenvector, pair) products above the bound only within rounding
};

/// m-localization of every eigenfunction: |psi(x) psi(y)| <= e^{-gamma_n(m, L) rho(x, y)} for rho >= L^{(1+varrho)/alpha}.
/// With first_witness the scan stops at the first resolved violation (counts are then partial).
inline LocReport is_m_loc(const EigenSystem& es, double mass, const ScalingParams& p, int L, int n,
                          bool first_witness = false) {
  LocReport r;
  const auto& g = es.geometry;
  const double rmin = p.loc_min_distance(L);
  const double gam = p.gamma_n(mass, L, n);
  struct Pair {
    int i, k;
    double log_bound, bound;
  };
  std::vector<Pair> pairs;
  const int nn = static_cast<int>(es.size());
  for (int i = 0; i < nn; ++i)
    for (int k = i + 1; k < nn; ++k) {
      const int d = rho(g, es.members[static_cast<size_t>(i)], es.members[static_cast<size_t>(k)]);
      if (d >= rmin) pairs.push_back({i, k, -gam * d, std::exp(-gam * d)});
    }
  r.pairs_checked = pairs.size();
  if (pairs.empty()) return r;
  // column blocks of |Psi| small enough to stay in cache while all pairs stream over them
  using RowArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  constexpr int block = 32;
  for (int j0 = 0; j0 < nn; j0 += block) {
    const int w = std::min(block, nn - j0);
    const RowArray amp = es.vectors.middleCols(j0, w).cwiseAbs().array();
    const Eigen::Array<double, 1, Eigen::Dynamic> err = es.vector_error.segment(j0, w).transpose().array();
    for (const auto& pr : pairs) {
      const auto ai = amp.row(pr.i), ak = amp.row(pr.k);
      if ((ai * ak).maxCoeff() <= pr.bound) continue;
      for (int c = 0; c < w; ++c) {
        const double x = ai(c), y = ak(c);
        const double prod = x * y;
        if (prod <= pr.bound) continue;
        const double lower = prod - err(c) * (x + y) - err(c) * err(c);
        if (lower <= pr.bound) {
          ++r.unresolved;
          continue;
        }
        const double excess = std::log(lower) - pr.log_bound;
        if (excess > r.worst_log_excess) {
          r.loc = false;
          r.worst_log_excess = excess;
          r.eigen_index = j0 + c;
          r.x = es.members[static_cast<size_t>(pr.i)];
          r.y = es.members[static_cast<size_t>(pr.k)];
          r.rho = static_cast<int>(std::lround(-pr.log_bound / gam));
          if (first_witness) return r;
        }
      }
    }
  }
  return r;
}

inline LocReport is_m_loc(const EigenSystem& es, double mass, const ScalingParams& p) {
  if (es.radius < 0 || es.members.empty()) throw InputError("is_m_loc: eigensystem carries no ball");
  return is_m_loc(es, mass, p, es.radius, es.members[0].particles());
}

// ---------------------------------------------------------------------------
// Tunneling

struct TunnelingReport {
  bool tunneling = false;
  std::optional<std::pair<Configuration, Configuration>> pair;
  size_t sub_balls = 0;
  std::vector<Configuration> nonloc_centers;
};

/// m-tunneling: two distant radius-ell sub-balls that are both m-non-localized.
inline TunnelingReport is_m_tunneling(const OperatorMatrix& h, double mass, const ScalingParams& p, int ell,
                                      int stride = 0) {
  if (!h.center || h.radius < 0) throw InputError("is_m_tunneling: operator is not attached to a ball");
  if (ell >= h.radius) throw InputError("is_m_tunneling needs ell < L");
  const auto& g = h.geometry;
  const Ball big{*h.center, h.radius, BallMetric::max_distance, h.members};
  TunnelingReport r;
  for (const auto& v : sub_ball_centers(g, big, ell, stride > 0 ? stride : std::max(1, ell / 2))) {
    ++r.sub_balls;
    const EigenSystem es = diagonalize(h.restrict_to(enumerate_ball(g, v, ell)));
    if (!is_m_loc(es, mass, p, ell, v.particles()).loc) r.nonloc_centers.push_back(v);
  }
  for (size_t a = 0; a < r.nonloc_centers.size() && !r.tunneling; ++a)
    for (size_t b = a + 1; b < r.nonloc_centers.size(); ++b)
      if (p.is_distant(rho(g, r.nonloc_centers[a], r.nonloc_centers[b]), ell)) {
        r.tunneling = true;
        r.pair = {r.nonloc_centers[a], r.nonloc_centers[b]};
        break;
      }
  return r;
}

// ---------------------------------------------------------------------------
// Combined report for one ball

struct PredicateReport {
  Configuration center;
  int radius = 0;
  double energy = 0.0;
  bool e_nr = false;
  bool e_cnr = false;
  NsReport ns;
  LocReport loc;
  TunnelingReport tunneling;
  std::optional<SubBallSpectrum> resonant_sub_ball;
};

inline PredicateReport evaluate_predicates(const OperatorMatrix& h, const EigenSystem& es, double E, double mass,
                                           const ScalingParams& p, int ell, const SubBallPolicy& pol = {}) {
  if (!h.center || h.radius < 0) throw InputError("evaluate_predicates: operator is not attached to a ball");
  PredicateReport r;
  r.center = *h.center;
  r.radius = h.radius;
  r.energy = E;
  const int n = h.center->particles();
  r.e_nr = is_E_NR(es.values, E, h.radius, p);
  const CnrAnalyzer cnr(h, p, pol, &es);
  if (auto i = cnr.resonant(E)) r.resonant_sub_ball = cnr.sub_balls()[*i];
  r.e_cnr = !r.resonant_sub_ball;
  r.ns = NsEvaluator(es, *h.center, h.radius, n, mass, p).evaluate(E);
  r.loc = is_m_loc(es, mass, p, h.radius, n);
  r.tunneling = is_m_tunneling(h, mass, p, ell);
  return r;
}

// ---------------------------------------------------------------------------
// Subharmonicity of eigenfunction correlators

struct KernelDescentReport {
  bool hypotheses = false;
  std::string skipped;  // reason when the hypotheses fail
  double q = 0.0;
  int boundary_constant = 0;
  size_t ns_checked = 0;
  SubharmonicReport subharmonic;
  double center_value = 0.0;
  double bound = 0.0;
  double noise_floor = 0.0;
  bool bound_holds = true;
};

/// Kernel f(x) = |psi_j(x) psi_j(y')| on B_R(x'), with every B_ell(v), v in B_R(x'), (lambda_j, m)-NS:
/// f is (ell + 1, q)-subharmonic with q = C e^{-gamma ell + 2 ell^beta}, and f(x') <= q^{floor((R+1)/(ell+2))} max f.
inline KernelDescentReport check_kernel_descent(const OperatorMatrix& h, const EigenSystem& es, Eigen::Index j,
                                                const Configuration& x0, const Configuration& y0, int R, int ell,
                                                double mass, const ScalingParams& p) {
  const auto& g = h.geometry;
  KernelDescentReport r;
  const int sep = rho(g, x0, y0);
  if (sep <= 2 * (ell + 1) || R < ell + 2 || R > sep - (ell + 2)) {
    r.skipped = "radius/separation";
    return r;
  }
  const Ball dom = enumerate_ball(g, x0, R);
  for (const auto& v : dom.members)
    if (!h.members.contains(v)) {
      r.skipped = "domain";
      return r;
    }
  const double E = es.values(j);
  for (const auto& v : dom.members) {
    const Ball b = enumerate_ball(g, v, ell);
    for (const auto& w : b.members)
      if (!h.members.contains(w)) {
        r.skipped = "sub-ball outside the ball";
        return r;
      }
    const EigenSystem sub = diagonalize(h.restrict_to(b));
    const NsReport ns = NsEvaluator(sub, v, ell, v.particles(), mass, p).evaluate(E);
    ++r.ns_checked;
    if (!ns.ns || !ns.resolved) {
      r.skipped = "singular sub-ball";
      return r;
    }
    r.boundary_constant = std::max(r.boundary_constant, static_cast<int>(boundary_index_pairs(g, b.members, h.members).size()));
  }
  r.q = r.boundary_constant * p.ns_threshold(mass, ell, x0.particles());
  if (!(r.q > 0.0 && r.q < 1.0)) {
    r.skipped = "q outside (0, 1)";
    return r;
  }
  r.hypotheses = true;
  const auto yi = es.index_of(y0);
  const double py = std::abs(es.vectors(yi, j));
  std::vector<double> f;
  f.reserve(dom.members.size());
  double M = 0.0;
  for (const auto& x : dom.members) {
    f.push_back(std::abs(es.vectors(es.index_of(x), j)) * py);
    M = std::max(M, f.back());
  }
  r.noise_floor = es.vector_error(j) * (py + es.vector_max(j)) * (1.0 + r.q);
  // computed values are within delta of the true ones, so f <= q max f holds up to delta (1 + q)
  r.subharmonic = subharmonic_check(g, f, dom.members, ell + 1, r.q, r.noise_floor);
  r.center_value = f[static_cast<size_t>(dom.members.index_of(x0))];
  r.bound = radial_descent_bound(R, ell + 1, r.q, M);
  r.bound_holds = r.center_value <= r.bound + r.noise_floor;
  return r;
}

// ---------------------------------------------------------------------------
// Implication audit

struct Violation {
  std::string lemma;
  double energy = NAN;
  double lhs = 0.0;
  double rhs = 0.0;
  std::string detail;
};

struct LemmaTally {
  size_t instances = 0;       // (ball, energy) pairs examined
  size_t hypotheses_held = 0;
  size_t conclusions_checked = 0;
  size_t unresolved = 0;      // conclusions within rounding of the threshold
  size_t violations = 0;
};

struct AuditOptions {
  SubBallPolicy cnr;
  int small_stride = 0;        // 0: max(1, L_small / 2)
  double spectrum_tol = 1e-10;
  bool keep_eigensystem = false;
  bool first_witness = true;  // stop the localization scan at the first violation
};

struct ImplicationAudit {
  BallClass ball_class = BallClass::FI;
  size_t ball_size = 0;
  size_t energies = 0;
  size_t small_sub_balls = 0;
  size_t distant_small_pairs = 0;
  size_t cnr_sub_balls = 0;
  LocReport loc;
  std::map<std::string, LemmaTally> lemmas;
  std::vector<Violation> violations;
  std::shared_ptr<const EigenSystem> eigensystem;
  std::shared_ptr<const OperatorMatrix> hamiltonian;
};

/// Sorted, duplicate-free union of spectra plus midpoints of consecutive values.
inline std::vector<double> energy_grid(const std::vector<const Eigen::VectorXd*>& spectra) {
  std::vector<double> v;
  for (const auto* s : spectra) v.insert(v.end(), s->data(), s->data() + s->size());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  std::vector<double> out;
  out.reserve(2 * v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    out.push_back(v[i]);
    if (i + 1 < v.size()) out.push_back(0.5 * (v[i] + v[i + 1]));
  }
  return out;
}

namespace detail {

/// Largest |phi_a(x) phi_a(y)| at each distance r, per eigenvector: upper value and value minus rounding.
struct DistanceProfile {
  std::vector<std::vector<double>> upper, lower;  // [a][r]
};

inline DistanceProfile distance_profile(const EigenSystem& es) {
  const auto& g = es.geometry;
  const int n = static_cast<int>(es.size());
  std::vector<int> dist(static_cast<size_t>(n * n));
  int rmax = 0;
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      dist[static_cast<size_t>(i * n + k)] = rho(g, es.members[static_cast<size_t>(i)], es.members[static_cast<size_t>(k)]);
      rmax = std::max(rmax, dist[static_cast<size_t>(i * n + k)]);
    }
  DistanceProfile d;
  d.upper.assign(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(rmax + 1), 0.0));
  d.lower = d.upper;
  for (int a = 0; a < n; ++a) {
    const double da = es.vector_error(a);
    for (int i = 0; i < n; ++i)
      for (int k = i; k < n; ++k) {
        const double x = std::abs(es.vectors(i, a)), y = std::abs(es.vectors(k, a));
        const auto r = static_cast<size_t>(dist[static_cast<size_t>(i * n + k)]);
        auto& u = d.upper[static_cast<size_t>(a)][r];
        auto& l = d.lower[static_cast<size_t>(a)][r];
        u = std::max(u, x * y);
        l = std::max(l, std::max(0.0, x * y - da * (x + y) - da * da));
      }
  }
  return d;
}

inline bool within_tolerance(double worst, double thr, double floor) { return worst <= thr + floor; }

}  // namespace detail

/// Samples the deterministic implications on one ball B_{L_big}(center) and returns every violated conclusion.
/// The "for all E" quantifiers run over the spectra of all diagonalized sub-balls plus midpoints.
inline ImplicationAudit verify_implications(const HamiltonianSpec& spec, const FieldSample& sample, const Configuration& center,
                                            int L_big, int L_small, double mass, const ScalingParams& p,
                                            const AuditOptions& opt = {}) {
  if (L_small >= L_big) throw InputError("verify_implications needs L_small < L_big");
  const auto& g = spec.geometry;
  const int N = center.particles();
  ImplicationAudit audit;
  const Ball big = enumerate_ball(g, center, L_big);
  auto H = std::make_shared<OperatorMatrix>(assemble_hamiltonian(spec, sample, big));
  auto es = std::make_shared<EigenSystem>(diagonalize(*H));
  audit.ball_size = big.members.size();
  audit.ball_class = classify_ball(g, big, p);
  auto fail = [&](const std::string& lemma, double E, double lhs, double rhs, std::string detail) {
    ++audit.lemmas[lemma].violations;
    audit.violations.push_back({lemma, E, lhs, rhs, std::move(detail)});
  };

  // radius-L_small sub-balls and their distant pairs
  const int stride = opt.small_stride > 0 ? opt.small_stride : std::max(1, L_small / 2);
  const auto small_centers = sub_ball_centers(g, big, L_small, stride);
  audit.small_sub_balls = small_centers.size();
  std::vector<std::pair<size_t, size_t>> distant;
  for (size_t a = 0; a < small_centers.size(); ++a)
    for (size_t b = a + 1; b < small_centers.size(); ++b)
      if (p.is_distant(rho(g, small_centers[a], small_centers[b]), L_small)) distant.emplace_back(a, b);
  audit.distant_small_pairs = distant.size();
  std::vector<EigenSystem> small_es;
  std::vector<Eigen::VectorXd> small_values;
  for (const auto& v : small_centers) {
    const OperatorMatrix hs = H->restrict_to(enumerate_ball(g, v, L_small));
    if (distant.empty()) {
      small_values.push_back(eigenvalues(hs.matrix));
    } else {
      small_es.push_back(diagonalize(hs));
      small_values.push_back(small_es.back().values);
    }
  }

  const CnrAnalyzer cnr(*H, p, opt.cnr, es.get());
  audit.cnr_sub_balls = cnr.sub_balls().size();
  std::vector<const Eigen::VectorXd*> spectra;
  for (const auto& s : small_values) spectra.push_back(&s);
  for (const auto& s : cnr.sub_balls()) spectra.push_back(&s.values);
  const std::vector<double> grid = energy_grid(spectra);
  audit.energies = grid.size();

  audit.loc = is_m_loc(*es, mass, p, L_big, N, opt.first_witness);

  // singular distant pairs per energy
  std::vector<char> distant_S(grid.size(), 0);
  if (!distant.empty()) {
    std::vector<std::vector<NsReport>> small_ns;
    for (size_t i = 0; i < small_centers.size(); ++i)
      small_ns.push_back(NsEvaluator(small_es[i], small_centers[i], L_small, N, mass, p).evaluate(grid));
    for (size_t e = 0; e < grid.size(); ++e)
      for (auto [a, b] : distant)
        if (!small_ns[a][e].ns && !small_ns[b][e].ns) {
          distant_S[e] = 1;
          break;
        }
  }

  // PI structure
  struct PiData {
    bool exact = false;
    bool factors_loc = false;
    Decomposition dec;
  };
  std::optional<PiData> pi;
  if (audit.ball_class == BallClass::PI) {
    PiData d;
    d.dec = canonical_decomposition(g, big, p);
    const auto sup = spec.interaction.support_radius();
    const int proj_sep = d.dec.separation - 2 * L_big;
    d.exact = sup && proj_sep > *sup && factorization_check(g, d.dec.x_j, d.dec.x_jc, L_big);
    if (d.exact) {
      HamiltonianSpec sa = spec, sb = spec;
      sa.N = d.dec.x_j.particles();
      sb.N = d.dec.x_jc.particles();
      const EigenSystem ea = diagonalize(assemble_hamiltonian(sa, sample, enumerate_ball(g, d.dec.x_j, L_big)));
      const EigenSystem eb = diagonalize(assemble_hamiltonian(sb, sample, enumerate_ball(g, d.dec.x_jc, L_big)));

      // eigenvalues of H are the pairwise sums
      auto& t46 = audit.lemmas["pi_spectrum"];
      ++t46.instances;
      ++t46.hypotheses_held;
      ++t46.conclusions_checked;
      std::vector<double> sums;
      sums.reserve(static_cast<size_t>(ea.size() * eb.size()));
      for (Eigen::Index a = 0; a < ea.size(); ++a)
        for (Eigen::Index b = 0; b < eb.size(); ++b) sums.push_back(ea.values(a) + eb.values(b));
      std::sort(sums.begin(), sums.end());
      double diff = static_cast<Eigen::Index>(sums.size()) == es->size() ? 0.0 : INFINITY;
      for (size_t k = 0; std::isfinite(diff) && k < sums.size(); ++k)
        diff = std::max(diff, std::abs(sums[k] - es->values(static_cast<Eigen::Index>(k))));
      if (diff > opt.spectrum_tol) fail("pi_spectrum", NAN, diff, opt.spectrum_tol, "spectrum differs from pairwise factor sums");

      // factor localization gives localization of the product basis
      const LocReport la = is_m_loc(ea, mass, p, L_big, ea.members[0].particles());
      const LocReport lb = is_m_loc(eb, mass, p, L_big, eb.members[0].particles());
      d.factors_loc = la.loc && lb.loc;
      auto& t43 = audit.lemmas["pi_loc"];
      ++t43.instances;
      if (d.factors_loc && d.dec.separation > 4 * L_big) {
        ++t43.hypotheses_held;
        ++t43.conclusions_checked;
        const auto pa = detail::distance_profile(ea);
        const auto pb = detail::distance_profile(eb);
        const double rmin = p.loc_min_distance(L_big);
        const double gam = p.gamma_n(mass, L_big, N);
        double worst = -INFINITY;
        bool unresolved = false;
        for (size_t a = 0; a < pa.upper.size(); ++a)
          for (size_t b = 0; b < pb.upper.size(); ++b)
            for (size_t r1 = 0; r1 < pa.upper[a].size(); ++r1)
              for (size_t r2 = 0; r2 < pb.upper[b].size(); ++r2) {
                const double r = static_cast<double>(std::max(r1, r2));
                if (r < rmin) continue;
                const double bound = std::exp(-gam * r);
                if (pa.upper[a][r1] * pb.upper[b][r2] <= bound) continue;
                const double lo = pa.lower[a][r1] * pb.lower[b][r2];
                if (lo <= bound) {
                  unresolved = true;
                  continue;
                }
                worst = std::max(worst, std::log(lo) + gam * r);
              }
        if (unresolved) ++t43.unresolved;
        if (worst > 0.0) fail("pi_loc", NAN, worst, 0.0, "product eigenbasis not localized (log excess)");
      }
    }
    pi = d;
  }

  // per-energy hypotheses, then NS only where some conclusion needs it
  const double log_ball = std::log(static_cast<double>(big.members.size()));
  const bool ns_reachable = log_ball <= std::pow(static_cast<double>(L_big), p.beta);
  const double bound34 = static_cast<double>(big.members.size()) *
                         std::exp(-p.gamma_n(mass, L_big, N) * L_big + std::pow(static_cast<double>(L_big), p.beta));
  std::vector<char> nr(grid.size()), cn(grid.size());
  std::vector<double> needed;
  std::vector<size_t> needed_idx;
  bool any_distant_S = false;
  for (size_t e = 0; e < grid.size(); ++e) {
    nr[e] = is_E_NR(es->values, grid[e], L_big, p);
    cn[e] = nr[e] && cnr.is_cnr(grid[e]);
    any_distant_S = any_distant_S || distant_S[e];
    const bool want = (nr[e] && audit.loc.loc) || (cn[e] && !distant_S[e]) ||
                      (cn[e] && pi && pi->exact && pi->factors_loc);
    if (want) {
      needed.push_back(grid[e]);
      needed_idx.push_back(e);
    }
  }
  const NsEvaluator big_ns(*es, center, L_big, N, mass, p);
  const auto ns = big_ns.evaluate(needed);

  auto& t34 = audit.lemmas["loc_ns"];
  auto& t35 = audit.lemmas["cnr_ns"];
  auto& t51 = audit.lemmas["pi_ns"];
  for (size_t e = 0; e < grid.size(); ++e) {
    ++t34.instances;
    ++t35.instances;
    if (pi) ++t51.instances;
  }
  for (size_t k = 0; k < needed.size(); ++k) {
    const size_t e = needed_idx[k];
    const double E = grid[e];
    const NsReport& r = ns[k];
    // loc_ns: loc and NR give the boundary bound |B| e^{-gamma L + L^beta}, hence NS once ln|B| <= L^beta
    if (nr[e] && audit.loc.loc) {
      ++t34.hypotheses_held;
      ++t34.conclusions_checked;
      if (!detail::within_tolerance(r.worst, bound34, r.noise_floor)) fail("loc_ns", E, r.worst, bound34, "boundary bound");
      else if (std::abs(r.worst - bound34) <= r.noise_floor) ++t34.unresolved;
      if (ns_reachable && !r.ns) fail("loc_ns", E, r.worst, r.threshold, "NS");
    }
    // cnr_ns: CNR and no distant singular pair give NS
    if (cn[e] && !distant_S[e]) {
      ++t35.hypotheses_held;
      ++t35.conclusions_checked;
      if (!r.resolved) ++t35.unresolved;
      if (!r.ns) fail("cnr_ns", E, r.worst, r.threshold, "NS");
    }
    // pi_ns: factor loc and CNR give the same bound, hence NS once ln|B| <= L^beta
    if (cn[e] && pi && pi->exact && pi->factors_loc) {
      ++t51.hypotheses_held;
      ++t51.conclusions_checked;
      if (!detail::within_tolerance(r.worst, bound34, r.noise_floor)) fail("pi_ns", E, r.worst, bound34, "boundary bound");
      if (ns_reachable && !r.ns) fail("pi_ns", E, r.worst, r.threshold, "NS");
    }
  }

  // ball_loc: no distant singular pair at any grid energy gives loc
  auto& t36 = audit.lemmas["ball_loc"];
  ++t36.instances;
  if (!any_distant_S) {
    ++t36.hypotheses_held;
    ++t36.conclusions_checked;
    if (audit.loc.unresolved > 0) ++t36.unresolved;
    if (!audit.loc.loc) fail("ball_loc", NAN, audit.loc.worst_log_excess, 0.0, "ball not localized (log excess)");
  }

  if (opt.keep_eigensystem) {
    audit.eigensystem = es;
    audit.hamiltonian = H;
  }
  return audit;
}

// ---------------------------------------------------------------------------
// Scale table helpers

/// Smallest integer L in [1, L_max] from which m(1 + L^-tau)L - 2L^beta >= m(1 + L^-tau / 2)L holds up to L_max.
inline std::optional<int> exponent_identity_threshold(double mass, const ScalingParams& p, int L_max) {
  auto holds = [&](int L) {
    const double l = L;
    return mass * (1.0 + std::pow(l, -p.tau)) * l - 2.0 * std::pow(l, p.beta) >=
           mass * (1.0 + 0.5 * std::pow(l, -p.tau)) * l;
  };
  std::optional<int> first;
  for (int L = L_max; L >= 1; --L) {
    if (!holds(L)) break;
    first = L;
  }
  return first;
}

}  // namespace mpdsa
