#pragma once

#include <Eigen/Dense>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "mpdsa/config_space.hpp"
#include "mpdsa/errors.hpp"
#include "mpdsa/operators.hpp"

namespace mpdsa {

/// Relative resonance cutoff: G(E) is not evaluated closer than this times ||H|| to the spectrum.
inline constexpr double kResonanceCutoff = 1e-12;

struct EigenSystem {
  LatticeGeometry geometry = LatticeGeometry::lattice(1);
  ConfigSet members;
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // orthonormal columns
  double norm = 0.0;        // spectral norm of H
  Eigen::VectorXd vector_error;  // entrywise error bound per eigenvector
  Eigen::VectorXd vector_max;    // max_x |psi_j(x)|
  std::optional<Configuration> center;
  int radius = -1;

  Eigen::Index size() const { return values.size(); }
  std::ptrdiff_t index_of(const Configuration& c) const { return members.index_of(c); }
};

namespace detail {

inline double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

inline void require_symmetric(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw InputError("matrix is not square");
  const double tol = 1e-12 * std::max(1.0, max_abs(m));
  if (max_abs(m - m.transpose()) > tol) throw InputError("matrix is not symmetric");
}

}  // namespace detail

/// Symmetric eigendecomposition (LAPACK divide and conquer).
inline EigenSystem diagonalize(const Eigen::MatrixXd& h, const ConfigSet& members = {},
                               const LatticeGeometry& geometry = LatticeGeometry::lattice(1)) {
  detail::require_symmetric(h);
  const lapack_int n = static_cast<lapack_int>(h.rows());
  EigenSystem es;
  es.geometry = geometry;
  es.members = members;
  es.vectors = h;
  es.values.resize(n);
  if (n > 0) {
    const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, es.vectors.data(), n, es.values.data());
    if (info != 0) throw std::runtime_error("eigensolver failed to converge");
    es.norm = std::max(std::abs(es.values(0)), std::abs(es.values(n - 1)));
  }
  // sin(angle to the true eigenvector) <= residual / gap; the residual itself carries ~eps ||H|| rounding
  const double eps = std::numeric_limits<double>::epsilon();
  es.vector_error.resize(n);
  es.vector_max = n > 0 ? Eigen::VectorXd(es.vectors.cwiseAbs().colwise().maxCoeff().transpose()) : Eigen::VectorXd();
  if (n > 0) {
    const Eigen::VectorXd res = (h * es.vectors - es.vectors * es.values.asDiagonal()).colwise().norm().transpose();
    for (lapack_int j = 0; j < n; ++j) {
      double gap = INFINITY;
      if (j > 0) gap = std::min(gap, es.values(j) - es.values(j - 1));
      if (j + 1 < n) gap = std::min(gap, es.values(j + 1) - es.values(j));
      const double r = res(j) + 4.0 * eps * std::max(1.0, es.norm);
      es.vector_error(j) = std::min(1.0, std::sqrt(2.0) * r / std::max(gap, 1e-300) + 4.0 * eps);
    }
  }
  return es;
}

inline EigenSystem diagonalize(const OperatorMatrix& h) {
  EigenSystem es = diagonalize(h.matrix, h.members, h.geometry);
  es.center = h.center;
  es.radius = h.radius;
  return es;
}

namespace detail {

inline Eigen::Index bandwidth(const Eigen::MatrixXd& h) {
  Eigen::Index kd = 0;
  for (Eigen::Index j = 0; j < h.cols(); ++j)
    for (Eigen::Index i = 0; i < j - kd; ++i)
      if (h(i, j) != 0.0) {
        kd = j - i;
        break;
      }
  return kd;
}

}  // namespace detail

/// Eigenvalues only, ascending. Narrow-band matrices (lexicographically ordered balls) go through the band solver.
inline Eigen::VectorXd eigenvalues(const Eigen::MatrixXd& h) {
  detail::require_symmetric(h);
  const lapack_int n = static_cast<lapack_int>(h.rows());
  Eigen::VectorXd w(n);
  if (n == 0) return w;
  const auto kd = static_cast<lapack_int>(detail::bandwidth(h));
  lapack_int info = 0;
  if (8 * kd < n) {
    Eigen::MatrixXd ab = Eigen::MatrixXd::Zero(kd + 1, n);
    for (lapack_int j = 0; j < n; ++j)
      for (lapack_int i = std::max<lapack_int>(0, j - kd); i <= j; ++i) ab(kd + i - j, j) = h(i, j);
    double z = 0.0;
    info = LAPACKE_dsbevd(LAPACK_COL_MAJOR, 'N', 'U', n, kd, ab.data(), kd + 1, w.data(), &z, 1);
  } else {
    Eigen::MatrixXd a = h;
    info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'N', 'U', n, a.data(), n, w.data());
  }
  if (info != 0) throw std::runtime_error("eigensolver failed to converge");
  return w;
}

struct SpectralDiagnostics {
  double residual;      // max_j ||H psi_j - lambda_j psi_j|| / max(1, ||H||)
  double gram_defect;   // max |Psi^T Psi - I|
  double completeness;  // max |Psi Psi^T - I|
};

inline SpectralDiagnostics spectral_diagnostics(const Eigen::MatrixXd& h, const EigenSystem& es) {
  const Eigen::MatrixXd r = h * es.vectors - es.vectors * es.values.asDiagonal();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(es.size(), es.size());
  return {r.colwise().norm().maxCoeff() / std::max(1.0, es.norm),
          detail::max_abs(es.vectors.transpose() * es.vectors - id),
          detail::max_abs(es.vectors * es.vectors.transpose() - id)};
}

/// dist(E, spectrum) for an ascending spectrum.
inline double spectral_distance(const Eigen::VectorXd& values, double E) {
  if (values.size() == 0) return INFINITY;
  const double* b = values.data();
  const double* e = b + values.size();
  const double* it = std::lower_bound(b, e, E);
  double d = INFINITY;
  if (it != e) d = *it - E;
  if (it != b) d = std::min(d, E - *(it - 1));
  return d;
}

inline double spectral_distance(const EigenSystem& es, double E) { return spectral_distance(es.values, E); }

inline void require_nonresonant(const EigenSystem& es, double E) {
  const double dist = spectral_distance(es, E);
  if (dist <= kResonanceCutoff * std::max(1.0, es.norm))
    throw ResonanceError("energy is resonant with the spectrum", dist);
}

struct GreenEvaluation {
  double energy;
  Eigen::MatrixXd kernel;
  double resolvent_norm;
  double spectral_distance;
};

inline GreenEvaluation green_function(const EigenSystem& es, double E) {
  require_nonresonant(es, E);
  const double dist = spectral_distance(es, E);
  const Eigen::VectorXd w = (es.values.array() - E).inverse();
  return {E, es.vectors * w.asDiagonal() * es.vectors.transpose(), 1.0 / dist, dist};
}

/// Row G(x_i, . ; E).
inline Eigen::VectorXd green_row(const EigenSystem& es, Eigen::Index i, double E) {
  require_nonresonant(es, E);
  const Eigen::VectorXd w = es.vectors.row(i).transpose().cwiseQuotient((es.values.array() - E).matrix());
  return es.vectors * w;
}

inline double green_entry(const EigenSystem& es, Eigen::Index i, Eigen::Index j, double E) {
  require_nonresonant(es, E);
  return (es.vectors.row(i).array() * es.vectors.row(j).array() / (es.values.array() - E).transpose()).sum();
}

/// Backward-error bound on |G_computed - G| at spectral distance dist: ||dH|| / (dist (dist - ||dH||)).
inline double backward_green_floor(const EigenSystem& es, double dist) {
  const double dh = static_cast<double>(es.size()) * std::numeric_limits<double>::epsilon() * std::max(1.0, es.norm);
  if (dist <= dh) return INFINITY;
  return dh / (dist * (dist - dh)) + 4.0 * static_cast<double>(es.size()) * std::numeric_limits<double>::epsilon() / dist;
}

/// Rounding floor for G(x_i, . ; E) computed from the eigen-expansion, uniform in the second argument.
/// The smaller of the per-eigenvector (gap based) and the backward-error bounds.
inline double green_noise_floor(const EigenSystem& es, Eigen::Index i, double E) {
  const double eps = std::numeric_limits<double>::epsilon();
  const double dist = spectral_distance(es, E);
  double f = 4.0 * static_cast<double>(es.size()) * eps / dist;
  for (Eigen::Index j = 0; j < es.size(); ++j) {
    const double amp = std::abs(es.vectors(i, j)) + es.vector_max(j);
    f += es.vector_error(j) * amp / std::abs(es.values(j) - E);
  }
  return std::min(f, backward_green_floor(es, dist));
}

struct GriReport {
  double lhs = 0.0;
  double rhs = 0.0;
  int boundary_constant = 0;
  double noise_floor = 0.0;
  bool resolved = false;  // lhs above the rounding floor
  bool satisfied = false;
};

/// Index pairs (v in small, v' in large \ small) adjacent in the sector graph.
inline std::vector<std::pair<Eigen::Index, Eigen::Index>> boundary_index_pairs(const LatticeGeometry& g,
                                                                               const ConfigSet& small,
                                                                               const ConfigSet& large) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
  for (size_t i = 0; i < small.size(); ++i) {
    for_each_sector_neighbor(g, small[i], [&](const Configuration& y) {
      if (small.contains(y)) return;
      auto j = large.index_of(y);
      if (j >= 0) out.emplace_back(static_cast<Eigen::Index>(i), j);
    });
  }
  return out;
}

/// Geometric resolvent inequality for G_L(x, y; E) through B_l(x). es_small must diagonalize the
/// restriction of the operator behind es_large to B_l(x).
inline GriReport verify_gri(const EigenSystem& es_small, const EigenSystem& es_large, double E, const Configuration& x,
                            const Configuration& y, double slack = 1e-9) {
  const auto& g = es_large.geometry;
  const auto xs = es_small.index_of(x);
  const auto xl = es_large.index_of(x);
  const auto yl = es_large.index_of(y);
  if (xs < 0 || xl < 0 || yl < 0) throw GeometryError("verify_gri: points outside the balls");
  if (es_small.index_of(y) >= 0) throw GeometryError("verify_gri: y must lie outside the small ball");
  const auto pairs = boundary_index_pairs(g, es_small.members, es_large.members);
  const Eigen::VectorXd gs = green_row(es_small, xs, E);
  const Eigen::VectorXd gl = green_row(es_large, yl, E);
  double ms = 0.0, ml = 0.0;
  for (auto [v, w] : pairs) {
    ms = std::max(ms, std::abs(gs(v)));
    ml = std::max(ml, std::abs(gl(w)));
  }
  GriReport r;
  r.boundary_constant = static_cast<int>(pairs.size());
  r.lhs = std::abs(gl(xl));
  r.rhs = r.boundary_constant * ms * ml;
  r.noise_floor = green_noise_floor(es_large, yl, E) + r.boundary_constant * ml * green_noise_floor(es_small, xs, E);
  r.resolved = r.lhs > r.noise_floor;
  r.satisfied = r.lhs <= r.rhs * (1.0 + slack) + r.noise_floor;
  return r;
}

struct EfGriReport {
  double lhs = 0.0;
  double rhs_boundary = 0.0;  // C ||G_l|| max over the outer boundary
  double rhs = 0.0;           // C ||G_l|| max over rho(x, y) <= l + 1
  int boundary_constant = 0;
  double noise_floor = 0.0;
  bool resolved = false;
  bool satisfied = false;
};

/// Eigenfunction form: |psi(x)| <= C_l ||G_{B_l(x)}(E)|| max |psi| near x, for eigenpair j of the large ball.
inline EfGriReport verify_gri_eigenfunction(const EigenSystem& es_small, const EigenSystem& es_large, Eigen::Index j,
                                            const Configuration& x, int ell, double slack = 1e-9) {
  const auto& g = es_large.geometry;
  const auto xl = es_large.index_of(x);
  if (xl < 0 || es_small.index_of(x) < 0) throw GeometryError("verify_gri_eigenfunction: x outside the balls");
  const double E = es_large.values(j);
  const double dist = spectral_distance(es_small, E);
  if (dist <= kResonanceCutoff * std::max(1.0, es_small.norm))
    throw ResonanceError("eigenvalue of the large ball is resonant for the small ball", dist);
  const auto pairs = boundary_index_pairs(g, es_small.members, es_large.members);
  const auto psi = es_large.vectors.col(j);
  double mb = 0.0, mn = 0.0;
  for (auto [v, w] : pairs) mb = std::max(mb, std::abs(psi(w)));
  for (Eigen::Index k = 0; k < es_large.size(); ++k)
    if (rho(g, x, es_large.members[k]) <= ell + 1) mn = std::max(mn, std::abs(psi(k)));
  EfGriReport r;
  r.boundary_constant = static_cast<int>(pairs.size());
  r.lhs = std::abs(psi(xl));
  r.rhs_boundary = r.boundary_constant * mb / dist;
  r.rhs = r.boundary_constant * mn / dist;
  const double floor = es_large.vector_error(j);
  r.noise_floor = floor * (1.0 + r.boundary_constant / dist);
  r.resolved = r.lhs > r.noise_floor;
  r.satisfied = r.lhs <= r.rhs_boundary * (1.0 + slack) + r.noise_floor && r.lhs <= r.rhs * (1.0 + slack) + r.noise_floor;
  return r;
}

struct SubharmonicReport {
  bool holds = true;
  double worst_ratio = 0.0;  // max over admissible x of f(x) / max_{rho(x,y) <= l} f(y)
  std::optional<Configuration> witness;
  size_t admissible = 0;
};

/// Admissible centers of a domain: points x with B_l(x) contained in the domain.
inline std::vector<Eigen::Index> admissible_points(const LatticeGeometry& g, const ConfigSet& domain, int ell) {
  std::vector<Eigen::Index> out;
  for (size_t i = 0; i < domain.size(); ++i) {
    const Ball b = enumerate_ball(g, domain[i], ell);
    if (std::all_of(b.members.begin(), b.members.end(), [&](const Configuration& y) { return domain.contains(y); }))
      out.push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

/// (l, q)-subharmonicity of f (values aligned with domain.members) at every admissible center.
/// `floor` is an absolute slack on the values: f(x) <= q max f + floor.
inline SubharmonicReport subharmonic_check(const LatticeGeometry& g, const std::vector<double>& f, const ConfigSet& domain,
                                           int ell, double q, double floor = 0.0) {
  if (!(q > 0.0 && q < 1.0)) throw InputError("subharmonic_check: q must lie in (0, 1)");
  if (f.size() != domain.size()) throw DimensionError("subharmonic_check: values do not match the domain");
  SubharmonicReport r;
  for (Eigen::Index i : admissible_points(g, domain, ell)) {
    ++r.admissible;
    const Ball b = enumerate_ball(g, domain[i], ell);
    double m = 0.0;
    for (const auto& y : b.members) m = std::max(m, f[domain.index_of(y)]);
    const double fx = f[i];
    const double excess = std::max(0.0, fx - floor);
    const double ratio = excess == 0.0 ? 0.0 : excess / m;
    if (ratio > r.worst_ratio) {
      r.worst_ratio = ratio;
      r.witness = domain[i];
    }
    if (fx > q * m * (1.0 + 1e-12) + floor) r.holds = false;
  }
  if (r.holds) r.witness.reset();
  return r;
}

inline SubharmonicReport subharmonic_check(const LatticeGeometry& g, const std::function<double(const Configuration&)>& f,
                                           const Ball& domain, int ell, double q) {
  std::vector<double> v;
  v.reserve(domain.members.size());
  for (const auto& x : domain.members) v.push_back(f(x));
  return subharmonic_check(g, v, domain.members, ell, q);
}

/// q^{floor((L+1)/(l+1))} M.
inline double radial_descent_bound(int L, int ell, double q, double M) {
  if (ell < 0 || L < ell) throw InputError("radial_descent_bound needs L >= l >= 0");
  return std::pow(q, (L + 1) / (ell + 1)) * M;
}

/// Two-variable version: exponents of the two radii add.
inline double radial_descent_bound(int r1, int r2, int ell, double q, double M) {
  if (ell < 0) throw InputError("radial_descent_bound needs l >= 0");
  return std::pow(q, (r1 + 1) / (ell + 1) + (r2 + 1) / (ell + 1)) * M;
}

}  // namespace mpdsa
