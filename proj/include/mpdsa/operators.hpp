#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "mpdsa/config_space.hpp"
#include "mpdsa/disorder.hpp"
#include "mpdsa/errors.hpp"

namespace mpdsa {

struct InteractionModel {
  enum class Kind { none, step, subexponential, table };
  Kind kind = Kind::none;
  double u = 0.0;
  int r0 = 0;
  double C = 0.0, c = 0.0, theta = 0.0;
  std::map<int, double> table;
  std::optional<int> truncation;

  static InteractionModel none() { return {}; }

  /// U(r) = u for r <= r0, zero beyond.
  static InteractionModel step(double amplitude, int range) {
    if (range < 0) throw InputError("step interaction range must be nonnegative");
    InteractionModel m;
    m.kind = Kind::step;
    m.u = amplitude;
    m.r0 = range;
    return m;
  }

  /// U(r) = C exp(-c r^{1-theta}).
  static InteractionModel subexponential(double amp, double rate, double th) {
    if (!(rate > 0.0) || !(th >= 0.0 && th < 1.0)) throw InputError("sub-exponential interaction needs c > 0, 0 <= theta < 1");
    InteractionModel m;
    m.kind = Kind::subexponential;
    m.C = amp;
    m.c = rate;
    m.theta = th;
    return m;
  }

  static InteractionModel from_table(std::map<int, double> values) {
    InteractionModel m;
    m.kind = Kind::table;
    m.table = std::move(values);
    return m;
  }

  double untruncated(int r) const {
    switch (kind) {
      case Kind::none: return 0.0;
      case Kind::step: return r <= r0 ? u : 0.0;
      case Kind::subexponential: return C * std::exp(-c * std::pow(static_cast<double>(r), 1.0 - theta));
      case Kind::table: {
        auto it = table.find(r);
        return it == table.end() ? 0.0 : it->second;
      }
    }
    return 0.0;
  }

  double operator()(int r) const {
    if (truncation && r > *truncation) return 0.0;
    return untruncated(r);
  }

  /// Largest r with possibly nonzero U(r); empty for untruncated infinite-range models.
  std::optional<int> support_radius() const {
    std::optional<int> s;
    switch (kind) {
      case Kind::none: s = -1; break;
      case Kind::step: s = u == 0.0 ? -1 : r0; break;
      case Kind::subexponential: s = C == 0.0 ? std::optional<int>(-1) : std::nullopt; break;
      case Kind::table: {
        int m = -1;
        for (const auto& [r, v] : table)
          if (v != 0.0) m = std::max(m, r);
        s = m;
        break;
      }
    }
    if (truncation) return s ? std::min(*s, *truncation) : *truncation;
    return s;
  }

  /// sup over real r > R of |U(r)|.
  double tail_sup(int R) const {
    if (truncation && *truncation <= R) return 0.0;
    switch (kind) {
      case Kind::none: return 0.0;
      case Kind::step: return R < r0 ? std::abs(u) : 0.0;
      case Kind::subexponential: return std::abs(C) * std::exp(-c * std::pow(static_cast<double>(R), 1.0 - theta));
      case Kind::table: {
        double m = 0.0;
        for (const auto& [r, v] : table)
          if (r > R && (!truncation || r <= *truncation)) m = std::max(m, std::abs(v));
        return m;
      }
    }
    return 0.0;
  }

  /// Decay hypothesis for infinite-range models: theta in (0, delta / (1 + delta)).
  bool satisfies_u1(double delta) const {
    if (kind != Kind::subexponential) return true;
    return theta > 0.0 && theta < delta / (1.0 + delta);
  }
};

inline InteractionModel truncate_interaction(const InteractionModel& m, int R) {
  if (R < 0) throw InputError("truncation radius must be nonnegative");
  InteractionModel out = m;
  out.truncation = m.truncation ? std::min(*m.truncation, R) : R;
  if (auto s = m.support_radius(); s && *s <= R) out.truncation = m.truncation;
  return out;
}

/// Sum over ordered pairs i != j of U(|x_i - x_j|); `half_pairs` counts each unordered pair once.
inline double interaction_energy(const LatticeGeometry& g, const Configuration& x, const InteractionModel& m,
                                 bool half_pairs = false) {
  double e = 0.0;
  for (int i = 0; i < x.particles(); ++i)
    for (int j = i + 1; j < x.particles(); ++j) e += m(g.site_distance(x.site(i), x.site(j)));
  return half_pairs ? e : 2.0 * e;
}

/// Two-body upper bound on the cross-interaction of any split separated by more than R.
inline double epsilon_bound(const InteractionModel& m, int N, int R, bool half_pairs = false) {
  if (R <= 0) throw InputError("epsilon_bound needs R > 0");
  const double pairs = static_cast<double>(N / 2) * static_cast<double>(N - N / 2);
  return (half_pairs ? 1.0 : 2.0) * pairs * m.tail_sup(R);
}

enum class DiagonalConvention { induced_degree, fixed };

struct HamiltonianSpec {
  LatticeGeometry geometry = LatticeGeometry::lattice(1);
  int N = 2;
  double g = 1.0;
  InteractionModel interaction;
  DiagonalConvention diagonal = DiagonalConvention::induced_degree;
  bool half_pairs = false;
};

struct OperatorMatrix {
  LatticeGeometry geometry = LatticeGeometry::lattice(1);
  ConfigSet members;
  Eigen::MatrixXd matrix;
  std::optional<Configuration> center;
  int radius = -1;

  Eigen::Index size() const { return matrix.rows(); }
  std::ptrdiff_t index_of(const Configuration& c) const { return members.index_of(c); }

  double max_asymmetry() const { return (matrix - matrix.transpose()).cwiseAbs().maxCoeff(); }

  /// Principal submatrix on a subset of the members.
  OperatorMatrix restrict_to(const ConfigSet& sub) const {
    std::vector<Eigen::Index> idx;
    idx.reserve(sub.size());
    for (const auto& c : sub) {
      auto i = members.index_of(c);
      if (i < 0) throw GeometryError("restriction target is not contained in the operator's domain");
      idx.push_back(i);
    }
    OperatorMatrix out;
    out.geometry = geometry;
    out.members = sub;
    out.matrix = matrix(idx, idx);
    return out;
  }

  OperatorMatrix restrict_to(const Ball& b) const {
    OperatorMatrix out = restrict_to(b.members);
    out.center = b.center;
    out.radius = b.radius;
    return out;
  }
};

inline double fixed_diagonal(const LatticeGeometry& g, int N) {
  return static_cast<double>(N) * g.max_degree();
}

inline OperatorMatrix laplacian_matrix(const LatticeGeometry& g, const ConfigSet& set,
                                       DiagonalConvention conv = DiagonalConvention::induced_degree) {
  if (set.empty()) throw InputError("laplacian of an empty set");
  const Eigen::Index n = static_cast<Eigen::Index>(set.size());
  OperatorMatrix h;
  h.geometry = g;
  h.members = set;
  h.matrix = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    int deg = 0;
    for_each_sector_neighbor(g, set[i], [&](const Configuration& y) {
      auto j = set.index_of(y);
      if (j >= 0) {
        h.matrix(i, j) = -1.0;
        ++deg;
      }
    });
    h.matrix(i, i) = conv == DiagonalConvention::induced_degree ? deg : fixed_diagonal(g, set[i].particles());
  }
  return h;
}

inline OperatorMatrix laplacian_matrix(const LatticeGeometry& g, const Ball& ball,
                                       DiagonalConvention conv = DiagonalConvention::induced_degree) {
  OperatorMatrix h = laplacian_matrix(g, ball.members, conv);
  h.center = ball.center;
  h.radius = ball.radius;
  return h;
}

inline OperatorMatrix assemble_hamiltonian(const HamiltonianSpec& spec, const FieldSample& v, const ConfigSet& set) {
  OperatorMatrix h = laplacian_matrix(spec.geometry, set, spec.diagonal);
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    const auto& x = set[i];
    if (x.particles() > spec.N) throw DimensionError("configuration has more particles than the spec");
    h.matrix(i, i) += spec.g * potential_energy(x, v) + interaction_energy(spec.geometry, x, spec.interaction, spec.half_pairs);
  }
  return h;
}

inline OperatorMatrix assemble_hamiltonian(const HamiltonianSpec& spec, const FieldSample& v, const Ball& ball) {
  OperatorMatrix h = assemble_hamiltonian(spec, v, ball.members);
  h.center = ball.center;
  h.radius = ball.radius;
  return h;
}

/// H_A (x) 1 + 1 (x) H_B on the union configurations, rows in canonical order.
inline OperatorMatrix kronecker_sum(const OperatorMatrix& a, const OperatorMatrix& b) {
  if (!(a.geometry == b.geometry)) throw GeometryError("kronecker_sum: factors live on different geometries");
  if (a.center && b.center && a.radius == b.radius && a.radius >= 0 &&
      !factorization_check(a.geometry, *a.center, *b.center, a.radius))
    throw GeometryError("kronecker_sum: factor balls do not factorize the joint ball");
  const Eigen::Index na = a.size(), nb = b.size();
  std::vector<Configuration> joint;
  joint.reserve(static_cast<size_t>(na * nb));
  for (const auto& x : a.members) {
    for (const auto& y : b.members) {
      for (int i = 0; i < x.particles(); ++i)
        if (y.occupies(x.site(i))) throw GeometryError("kronecker_sum: factor configurations overlap");
      joint.push_back(merge(x, y));
    }
  }
  ConfigSet set(joint);
  if (static_cast<Eigen::Index>(set.size()) != na * nb) throw GeometryError("kronecker_sum: product map is not injective");
  std::vector<Eigen::Index> pos(joint.size());
  for (size_t k = 0; k < joint.size(); ++k) pos[k] = set.index_of(joint[k]);
  OperatorMatrix h;
  h.geometry = a.geometry;
  h.members = set;
  h.matrix = Eigen::MatrixXd::Zero(na * nb, na * nb);
  for (Eigen::Index i = 0; i < na; ++i)
    for (Eigen::Index j = 0; j < nb; ++j) {
      const Eigen::Index r = pos[static_cast<size_t>(i * nb + j)];
      for (Eigen::Index k = 0; k < na; ++k)
        if (a.matrix(i, k) != 0.0) h.matrix(r, pos[static_cast<size_t>(k * nb + j)]) += a.matrix(i, k);
      for (Eigen::Index l = 0; l < nb; ++l)
        if (b.matrix(j, l) != 0.0) h.matrix(r, pos[static_cast<size_t>(i * nb + l)]) += b.matrix(j, l);
    }
  if (a.center && b.center) {
    h.center = merge(*a.center, *b.center);
    h.radius = a.radius == b.radius ? a.radius : -1;
  }
  return h;
}

}  // namespace mpdsa
