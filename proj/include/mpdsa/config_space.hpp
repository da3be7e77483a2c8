#pragma once

#include <algorithm>
#include <bit>
#include <compare>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

#include "mpdsa/errors.hpp"
#include "mpdsa/geometry.hpp"
#include "mpdsa/params.hpp"

namespace mpdsa {

namespace detail {

inline bool site_greater(std::span<const int> a, std::span<const int> b) {
  return std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
}

/// Sorts the sites of a flat coordinate list into strictly decreasing lexicographic order.
/// Returns false if two sites coincide.
inline bool canonicalize(int coords, std::vector<int>& flat) {
  const size_t n = flat.size() / coords;
  if (coords == 1) {
    std::sort(flat.begin(), flat.end(), std::greater<int>());
    return std::adjacent_find(flat.begin(), flat.end()) == flat.end();
  }
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  auto site = [&](size_t i) { return std::span<const int>(flat.data() + i * coords, coords); };
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return site_greater(site(a), site(b)); });
  std::vector<int> out;
  out.reserve(flat.size());
  for (size_t i : idx) out.insert(out.end(), site(i).begin(), site(i).end());
  flat.swap(out);
  for (size_t i = 1; i < n; ++i) {
    if (std::equal(flat.begin() + (i - 1) * coords, flat.begin() + i * coords, flat.begin() + i * coords))
      return false;
  }
  return true;
}

}  // namespace detail

/// N distinct single-particle sites in canonical (strictly decreasing) order.
class Configuration {
 public:
  Configuration() = default;

  Configuration(int site_coords, std::vector<int> flat) : coords_(site_coords), flat_(std::move(flat)) {
    if (coords_ < 1 || flat_.size() % coords_ != 0) throw DimensionError("configuration coordinates do not split into sites");
    if (!detail::canonicalize(coords_, flat_)) throw GeometryError("configuration has coincident particles");
  }

  static Configuration from_sites(const std::vector<Site>& sites) {
    if (sites.empty()) throw DimensionError("configuration needs at least one particle");
    const int c = static_cast<int>(sites.front().size());
    std::vector<int> flat;
    for (const auto& s : sites) {
      if (static_cast<int>(s.size()) != c) throw DimensionError("sites have different dimensions");
      flat.insert(flat.end(), s.begin(), s.end());
    }
    return Configuration(c, std::move(flat));
  }

  static Configuration line(std::vector<int> xs) { return Configuration(1, std::move(xs)); }
  static Configuration line(std::initializer_list<int> xs) { return line(std::vector<int>(xs)); }

  /// Builds from coordinates already in canonical order; no validation.
  static Configuration trusted(int site_coords, std::vector<int> flat) {
    Configuration c;
    c.coords_ = site_coords;
    c.flat_ = std::move(flat);
    return c;
  }

  int particles() const { return coords_ ? static_cast<int>(flat_.size()) / coords_ : 0; }
  int site_coords() const { return coords_; }
  std::span<const int> site(int j) const { return {flat_.data() + static_cast<size_t>(j) * coords_, static_cast<size_t>(coords_)}; }
  Site site_vec(int j) const { auto s = site(j); return Site(s.begin(), s.end()); }
  std::vector<Site> sites() const {
    std::vector<Site> out;
    for (int j = 0; j < particles(); ++j) out.push_back(site_vec(j));
    return out;
  }
  const std::vector<int>& flat() const { return flat_; }

  bool occupies(std::span<const int> s) const {
    for (int j = 0; j < particles(); ++j)
      if (std::equal(s.begin(), s.end(), site(j).begin())) return true;
    return false;
  }

  /// Sub-configuration of the particles whose 0-based indices are listed.
  Configuration select(const std::vector<int>& idx) const {
    std::vector<int> flat;
    for (int j : idx) flat.insert(flat.end(), site(j).begin(), site(j).end());
    return Configuration(coords_, std::move(flat));
  }

  friend bool operator==(const Configuration&, const Configuration&) = default;
  friend auto operator<=>(const Configuration& a, const Configuration& b) {
    if (auto c = a.coords_ <=> b.coords_; c != 0) return c;
    return a.flat_ <=> b.flat_;
  }

 private:
  int coords_ = 0;
  std::vector<int> flat_;
};

/// Union of two configurations with disjoint sites.
inline Configuration merge(const Configuration& a, const Configuration& b) {
  if (a.site_coords() != b.site_coords()) throw DimensionError("merge: site dimensions differ");
  std::vector<int> flat = a.flat();
  flat.insert(flat.end(), b.flat().begin(), b.flat().end());
  return Configuration(a.site_coords(), std::move(flat));
}

/// Sorted, duplicate-free set of configurations with O(log n) index lookup. Cheap to copy.
class ConfigSet {
 public:
  ConfigSet() : items_(std::make_shared<const std::vector<Configuration>>()) {}
  explicit ConfigSet(std::vector<Configuration> items) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    items_ = std::make_shared<const std::vector<Configuration>>(std::move(items));
  }

  size_t size() const { return items_->size(); }
  bool empty() const { return items_->empty(); }
  const Configuration& operator[](size_t i) const { return (*items_)[i]; }
  auto begin() const { return items_->begin(); }
  auto end() const { return items_->end(); }
  const std::vector<Configuration>& items() const { return *items_; }

  std::ptrdiff_t index_of(const Configuration& c) const {
    auto it = std::lower_bound(items_->begin(), items_->end(), c);
    if (it == items_->end() || *it != c) return -1;
    return it - items_->begin();
  }
  bool contains(const Configuration& c) const { return index_of(c) >= 0; }

  friend bool operator==(const ConfigSet& a, const ConfigSet& b) { return a.items() == b.items(); }

 private:
  std::shared_ptr<const std::vector<Configuration>> items_;
};

enum class BallMetric { max_distance, symmetrized };

struct Ball {
  Configuration center;
  int radius = 0;
  BallMetric metric = BallMetric::max_distance;
  ConfigSet members;
};

inline void check_compatible(const Configuration& x, const Configuration& y) {
  if (x.particles() != y.particles()) throw DimensionError("configurations have different particle numbers");
  if (x.site_coords() != y.site_coords()) throw DimensionError("configurations have different site dimensions");
}

namespace detail {

/// Perfect matching in the bipartite graph {(i,j) : d(i,j) <= t} (Kuhn's algorithm).
inline bool has_matching(const std::vector<int>& dist, int n, int t) {
  std::vector<int> match(n, -1);
  std::function<bool(int, std::vector<char>&)> augment = [&](int i, std::vector<char>& seen) {
    for (int j = 0; j < n; ++j) {
      if (dist[i * n + j] > t || seen[j]) continue;
      seen[j] = 1;
      if (match[j] < 0 || augment(match[j], seen)) {
        match[j] = i;
        return true;
      }
    }
    return false;
  };
  for (int i = 0; i < n; ++i) {
    std::vector<char> seen(n, 0);
    if (!augment(i, seen)) return false;
  }
  return true;
}

}  // namespace detail

/// Max-distance: min over particle matchings of the largest single-particle displacement.
inline int rho(const LatticeGeometry& g, const Configuration& x, const Configuration& y) {
  check_compatible(x, y);
  const int n = x.particles();
  if (g.is_lattice() && g.coords() == 1) {
    int m = 0;
    for (int j = 0; j < n; ++j) m = std::max(m, std::abs(x.flat()[j] - y.flat()[j]));
    return m;
  }
  std::vector<int> dist(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) dist[i * n + j] = g.site_distance(x.site(i), y.site(j));
  std::vector<int> cand = dist;
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  size_t lo = 0, hi = cand.size() - 1;
  while (lo < hi) {
    size_t mid = (lo + hi) / 2;
    if (detail::has_matching(dist, n, cand[mid])) hi = mid;
    else lo = mid + 1;
  }
  return cand[lo];
}

/// Smallest single-particle distance between the sites of a and of b.
inline int site_set_distance(const LatticeGeometry& g, const Configuration& a, const Configuration& b) {
  int m = std::numeric_limits<int>::max();
  for (int i = 0; i < a.particles(); ++i)
    for (int j = 0; j < b.particles(); ++j) m = std::min(m, g.site_distance(a.site(i), b.site(j)));
  return m;
}

inline int diam(const LatticeGeometry& g, const Configuration& x) {
  int m = 0;
  for (int i = 0; i < x.particles(); ++i)
    for (int j = i + 1; j < x.particles(); ++j) m = std::max(m, g.site_distance(x.site(i), x.site(j)));
  return m;
}

inline Ball enumerate_ball(const LatticeGeometry& g, const Configuration& center, int L) {
  if (L < 0) throw InputError("ball radius must be nonnegative");
  const int n = center.particles();
  const int c = center.site_coords();
  if (c != g.coords()) throw DimensionError("configuration does not match the geometry");
  std::vector<std::vector<Site>> choices(n);
  for (int j = 0; j < n; ++j) choices[j] = g.site_ball(center.site(j), L);
  std::vector<Configuration> items;
  std::vector<size_t> pos(n, 0);
  std::vector<int> flat(static_cast<size_t>(n) * c);
  while (true) {
    for (int j = 0; j < n; ++j) std::copy(choices[j][pos[j]].begin(), choices[j][pos[j]].end(), flat.begin() + j * c);
    std::vector<int> canon = flat;
    if (detail::canonicalize(c, canon)) items.push_back(Configuration::trusted(c, std::move(canon)));
    int j = n - 1;
    while (j >= 0 && pos[j] + 1 == choices[j].size()) pos[j--] = 0;
    if (j < 0) break;
    ++pos[j];
  }
  Ball b;
  b.center = center;
  b.radius = L;
  b.metric = g.is_lattice() ? BallMetric::max_distance : BallMetric::symmetrized;
  b.members = ConfigSet(std::move(items));
  return b;
}

/// Calls f(y) for every sector neighbour y of x (one particle moved along one edge).
template <class F>
void for_each_sector_neighbor(const LatticeGeometry& g, const Configuration& x, F&& f) {
  const int n = x.particles();
  const int c = x.site_coords();
  for (int j = 0; j < n; ++j) {
    g.for_each_neighbor(x.site(j), [&](std::span<const int> s) {
      if (x.occupies(s)) return;
      std::vector<int> flat = x.flat();
      std::copy(s.begin(), s.end(), flat.begin() + j * c);
      detail::canonicalize(c, flat);
      f(Configuration::trusted(c, std::move(flat)));
    });
  }
}

/// Pairs (x, y), x in ball, y in ambient \ ball, adjacent in the sector graph. Sorted by (x, y).
inline std::vector<std::pair<Configuration, Configuration>> edge_boundary(const LatticeGeometry& g, const ConfigSet& ball,
                                                                          const ConfigSet& ambient) {
  std::vector<std::pair<Configuration, Configuration>> out;
  for (const auto& x : ball) {
    for_each_sector_neighbor(g, x, [&](Configuration y) {
      if (!ball.contains(y) && ambient.contains(y)) out.emplace_back(x, std::move(y));
    });
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::pair<Configuration, Configuration>> edge_boundary(const LatticeGeometry& g, const Ball& ball,
                                                                          const Ball& ambient) {
  return edge_boundary(g, ball.members, ambient.members);
}

/// Boundary relative to the whole sector graph.
inline std::vector<std::pair<Configuration, Configuration>> sector_edge_boundary(const LatticeGeometry& g,
                                                                                 const ConfigSet& ball) {
  std::vector<std::pair<Configuration, Configuration>> out;
  for (const auto& x : ball) {
    for_each_sector_neighbor(g, x, [&](Configuration y) {
      if (!ball.contains(y)) out.emplace_back(x, std::move(y));
    });
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Indices of members having a sector neighbour outside the set.
inline std::vector<int> inner_boundary(const LatticeGeometry& g, const ConfigSet& set) {
  std::vector<int> out;
  for (size_t i = 0; i < set.size(); ++i) {
    bool hit = false;
    for_each_sector_neighbor(g, set[i], [&](const Configuration& y) { hit = hit || !set.contains(y); });
    if (hit) out.push_back(static_cast<int>(i));
  }
  return out;
}

/// B_L(x' u x'') equals B_L(x') x B_L(x'') as sets of sector points, the product map being injective.
inline bool factorization_check(const LatticeGeometry& g, const Configuration& xa, const Configuration& xb, int L) {
  const Configuration x = merge(xa, xb);
  const Ball full = enumerate_ball(g, x, L);
  const Ball ba = enumerate_ball(g, xa, L);
  const Ball bb = enumerate_ball(g, xb, L);
  std::vector<Configuration> prod;
  prod.reserve(ba.members.size() * bb.members.size());
  for (const auto& a : ba.members) {
    for (const auto& b : bb.members) {
      for (int i = 0; i < a.particles(); ++i)
        if (b.occupies(a.site(i))) return false;
      prod.push_back(merge(a, b));
    }
  }
  const size_t raw = prod.size();
  ConfigSet image(std::move(prod));
  return image.size() == raw && image == full.members;
}

struct OccupationMap {
  std::map<Site, int> counts;
  int at(const Site& s) const {
    auto it = counts.find(s);
    return it == counts.end() ? 0 : it->second;
  }
};

inline OccupationMap occupation(const Configuration& x) {
  OccupationMap m;
  for (int j = 0; j < x.particles(); ++j) ++m.counts[x.site_vec(j)];
  return m;
}

/// Occupation numbers of a tuple of distinguishable particles (sites may repeat).
inline OccupationMap occupation(const std::vector<Site>& tuple) {
  OccupationMap m;
  for (const auto& s : tuple) ++m.counts[s];
  return m;
}

enum class BallClass { PI, FI };

inline BallClass classify_ball(const LatticeGeometry& g, const Ball& ball, const ScalingParams& p) {
  return diam(g, ball.center) > p.pi_threshold(ball.radius) ? BallClass::PI : BallClass::FI;
}

struct Decomposition {
  std::vector<int> J;    // 1-based canonical particle indices
  std::vector<int> Jc;
  Configuration x_j;
  Configuration x_jc;
  int separation = 0;
  bool separated = false;  // separation exceeds the regime's requirement
};

/// Split of a PI ball's center with maximal separation. J holds the lexicographically smallest site;
/// ties go to the lexicographically smallest site list of J.
inline Decomposition canonical_decomposition(const LatticeGeometry& g, const Ball& ball, const ScalingParams& p) {
  if (classify_ball(g, ball, p) != BallClass::PI) throw NoDecompositionError("ball is fully interactive");
  const Configuration& x = ball.center;
  const int n = x.particles();
  const int anchor = n - 1;  // canonical order is decreasing, so the last site is the smallest
  std::optional<Decomposition> best;
  for (uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
    if (!(mask >> anchor & 1u)) continue;
    std::vector<int> j0, jc0;
    for (int j = 0; j < n; ++j) (mask >> j & 1u ? j0 : jc0).push_back(j);
    Decomposition d;
    d.x_j = x.select(j0);
    d.x_jc = x.select(jc0);
    d.separation = site_set_distance(g, d.x_j, d.x_jc);
    for (int j : j0) d.J.push_back(j + 1);
    for (int j : jc0) d.Jc.push_back(j + 1);
    auto key = [](const Decomposition& e) {
      auto s = e.x_j.sites();
      std::reverse(s.begin(), s.end());
      return s;
    };
    if (!best || d.separation > best->separation || (d.separation == best->separation && key(d) < key(*best)))
      best = std::move(d);
  }
  const double need = p.regime == Regime::infinite_range
                          ? 2.0 * std::pow(static_cast<double>(ball.radius), 1.0 + p.delta)
                          : 2.0 * ball.radius;
  best->separated = best->separation > need;
  return *best;
}

struct SeparabilityWitness {
  Site box_lo;
  Site box_hi;
  std::vector<int> J1;  // 1-based
  std::vector<int> J2;
};

/// Weak separability of two radius-L cubes of distinguishable particles, searched over the bounding
/// boxes of projection unions. Prefers the largest |J1| - |J2|, then lexicographic (J1, J2).
inline std::optional<SeparabilityWitness> find_separability_witness(const LatticeGeometry& g, const Ball& bx,
                                                                    const Ball& by) {
  if (!g.is_lattice()) throw GeometryError("separability witnesses are defined on lattices");
  check_compatible(bx.center, by.center);
  if (bx.radius != by.radius) throw InputError("separability witness needs equal radii");
  const int n = bx.center.particles();
  const int c = g.coords();
  const int L = bx.radius;
  const auto& x = bx.center;
  const auto& y = by.center;
  std::optional<SeparabilityWitness> best;
  int best_margin = 0;
  auto bits = [n](uint32_t m) {
    std::vector<int> v;
    for (int j = 0; j < n; ++j)
      if (m >> j & 1u) v.push_back(j + 1);
    return v;
  };
  for (uint32_t m1 = 1; m1 < (1u << n); ++m1) {
    for (uint32_t m2 = 0; m2 < (1u << n); ++m2) {
      const int margin = std::popcount(m1) - std::popcount(m2);
      if (margin <= 0) continue;
      Site lo(c, std::numeric_limits<int>::max()), hi(c, std::numeric_limits<int>::min());
      auto grow = [&](std::span<const int> s) {
        for (int i = 0; i < c; ++i) {
          lo[i] = std::min(lo[i], s[i] - L);
          hi[i] = std::max(hi[i], s[i] + L);
        }
      };
      for (int j = 0; j < n; ++j) {
        if (m1 >> j & 1u) grow(x.site(j));
        if (m2 >> j & 1u) grow(y.site(j));
      }
      int dm = 0;
      for (int i = 0; i < c; ++i) dm = std::max(dm, hi[i] - lo[i]);
      if (dm > 2 * n * L) continue;
      bool disjoint = true;
      for (int j = 0; j < n && disjoint; ++j) {
        if (m2 >> j & 1u) continue;
        bool sep = false;
        for (int i = 0; i < c; ++i) sep = sep || y.site(j)[i] + L < lo[i] || y.site(j)[i] - L > hi[i];
        disjoint = sep;
      }
      if (!disjoint) continue;
      SeparabilityWitness w{lo, hi, bits(m1), bits(m2)};
      if (!best || margin > best_margin ||
          (margin == best_margin && std::tie(w.J1, w.J2) < std::tie(best->J1, best->J2))) {
        best = std::move(w);
        best_margin = margin;
      }
    }
  }
  return best;
}

}  // namespace mpdsa
