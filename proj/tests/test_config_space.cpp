#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "mpdsa/config_space.hpp"
#include "mpdsa/params.hpp"

using namespace mpdsa;

namespace {

const LatticeGeometry Z1 = LatticeGeometry::lattice(1);
const LatticeGeometry Z2 = LatticeGeometry::lattice(2);

// Oracle: max-distance by brute force over all permutations.
int rho_bruteforce(const LatticeGeometry& g, const Configuration& x, const Configuration& y) {
  std::vector<int> perm(static_cast<size_t>(x.particles()));
  std::iota(perm.begin(), perm.end(), 0);
  int best = std::numeric_limits<int>::max();
  do {
    int m = 0;
    for (int j = 0; j < x.particles(); ++j) m = std::max(m, g.site_distance(x.site(perm[j]), y.site(j)));
    best = std::min(best, m);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Configuration random_config(std::mt19937& rng, const LatticeGeometry& g, int n, int span) {
  std::uniform_int_distribution<int> u(-span, span);
  while (true) {
    std::vector<Site> s;
    for (int j = 0; j < n; ++j) {
      Site site(static_cast<size_t>(g.coords()));
      for (auto& c : site) c = u(rng);
      s.push_back(site);
    }
    std::set<Site> uniq(s.begin(), s.end());
    if (static_cast<int>(uniq.size()) == n) return Configuration::from_sites(s);
  }
}

// Oracle: every tuple of the product cube, kept if distinct and within rho <= L by the brute-force metric.
std::set<Configuration> ball_bruteforce(const LatticeGeometry& g, const Configuration& c, int L) {
  std::set<Configuration> out;
  const int n = c.particles();
  int lo = std::numeric_limits<int>::max(), hi = std::numeric_limits<int>::min();
  for (int j = 0; j < n; ++j)
    for (int v : c.site(j)) {
      lo = std::min(lo, v - L);
      hi = std::max(hi, v + L);
    }
  const int k = n * g.coords();
  std::vector<int> flat(static_cast<size_t>(k), lo);
  while (true) {
    std::set<std::vector<int>> sites;
    for (int j = 0; j < n; ++j) sites.insert(std::vector<int>(flat.begin() + j * g.coords(), flat.begin() + (j + 1) * g.coords()));
    if (static_cast<int>(sites.size()) == n) {
      Configuration y(g.coords(), flat);
      if (rho_bruteforce(g, c, y) <= L) out.insert(y);
    }
    int i = k - 1;
    while (i >= 0 && flat[i] == hi) flat[i--] = lo;
    if (i < 0) break;
    ++flat[i];
  }
  return out;
}

}  // namespace

TEST(Configuration, CanonicalOrderIsDecreasing) {
  auto x = Configuration::line({0, 5});
  EXPECT_EQ(x.flat(), (std::vector<int>{5, 0}));
  EXPECT_EQ(x, Configuration::line({5, 0}));
  EXPECT_THROW(Configuration::line({3, 3}), GeometryError);
}

TEST(Rho, WorkedValues) {
  EXPECT_EQ(rho(Z1, Configuration::line({5, 0}), Configuration::line({4, 2})), 2);
  auto x = Configuration::line({7, 1, -3});
  EXPECT_EQ(rho(Z1, x, x), 0);
  EXPECT_EQ(rho(Z1, Configuration::line({0, 5}), Configuration::line({5, 0})), 0);
  EXPECT_THROW(rho(Z1, Configuration::line({1}), Configuration::line({1, 2})), DimensionError);
}

TEST(Rho, MatchesPermutationOracleAndMetricAxioms) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 10000; ++trial) {
    const auto& g = trial % 2 ? Z2 : Z1;
    const int n = 1 + trial % 3;
    auto x = random_config(rng, g, n, 6), y = random_config(rng, g, n, 6), z = random_config(rng, g, n, 6);
    const int xy = rho(g, x, y);
    ASSERT_EQ(xy, rho_bruteforce(g, x, y));
    ASSERT_EQ(xy, rho(g, y, x));
    ASSERT_EQ(xy == 0, x == y);
    ASSERT_LE(xy, rho(g, x, z) + rho(g, z, y));
  }
}

TEST(Diam, Values) {
  EXPECT_EQ(diam(Z1, Configuration::line({0, 10, 20})), 20);
  EXPECT_EQ(diam(Z1, Configuration::line({4})), 0);
  EXPECT_EQ(diam(Z1, Configuration::line({0, 1})), 1);
}

TEST(Ball, WorkedEnumeration) {
  auto b = enumerate_ball(Z1, Configuration::line({3, 1}), 1);
  std::vector<Configuration> expect;
  for (auto [a, c] : std::vector<std::pair<int, int>>{{2, 0}, {2, 1}, {3, 0}, {3, 1}, {3, 2}, {4, 0}, {4, 1}, {4, 2}})
    expect.push_back(Configuration::line({a, c}));
  std::sort(expect.begin(), expect.end());
  EXPECT_EQ(b.members.items(), expect);
  EXPECT_EQ(enumerate_ball(Z1, Configuration::line({3, 1}), 0).members.size(), 1u);
  EXPECT_EQ(enumerate_ball(Z1, Configuration::line({0}), 2).members.size(), 5u);
}

TEST(Ball, MatchesBruteForceAndVolumeBound) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const auto& g = trial % 3 == 2 ? Z2 : Z1;
    const int n = g.d() == 2 ? 2 : 1 + trial % 3;
    const int L = trial % 3;
    auto c = random_config(rng, g, n, 3);
    auto b = enumerate_ball(g, c, L);
    auto oracle = ball_bruteforce(g, c, L);
    ASSERT_EQ(std::set<Configuration>(b.members.begin(), b.members.end()), oracle);
    ASSERT_TRUE(std::is_sorted(b.members.begin(), b.members.end()));
    ASSERT_LE(static_cast<double>(b.members.size()), std::pow(2 * L + 1, n * g.d()));
  }
  // One particle fills the full cube.
  EXPECT_EQ(enumerate_ball(Z2, Configuration::from_sites({{0, 0}}), 2).members.size(), 25u);
}

TEST(Ball, GraphGrowthBound) {
  std::vector<std::vector<int>> adj(12);
  for (int v = 0; v < 12; ++v) {
    adj[v].push_back((v + 1) % 12);
    adj[(v + 1) % 12].push_back(v);
  }
  auto g = LatticeGeometry::graph(adj, 1);
  for (int L = 1; L <= 5; ++L) EXPECT_LE(g.site_ball(std::vector<int>{0}, L).size(), static_cast<size_t>(2 * L + 1));
  std::vector<std::vector<int>> bad{{1}, {0}, {}};
  EXPECT_THROW(LatticeGeometry::graph(bad), GeometryError);
}

TEST(EdgeBoundary, Values) {
  auto amb = enumerate_ball(Z1, Configuration::line({0}), 2);
  auto b = enumerate_ball(Z1, Configuration::line({0}), 0);
  auto e = edge_boundary(Z1, b, amb);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0].second, Configuration::line({-1}));
  EXPECT_EQ(e[1].second, Configuration::line({1}));
  EXPECT_TRUE(edge_boundary(Z1, amb, amb).empty());
}

TEST(EdgeBoundary, MatchesNeighbourOracle) {
  auto b = enumerate_ball(Z1, Configuration::line({3, 1}), 1);
  auto amb = enumerate_ball(Z1, Configuration::line({3, 1}), 3);
  size_t count = 0;
  for (const auto& x : b.members)
    for (const auto& y : amb.members)
      if (!b.members.contains(y)) {
        // neighbours differ by one particle moving one step
        int moved = 0, step = 0;
        for (int j = 0; j < 2; ++j) {
          int d = std::abs(x.site(j)[0] - y.site(j)[0]);
          moved += d > 0;
          step += d;
        }
        count += moved == 1 && step == 1;
      }
  EXPECT_EQ(edge_boundary(Z1, b, amb).size(), count);
  EXPECT_EQ(count, 8u);  // 3 + 3 through the outer faces, 1 + 1 through the corners
}

TEST(Factorization, Values) {
  EXPECT_TRUE(factorization_check(Z1, Configuration::line({10}), Configuration::line({0}), 2));
  EXPECT_FALSE(factorization_check(Z1, Configuration::line({3}), Configuration::line({0}), 2));
  EXPECT_TRUE(factorization_check(Z1, Configuration::line({1}), Configuration::line({0}), 0));
}

TEST(Factorization, HoldsWhenSeparationExceedsTwiceRadius) {
  std::mt19937 rng(3);
  for (int t = 0; t < 40; ++t) {
    const int L = t % 3;
    auto a = random_config(rng, Z1, 1 + t % 2, 2);
    int shift = 0;
    for (int v : a.flat()) shift = std::max(shift, v);
    auto b0 = random_config(rng, Z1, 1, 2);
    auto b = Configuration::line({b0.flat()[0] + shift + 2 * L + 5 + 2});
    ASSERT_GT(site_set_distance(Z1, a, b), 2 * L);
    ASSERT_TRUE(factorization_check(Z1, a, b, L));
  }
}

TEST(Classify, Regimes) {
  auto p3 = ScalingParams::defaults(3, 1);
  EXPECT_EQ(classify_ball(Z1, Ball{Configuration::line({0, 10, 20}), 1}, p3), BallClass::PI);
  auto p2 = ScalingParams::defaults(2, 1);
  EXPECT_EQ(classify_ball(Z1, Ball{Configuration::line({5, 0}), 10}, p2), BallClass::FI);
  auto pi = ScalingParams::infinite_range(2, 1, 0.05);
  EXPECT_EQ(classify_ball(Z1, Ball{Configuration::line({12, 0}), 8}, pi), BallClass::PI);
  EXPECT_NEAR(std::pow(8.0, 1.05), 8.87656, 1e-5);
}

TEST(Decomposition, WorkedExamples) {
  auto p2 = ScalingParams::defaults(2, 1);
  auto d = canonical_decomposition(Z1, Ball{Configuration::line({20, 0}), 1}, p2);
  EXPECT_EQ(d.separation, 20);
  EXPECT_EQ(merge(d.x_j, d.x_jc), Configuration::line({20, 0}));
  auto p3 = ScalingParams::defaults(3, 1);
  auto e = canonical_decomposition(Z1, Ball{Configuration::line({0, 10, 20}), 1}, p3);
  EXPECT_EQ(e.separation, 10);
  EXPECT_EQ(e.x_j, Configuration::line({0}));
  EXPECT_TRUE(e.separated);
  EXPECT_THROW(canonical_decomposition(Z1, Ball{Configuration::line({1, 0}), 1}, p2), NoDecompositionError);
}

TEST(Decomposition, MaximalSeparationOverAllSplits) {
  std::mt19937 rng(8);
  auto p = ScalingParams::defaults(3, 1);
  for (int t = 0; t < 50; ++t) {
    auto x = random_config(rng, Z1, 3, 40);
    Ball b{x, 1};
    if (classify_ball(Z1, b, p) != BallClass::PI) continue;
    int best = 0;
    for (int mask = 1; mask < 7; ++mask) {
      std::vector<int> a, c;
      for (int j = 0; j < 3; ++j) (mask >> j & 1 ? a : c).push_back(j);
      best = std::max(best, site_set_distance(Z1, x.select(a), x.select(c)));
    }
    auto d = canonical_decomposition(Z1, b, p);
    EXPECT_EQ(d.separation, best);
    EXPECT_GT(d.separation, 2);
  }
}

namespace {

// Checks a witness against its definition by enumerating coordinate projections.
bool witness_valid(const LatticeGeometry& g, const Ball& bx, const Ball& by, const SeparabilityWitness& w) {
  auto inside = [&](std::span<const int> s) {
    for (int i = 0; i < g.coords(); ++i)
      if (s[i] < w.box_lo[i] || s[i] > w.box_hi[i]) return false;
    return true;
  };
  int dm = 0;
  for (int i = 0; i < g.coords(); ++i) dm = std::max(dm, w.box_hi[i] - w.box_lo[i]);
  if (dm > 2 * bx.center.particles() * bx.radius || w.J1.size() <= w.J2.size()) return false;
  const int L = bx.radius;
  for (int j : w.J1)
    for (const auto& s : g.site_ball(bx.center.site(j - 1), L))
      if (!inside(s)) return false;
  for (int j : w.J2)
    for (const auto& s : g.site_ball(by.center.site(j - 1), L))
      if (!inside(s)) return false;
  for (int j = 1; j <= by.center.particles(); ++j) {
    if (std::count(w.J2.begin(), w.J2.end(), j)) continue;
    for (const auto& s : g.site_ball(by.center.site(j - 1), L))
      if (inside(s)) return false;
  }
  return true;
}

int rho_sym(const LatticeGeometry& g, const Configuration& x, const Configuration& y) { return rho(g, x, y); }

}  // namespace

TEST(Separability, WorkedExamples) {
  Ball bx = enumerate_ball(Z1, Configuration::line({0, 1}), 1), by = enumerate_ball(Z1, Configuration::line({50, 51}), 1);
  auto w = find_separability_witness(Z1, bx, by);
  ASSERT_TRUE(w);
  EXPECT_TRUE(witness_valid(Z1, bx, by, *w));
  EXPECT_EQ(w->box_lo, Site{-1});
  EXPECT_EQ(w->box_hi, Site{2});
  EXPECT_EQ(w->J1, (std::vector<int>{1, 2}));
  EXPECT_TRUE(w->J2.empty());
  EXPECT_FALSE(find_separability_witness(Z1, bx, bx));
}

TEST(Separability, DistantPairsAreSeparable) {
  std::mt19937 rng(21);
  int tested = 0;
  while (tested < 100) {
    const auto& g = tested % 2 ? Z2 : Z1;
    const int n = g.d() == 2 ? 2 : 2 + tested % 2;
    const int L = 1 + tested % 3;
    auto x = random_config(rng, g, n, 8 * n * L);
    auto y = random_config(rng, g, n, 8 * n * L);
    if (rho_sym(g, x, y) <= 4 * n * L) continue;
    Ball bx{x, L}, by{y, L};
    auto w = find_separability_witness(g, bx, by);
    ASSERT_TRUE(w) << "no witness for a pair at distance " << rho_sym(g, x, y);
    ASSERT_TRUE(witness_valid(g, bx, by, *w));
    ++tested;
  }
}

TEST(FullyInteractive, DistantProjectionsAreApart) {
  std::mt19937 rng(2);
  for (int n = 2; n <= 3; ++n) {
    auto p = ScalingParams::defaults(n, 1);
    const int L = 1;
    int tested = 0;
    while (tested < 30) {
      auto x = random_config(rng, Z1, n, 6 * n);
      auto y = random_config(rng, Z1, n, 60 * n);
      Ball bx{x, L}, by{y, L};
      if (classify_ball(Z1, bx, p) != BallClass::FI || classify_ball(Z1, by, p) != BallClass::FI) continue;
      if (rho(Z1, x, y) < p.C_N() * L) continue;
      std::set<int> px, py;
      for (const auto& c : enumerate_ball(Z1, x, L).members)
        for (int v : c.flat()) px.insert(v);
      for (const auto& c : enumerate_ball(Z1, y, L).members)
        for (int v : c.flat()) py.insert(v);
      int d = std::numeric_limits<int>::max();
      for (int a : px)
        for (int b : py) d = std::min(d, std::abs(a - b));
      ASSERT_GE(d, 2 * L);
      ++tested;
    }
  }
}

TEST(Occupation, Counts) {
  auto m = occupation(std::vector<Site>{{2}, {2}, {5}});
  EXPECT_EQ(m.at({2}), 2);
  EXPECT_EQ(m.at({5}), 1);
  auto f = occupation(Configuration::line({4, 1, 0}));
  int total = 0;
  for (const auto& [s, c] : f.counts) {
    EXPECT_LE(c, 1);
    total += c;
  }
  EXPECT_EQ(total, 3);
}
