#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <memory>
#include <queue>
#include <span>
#include <vector>

#include "mpdsa/errors.hpp"

namespace mpdsa {

using Site = std::vector<int>;

inline constexpr int kMaxSiteCoords = 4;

/// Single-particle space: the lattice Z^d with cube balls, or a finite connected graph.
class LatticeGeometry {
 public:
  enum class Kind { lattice, graph };

  static LatticeGeometry lattice(int d) {
    if (d < 1 || d > kMaxSiteCoords) throw DimensionError("lattice dimension must be in [1, 4]");
    LatticeGeometry g;
    g.kind_ = Kind::lattice;
    g.d_ = d;
    g.coords_ = d;
    return g;
  }

  /// Explicit graph on vertices 0..n-1. `growth_dim` is the exponent d in |B_L| <= C_d L^d.
  static LatticeGeometry graph(std::vector<std::vector<int>> adjacency, int growth_dim = 1) {
    const int n = static_cast<int>(adjacency.size());
    if (n == 0) throw GeometryError("graph has no vertices");
    if (growth_dim < 1) throw DimensionError("growth dimension must be positive");
    for (int v = 0; v < n; ++v) {
      auto& nb = adjacency[v];
      std::sort(nb.begin(), nb.end());
      nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
      for (int w : nb) {
        if (w < 0 || w >= n || w == v) throw GeometryError("graph adjacency has an invalid edge");
      }
    }
    for (int v = 0; v < n; ++v) {
      for (int w : adjacency[v]) {
        if (!std::binary_search(adjacency[w].begin(), adjacency[w].end(), v))
          throw GeometryError("graph adjacency is not symmetric");
      }
    }
    auto data = std::make_shared<GraphData>();
    data->adjacency = std::move(adjacency);
    data->dist.assign(static_cast<size_t>(n) * n, -1);
    for (int s = 0; s < n; ++s) {
      std::queue<int> q;
      q.push(s);
      data->dist[static_cast<size_t>(s) * n + s] = 0;
      while (!q.empty()) {
        int v = q.front();
        q.pop();
        for (int w : data->adjacency[v]) {
          auto& dw = data->dist[static_cast<size_t>(s) * n + w];
          if (dw < 0) {
            dw = data->dist[static_cast<size_t>(s) * n + v] + 1;
            q.push(w);
          }
        }
      }
    }
    if (std::any_of(data->dist.begin(), data->dist.end(), [](int x) { return x < 0; }))
      throw GeometryError("graph is not connected");
    LatticeGeometry g;
    g.kind_ = Kind::graph;
    g.d_ = growth_dim;
    g.coords_ = 1;
    g.graph_ = std::move(data);
    return g;
  }

  Kind kind() const { return kind_; }
  bool is_lattice() const { return kind_ == Kind::lattice; }
  int d() const { return d_; }
  /// Number of integers describing one site.
  int coords() const { return coords_; }
  int vertex_count() const { return is_lattice() ? -1 : static_cast<int>(graph_->adjacency.size()); }

  bool contains(std::span<const int> s) const {
    if (static_cast<int>(s.size()) != coords_) return false;
    return is_lattice() || (s[0] >= 0 && s[0] < vertex_count());
  }

  /// Max-norm on Z^d, graph distance otherwise.
  int site_distance(std::span<const int> a, std::span<const int> b) const {
    if (is_lattice()) {
      int m = 0;
      for (int i = 0; i < coords_; ++i) m = std::max(m, std::abs(a[i] - b[i]));
      return m;
    }
    const int n = vertex_count();
    return graph_->dist[static_cast<size_t>(a[0]) * n + b[0]];
  }

  bool adjacent(std::span<const int> a, std::span<const int> b) const {
    if (is_lattice()) {
      int l1 = 0;
      for (int i = 0; i < coords_; ++i) l1 += std::abs(a[i] - b[i]);
      return l1 == 1;
    }
    const auto& nb = graph_->adjacency[a[0]];
    return std::binary_search(nb.begin(), nb.end(), b[0]);
  }

  /// Calls f(span) for each nearest neighbour of site a.
  template <class F>
  void for_each_neighbor(std::span<const int> a, F&& f) const {
    std::array<int, kMaxSiteCoords> buf{};
    if (is_lattice()) {
      std::copy(a.begin(), a.end(), buf.begin());
      for (int i = 0; i < coords_; ++i) {
        for (int s : {-1, 1}) {
          buf[i] = a[i] + s;
          f(std::span<const int>(buf.data(), coords_));
        }
        buf[i] = a[i];
      }
      return;
    }
    for (int w : graph_->adjacency[a[0]]) {
      buf[0] = w;
      f(std::span<const int>(buf.data(), 1));
    }
  }

  int max_degree() const {
    if (is_lattice()) return 2 * d_;
    size_t m = 0;
    for (const auto& nb : graph_->adjacency) m = std::max(m, nb.size());
    return static_cast<int>(m);
  }

  /// Sites within distance L of a, in ascending lexicographic order.
  std::vector<Site> site_ball(std::span<const int> a, int L) const {
    std::vector<Site> out;
    if (L < 0) return out;
    if (is_lattice()) {
      Site cur(a.begin(), a.end());
      for (int i = 0; i < coords_; ++i) cur[i] = a[i] - L;
      while (true) {
        out.push_back(cur);
        int i = coords_ - 1;
        while (i >= 0 && cur[i] == a[i] + L) {
          cur[i] = a[i] - L;
          --i;
        }
        if (i < 0) break;
        ++cur[i];
      }
      return out;
    }
    const int n = vertex_count();
    for (int v = 0; v < n; ++v)
      if (graph_->dist[static_cast<size_t>(a[0]) * n + v] <= L) out.push_back(Site{v});
    return out;
  }

  /// Smallest C with |B_L(x)| <= C L^d for every site and L >= 1.
  double growth_constant() const {
    if (is_lattice()) return std::pow(3.0, d_);
    const int n = vertex_count();
    int diam = 0;
    for (int v : graph_->dist) diam = std::max(diam, v);
    double c = 1.0;
    for (int x = 0; x < n; ++x) {
      for (int L = 1; L <= std::max(1, diam); ++L) {
        int cnt = 0;
        for (int v = 0; v < n; ++v) cnt += graph_->dist[static_cast<size_t>(x) * n + v] <= L;
        c = std::max(c, cnt / std::pow(static_cast<double>(L), d_));
      }
    }
    return c;
  }

  const std::vector<std::vector<int>>& adjacency() const {
    if (is_lattice()) throw GeometryError("lattice geometry has no explicit adjacency");
    return graph_->adjacency;
  }

  bool operator==(const LatticeGeometry& o) const {
    if (kind_ != o.kind_ || d_ != o.d_) return false;
    return is_lattice() || graph_ == o.graph_ || graph_->adjacency == o.graph_->adjacency;
  }

 private:
  struct GraphData {
    std::vector<std::vector<int>> adjacency;
    std::vector<int> dist;
  };

  Kind kind_ = Kind::lattice;
  int d_ = 1;
  int coords_ = 1;
  std::shared_ptr<const GraphData> graph_;
};

}  // namespace mpdsa
