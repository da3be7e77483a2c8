#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <span>
#include <vector>

#include "mpdsa/config_space.hpp"
#include "mpdsa/errors.hpp"

namespace mpdsa {

enum class Marginal { uniform, gaussian };

struct FieldModel {
  enum class Kind { iid, moving_average };
  Kind kind = Kind::iid;
  Marginal marginal = Marginal::uniform;
  std::vector<double> kernel{1.0};

  static FieldModel iid(Marginal m) { return FieldModel{Kind::iid, m, {1.0}}; }
  static FieldModel moving_average(Marginal m, std::vector<double> k) {
    FieldModel f{Kind::moving_average, m, std::move(k)};
    f.validate();
    return f;
  }

  void validate() const {
    if (kernel.empty()) throw InputError("field kernel is empty");
    double tail = 0.0;
    for (size_t j = 1; j < kernel.size(); ++j) tail += std::abs(kernel[j]);
    if (!(kernel[0] > tail)) throw InputError("field kernel: a0 must dominate the sum of the other coefficients");
    if (kind == Kind::iid && kernel.size() != 1) throw InputError("iid field takes no kernel");
  }

  int dependence_range() const { return static_cast<int>(kernel.size()) - 1; }
};

struct MarginalProfile {
  double holder_exponent;
  double holder_constant;
};

inline MarginalProfile marginal_profile(Marginal m) {
  if (m == Marginal::uniform) return {1.0, 1.0};
  return {1.0, 1.0 / std::sqrt(2.0 * std::numbers::pi)};
}

struct MixingProfile {
  int dependence_range;
  double rate_constant;
};

/// Moving averages are exactly independent beyond their range, so any rate constant works.
inline MixingProfile mixing_profile(const FieldModel& f) {
  return {f.dependence_range(), f.kind == FieldModel::Kind::iid ? INFINITY : 1.0};
}

namespace rng {

inline uint64_t splitmix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t combine(uint64_t h, uint64_t v) { return splitmix64(h ^ splitmix64(v)); }

inline uint64_t trial_seed(uint64_t seed, uint64_t trial) { return combine(splitmix64(seed), trial); }

inline uint64_t site_key(uint64_t seed, uint64_t stream, std::span<const int> site) {
  uint64_t h = combine(splitmix64(seed), stream);
  for (int c : site) h = combine(h, static_cast<uint64_t>(static_cast<int64_t>(c)));
  return h;
}

/// Uniform on (0, 1].
inline double to_unit(uint64_t h) { return (static_cast<double>(h >> 11) + 1.0) * 0x1.0p-53; }

inline double uniform(uint64_t seed, std::span<const int> site) { return to_unit(site_key(seed, 1, site)); }

inline double gaussian(uint64_t seed, std::span<const int> site) {
  const double u1 = to_unit(site_key(seed, 2, site));
  const double u2 = to_unit(site_key(seed, 3, site));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Counter-based stream for non-site draws (trial-level randomness).
class Stream {
 public:
  explicit Stream(uint64_t seed) : seed_(seed) {}
  uint64_t next_u64() { return combine(seed_, counter_++); }
  double next_unit() { return to_unit(next_u64()); }
  int next_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

 private:
  uint64_t seed_;
  uint64_t counter_ = 0;
};

}  // namespace rng

/// Base IID variable at a site (the moving-average building block).
inline double base_value(Marginal m, uint64_t seed, std::span<const int> site) {
  return m == Marginal::uniform ? rng::uniform(seed, site) : rng::gaussian(seed, site);
}

inline double field_value(const FieldModel& f, uint64_t seed, std::span<const int> site) {
  if (f.kind == FieldModel::Kind::iid) return base_value(f.marginal, seed, site);
  Site s(site.begin(), site.end());
  double v = 0.0;
  for (size_t j = 0; j < f.kernel.size(); ++j) {
    s[0] = site[0] - static_cast<int>(j);
    v += f.kernel[j] * base_value(f.marginal, seed, s);
  }
  return v;
}

struct FieldSample {
  std::map<Site, double> values;

  bool covers(const Site& s) const { return values.count(s) > 0; }
  double at(std::span<const int> s) const {
    auto it = values.find(Site(s.begin(), s.end()));
    if (it == values.end()) throw MissingDataError("field sample does not cover a requested site");
    return it->second;
  }
};

inline FieldSample sample_field(const FieldModel& f, const std::vector<Site>& region, uint64_t seed) {
  f.validate();
  FieldSample out;
  for (const auto& s : region) out.values.emplace(s, field_value(f, seed, s));
  return out;
}

/// All single-particle sites touched by a set of configurations.
inline std::vector<Site> projection(const ConfigSet& set) {
  std::vector<Site> out;
  for (const auto& x : set)
    for (int j = 0; j < x.particles(); ++j) out.push_back(x.site_vec(j));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline double potential_energy(const Configuration& x, const FieldSample& v) {
  double e = 0.0;
  for (int j = 0; j < x.particles(); ++j) e += v.at(x.site(j));
  return e;
}

inline double potential_energy(const OccupationMap& occ, const FieldSample& v) {
  double e = 0.0;
  for (const auto& [s, n] : occ.counts) e += n * v.at(s);
  return e;
}

struct CovarianceEstimate {
  double covariance;
  double stderr_;
  double ci_lo;
  double ci_hi;
  size_t trials;
};

/// Sample covariance of V(x), V(y) over independent seeds, with a normal-approximation 95% interval.
inline CovarianceEstimate empirical_mixing(const FieldModel& f, const Site& x, const Site& y, size_t trials,
                                           uint64_t seed) {
  if (trials < 100) throw InputError("empirical_mixing needs at least 100 trials");
  std::vector<double> a(trials), b(trials);
  for (size_t t = 0; t < trials; ++t) {
    const uint64_t s = rng::trial_seed(seed, t);
    a[t] = field_value(f, s, x);
    b[t] = field_value(f, s, y);
  }
  const double n = static_cast<double>(trials);
  double ma = 0, mb = 0;
  for (size_t t = 0; t < trials; ++t) ma += a[t], mb += b[t];
  ma /= n;
  mb /= n;
  std::vector<double> prod(trials);
  double cov = 0;
  for (size_t t = 0; t < trials; ++t) {
    prod[t] = (a[t] - ma) * (b[t] - mb);
    cov += prod[t];
  }
  cov /= n - 1.0;
  double var = 0;
  for (double p : prod) var += (p - cov) * (p - cov);
  var /= n - 1.0;
  const double se = std::sqrt(var / n);
  return {cov, se, cov - 1.959964 * se, cov + 1.959964 * se, trials};
}

struct MeanFluctuation {
  std::vector<Site> box;
  double xi = 0.0;
  std::map<Site, double> eta;
};

inline MeanFluctuation mean_fluct_decompose(const FieldSample& v, const std::vector<Site>& Q) {
  if (Q.empty()) throw InputError("empty box");
  MeanFluctuation mf;
  mf.box = Q;
  double s = 0.0;
  for (const auto& x : Q) s += v.at(x);
  mf.xi = s / static_cast<double>(Q.size());
  for (const auto& x : Q) mf.eta[x] = v.at(x) - mf.xi;
  return mf;
}

/// Lattice box [lo, hi] (inclusive) as a site list in lexicographic order.
inline std::vector<Site> box_sites(const Site& lo, const Site& hi) {
  std::vector<Site> out;
  Site cur = lo;
  const int c = static_cast<int>(lo.size());
  while (true) {
    out.push_back(cur);
    int i = c - 1;
    while (i >= 0 && cur[i] == hi[i]) cur[i] = lo[i], --i;
    if (i < 0) break;
    ++cur[i];
  }
  return out;
}

struct W3Constants {
  double C1 = 1.0, A1 = 0.0, b1 = 1.0;  // C', A', b'
  double C2 = 1.0, A2 = 0.0, b2 = 1.0;  // C'', A'', b''
};

struct NuEstimate {
  double estimate;
  double stderr_;
  size_t bins;
  size_t trials;
  double w3_threshold;
  double exceed_fraction;
};

/// Monte Carlo estimate of the conditional concentration function of the sample mean.
/// Trials are binned by nearest fluctuation vector; within a bin, the first half of the samples
/// locates the densest window of width s and the second half measures its probability.
inline NuEstimate empirical_nu(const FieldModel& f, const std::vector<Site>& Q, double s, size_t trials,
                               uint64_t seed, const W3Constants& w3 = {}) {
  if (!(s > 0.0 && s <= 1.0)) throw InputError("empirical_nu: s must lie in (0, 1]");
  if (trials < 1000) throw InputError("empirical_nu needs at least 1000 trials");
  const size_t q = Q.size();
  std::vector<double> xi(trials);
  std::vector<std::vector<double>> eta(trials, std::vector<double>(q));
  for (size_t t = 0; t < trials; ++t) {
    const uint64_t ts = rng::trial_seed(seed, t);
    double sum = 0;
    for (size_t i = 0; i < q; ++i) sum += eta[t][i] = field_value(f, ts, Q[i]);
    xi[t] = sum / static_cast<double>(q);
    for (size_t i = 0; i < q; ++i) eta[t][i] -= xi[t];
  }
  const size_t K = static_cast<size_t>(std::ceil(std::cbrt(static_cast<double>(trials)) - 1e-9));
  std::vector<std::vector<double>> bins(K);
  for (size_t t = 0; t < trials; ++t) {
    size_t best = 0;
    double bd = INFINITY;
    for (size_t k = 0; k < K; ++k) {
      double d = 0;
      for (size_t i = 0; i < q; ++i) d += (eta[t][i] - eta[k][i]) * (eta[t][i] - eta[k][i]);
      if (d < bd) bd = d, best = k;
    }
    bins[best].push_back(xi[t]);
  }
  Site lo = Q.front(), hi = Q.front();
  for (const auto& x : Q)
    for (size_t i = 0; i < x.size(); ++i) lo[i] = std::min(lo[i], x[i]), hi[i] = std::max(hi[i], x[i]);
  int R = 1;
  for (size_t i = 0; i < lo.size(); ++i) R = std::max(R, hi[i] - lo[i]);
  const double thr = w3.C1 * std::pow(static_cast<double>(R), w3.A1) * std::pow(s, w3.b1);

  double est = 0, var = 0, exceed = 0, used = 0;
  for (const auto& b : bins) {
    if (b.size() < 2) continue;
    const size_t half = b.size() / 2;
    std::vector<double> a(b.begin(), b.begin() + half), e(b.begin() + half, b.end());
    std::sort(a.begin(), a.end());
    std::sort(e.begin(), e.end());
    double t_best = a.front();
    size_t c_best = 0;
    for (size_t i = 0; i < a.size(); ++i) {
      size_t c = std::upper_bound(a.begin(), a.end(), a[i] + s) - (a.begin() + i);
      // every left end in [a[i+c-1] - s, a[i]] covers the same points; take the middle
      if (c > c_best) c_best = c, t_best = 0.5 * (a[i] + a[i + c - 1] - s);
    }
    const size_t ce = std::upper_bound(e.begin(), e.end(), t_best + s) - std::lower_bound(e.begin(), e.end(), t_best);
    const double p = static_cast<double>(ce) / static_cast<double>(e.size());
    const double w = static_cast<double>(b.size());
    est += w * p;
    var += w * w * p * (1 - p) / static_cast<double>(e.size());
    exceed += p >= thr ? w : 0.0;
    used += w;
  }
  return {est / used, std::sqrt(var) / used, K, trials, thr, exceed / used};
}

}  // namespace mpdsa
