#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mpdsa/errors.hpp"

namespace mpdsa {

enum class Regime { finite_range, infinite_range };

/// Choice of the constant in the distant-pair threshold C_N L.
enum class DistantConstant { eleven_n, two_a_plus_three };

struct ScalingParams {
  int N = 2;
  int d = 1;
  double alpha = 4.0 / 3.0;
  double beta = 0.5;
  double beta_prime = 0.25;
  double tau = 0.125;
  double varrho = 1.0 / 6.0;
  double delta = 0.05;
  double theta = 0.01;
  double m = 1.0;
  int L0 = 6;
  Regime regime = Regime::finite_range;
  DistantConstant distant_constant = DistantConstant::eleven_n;

  static ScalingParams defaults(int n_particles, int dim) {
    ScalingParams p;
    p.N = n_particles;
    p.d = dim;
    return p;
  }

  static ScalingParams infinite_range(int n_particles, int dim, double delta) {
    ScalingParams p = defaults(n_particles, dim);
    p.regime = Regime::infinite_range;
    p.delta = delta;
    p.varrho = 2.0 * delta;
    p.alpha = 1.0 + 4.0 * delta;
    p.tau = 0.5 * delta;
    return p;
  }

  double A_N() const { return 4.0 * N; }

  double C_N() const {
    if (regime == Regime::infinite_range) return 4.0 * N;
    return distant_constant == DistantConstant::eleven_n ? 11.0 * N : 2.0 * A_N() + 3.0;
  }

  /// Diameter above which a ball of radius L is partially interactive.
  double pi_threshold(int L) const {
    if (regime == Regime::infinite_range) return std::pow(static_cast<double>(L), 1.0 + delta);
    return A_N() * L;
  }

  /// Center separation above which two radius-L balls are distant.
  double distant_threshold(int L) const {
    if (regime == Regime::infinite_range) return C_N() * std::pow(static_cast<double>(L), 1.0 + delta);
    return C_N() * L;
  }

  /// Distant-pair test: rho >= C_N L (finite range) or rho > C_N L^{1+delta} (infinite range).
  bool is_distant(double rho, int L) const {
    return regime == Regime::infinite_range ? rho > distant_threshold(L) : rho >= distant_threshold(L);
  }

  double loc_exponent() const { return (1.0 + varrho) / alpha; }

  double loc_min_distance(int L) const { return std::pow(static_cast<double>(L), loc_exponent()); }

  int cnr_min_radius(int L) const {
    return static_cast<int>(std::ceil(std::pow(static_cast<double>(L), 1.0 / alpha) - 1e-12));
  }

  double gamma(double mass, int L) const {
    return mass * (1.0 + std::pow(static_cast<double>(L), -tau));
  }

  /// Decay rate for an n-particle ball inside an N-particle problem.
  double gamma_n(double mass, int L, int n) const {
    return mass * std::pow(1.0 + std::pow(static_cast<double>(L), -tau), N - n + 1);
  }

  /// Largest resolvent norm allowed for an E-NR ball, expressed as a spectral distance.
  double nr_distance(int L) const { return std::exp(-std::pow(static_cast<double>(L), beta)); }

  double ns_log_threshold(double mass, int L, int n) const {
    return -gamma_n(mass, L, n) * L + 2.0 * std::pow(static_cast<double>(L), beta);
  }

  double ns_threshold(double mass, int L, int n) const { return std::exp(ns_log_threshold(mass, L, n)); }
};

struct BoundSchedule {
  double p = 40.0;
  double b = 0.1;

  double P(int n, int k, int N) const {
    return std::pow(2.0, N - n) * p * std::pow(1.0 + b, k);
  }
};

struct ConstraintResult {
  std::string name;
  double lhs;
  double rhs;
  bool pass;
  double margin() const { return rhs - lhs; }
};

/// Evaluates each parameter inequality as lhs < rhs (or lhs <= rhs where the source is non-strict).
inline std::vector<ConstraintResult> check_param_constraints(const ScalingParams& p, const BoundSchedule& s) {
  std::vector<ConstraintResult> out;
  auto strict = [&](std::string name, double lhs, double rhs) {
    out.push_back({std::move(name), lhs, rhs, lhs < rhs});
  };
  auto weak = [&](std::string name, double lhs, double rhs) {
    out.push_back({std::move(name), lhs, rhs, lhs <= rhs});
  };
  const double a2 = p.alpha * p.alpha;
  const double nd = static_cast<double>(p.N) * p.d;
  strict("tau_positive", 0.0, p.tau);
  strict("tau_below_varrho", p.tau, p.varrho);
  strict("one_plus_varrho_below_alpha", 1.0 + p.varrho, p.alpha);
  strict("beta_below_one_minus_tau", p.beta, 1.0 - p.tau);
  strict("beta_prime_positive", 0.0, p.beta_prime);
  strict("beta_prime_below_beta", p.beta_prime, p.beta);
  strict("alpha_squared_below_two", a2, 2.0);
  strict("p_above_threshold", a2 < 2.0 ? 2.0 * a2 / (2.0 - a2) * nd : INFINITY, s.p);
  strict("b_positive", 0.0, s.b);
  const double b_cap = std::min((2.0 - a2) / a2 - 2.0 * nd / s.p, std::sqrt(2.0) - 1.0);
  weak("three_b_below_cap", 3.0 * s.b, b_cap);
  if (p.regime == Regime::infinite_range) {
    strict("delta_positive", 0.0, p.delta);
    strict("theta_positive", 0.0, p.theta);
    strict("theta_below_delta_ratio", p.theta, p.delta / (1.0 + p.delta));
  }
  return out;
}

/// Scale ladder L_{k+1} = ceil(L_k^alpha), computed exactly for integer inputs.
inline std::vector<int> scales(int L0, double alpha, int count) {
  if (L0 <= 2) throw InputError("scales: L0 must exceed 2");
  std::vector<int> out{L0};
  for (int k = 1; k < count; ++k) {
    const long double v = std::pow(static_cast<long double>(out.back()), static_cast<long double>(alpha));
    long long c = static_cast<long long>(std::ceil(v - 1e-12L));
    out.push_back(static_cast<int>(c));
  }
  return out;
}

}  // namespace mpdsa
