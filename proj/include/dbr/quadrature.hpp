#ifndef DBR_QUADRATURE_HPP
#define DBR_QUADRATURE_HPP

// Legendre polynomials and Gauss-Legendre quadrature on [-1, 1].

#include <cmath>

#include "dbr/core.hpp"

namespace dbr {

// P_k(x) by the three-term recurrence.
inline double legendre(int k, double x) {
  if (k == 0) return 1.0;
  double pm = 1.0, p = x;
  for (int j = 1; j < k; ++j) {
    const double pn = ((2.0 * j + 1.0) * x * p - j * pm) / (j + 1.0);
    pm = p;
    p = pn;
  }
  return p;
}

// P_k and its derivative, for Newton iteration on the roots.
inline std::pair<double, double> legendre_with_derivative(int k, double x) {
  if (k == 0) return {1.0, 0.0};
  double pm = 1.0, p = x;
  for (int j = 1; j < k; ++j) {
    const double pn = ((2.0 * j + 1.0) * x * p - j * pm) / (j + 1.0);
    pm = p;
    p = pn;
  }
  const double dp = k * (x * p - pm) / (x * x - 1.0);
  return {p, dp};
}

struct GaussLegendre {
  Vector nodes;         // roots of P_s, ascending
  Vector weights;       // sum to 2
  Vector prob_weights;  // weights / 2, sum to 1
};

// Nodes by Newton iteration from the Chebyshev initial guess.
inline GaussLegendre gauss_legendre(int s) {
  if (s < 1) throw ConfigError("gauss_legendre: s must be >= 1");
  GaussLegendre q;
  q.nodes.resize(s);
  q.weights.resize(s);
  if (s == 1) {
    q.nodes[0] = 0.0;
    q.weights[0] = 2.0;
  } else {
    for (int i = 0; i < s; ++i) {
      double x = -std::cos(M_PI * (i + 0.75) / (s + 0.5));
      for (int it = 0; it < 100; ++it) {
        auto [p, dp] = legendre_with_derivative(s, x);
        const double dx = p / dp;
        x -= dx;
        if (std::abs(dx) < 1e-15) break;
      }
      auto [p, dp] = legendre_with_derivative(s, x);
      (void)p;
      q.nodes[i] = x;
      q.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
  }
  q.prob_weights = 0.5 * q.weights;
  return q;
}

}  // namespace dbr

#endif  // DBR_QUADRATURE_HPP
