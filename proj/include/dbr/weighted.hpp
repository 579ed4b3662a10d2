#ifndef DBR_WEIGHTED_HPP
#define DBR_WEIGHTED_HPP

// Weighted inner products, norms and orthonormalization. Weights are kept
// as plain vectors; the diagonal weight matrices are never materialized.

#include <cmath>
#include <string>

#include "dbr/core.hpp"

namespace dbr {

// Quadrature/integration weights over the state grid.
struct StateWeights {
  Vector w;

  explicit StateWeights(Vector weights) : w(std::move(weights)) {
    if (w.size() == 0 || (w.array() < 0.0).any())
      throw ConfigError("state weights must be nonnegative and nonempty");
    if (w.maxCoeff() <= 0.0)
      throw ConfigError("state weights must have at least one positive entry");
  }

  static StateWeights uniform(Eigen::Index n, double total) {
    return StateWeights(Vector::Constant(n, total / double(n)));
  }

  Eigen::Index size() const { return w.size(); }
};

// Probability weights over the sample/random dimension; must sum to 1.
struct SampleWeights {
  Vector w;

  explicit SampleWeights(Vector weights) : w(std::move(weights)) {
    if (w.size() == 0 || (w.array() < 0.0).any())
      throw ConfigError("sample weights must be nonnegative and nonempty");
    if (std::abs(w.sum() - 1.0) > 1e-12)
      throw ConfigError("sample weights must sum to 1 (got " +
                        std::to_string(w.sum()) + ")");
  }

  static SampleWeights monte_carlo(Eigen::Index s) {
    return SampleWeights(Vector::Constant(s, 1.0 / double(s)));
  }

  Eigen::Index size() const { return w.size(); }
};

// <a, b>_x = a^T W_x b
inline double inner_x(const Vector& a, const Vector& b,
                      const StateWeights& wx) {
  require_dims(a.size() == b.size() && a.size() == wx.size(), "inner_x");
  return (a.array() * wx.w.array() * b.array()).sum();
}

// E[a^T b] = a^T W_xi b
inline double inner_xi(const Vector& a, const Vector& b,
                       const SampleWeights& wxi) {
  require_dims(a.size() == b.size() && a.size() == wxi.size(), "inner_xi");
  return (a.array() * wxi.w.array() * b.array()).sum();
}

// || E[T]^2 ||_F^{1/2} = (sum_ij wx_i wxi_j T_ij^2)^{1/2}
inline double weighted_frobenius(const Matrix& T, const StateWeights& wx,
                                 const SampleWeights& wxi) {
  require_dims(T.rows() == wx.size() && T.cols() == wxi.size(),
               "weighted_frobenius");
  double acc = 0.0;
  for (Eigen::Index j = 0; j < T.cols(); ++j)
    acc += wxi.w[j] * (T.col(j).array().square() * wx.w.array()).sum();
  return std::sqrt(acc);
}

// Modified Gram-Schmidt in the w_x inner product with one
// re-orthogonalization pass. Returns Q with Q^T W_x Q = I; optionally
// accumulates the upper-triangular R with U = Q R.
inline Matrix gram_schmidt_weighted(const Matrix& U, const StateWeights& wx,
                                    Matrix* R_out = nullptr,
                                    double breakdown_rel = 1e-13) {
  require_dims(U.rows() == wx.size(), "gram_schmidt_weighted");
  const Eigen::Index r = U.cols();
  Matrix Q = U;
  Matrix R = Matrix::Zero(r, r);

  double max_norm = 0.0;
  for (Eigen::Index j = 0; j < r; ++j)
    max_norm = std::max(max_norm, std::sqrt(inner_x(U.col(j), U.col(j), wx)));
  const double breakdown = breakdown_rel * max_norm;

  for (Eigen::Index j = 0; j < r; ++j) {
    Vector q = Q.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index i = 0; i < j; ++i) {
        const double h = inner_x(Q.col(i), q, wx);
        R(i, j) += h;
        q -= h * Q.col(i);
      }
    }
    const double nrm = std::sqrt(inner_x(q, q, wx));
    if (nrm <= breakdown)
      throw RankDeficiencyError(
          "gram_schmidt_weighted: column " + std::to_string(j) +
              " is numerically dependent on its predecessors",
          int(j));
    R(j, j) = nrm;
    Q.col(j) = q / nrm;
  }
  if (R_out) *R_out = R;
  return Q;
}

// max_ij | <u_i, u_j> - delta_ij |
inline double orthonormality_defect(const Matrix& U, const StateWeights& wx) {
  require_dims(U.rows() == wx.size(), "orthonormality_defect");
  double defect = 0.0;
  for (Eigen::Index i = 0; i < U.cols(); ++i)
    for (Eigen::Index j = i; j < U.cols(); ++j) {
      const double g = inner_x(U.col(i), U.col(j), wx) - (i == j ? 1.0 : 0.0);
      defect = std::max(defect, std::abs(g));
    }
  return defect;
}

}  // namespace dbr

#endif  // DBR_WEIGHTED_HPP
