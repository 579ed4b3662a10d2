#ifndef DBR_BASELINES_HPP
#define DBR_BASELINES_HPP

// Static-basis reference methods: POD over all snapshots, exact DMD with
// energy-threshold truncation, and Legendre-chaos probabilistic
// collocation.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include "dbr/core.hpp"
#include "dbr/quadrature.hpp"
#include "dbr/reduction.hpp"
#include "dbr/snapshot_series.hpp"
#include "dbr/weighted.hpp"

namespace dbr {

// ---------------------------------------------------------------------------
// POD

struct PodBasis {
  Matrix U;                 // n x r, w_x-orthonormal
  Vector singular_values;   // descending
};

// Left singular vectors of the column-wise concatenation of every
// mean-subtracted snapshot, in the weighted inner products.
inline PodBasis pod_fit(const SnapshotSeries& series, Eigen::Index r,
                        size_t memory_budget_bytes = size_t(2) << 30) {
  const Eigen::Index K1 = series.num_snapshots();
  const size_t bytes =
      size_t(series.n) * size_t(series.s) * size_t(K1) * sizeof(double);
  if (bytes > memory_budget_bytes)
    throw ConfigError(
        "pod_fit: assembled snapshot matrix (" + std::to_string(bytes) +
        " bytes) exceeds the memory budget; consider snapshot striding");

  const Vector sqrt_wx = series.wx.w.array().sqrt();
  const Vector sqrt_wxi = series.wxi.w.array().sqrt();
  const Vector inv_sqrt_wx =
      (series.wx.w.array() > 0.0).select(series.wx.w.array().rsqrt(), 0.0);

  Matrix A(series.n, series.s * K1);
  for (Eigen::Index k = 0; k < K1; ++k) {
    Matrix T = subtract_mean(series.store->load(k), series.wxi).first;
    A.middleCols(k * series.s, series.s) =
        sqrt_wx.asDiagonal() * T * sqrt_wxi.asDiagonal();
  }
  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU);
  if (r > svd.rank())
    throw RankDeficiencyError("pod_fit: requested rank exceeds data rank");
  PodBasis basis;
  basis.U = inv_sqrt_wx.asDiagonal() * svd.matrixU().leftCols(r);
  basis.singular_values = svd.singularValues().head(r);
  return basis;
}

// Y_k = T_k^T W_x U
inline Matrix pod_project(const PodBasis& basis, const Matrix& T,
                          const StateWeights& wx) {
  require_dims(T.rows() == basis.U.rows() && T.rows() == wx.size(),
               "pod_project");
  return T.transpose() * (wx.w.asDiagonal() * basis.U);
}

// Per-snapshot reduction error of the static POD basis.
inline std::vector<double> pod_error(const PodBasis& basis,
                                     const SnapshotSeries& series) {
  std::vector<double> errors;
  errors.reserve(size_t(series.num_snapshots()));
  for (Eigen::Index k = 0; k < series.num_snapshots(); ++k) {
    Matrix T = subtract_mean(series.store->load(k), series.wxi).first;
    if (basis.U.cols() == 0) {
      errors.push_back(weighted_frobenius(T, series.wx, series.wxi));
      continue;
    }
    Matrix Y = pod_project(basis, T, series.wx);
    errors.push_back(
        reduction_error(basis.U, Y, T, series.wx, series.wxi));
  }
  return errors;
}

// ---------------------------------------------------------------------------
// Exact DMD

struct DmdModel {
  Eigen::Index rank = 0;              // truncation rank
  Eigen::MatrixXcd modes;             // n x rank
  Eigen::VectorXcd omega;             // continuous eigenvalues log(mu)/dt
  Eigen::VectorXcd mu;                // discrete eigenvalues
  Eigen::VectorXcd amplitudes;        // least-squares fit of snapshot 0
  std::vector<Eigen::Index> ranking;  // mode order, Re(omega) descending
  double dt = 0.0;
};

// Exact-DMD pipeline on one realization's snapshot matrix (columns are
// consecutive snapshots). Truncation keeps the smallest rank whose
// cumulative singular-value fraction reaches energy_threshold.
inline DmdModel dmd_fit(const Matrix& snapshots, double dt,
                        double energy_threshold = 0.99) {
  const Eigen::Index K1 = snapshots.cols();
  if (K1 < 3) throw DataError("dmd_fit: need at least 3 snapshots");
  const Matrix X = snapshots.leftCols(K1 - 1);
  const Matrix Xp = snapshots.rightCols(K1 - 1);

  Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double total = sv.sum();
  Eigen::Index rank = 0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] <= 1e-13 * sv[0]) break;
    acc += sv[i];
    ++rank;
    if (acc >= energy_threshold * total) break;
  }
  if (rank == 0) throw RankDeficiencyError("dmd_fit: zero snapshot matrix");

  const Matrix Ur = svd.matrixU().leftCols(rank);
  const Matrix Vr = svd.matrixV().leftCols(rank);
  const Vector Sr_inv = sv.head(rank).cwiseInverse();
  const Matrix Atilde =
      Ur.transpose() * Xp * Vr * Sr_inv.asDiagonal();

  Eigen::EigenSolver<Matrix> eig(Atilde);
  if (eig.info() != Eigen::Success)
    throw NumericalError("dmd_fit: eigendecomposition failed");

  DmdModel model;
  model.dt = dt;
  Eigen::VectorXcd mu = eig.eigenvalues();
  Eigen::MatrixXcd W = eig.eigenvectors();

  // exact DMD modes Phi = X' V S^{-1} W; drop mu = 0 (log undefined)
  Eigen::MatrixXcd Phi_full =
      Xp * Vr * Sr_inv.asDiagonal() * W;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    if (std::abs(mu[i]) > 1e-14) keep.push_back(i);

  model.rank = Eigen::Index(keep.size());
  model.modes.resize(snapshots.rows(), model.rank);
  model.mu.resize(model.rank);
  model.omega.resize(model.rank);
  for (Eigen::Index i = 0; i < model.rank; ++i) {
    model.modes.col(i) = Phi_full.col(keep[size_t(i)]);
    model.mu[i] = mu[keep[size_t(i)]];
    model.omega[i] = std::log(model.mu[i]) / dt;
  }

  // amplitudes: min || Phi b - x_0 ||_2
  model.amplitudes = model.modes.colPivHouseholderQr().solve(
      snapshots.col(0).cast<std::complex<double>>());

  // ranking by Re(omega) descending, conjugate pairs kept adjacent
  model.ranking.resize(size_t(model.rank));
  std::iota(model.ranking.begin(), model.ranking.end(), 0);
  std::stable_sort(model.ranking.begin(), model.ranking.end(),
                   [&](Eigen::Index a, Eigen::Index b) {
                     const double ra = model.omega[a].real();
                     const double rb = model.omega[b].real();
                     if (ra != rb) return ra > rb;
                     // pair members share Re; order by |Im| then sign
                     const double ia = std::abs(model.omega[a].imag());
                     const double ib = std::abs(model.omega[b].imag());
                     if (ia != ib) return ia < ib;
                     return model.omega[a].imag() > model.omega[b].imag();
                   });
  return model;
}

// Real part of the truncated reconstruction sum_{i<r_keep} Phi_i e^{w_i t} b_i
// over the ranked mode order.
inline Vector dmd_reconstruct(const DmdModel& model, double t,
                              Eigen::Index r_keep) {
  if (r_keep > model.rank)
    throw ConfigError("dmd_reconstruct: r_keep exceeds model rank");
  Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(model.modes.rows());
  for (Eigen::Index i = 0; i < r_keep; ++i) {
    const Eigen::Index m = model.ranking[size_t(i)];
    acc += model.modes.col(m) *
           (std::exp(model.omega[m] * t) * model.amplitudes[m]);
  }
  return acc.real();
}

// ---------------------------------------------------------------------------
// Probabilistic collocation (Legendre chaos)

struct PcmExpansion {
  int order = 0;   // r: expansion uses phi_1 .. phi_r (mean excluded)
  Matrix coeffs;   // n x r, v_i(x) at one time instant
  Vector norms;    // E[phi_i^2] = 1/(2i+1), i = 1..r
};

// Project samples (n x s, values at the Gauss-Legendre nodes) onto
// Legendre polynomials: v_i = E[u phi_i] / E[phi_i^2].
inline PcmExpansion pcm_fit(const Matrix& samples, const Vector& nodes,
                            const SampleWeights& wxi, int order) {
  require_dims(samples.cols() == nodes.size() &&
                   samples.cols() == wxi.size(),
               "pcm_fit");
  if (order >= nodes.size())
    throw ConfigError("pcm_fit: order must be below the node count "
                      "(aliasing)");
  if (order < 1) throw ConfigError("pcm_fit: order must be >= 1");

  PcmExpansion exp;
  exp.order = order;
  exp.coeffs.resize(samples.rows(), order);
  exp.norms.resize(order);
  for (int i = 1; i <= order; ++i) {
    Vector phi(nodes.size());
    for (Eigen::Index j = 0; j < nodes.size(); ++j)
      phi[j] = legendre(i, nodes[j]);
    exp.norms[i - 1] = 1.0 / (2.0 * i + 1.0);
    exp.coeffs.col(i - 1) =
        samples * (wxi.w.asDiagonal() * phi) / exp.norms[i - 1];
  }
  return exp;
}

// Total variance sum_i E[phi_i^2] \int v_i(x)^2 dx under the state weights.
inline double pcm_total_variance(const PcmExpansion& exp,
                                 const StateWeights& wx) {
  require_dims(exp.coeffs.rows() == wx.size(), "pcm_total_variance");
  double var = 0.0;
  for (int i = 0; i < exp.order; ++i)
    var += exp.norms[i] *
           (exp.coeffs.col(i).array().square() * wx.w.array()).sum();
  return var;
}

}  // namespace dbr

#endif  // DBR_BASELINES_HPP
