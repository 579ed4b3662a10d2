#ifndef DBR_REDUCTION_HPP
#define DBR_REDUCTION_HPP

// Dynamic-basis reduction engine: KL initialization, evolution equations
// (general-phi and phi=0 forms), EE1/RK4 time stepping with per-step
// re-orthonormalization, covariance ranking and error metrics.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "dbr/core.hpp"
#include "dbr/snapshot_series.hpp"
#include "dbr/weighted.hpp"

namespace dbr {

enum class IntegratorScheme { EE1, RK4 };

inline IntegratorScheme integrator_scheme_from_string(const std::string& s) {
  if (s == "EE1" || s == "ee1") return IntegratorScheme::EE1;
  if (s == "RK4" || s == "rk4") return IntegratorScheme::RK4;
  throw ConfigError("unknown integrator scheme: " + s);
}

// Dynamic basis U (n x r, w_x-orthonormal) and stochastic coefficients
// Y (s x r) at time t.
struct ReductionState {
  double t = 0.0;
  Matrix U;
  Matrix Y;

  Eigen::Index rank() const { return U.cols(); }
};

// Reduced covariance C = E[Y^T Y] with its eigen-decomposition C psi = psi L.
struct Covariance {
  Matrix C;
  Matrix psi;     // orthogonal eigenvectors, columns sorted by eigenvalue
  Vector lambda;  // descending, nonnegative
};

// Skew-symmetric gauge matrix phi_ij = <u_i, udot_j>.
struct PhiMatrix {
  Matrix phi;

  explicit PhiMatrix(Matrix m) : phi(std::move(m)) {
    if (phi.rows() != phi.cols())
      throw DimensionError("phi must be square");
    if ((phi + phi.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw NumericalError("phi must be skew-symmetric");
  }

  static PhiMatrix zero(Eigen::Index r) {
    return PhiMatrix(Matrix::Zero(r, r));
  }
};

namespace detail {

// Flip column signs so the entry of largest magnitude is positive.
inline void fix_signs(Matrix& modes, Matrix* paired = nullptr) {
  for (Eigen::Index j = 0; j < modes.cols(); ++j) {
    Eigen::Index imax = 0;
    modes.col(j).cwiseAbs().maxCoeff(&imax);
    if (modes(imax, j) < 0.0) {
      modes.col(j) = -modes.col(j);
      if (paired) paired->col(j) = -paired->col(j);
    }
  }
}

}  // namespace detail

// Karhunen-Loeve initialization: weighted SVD of T_0 giving U_0 Y_0^T as
// the best rank-r approximation in the weighted Frobenius norm. Computed
// as the SVD of Wx^{1/2} T0 Wxi^{1/2}; zero-weight rows/columns stay zero.
// If T_0 has numerical rank < r the trailing basis vectors are completed
// from canonical vectors with zero coefficients.
inline ReductionState initialize_kl(const Matrix& T0, const StateWeights& wx,
                                    const SampleWeights& wxi, Eigen::Index r,
                                    double t0 = 0.0,
                                    Eigen::Index* rank_out = nullptr) {
  require_dims(T0.rows() == wx.size() && T0.cols() == wxi.size(),
               "initialize_kl");
  if (r < 1 || r > std::min(T0.rows(), T0.cols()))
    throw ConfigError("rank r must satisfy 1 <= r <= min(n, s)");

  const Vector sqrt_wx = wx.w.array().sqrt();
  const Vector sqrt_wxi = wxi.w.array().sqrt();
  const Vector inv_sqrt_wx =
      (wx.w.array() > 0.0).select(wx.w.array().rsqrt(), 0.0);
  const Vector inv_sqrt_wxi =
      (wxi.w.array() > 0.0).select(wxi.w.array().rsqrt(), 0.0);

  Matrix B = sqrt_wx.asDiagonal() * T0 * sqrt_wxi.asDiagonal();
  Eigen::JacobiSVD<Matrix> svd(B, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double tol = 1e-13 * (sv.size() ? sv[0] : 0.0);

  ReductionState state;
  state.t = t0;
  state.U = Matrix::Zero(T0.rows(), r);
  state.Y = Matrix::Zero(T0.cols(), r);
  Eigen::Index filled = 0;
  for (; filled < r && filled < sv.size() && sv[filled] > tol; ++filled) {
    state.U.col(filled) =
        inv_sqrt_wx.asDiagonal() * svd.matrixU().col(filled);
    state.Y.col(filled) =
        sv[filled] * (inv_sqrt_wxi.asDiagonal() * svd.matrixV().col(filled));
  }
  if (rank_out) *rank_out = filled;

  // degenerate tail: complete with canonical vectors, zero coefficients
  for (Eigen::Index e = 0; filled < r; ++filled) {
    for (; e < T0.rows(); ++e) {
      Vector cand = Vector::Zero(T0.rows());
      cand[e] = 1.0;
      for (Eigen::Index j = 0; j < filled; ++j)
        cand -= inner_x(state.U.col(j), cand, wx) * state.U.col(j);
      const double nrm = std::sqrt(inner_x(cand, cand, wx));
      if (nrm > 1e-10) {
        state.U.col(filled) = cand / nrm;
        ++e;
        break;
      }
    }
    if (state.U.col(filled).isZero())
      throw RankDeficiencyError("initialize_kl: cannot complete basis",
                                int(filled));
  }

  detail::fix_signs(state.U, &state.Y);
  return state;
}

// C_ij = E[y_i^T y_j], eigen-pairs sorted descending; tiny negative
// eigenvalues are clamped at 0, larger ones signal upstream corruption.
inline Covariance compute_covariance(const Matrix& Y,
                                     const SampleWeights& wxi) {
  require_dims(Y.rows() == wxi.size(), "compute_covariance");
  Covariance cov;
  cov.C = Y.transpose() * wxi.w.asDiagonal() * Y;
  cov.C = 0.5 * (cov.C + cov.C.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov.C);
  if (eig.info() != Eigen::Success)
    throw NumericalError("covariance eigendecomposition failed");
  const Eigen::Index r = cov.C.rows();
  cov.lambda.resize(r);
  cov.psi.resize(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {  // ascending -> descending
    cov.lambda[i] = eig.eigenvalues()[r - 1 - i];
    cov.psi.col(i) = eig.eigenvectors().col(r - 1 - i);
  }
  const double lmax = r ? std::max(cov.lambda[0], 0.0) : 0.0;
  for (Eigen::Index i = 0; i < r; ++i) {
    if (cov.lambda[i] < -1e-12 * std::max(lmax, 1e-300))
      throw NumericalError("covariance is indefinite (lambda_" +
                           std::to_string(i) + " = " +
                           std::to_string(cov.lambda[i]) + ")");
    cov.lambda[i] = std::max(cov.lambda[i], 0.0);
  }
  detail::fix_signs(cov.psi);
  return cov;
}

// psi diag(g(lambda)) psi^T with g(l) = 1/l above rel_threshold * lambda_1.
inline Matrix pseudo_inverse(const Covariance& cov,
                             double rel_threshold = 1e-10,
                             bool* all_clamped = nullptr) {
  const Eigen::Index r = cov.lambda.size();
  Vector inv(r);
  const double cutoff = rel_threshold * (r ? cov.lambda[0] : 0.0);
  bool any = false;
  for (Eigen::Index i = 0; i < r; ++i) {
    const bool keep = cov.lambda[i] > cutoff && cov.lambda[i] > 0.0;
    inv[i] = keep ? 1.0 / cov.lambda[i] : 0.0;
    any = any || keep;
  }
  if (all_clamped) *all_clamped = !any;
  return cov.psi * inv.asDiagonal() * cov.psi.transpose();
}

// phi = 0 evolution:
//   Udot = (Tdot Wxi Y - U Tdot_r) C^{-1},   Tdot_r = U^T Wx Tdot Wxi Y
//   Ydot = Tdot^T Wx U
// U U^T is never formed; cost is O(rns).
inline std::pair<Matrix, Matrix> rhs_phi0(const Matrix& U, const Matrix& Y,
                                          const Matrix& Tdot,
                                          const StateWeights& wx,
                                          const SampleWeights& wxi,
                                          double rel_threshold = 1e-10) {
  require_dims(U.rows() == Tdot.rows() && Y.rows() == Tdot.cols() &&
                   U.cols() == Y.cols() && U.rows() == wx.size() &&
                   Y.rows() == wxi.size(),
               "rhs_phi0");
  const Matrix pinvC =
      pseudo_inverse(compute_covariance(Y, wxi), rel_threshold);
  const Matrix A = Tdot * (wxi.w.asDiagonal() * Y);   // n x r
  const Matrix WxU = wx.w.asDiagonal() * U;           // n x r
  const Matrix Tdot_r = WxU.transpose() * A;          // r x r
  Matrix Udot = (A - U * Tdot_r) * pinvC;
  Matrix Ydot = Tdot.transpose() * WxU;
  return {std::move(Udot), std::move(Ydot)};
}

// General-phi evolution: Udot = proj_{perp U} E[Tdot Y] C^{-1} + U phi,
// Ydot = <Tdot^T, U> + Y phi. Reduces to rhs_phi0 exactly at phi = 0.
inline std::pair<Matrix, Matrix> rhs_general(const Matrix& U, const Matrix& Y,
                                             const Matrix& Tdot,
                                             const StateWeights& wx,
                                             const SampleWeights& wxi,
                                             const PhiMatrix& phi,
                                             double rel_threshold = 1e-10) {
  auto [Udot, Ydot] = rhs_phi0(U, Y, Tdot, wx, wxi, rel_threshold);
  if (!phi.phi.isZero()) {
    require_dims(phi.phi.rows() == U.cols(), "rhs_general phi");
    Udot += U * phi.phi;
    Ydot += Y * phi.phi;
  }
  return {std::move(Udot), std::move(Ydot)};
}

// Supplies Tdot at any stage time the integrator requests within one step.
using DerivativeProvider = std::function<Matrix(double t)>;
using PhiProvider = std::function<PhiMatrix(double t)>;

// One EE1/RK4 step followed by Gram-Schmidt cleanup of U. The Y block is
// rotated with the triangular factor of the cleanup so U Y^T is unchanged.
inline ReductionState step(const ReductionState& state,
                           const DerivativeProvider& derivative, double dt,
                           IntegratorScheme scheme,
                           const StateWeights& wx, const SampleWeights& wxi,
                           double rel_threshold = 1e-10,
                           const PhiProvider* phi_provider = nullptr) {
  auto rhs = [&](double t, const Matrix& U, const Matrix& Y) {
    const Matrix Tdot = derivative(t);
    if (phi_provider)
      return rhs_general(U, Y, Tdot, wx, wxi, (*phi_provider)(t),
                         rel_threshold);
    return rhs_phi0(U, Y, Tdot, wx, wxi, rel_threshold);
  };

  ReductionState out;
  out.t = state.t + dt;
  if (scheme == IntegratorScheme::EE1) {
    auto [Udot, Ydot] = rhs(state.t, state.U, state.Y);
    out.U = state.U + dt * Udot;
    out.Y = state.Y + dt * Ydot;
  } else {
    auto [kU1, kY1] = rhs(state.t, state.U, state.Y);
    auto [kU2, kY2] = rhs(state.t + 0.5 * dt, state.U + 0.5 * dt * kU1,
                          state.Y + 0.5 * dt * kY1);
    auto [kU3, kY3] = rhs(state.t + 0.5 * dt, state.U + 0.5 * dt * kU2,
                          state.Y + 0.5 * dt * kY2);
    auto [kU4, kY4] =
        rhs(state.t + dt, state.U + dt * kU3, state.Y + dt * kY3);
    out.U = state.U + (dt / 6.0) * (kU1 + 2.0 * kU2 + 2.0 * kU3 + kU4);
    out.Y = state.Y + (dt / 6.0) * (kY1 + 2.0 * kY2 + 2.0 * kY3 + kY4);
  }

  // U_raw = U_ortho R  =>  Y <- Y R^T keeps U Y^T invariant
  Matrix R;
  out.U = gram_schmidt_weighted(out.U, wx, &R);
  out.Y = out.Y * R.transpose();
  return out;
}

// In-subspace rotation by the covariance eigenvectors: variance-ordered,
// uncorrelated coefficients. U_hat Y_hat^T == U Y^T.
struct RankedModes {
  Matrix U;
  Matrix Y;
  Vector lambda;
};

inline RankedModes rank_modes(const ReductionState& state,
                              const SampleWeights& wxi) {
  const Covariance cov = compute_covariance(state.Y, wxi);
  RankedModes out;
  out.U = state.U * cov.psi;
  out.Y = state.Y * cov.psi;
  out.lambda = cov.lambda;
  return out;
}

// E(t) = || E[(U Y^T - T)]^2 ||_F per the weighted Frobenius norm.
inline double reduction_error(const Matrix& U, const Matrix& Y,
                              const Matrix& T, const StateWeights& wx,
                              const SampleWeights& wxi) {
  require_dims(U.rows() == T.rows() && Y.rows() == T.cols() &&
                   U.cols() == Y.cols(),
               "reduction_error");
  return weighted_frobenius(U * Y.transpose() - T, wx, wxi);
}

// Per-step diagnostics of a reduction run.
struct MetricTrace {
  std::vector<double> t;
  std::vector<Vector> lambda;        // ranked covariance eigenvalues
  std::vector<double> sigma_total;   // sum of eigenvalues
  std::vector<double> error;         // E(t)
  std::vector<double> ortho_defect;  // basis orthonormality defect
};

struct ReductionOptions {
  Eigen::Index r = 2;
  DerivativeScheme derivative_scheme = DerivativeScheme::FD4;
  IntegratorScheme integrator = IntegratorScheme::RK4;
  double rel_threshold = 1e-10;
  double defect_tolerance = 1e-8;  // checked after every accepted step
  // optional per-step observer (state after ranking is NOT applied here)
  std::function<void(const ReductionState&)> observer;
};

struct ReductionResult {
  MetricTrace trace;
  ReductionState final_state;
  size_t peak_resident_snapshots = 0;
};

// The full workflow: stream snapshots, KL-init at t_0, advance with the
// phi=0 evolution equations, re-orthonormalize, record metrics.
inline ReductionResult run_reduction(const SnapshotSeries& series,
                                     const ReductionOptions& opt) {
  if (opt.r < 1 || opt.r > std::min(series.n, series.s))
    throw ConfigError("reduction rank out of range");

  SnapshotStream stream(series, opt.derivative_scheme);
  SnapshotStream::Item cur, nxt;
  if (!stream.next(cur)) throw DataError("empty series");

  // A centered series often starts degenerate (e.g. a deterministic initial
  // condition gives T(t_0) = 0). Initializing there would pad the basis
  // with arbitrary canonical vectors and the first step would amplify them
  // through the ill-conditioned coefficient covariance. Skip forward until
  // the numerical rank reaches r, or stops growing while at least 1; the
  // metric trace starts at the snapshot actually used for initialization.
  Eigen::Index rank = 0;
  Eigen::Index prev_rank = -1;
  ReductionState state =
      initialize_kl(cur.T, series.wx, series.wxi, opt.r, cur.t, &rank);
  while (rank < opt.r && !(rank >= 1 && rank == prev_rank)) {
    if (!stream.next(nxt)) break;
    prev_rank = rank;
    cur = std::move(nxt);
    state = initialize_kl(cur.T, series.wx, series.wxi, opt.r, cur.t, &rank);
  }
  ReductionResult result;
  auto record = [&](const ReductionState& st, const Matrix& T) {
    const Covariance cov = compute_covariance(st.Y, series.wxi);
    result.trace.t.push_back(st.t);
    result.trace.lambda.push_back(cov.lambda);
    result.trace.sigma_total.push_back(cov.lambda.sum());
    result.trace.error.push_back(
        reduction_error(st.U, st.Y, T, series.wx, series.wxi));
    result.trace.ortho_defect.push_back(
        orthonormality_defect(st.U, series.wx));
    if (opt.observer) opt.observer(st);
  };
  record(state, cur.T);

  const double dt = series.dt;
  Eigen::Index k = 0;
  while (stream.next(nxt)) {
    // RK4 stage values between t_k and t_{k+1} interpolate the two
    // finite-difference estimates linearly.
    const Matrix& D0 = cur.Tdot;
    const Matrix& D1 = nxt.Tdot;
    const double t0 = cur.t;
    DerivativeProvider provider = [&](double t) -> Matrix {
      const double a = std::clamp((t - t0) / dt, 0.0, 1.0);
      if (a == 0.0) return D0;
      if (a == 1.0) return D1;
      return (1.0 - a) * D0 + a * D1;
    };
    try {
      state = step(state, provider, dt, opt.integrator, series.wx,
                   series.wxi, opt.rel_threshold);
    } catch (const Error& e) {
      throw NumericalError("reduction failed at step " + std::to_string(k) +
                           ": " + e.what());
    }
    const double defect = orthonormality_defect(state.U, series.wx);
    if (defect > opt.defect_tolerance)
      throw NumericalError("orthonormality defect " + std::to_string(defect) +
                           " after step " + std::to_string(k));
    record(state, nxt.T);
    cur = std::move(nxt);
    ++k;
  }
  result.final_state = std::move(state);
  result.peak_resident_snapshots = stream.peak_resident();
  return result;
}

}  // namespace dbr

#endif  // DBR_REDUCTION_HPP
