#ifndef DBR_TESTBEDS_HPP
#define DBR_TESTBEDS_HPP

// Desk-scale experiment generators: the exactly solvable stochastic
// advection problem and the Kuramoto-Sivashinsky transient-instability
// problem, plus covariance-kernel KL decomposition and random-field
// sampling.

#include <cmath>
#include <complex>
#include <memory>
#include <random>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "dbr/core.hpp"
#include "dbr/quadrature.hpp"
#include "dbr/snapshot_series.hpp"

namespace dbr {

// sin(z)/z with the analytic limit at z = 0.
inline double sinc(double z) {
  if (std::abs(z) < 1e-8) return 1.0 - z * z / 6.0;
  return std::sin(z) / z;
}

// Uniform periodic grid on [-1, 1): x_i = -1 + 2 i / n.
inline Vector periodic_grid(Eigen::Index n) {
  Vector x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = -1.0 + 2.0 * double(i) / double(n);
  return x;
}

// ---------------------------------------------------------------------------
// Stochastic advection: u_t + (vbar + sigma xi) u_x = 0, u_0 = sin(pi x)

struct AdvectionConfig {
  double vbar = 1.0;
  double sigma = 0.5;
  Eigen::Index n = 128;  // spatial points
  Eigen::Index s = 64;   // Gauss-Legendre samples
  double dt = 1e-3;
  double Tf = 10.0;
  bool numerical_solve = false;  // pseudospectral pipeline instead of the
                                 // closed form (validation mode)

  void validate() const {
    if (sigma <= 0.0) throw ConfigError("advection: sigma must be > 0");
    if (n < 2 || s < 2) throw ConfigError("advection: n, s must be >= 2");
    if (dt <= 0.0 || Tf <= 0.0)
      throw ConfigError("advection: dt, Tf must be > 0");
  }
};

inline double advection_exact(double x, double t, double xi,
                              const AdvectionConfig& cfg) {
  return std::sin(M_PI * (x - (cfg.vbar + cfg.sigma * xi) * t));
}

struct AdvectionStats {
  Vector mean;      // E[u] on the grid
  Vector variance;  // pointwise variance on the grid
  double sigma_total = 0.0;
};

inline AdvectionStats advection_exact_stats(const AdvectionConfig& cfg,
                                            double t) {
  const Vector x = periodic_grid(cfg.n);
  AdvectionStats out;
  out.mean.resize(cfg.n);
  out.variance.resize(cfg.n);
  const double a = cfg.sigma * M_PI * t;
  const double sc = sinc(a);
  const double sc2 = sinc(2.0 * a);  // sin(2a)/(2a) -> the 1/(4a) term
  for (Eigen::Index i = 0; i < cfg.n; ++i) {
    const double ph = M_PI * (x[i] - cfg.vbar * t);
    out.mean[i] = sc * std::sin(ph);
    out.variance[i] = 0.5 - 0.5 * sc2 * std::cos(2.0 * ph) -
                      sc * sc * std::sin(ph) * std::sin(ph);
  }
  out.sigma_total = 1.0 - sc * sc;
  return out;
}

struct AdvectionModes {
  Vector u1, u2;  // fields on the grid
  Vector y1, y2;  // coefficients at the sample nodes
};

// Exact two-mode expansion u - E[u] = u1 y1 + u2 y2.
inline AdvectionModes advection_exact_modes(const AdvectionConfig& cfg,
                                            double t, const Vector& xi_nodes) {
  const Vector x = periodic_grid(cfg.n);
  AdvectionModes m;
  m.u1.resize(cfg.n);
  m.u2.resize(cfg.n);
  for (Eigen::Index i = 0; i < cfg.n; ++i) {
    const double ph = M_PI * (x[i] - cfg.vbar * t);
    m.u1[i] = std::sin(ph);
    m.u2[i] = std::cos(ph);
  }
  const double a = cfg.sigma * M_PI * t;
  m.y1.resize(xi_nodes.size());
  m.y2.resize(xi_nodes.size());
  for (Eigen::Index j = 0; j < xi_nodes.size(); ++j) {
    m.y1[j] = std::cos(a * xi_nodes[j]) - sinc(a);
    // sign chosen so that u - E[u] = u1 y1 + u2 y2 exactly
    m.y2[j] = -std::sin(a * xi_nodes[j]);
  }
  return m;
}

namespace detail {

// Pseudospectral constant-speed advection solve on the periodic grid,
// RK4 in time. Each sample is integrated continuously from t = 0 and the
// full trajectory is recorded. Used only to validate the analytic path.
inline std::vector<Matrix> advect_numerical(const AdvectionConfig& cfg,
                                            const Vector& xi_nodes,
                                            Eigen::Index nsteps) {
  const Eigen::Index n = cfg.n;
  Eigen::FFT<double> fft;
  Vector x = periodic_grid(n);
  Eigen::VectorXcd ik(n);
  for (Eigen::Index m = 0; m < n; ++m) {
    const double freq = (m <= n / 2) ? double(m) : double(m) - double(n);
    ik[m] = std::complex<double>(0.0, M_PI * freq);
  }
  if (n % 2 == 0) ik[n / 2] = 0.0;  // Nyquist mode has no odd derivative

  std::vector<Matrix> snaps(size_t(nsteps) + 1, Matrix(n, xi_nodes.size()));
  for (Eigen::Index j = 0; j < xi_nodes.size(); ++j) {
    const double v = cfg.vbar + cfg.sigma * xi_nodes[j];
    Eigen::VectorXcd u(n);
    for (Eigen::Index i = 0; i < n; ++i) u[i] = std::sin(M_PI * x[i]);
    auto rhs = [&](const Eigen::VectorXcd& w) {
      Eigen::VectorXcd what, dw;
      fft.fwd(what, w);
      what = (what.array() * ik.array()).matrix();
      fft.inv(dw, what);
      return Eigen::VectorXcd(-v * dw);
    };
    snaps[0].col(j) = u.real();
    for (Eigen::Index k = 1; k <= nsteps; ++k) {
      const Eigen::VectorXcd k1 = rhs(u);
      const Eigen::VectorXcd k2 = rhs(u + 0.5 * cfg.dt * k1);
      const Eigen::VectorXcd k3 = rhs(u + 0.5 * cfg.dt * k2);
      const Eigen::VectorXcd k4 = rhs(u + cfg.dt * k3);
      u += (cfg.dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      snaps[size_t(k)].col(j) = u.real();
    }
  }
  return snaps;
}

}  // namespace detail

// Snapshot series for the advection testbed. Default mode samples the
// closed-form solution on demand; numerical mode integrates each sample
// pseudospectrally and keeps the trajectory in memory.
inline SnapshotSeries generate_advection_series(const AdvectionConfig& cfg) {
  cfg.validate();
  const GaussLegendre gl = gauss_legendre(int(cfg.s));
  const Vector xi = gl.nodes;
  StateWeights wx = StateWeights::uniform(cfg.n, 2.0);
  SampleWeights wxi(gl.prob_weights);

  const Eigen::Index K = Eigen::Index(std::llround(cfg.Tf / cfg.dt));
  std::vector<double> times(size_t(K) + 1);
  for (Eigen::Index k = 0; k <= K; ++k) times[size_t(k)] = double(k) * cfg.dt;

  std::shared_ptr<const SnapshotStore> store;
  if (cfg.numerical_solve) {
    store = std::make_shared<MemoryStore>(
        detail::advect_numerical(cfg, xi, K));
  } else {
    AdvectionConfig c = cfg;
    Vector x = periodic_grid(cfg.n);
    store = std::make_shared<FunctionStore>([c, x, xi](Eigen::Index k) {
      Matrix T(c.n, xi.size());
      const double t = double(k) * c.dt;
      for (Eigen::Index j = 0; j < xi.size(); ++j)
        for (Eigen::Index i = 0; i < c.n; ++i)
          T(i, j) = advection_exact(x[i], t, xi[j], c);
      return T;
    });
  }
  return SnapshotSeries(cfg.n, cfg.s, std::move(times), std::move(wx),
                        std::move(wxi), std::move(store));
}

// ---------------------------------------------------------------------------
// Covariance kernels and Karhunen-Loeve decomposition (Nystrom method)

struct KernelSpec {
  enum class Variant { Periodic, SquaredExponential };
  Variant variant = Variant::Periodic;
  double sigma = 0.1;
  double lc = 2.5;

  double operator()(double x, double xp) const {
    if (sigma <= 0.0 || lc <= 0.0)
      throw ConfigError("kernel: sigma and lc must be > 0");
    if (variant == Variant::Periodic) {
      const double sn = std::sin(M_PI * (x - xp));
      return sigma * sigma * std::exp(-2.0 * sn * sn / (lc * lc));
    }
    const double d = x - xp;
    return sigma * sigma * std::exp(-d * d / (lc * lc));
  }
};

struct KlDecomposition {
  int d = 0;       // modes needed for the energy fraction
  Vector lambda;   // retained eigenvalues, descending
  Matrix phi;      // m x d eigenfunctions, w-orthonormal
  Vector grid;     // evaluation grid
  Vector weights;  // quadrature weights on the grid
};

// Nystrom discretization of ∫ K(x,x') phi(x') dx' = lambda phi(x) on a
// uniform periodic grid over [-1, 1].
inline KlDecomposition kl_decompose_kernel(const KernelSpec& spec,
                                           Eigen::Index m,
                                           double energy_fraction) {
  if (energy_fraction <= 0.0 || energy_fraction >= 1.0)
    throw ConfigError("energy fraction must lie in (0, 1)");
  KlDecomposition out;
  out.grid = periodic_grid(m);
  out.weights = Vector::Constant(m, 2.0 / double(m));

  Matrix K(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      K(i, j) = spec(out.grid[i], out.grid[j]);

  const Vector sw = out.weights.array().sqrt();
  Matrix A = sw.asDiagonal() * K * sw.asDiagonal();
  A = 0.5 * (A + A.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(A);
  if (eig.info() != Eigen::Success)
    throw NumericalError("kernel eigendecomposition failed");

  Vector lam(m);
  Matrix V(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {  // descending
    lam[i] = eig.eigenvalues()[m - 1 - i];
    V.col(i) = eig.eigenvectors().col(m - 1 - i);
  }
  const double total = lam.sum();
  if (lam.minCoeff() < -1e-10 * std::max(lam[0], 1e-300))
    throw NumericalError("discretized kernel is indefinite");
  lam = lam.cwiseMax(0.0);

  double acc = 0.0;
  int d = 0;
  for (; d < m; ) {
    acc += lam[d];
    ++d;
    if (acc >= energy_fraction * total) break;
  }
  out.d = d;
  out.lambda = lam.head(d);
  out.phi = V.leftCols(d).array().colwise() / sw.array();
  for (Eigen::Index j = 0; j < out.phi.cols(); ++j) {
    Eigen::Index imax = 0;
    out.phi.col(j).cwiseAbs().maxCoeff(&imax);
    if (out.phi(imax, j) < 0.0) out.phi.col(j) = -out.phi.col(j);
  }
  return out;
}

// Xi samples and the corresponding perturbation fields
// u'(x; xi) = sum_i sqrt(lambda_i) xi_i phi_i(x).
struct RandomFieldSample {
  Matrix xi;       // s x d coefficients (unit variance)
  Matrix fields;   // m x s realizations
  Vector weights;  // probability weights, sum to 1
};

struct SamplingSpec {
  enum class Mode { Collocation, MonteCarlo };
  Mode mode = Mode::Collocation;
  int Q = 5;                 // collocation points per dimension
  Eigen::Index s = 1000;     // Monte Carlo sample count
  std::uint64_t seed = 0;
  Eigen::Index tensor_cap = 100000;  // refuse Q^d beyond this
};

inline RandomFieldSample sample_random_field(const KlDecomposition& kl,
                                             const SamplingSpec& spec) {
  RandomFieldSample out;
  const int d = kl.d;
  const double scale = std::sqrt(3.0);  // U[-1,1] -> unit variance

  if (spec.mode == SamplingSpec::Mode::Collocation) {
    double count = 1.0;
    for (int i = 0; i < d; ++i) count *= spec.Q;
    if (count > double(spec.tensor_cap))
      throw ConfigError(
          "tensor collocation grid too large (Q^d = " +
          std::to_string(count) + "); use Monte Carlo sampling");
    const Eigen::Index s = Eigen::Index(count);
    const GaussLegendre gl = gauss_legendre(spec.Q);
    out.xi.resize(s, d);
    out.weights.resize(s);
    for (Eigen::Index j = 0; j < s; ++j) {
      Eigen::Index rem = j;
      double w = 1.0;
      for (int i = 0; i < d; ++i) {
        const Eigen::Index idx = rem % spec.Q;
        rem /= spec.Q;
        out.xi(j, i) = scale * gl.nodes[idx];
        w *= gl.prob_weights[idx];
      }
      out.weights[j] = w;
    }
  } else {
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    out.xi.resize(spec.s, d);
    for (Eigen::Index j = 0; j < spec.s; ++j)
      for (int i = 0; i < d; ++i) out.xi(j, i) = scale * uni(rng);
    out.weights = Vector::Constant(spec.s, 1.0 / double(spec.s));
  }

  const Vector sqrt_lam = kl.lambda.array().sqrt();
  out.fields = kl.phi * sqrt_lam.asDiagonal() * out.xi.transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Kuramoto-Sivashinsky: u_t = u u_x - u_xx - eps u_xxxx on [-1, 1], periodic

struct KsConfig {
  double eps = 0.01;
  Eigen::Index n = 256;  // power of two
  double lc = 2.5;
  double sigma = 0.1;
  double energy_threshold = 0.99;
  SamplingSpec sampling;
  double dt = 1e-3;
  double Tf = 1.2;
  double burn_in = 2.0;
  double burn_dt = 1e-4;
  // The sampling trajectories integrate with an internal step of
  // dt / substeps; only every substeps-th state is recorded. The solution
  // amplitude grows sharply during the transient instability, and the
  // explicit treatment of the nonlinear term needs the finer step there.
  Eigen::Index substeps = 50;
  // Amplitude of a fixed defect added to the base state after burn-in.
  // The burned-in state is a symmetric equilibrium; the defect seeds its
  // intrinsic instability so the transition happens at a reproducible time
  // inside [0, Tf] instead of drifting with round-off accumulation.
  double seed_amplitude = 0.02;

  void validate() const {
    if (eps <= 0.0) throw ConfigError("ks: eps must be > 0");
    if (n < 8 || (n & (n - 1)) != 0)
      throw ConfigError("ks: n must be a power of two >= 8");
    if (energy_threshold <= 0.0 || energy_threshold >= 1.0)
      throw ConfigError("ks: energy_threshold must lie in (0, 1)");
    if (dt <= 0.0 || Tf <= 0.0) throw ConfigError("ks: dt, Tf must be > 0");
    if (burn_in < 0.0 || burn_dt <= 0.0)
      throw ConfigError("ks: burn_in must be >= 0 and burn_dt > 0");
    if (substeps < 1) throw ConfigError("ks: substeps must be >= 1");
    if (seed_amplitude < 0.0)
      throw ConfigError("ks: seed_amplitude must be >= 0");
  }
};

// ETDRK4 integrator for the KS equation, Fourier pseudospectral in space
// with 2/3-rule dealiasing. Calls on_step(k, u) after every step,
// including k = 0 for the initial condition.
class KsSolver {
 public:
  KsSolver(Eigen::Index n, double eps, double dt) : n_(n), dt_(dt) {
    using cd = std::complex<double>;
    ik_.resize(n);
    Vector L(n);
    dealias_.resize(n);
    for (Eigen::Index m = 0; m < n; ++m) {
      const double freq = (m <= n / 2) ? double(m) : double(m) - double(n);
      const double k = M_PI * freq;  // domain length 2
      ik_[m] = cd(0.0, k);
      L[m] = k * k - eps * k * k * k * k;
      dealias_[m] = std::abs(freq) <= double(n) / 3.0 ? 1.0 : 0.0;
    }
    if (n % 2 == 0) ik_[n / 2] = 0.0;

    E_ = (dt * L.array()).exp();
    E2_ = (0.5 * dt * L.array()).exp();
    // phi-function coefficients via the Kassam-Trefethen contour trick
    const int M = 32;
    Q_.setZero(n);
    f1_.setZero(n);
    f2_.setZero(n);
    f3_.setZero(n);
    for (int j = 0; j < M; ++j) {
      const cd rj = std::exp(cd(0.0, M_PI * (j + 0.5) / M));
      for (Eigen::Index m = 0; m < n; ++m) {
        const cd z = dt * L[m] + rj;
        const cd ez = std::exp(z);
        Q_[m] += ((std::exp(z * 0.5) - 1.0) / z).real();
        f1_[m] += ((-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / (z * z * z))
                      .real();
        f2_[m] += ((2.0 + z + ez * (-2.0 + z)) / (z * z * z)).real();
        f3_[m] +=
            ((-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / (z * z * z)).real();
      }
    }
    const double h_over_M = dt / double(M);
    Q_ *= h_over_M;
    f1_ *= h_over_M;
    f2_ *= h_over_M;
    f3_ *= h_over_M;
  }

  template <typename OnStep>
  void integrate(const Vector& u0, Eigen::Index nsteps, OnStep&& on_step) {
    require_dims(u0.size() == n_, "ks_solve initial condition");
    Eigen::VectorXcd v;
    {
      Eigen::VectorXcd u0c = u0.cast<std::complex<double>>();
      fft_.fwd(v, u0c);
    }
    on_step(Eigen::Index(0), u0);
    for (Eigen::Index k = 1; k <= nsteps; ++k) {
      const Eigen::VectorXcd Nv = nonlinear(v);
      const Eigen::VectorXcd a =
          E2_.asDiagonal() * v + Q_.asDiagonal() * Nv;
      const Eigen::VectorXcd Na = nonlinear(a);
      const Eigen::VectorXcd b =
          E2_.asDiagonal() * v + Q_.asDiagonal() * Na;
      const Eigen::VectorXcd Nb = nonlinear(b);
      const Eigen::VectorXcd c =
          E2_.asDiagonal() * a + Q_.asDiagonal() * (2.0 * Nb - Nv);
      const Eigen::VectorXcd Nc = nonlinear(c);
      v = E_.asDiagonal() * v + f1_.asDiagonal() * Nv +
          f2_.asDiagonal() * (2.0 * (Na + Nb)) + f3_.asDiagonal() * Nc;
      Eigen::VectorXcd up;
      fft_.inv(up, v);
      Vector u = up.real();
      if (!u.allFinite())
        throw NumericalError("ks_solve diverged at step " +
                             std::to_string(k));
      on_step(k, u);
    }
  }

 private:
  // N(u) = u u_x = (u^2 / 2)_x, evaluated pseudospectrally with dealiasing
  Eigen::VectorXcd nonlinear(const Eigen::VectorXcd& vhat) {
    Eigen::VectorXcd vd = (vhat.array() * dealias_.cast<std::complex<double>>()
                                              .array())
                              .matrix();
    Eigen::VectorXcd u;
    fft_.inv(u, vd);
    Eigen::VectorXcd w = 0.5 * (u.array() * u.array()).matrix();
    Eigen::VectorXcd what;
    fft_.fwd(what, w);
    return (ik_.array() * what.array() *
            dealias_.cast<std::complex<double>>().array())
        .matrix();
  }

  Eigen::Index n_;
  double dt_;
  Eigen::FFT<double> fft_;
  Eigen::VectorXcd ik_;
  Vector dealias_;
  Vector E_, E2_, Q_, f1_, f2_, f3_;
};

// Full trajectory as an n x (nsteps+1) matrix.
inline Matrix ks_solve(const Vector& u0, double eps, double dt,
                       Eigen::Index nsteps) {
  KsSolver solver(u0.size(), eps, dt);
  Matrix traj(u0.size(), nsteps + 1);
  solver.integrate(u0, nsteps,
                   [&](Eigen::Index k, const Vector& u) { traj.col(k) = u; });
  return traj;
}

struct KsSeries {
  SnapshotSeries series;
  Vector u_base;    // burn-in terminal solution
  KlDecomposition kl;
  RandomFieldSample sample;
};

// Base state by burn-in, random initial perturbations from the KL of the
// periodic kernel, one trajectory per sample.
inline KsSeries generate_ks_series(const KsConfig& cfg) {
  cfg.validate();
  const Vector x = periodic_grid(cfg.n);

  Vector u_b(cfg.n);
  for (Eigen::Index i = 0; i < cfg.n; ++i) u_b[i] = std::sin(M_PI * x[i]);
  {
    KsSolver burn(cfg.n, cfg.eps, cfg.burn_dt);
    const Eigen::Index steps =
        Eigen::Index(std::llround(cfg.burn_in / cfg.burn_dt));
    if (steps > 0)
      burn.integrate(u_b, steps, [&](Eigen::Index k, const Vector& u) {
        if (k == steps) u_b = u;
      });
  }
  for (Eigen::Index i = 0; i < cfg.n; ++i) {
    const double seed = std::cos(2.0 * M_PI * x[i]) +
                        std::sin(3.0 * M_PI * x[i]) +
                        std::cos(5.0 * M_PI * x[i]);
    u_b[i] += cfg.seed_amplitude * seed / 2.588678522796824;  // max |seed|
  }

  KernelSpec kernel{KernelSpec::Variant::Periodic, cfg.sigma, cfg.lc};
  KlDecomposition kl =
      kl_decompose_kernel(kernel, cfg.n, cfg.energy_threshold);
  RandomFieldSample sample = sample_random_field(kl, cfg.sampling);

  const Eigen::Index s = sample.fields.cols();
  const Eigen::Index K = Eigen::Index(std::llround(cfg.Tf / cfg.dt));
  std::vector<Matrix> snaps(size_t(K) + 1, Matrix(cfg.n, s));

  KsSolver solver(cfg.n, cfg.eps, cfg.dt / double(cfg.substeps));
  for (Eigen::Index j = 0; j < s; ++j) {
    const Vector u0 = u_b + sample.fields.col(j);
    solver.integrate(u0, K * cfg.substeps, [&](Eigen::Index k, const Vector& u) {
      if (k % cfg.substeps == 0) snaps[size_t(k / cfg.substeps)].col(j) = u;
    });
  }

  std::vector<double> times(size_t(K) + 1);
  for (Eigen::Index k = 0; k <= K; ++k) times[size_t(k)] = double(k) * cfg.dt;
  StateWeights wx = StateWeights::uniform(cfg.n, 2.0);
  SampleWeights wxi(sample.weights);
  SnapshotSeries series(cfg.n, s, std::move(times), std::move(wx),
                        std::move(wxi),
                        std::make_shared<MemoryStore>(std::move(snaps)));
  return KsSeries{std::move(series), std::move(u_b), std::move(kl),
                  std::move(sample)};
}

}  // namespace dbr

#endif  // DBR_TESTBEDS_HPP
