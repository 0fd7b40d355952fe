#include "mhdshred/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mhdshred::solver {

namespace {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

inline int di(Dir d) { return static_cast<int>(d); }

inline double spacing(const Grid& g, Dir d) {
  return (d == Dir::East || d == Dir::West) ? g.dx : g.dy;
}

// Outward unit-normal sign along the face's axis.
inline double normal_sign(Dir d) { return (d == Dir::East || d == Dir::North) ? 1.0 : -1.0; }

inline bool horizontal(Dir d) { return d == Dir::East || d == Dir::West; }

double flux_value(const Grid& g, const Vector& a, int i, int j) {
  const int u = g.vertex_unknown[g.vertex_id(i, j)];
  return u >= 0 ? a[u] : 0.0;
}

struct FaceField {
  double bx_w, bx_e, by_s, by_n;
};

FaceField face_field(const Grid& g, const Vector& a, double B0, int k) {
  const auto [i, j] = g.cell_ij[k];
  const double sw = flux_value(g, a, i, j), se = flux_value(g, a, i + 1, j);
  const double nw = flux_value(g, a, i, j + 1), ne = flux_value(g, a, i + 1, j + 1);
  return {(nw - sw) / g.dy, (ne - se) / g.dy, B0 - (se - sw) / g.dx, B0 - (ne - nw) / g.dx};
}

void cell_field_from_flux(const Grid& g, const Vector& a, double B0, Vector& Bx, Vector& By) {
  const int n = g.fluid_count();
  Bx.resize(n);
  By.resize(n);
  for (int k = 0; k < n; ++k) {
    const auto f = face_field(g, a, B0, k);
    Bx[k] = 0.5 * (f.bx_w + f.bx_e);
    By[k] = 0.5 * (f.by_s + f.by_n);
  }
}

bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace

Vector hydrostatic_pressure(const PhysicalParams& params, const Grid& grid) {
  const int n = grid.fluid_count();
  Vector ph(n);
  for (int k = 0; k < n; ++k)
    ph[k] = params.p_out + params.rho0 * (params.g[0] * (grid.cell_x(k) - grid.L) +
                                          params.g[1] * (grid.cell_y(k) - grid.H));
  return ph;
}

SimState initialize(const PhysicalParams& params, const Grid& grid) {
  params.validate();
  const int n = grid.fluid_count();
  SimState s;
  s.t = 0.0;
  s.rho = Vector::Constant(n, params.rho0);
  s.ux = Vector::Zero(n);
  s.uy = Vector::Zero(n);
  s.T = Vector::Constant(n, params.T0);
  s.p = hydrostatic_pressure(params, grid);
  s.Bx = Vector::Zero(n);
  s.By = Vector::Constant(n, params.B0);
  s.flux_function = Vector::Zero(grid.unknown_count());
  s.mass_flux.assign(n, {0.0, 0.0, 0.0, 0.0});
  return s;
}

Vector magnetic_divergence(const Grid& grid, const SimState& state, double B0) {
  const int n = grid.fluid_count();
  Vector div(n);
  for (int k = 0; k < n; ++k) {
    const auto f = face_field(grid, state.flux_function, B0, k);
    div[k] = (f.bx_e - f.bx_w) / grid.dx + (f.by_n - f.by_s) / grid.dy;
  }
  return div;
}

TimeStepLimits time_step_limits(const SimState& state, const PhysicalParams& params,
                                const Grid& grid) {
  if (!all_finite(state.ux) || !all_finite(state.uy) || !all_finite(state.Bx) ||
      !all_finite(state.By) || !all_finite(state.rho) || !all_finite(state.T)) {
    std::ostringstream msg;
    msg << "non-finite field values at t = " << state.t << " s (simulation blow-up)";
    fail(ErrorKind::BlowUp, msg.str());
  }
  const double h = std::min(grid.dx, grid.dy);
  constexpr double dim = 2.0;
  double max_speed = 0.0;
  for (Eigen::Index k = 0; k < state.ux.size(); ++k) {
    const double speed = std::hypot(state.ux[k], state.uy[k]);
    const double alfven = std::hypot(state.Bx[k], state.By[k]) / std::sqrt(params.mu0 * state.rho[k]);
    max_speed = std::max(max_speed, speed + alfven);
  }
  const double rho_min = state.rho.size() > 0 ? state.rho.minCoeff() : params.rho0;
  TimeStepLimits lim;
  lim.advective = max_speed > 0.0 ? h / max_speed : std::numeric_limits<double>::infinity();
  lim.viscous = rho_min * h * h / (2.0 * params.mu * dim);
  lim.magnetic_diffusive = params.sigma * params.mu0 * h * h / (2.0 * dim);
  lim.thermal = rho_min * params.cv * h * h / (2.0 * params.kappa * dim);
  return lim;
}

double cfl_dt(const SimState& state, const PhysicalParams& params, const Grid& grid,
              const SolverOptions& options) {
  if (!(options.cfl > 0.0 && options.cfl <= 1.0))
    fail(ErrorKind::InvalidArgument, "cfl must lie in (0, 1]");
  const auto lim = time_step_limits(state, params, grid);
  double limit = std::min({lim.advective, lim.viscous, lim.thermal});
  if (!options.implicit_magnetic_diffusion) limit = std::min(limit, lim.magnetic_diffusive);
  return std::min(options.cfl * limit, options.dt_max);
}

struct Solver::Impl {
  SparseMatrix pressure_matrix;
  Eigen::SimplicialLDLT<SparseMatrix> pressure_solver;

  Vector vertex_volume;
  SparseMatrix vertex_stiffness;  // sum over dual faces of (len/dist)(a_i - a_j)
  SparseMatrix helmholtz;
  Eigen::SimplicialLDLT<SparseMatrix> helmholtz_solver;
  double helmholtz_dt = -1.0;
  bool helmholtz_analyzed = false;

  Vector hydrostatic;
};

Solver::Solver(PhysicalParams params, Grid grid, SolverOptions options)
    : params_(std::move(params)), grid_(std::move(grid)), options_(options),
      impl_(std::make_unique<Impl>()) {
  params_.validate();
  const auto& g = grid_;
  const int n = g.fluid_count();

  std::vector<Triplet> trip;
  for (int k = 0; k < n; ++k) {
    for (Dir d : kDirs) {
      const double area = g.face_area(d);
      const int nb = g.neighbor[k][di(d)];
      if (nb >= 0) {
        const double c = area / spacing(g, d);
        trip.emplace_back(k, k, c);
        trip.emplace_back(k, nb, -c);
      } else if (g.face[k][di(d)] == FaceKind::Outlet) {
        trip.emplace_back(k, k, area / (0.5 * spacing(g, d)));
      }
    }
  }
  impl_->pressure_matrix.resize(n, n);
  impl_->pressure_matrix.setFromTriplets(trip.begin(), trip.end());
  impl_->pressure_solver.compute(impl_->pressure_matrix);
  if (impl_->pressure_solver.info() != Eigen::Success)
    fail(ErrorKind::LinearSolver, "pressure operator factorisation failed");

  // Dual-cell stiffness on free vertices; Dirichlet neighbours drop out.
  const int m = g.unknown_count();
  impl_->vertex_volume.resize(m);
  trip.clear();
  for (int u = 0; u < m; ++u) {
    const auto [i, j] = g.unknown_ij[u];
    const bool edge = (i == 0 || i == g.nx);
    impl_->vertex_volume[u] = g.dx * g.dy * (edge ? 0.5 : 1.0);
    const std::array<std::array<int, 2>, 4> nbs = {{{i + 1, j}, {i - 1, j}, {i, j + 1}, {i, j - 1}}};
    for (int q = 0; q < 4; ++q) {
      const int ni = nbs[q][0], nj = nbs[q][1];
      if (ni < 0 || ni > g.nx || nj < 0 || nj > g.ny) continue;
      if (!g.vertex_active[g.vertex_id(ni, nj)]) continue;
      const bool along_x = q < 2;
      const double c = along_x ? g.dy / g.dx : (edge ? 0.5 : 1.0) * g.dx / g.dy;
      trip.emplace_back(u, u, c);
      const int nu = g.vertex_unknown[g.vertex_id(ni, nj)];
      if (nu >= 0) trip.emplace_back(u, nu, -c);
    }
  }
  impl_->vertex_stiffness.resize(m, m);
  impl_->vertex_stiffness.setFromTriplets(trip.begin(), trip.end());
  impl_->hydrostatic = hydrostatic_pressure(params_, g);
}

Solver::~Solver() = default;
Solver::Solver(Solver&&) noexcept = default;
Solver& Solver::operator=(Solver&&) noexcept = default;

SimState Solver::initial_state(std::uint64_t seed) const {
  SimState s = initialize(params_, grid_);
  if (options_.initial_perturbation > 0.0) {
    std::mt19937_64 rng(seed);
    for (Eigen::Index k = 0; k < s.ux.size(); ++k) {
      s.ux[k] += options_.initial_perturbation * (2.0 * uniform_unit(rng) - 1.0);
      s.uy[k] += options_.initial_perturbation * (2.0 * uniform_unit(rng) - 1.0);
    }
  }
  return s;
}

StepReport Solver::step(SimState& s, double dt) {
  const auto& g = grid_;
  const auto& P = params_;
  const int n = g.fluid_count();
  const double V = g.cell_volume();
  if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorKind::InvalidArgument, "time step must be positive");

  const VectorField B = s.magnetic();
  const VectorField u = s.velocity();
  const auto b_ghost = magnetic_ghost(g, B, P.B0);
  const Vector J = compute_current_density(g, B, b_ghost);
  const Vector joule = J.array().square() / (P.sigma * P.mu0 * P.mu0);
  const VectorField visc = compute_viscous_stress_divergence(g, u, P.mu, velocity_ghost(g, u, P.u_in));

  // Energy: upwind advection (non-conservative form on face mass fluxes),
  // centred conduction, Joule source.
  Vector T_new(n);
  for (int k = 0; k < n; ++k) {
    double adv = 0.0;
    double cond = 0.0;
    const double Tp = s.T[k];
    for (Dir d : kDirs) {
      const int nb = g.neighbor[k][di(d)];
      const FaceKind kind = g.face[k][di(d)];
      const double F = s.mass_flux[k][di(d)];
      double T_ghost = Tp;
      switch (kind) {
        case FaceKind::WallTopStep: T_ghost = 2.0 * P.T_top - Tp; break;
        case FaceKind::WallBottomStep: T_ghost = 2.0 * P.T_bottom - Tp; break;
        case FaceKind::Inlet: T_ghost = 2.0 * P.T0 - Tp; break;
        default: break;
      }
      const double Tn = nb >= 0 ? s.T[nb] : T_ghost;
      if (F < 0.0) {
        const double T_up = nb >= 0 ? s.T[nb] : (kind == FaceKind::Inlet ? P.T0 : Tp);
        adv += F * (T_up - Tp);
      }
      cond += g.face_area(d) / spacing(g, d) * (Tn - Tp);
    }
    T_new[k] = Tp + dt / (s.rho[k] * P.cv) * (-P.cv * adv / V + P.kappa * cond / V + joule[k]);
  }
  Vector rho_new(n);
  for (int k = 0; k < n; ++k) rho_new[k] = P.density(T_new[k]);

  // Momentum predictor without the pressure gradient.
  Vector mx(n), my(n);
  for (int k = 0; k < n; ++k) {
    double ax = 0.0, ay = 0.0;
    for (Dir d : kDirs) {
      const double F = s.mass_flux[k][di(d)];
      if (F == 0.0) continue;
      const int nb = g.neighbor[k][di(d)];
      double upx = u.x[k], upy = u.y[k];
      if (F < 0.0) {
        if (nb >= 0) {
          upx = u.x[nb];
          upy = u.y[nb];
        } else if (g.face[k][di(d)] == FaceKind::Inlet) {
          upx = P.u_in;
          upy = 0.0;
        }
      }
      ax += F * upx;
      ay += F * upy;
    }
    const double buoy = s.rho[k] - P.rho0;
    const double lorentz_x = -J[k] * B.y[k] / P.mu0;
    const double lorentz_y = J[k] * B.x[k] / P.mu0;
    mx[k] = s.rho[k] * u.x[k] + dt * (-ax / V + visc.x[k] + buoy * P.g[0] + lorentz_x);
    my[k] = s.rho[k] * u.y[k] + dt * (-ay / V + visc.y[k] + buoy * P.g[1] + lorentz_y);
  }

  // Predicted face fluxes and continuity right-hand side.
  std::vector<std::array<double, 4>> flux(n);
  Vector rhs(n);
  double inlet_flux = 0.0;
  for (int k = 0; k < n; ++k) {
    double net = 0.0;
    for (Dir d : kDirs) {
      const int nb = g.neighbor[k][di(d)];
      const FaceKind kind = g.face[k][di(d)];
      const double area = g.face_area(d);
      const double sgn = normal_sign(d);
      double F = 0.0;
      if (nb >= 0) {
        F = horizontal(d) ? sgn * area * 0.5 * (mx[k] + mx[nb]) : sgn * area * 0.5 * (my[k] + my[nb]);
      } else if (kind == FaceKind::Inlet) {
        F = -P.density(P.T0) * P.u_in * area;
        inlet_flux -= F;
      } else if (kind == FaceKind::Outlet) {
        F = area * mx[k];
      }
      flux[k][di(d)] = F;
      net += F;
    }
    rhs[k] = (net + V * (rho_new[k] - s.rho[k]) / dt) / dt;
  }

  // Projection: K p = -rhs with K the (positive) compact Laplacian.
  const Vector neg_rhs = -rhs;
  const Vector pd = impl_->pressure_solver.solve(neg_rhs);
  StepReport report;
  report.dt = dt;
  {
    const double bnorm = neg_rhs.norm();
    const double res = (impl_->pressure_matrix * pd - neg_rhs).norm();
    report.pressure_residual = bnorm > 0.0 ? res / bnorm : res;
    if (impl_->pressure_solver.info() != Eigen::Success || !pd.allFinite() ||
        (bnorm > 0.0 && report.pressure_residual > options_.linear_tolerance)) {
      std::ostringstream msg;
      msg << "pressure solve failed at t = " << s.t << " s: relative residual "
          << report.pressure_residual << " (tolerance " << options_.linear_tolerance << ")";
      fail(ErrorKind::LinearSolver, msg.str());
    }
  }

  double outlet_flux = 0.0;
  Vector ux_new(n), uy_new(n);
  for (int k = 0; k < n; ++k) {
    double p_face[4];
    for (Dir d : kDirs) {
      const int nb = g.neighbor[k][di(d)];
      const FaceKind kind = g.face[k][di(d)];
      const double area = g.face_area(d);
      if (nb >= 0) {
        flux[k][di(d)] -= dt * area / spacing(g, d) * (pd[nb] - pd[k]);
        p_face[di(d)] = 0.5 * (pd[k] + pd[nb]);
      } else if (kind == FaceKind::Outlet) {
        flux[k][di(d)] -= dt * area / (0.5 * spacing(g, d)) * (0.0 - pd[k]);
        p_face[di(d)] = 0.0;
        outlet_flux += flux[k][di(d)];
      } else {
        p_face[di(d)] = pd[k];
      }
    }
    const double gx = (p_face[di(Dir::East)] - p_face[di(Dir::West)]) / g.dx;
    const double gy = (p_face[di(Dir::North)] - p_face[di(Dir::South)]) / g.dy;
    ux_new[k] = (mx[k] - dt * gx) / rho_new[k];
    uy_new[k] = (my[k] - dt * gy) / rho_new[k];
  }

  // Induction on the flux function: dA/dt = (u x B)_z + eta Lap A.
  const int m = g.unknown_count();
  const double eta = 1.0 / (P.sigma * P.mu0);
  Vector a_new = s.flux_function;
  if (m > 0) {
    Vector emf = Vector::Zero(m);
    for (int q = 0; q < m; ++q) {
      const auto [i, j] = g.unknown_ij[q];
      double sum = 0.0;
      int count = 0;
      for (int ci = i - 1; ci <= i; ++ci)
        for (int cj = j - 1; cj <= j; ++cj) {
          if (!g.is_fluid(ci, cj)) continue;
          const int k = g.fluid_index[ci + g.nx * cj];
          sum += u.x[k] * B.y[k] - u.y[k] * B.x[k];
          ++count;
        }
      emf[q] = count > 0 ? sum / count : 0.0;
    }
    if (options_.implicit_magnetic_diffusion) {
      auto& I = *impl_;
      if (I.helmholtz_dt != dt) {
        SparseMatrix mass(m, m);
        std::vector<Triplet> diag;
        diag.reserve(m);
        for (int q = 0; q < m; ++q) diag.emplace_back(q, q, I.vertex_volume[q]);
        mass.setFromTriplets(diag.begin(), diag.end());
        I.helmholtz = mass + (eta * dt) * I.vertex_stiffness;
        if (!I.helmholtz_analyzed) {
          I.helmholtz_solver.analyzePattern(I.helmholtz);
          I.helmholtz_analyzed = true;
        }
        I.helmholtz_solver.factorize(I.helmholtz);
        if (I.helmholtz_solver.info() != Eigen::Success)
          fail(ErrorKind::LinearSolver, "magnetic diffusion operator factorisation failed");
        I.helmholtz_dt = dt;
      }
      const Vector b = I.vertex_volume.cwiseProduct(s.flux_function + dt * emf);
      a_new = I.helmholtz_solver.solve(b);
      const double bnorm = b.norm();
      const double res = (I.helmholtz * a_new - b).norm();
      report.magnetic_residual = bnorm > 0.0 ? res / bnorm : res;
      if (!a_new.allFinite() || (bnorm > 0.0 && report.magnetic_residual > options_.linear_tolerance)) {
        std::ostringstream msg;
        msg << "magnetic diffusion solve failed at t = " << s.t << " s: relative residual "
            << report.magnetic_residual;
        fail(ErrorKind::LinearSolver, msg.str());
      }
    } else {
      const Vector lap = -(impl_->vertex_stiffness * s.flux_function).cwiseQuotient(impl_->vertex_volume);
      a_new = s.flux_function + dt * (emf + eta * lap);
    }
  }

  s.t += dt;
  s.T = std::move(T_new);
  s.rho = std::move(rho_new);
  s.ux = std::move(ux_new);
  s.uy = std::move(uy_new);
  s.p = pd + impl_->hydrostatic;
  s.flux_function = std::move(a_new);
  s.mass_flux = std::move(flux);
  cell_field_from_flux(g, s.flux_function, P.B0, s.Bx, s.By);

  if (!all_finite(s.ux) || !all_finite(s.uy) || !all_finite(s.T) || !all_finite(s.p) ||
      !all_finite(s.flux_function)) {
    std::ostringstream msg;
    msg << "non-finite field values at t = " << s.t << " s (simulation blow-up)";
    fail(ErrorKind::BlowUp, msg.str());
  }

  report.inlet_mass_flux = inlet_flux;
  report.outlet_mass_flux = outlet_flux;
  report.max_div_b = magnetic_divergence(g, s, P.B0).cwiseAbs().maxCoeff();
  double eos = 0.0;
  for (int k = 0; k < n; ++k) eos = std::max(eos, std::abs(s.rho[k] - P.density(s.T[k])));
  report.max_eos_residual = eos;
  return report;
}

SimState step(const SimState& state, const PhysicalParams& params, const Grid& grid, double dt,
              const SolverOptions& options) {
  Solver solver(params, grid, options);
  SimState next = state;
  solver.step(next, dt);
  return next;
}

SnapshotTrajectory run_trajectory(const PhysicalParams& params, const Geometry& geometry,
                                  const Grid& grid, double t_end, double save_every,
                                  std::uint64_t seed, const SolverOptions& options,
                                  TrajectoryDiagnostics* diagnostics) {
  geometry.validate();
  if (!(t_end > 0.0) || !(save_every > 0.0))
    fail(ErrorKind::InvalidArgument, "t_end and save_every must be positive");
  const double ratio = t_end / save_every;
  const auto n_save = static_cast<Eigen::Index>(std::llround(ratio));
  if (n_save < 1 || std::abs(ratio - static_cast<double>(n_save)) > 1e-9 * std::max(1.0, ratio))
    fail(ErrorKind::InvalidArgument, "save_every must divide t_end");

  Solver solver(params, grid, options);
  SimState state = solver.initial_state(seed);
  const Eigen::Index cells = grid.fluid_count();

  SnapshotTrajectory traj;
  traj.param_value = params.B0;
  traj.save_dt = save_every;
  traj.T.resize(cells, n_save);
  traj.u.resize(2 * cells, n_save);
  traj.p.resize(cells, n_save);

  TrajectoryDiagnostics diag;
  diag.min_dt = std::numeric_limits<double>::infinity();
  double dt = 0.0;
  for (Eigen::Index s = 0; s < n_save; ++s) {
    const double t_target = static_cast<double>(s + 1) * save_every;
    // Equal sub-steps per save interval; dt only changes when the CFL bound
    // forces a different sub-step count.
    int substeps = static_cast<int>(std::ceil(save_every / solver.stable_dt(state) - 1e-12));
    substeps = std::max(substeps, 1);
    dt = save_every / substeps;
    int taken = 0;
    StepReport rep;
    while (taken < substeps) {
      const double limit = solver.stable_dt(state);
      if (dt > limit * (1.0 + 1e-12)) {
        const double remaining = t_target - state.t;
        substeps = taken + std::max(1, static_cast<int>(std::ceil(remaining / limit - 1e-12)));
        dt = remaining / (substeps - taken);
      }
      try {
        rep = solver.step(state, dt);
      } catch (const Error& e) {
        std::ostringstream msg;
        msg << e.what() << " [B0 = " << params.B0 << " T, failing time " << state.t << " s]";
        throw Error(e.kind(), msg.str());
      }
      ++taken;
      ++diag.steps;
      diag.min_dt = std::min(diag.min_dt, dt);
      diag.max_dt = std::max(diag.max_dt, dt);
      diag.max_div_b = std::max(diag.max_div_b, rep.max_div_b);
      diag.max_eos_residual = std::max(diag.max_eos_residual, rep.max_eos_residual);
    }
    state.t = t_target;
    traj.T.col(s) = state.T;
    traj.u.col(s).head(cells) = state.ux;
    traj.u.col(s).tail(cells) = state.uy;
    traj.p.col(s) = state.p;
    diag.save_times.push_back(t_target);
    diag.inlet_mass_flux.push_back(rep.inlet_mass_flux);
    diag.outlet_mass_flux.push_back(rep.outlet_mass_flux);
  }
  if (diagnostics) *diagnostics = std::move(diag);
  return traj;
}

double velocity_fluctuation_energy(const SnapshotTrajectory& trajectory, double trailing_fraction) {
  const Eigen::Index nt = trajectory.instants();
  if (nt == 0 || !(trailing_fraction > 0.0 && trailing_fraction <= 1.0))
    fail(ErrorKind::InvalidArgument, "fluctuation energy needs a non-empty trailing window");
  const Eigen::Index first = nt - std::max<Eigen::Index>(1, std::llround(trailing_fraction * nt));
  const Eigen::Index count = nt - first;
  const auto window = trajectory.u.middleCols(first, count);
  const Vector mean = window.rowwise().mean();
  const double cells = static_cast<double>(trajectory.cells());
  return (window.colwise() - mean).squaredNorm() / (static_cast<double>(count) * cells);
}

}  // namespace mhdshred::solver
