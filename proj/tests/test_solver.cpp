#include "mhdshred/solver.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mhdshred;
using namespace mhdshred::solver;

namespace {

/// Fluid cells at least `margin` cells away from every boundary face.
std::vector<int> interior_cells(const Grid& g, int margin) {
  std::vector<int> out;
  for (int k = 0; k < g.fluid_count(); ++k) {
    const auto [i, j] = g.cell_ij[k];
    bool ok = true;
    for (int di = -margin; di <= margin && ok; ++di)
      for (int dj = -margin; dj <= margin && ok; ++dj) ok = g.is_fluid(i + di, j + dj);
    if (ok) out.push_back(k);
  }
  return out;
}

/// Row-major (i, j) indexing on a plain channel, written from scratch.
struct PlainOracle {
  int nx, ny;
  double dx, dy;
  std::vector<double> fx, fy;  // index i + nx * j

  double& X(int i, int j) { return fx[i + nx * j]; }
  double& Y(int i, int j) { return fy[i + nx * j]; }

  /// Magnetic ghost: inlet/outlet copy the cell, walls pin By to B0 and
  /// extrapolate Bx.
  Eigen::Vector2d b(int i, int j, double B0) {
    if (i < 0) return {X(0, j), Y(0, j)};
    if (i >= nx) return {X(nx - 1, j), Y(nx - 1, j)};
    if (j < 0) return {2 * X(i, 0) - X(i, 1), 2 * B0 - Y(i, 0)};
    if (j >= ny) return {2 * X(i, ny - 1) - X(i, ny - 2), 2 * B0 - Y(i, ny - 1)};
    return {X(i, j), Y(i, j)};
  }
  /// Velocity ghost: inflow u_in, zero-gradient outflow, no-slip walls.
  Eigen::Vector2d u(int i, int j, double u_in) {
    if (i < 0) return {2 * u_in - X(0, j), -Y(0, j)};
    if (i >= nx) return {X(nx - 1, j), Y(nx - 1, j)};
    if (j < 0) return {-X(i, 0), -Y(i, 0)};
    if (j >= ny) return {-X(i, ny - 1), -Y(i, ny - 1)};
    return {X(i, j), Y(i, j)};
  }
};

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("stepped channel grid: spacing, fluid count and three solid blocks") {
  const Geometry geo = Geometry::stepped_channel();
  const Grid g = build_grid(geo, 120, 24);
  CHECK(g.dy == doctest::Approx(0.02 / 24).epsilon(1e-14));
  CHECK(g.dx == doctest::Approx(0.2 / 120).epsilon(1e-14));
  // Hand count: each step is 6 columns wide (cell centres in [0.05, 0.06]);
  // upper steps are 7 rows tall (centres above 0.014 m), the lower one 10
  // rows (centres below 0.008 m).
  CHECK(g.fluid_count() == 120 * 24 - 2 * 6 * 7 - 6 * 10);

  // Flood-fill the solid cells and count components.
  std::vector<int> label(120 * 24, -1);
  int blocks = 0;
  for (int s = 0; s < 120 * 24; ++s) {
    if (g.fluid_index[s] >= 0 || label[s] >= 0) continue;
    std::vector<int> stack{s};
    label[s] = blocks;
    while (!stack.empty()) {
      const int c = stack.back();
      stack.pop_back();
      const int i = c % 120, j = c / 120;
      const int nb[4][2] = {{i + 1, j}, {i - 1, j}, {i, j + 1}, {i, j - 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[1] < 0 || q[0] >= 120 || q[1] >= 24) continue;
        const int id = q[0] + 120 * q[1];
        if (g.fluid_index[id] < 0 && label[id] < 0) {
          label[id] = blocks;
          stack.push_back(id);
        }
      }
    }
    ++blocks;
  }
  CHECK(blocks == 3);
}

TEST_CASE("plain channel is all fluid; unresolvable step is rejected") {
  const Grid g = build_grid(Geometry::plain_channel(0.2, 0.02), 40, 8);
  CHECK(g.fluid_count() == 320);
  Geometry thin = Geometry::stepped_channel();
  thin.steps[0].x_end = thin.steps[0].x_start + 0.001;  // narrower than dx = 1/600 m
  try {
    build_grid(thin, 120, 24);
    FAIL("expected a geometry error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Geometry);
  }
}

TEST_CASE("initial state: quiescent, T0, uniform applied field, rho0") {
  PhysicalParams p;
  p.B0 = 0.06;
  const Grid g = build_grid(Geometry::stepped_channel(), 60, 12);
  const SimState s = initialize(p, g);
  CHECK(s.ux.cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.uy.cwiseAbs().maxCoeff() == 0.0);
  CHECK((s.T.array() == 600.0).all());
  CHECK(s.Bx.cwiseAbs().maxCoeff() == 0.0);
  CHECK((s.By.array() == 0.06).all());
  CHECK((s.rho.array() == p.rho0).all());

  p.B0 = 0.0;
  const SimState z = initialize(p, g);
  CHECK(z.By.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("Lorentz force and Joule heating: uniform and linear fields") {
  const Grid g = build_grid(Geometry::plain_channel(0.2, 0.02), 40, 8);
  const int n = g.fluid_count();
  const double mu0 = 1.26e-6, sigma = 7.82e5;

  VectorField B{Vector::Zero(n), Vector::Constant(n, 0.3)};
  auto F = compute_lorentz_force(g, B, mu0, magnetic_ghost(g, B, 0.3));
  CHECK(F.x.cwiseAbs().maxCoeff() == 0.0);
  CHECK(F.y.cwiseAbs().maxCoeff() == 0.0);
  CHECK(compute_joule_heating(g, B, sigma, mu0, magnetic_ghost(g, B, 0.3)).cwiseAbs().maxCoeff() == 0.0);

  // B = (0, k x): curl B = k z, force (-k^2 x / mu0, 0), heating k^2/(sigma mu0^2).
  const double k = 2.5;
  for (int c = 0; c < n; ++c) B.y[c] = k * g.cell_x(c);
  F = compute_lorentz_force(g, B, mu0, magnetic_ghost(g, B, 0.0));
  const Vector q = compute_joule_heating(g, B, sigma, mu0, magnetic_ghost(g, B, 0.0));
  for (int c : interior_cells(g, 1)) {
    const double fx = -k * k * g.cell_x(c) / mu0;
    CHECK(F.x[c] == doctest::Approx(fx).epsilon(1e-12));
    CHECK(std::abs(F.y[c]) == 0.0);
    CHECK(q[c] == doctest::Approx(k * k / (sigma * mu0 * mu0)).epsilon(1e-12));
  }
}

TEST_CASE("Lorentz force and Joule heating match a hand-written stencil on 8x8") {
  const Grid g = build_grid(Geometry::plain_channel(0.02, 0.02), 8, 8);
  const int n = g.fluid_count();
  const double mu0 = 1.26e-6, sigma = 7.82e5, B0 = 0.1;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const double a = U(rng), b = U(rng), c = U(rng), d = U(rng);

  PlainOracle o{8, 8, g.dx, g.dy, std::vector<double>(64), std::vector<double>(64)};
  VectorField B{Vector(n), Vector(n)};
  for (int k = 0; k < n; ++k) {
    const double x = g.cell_x(k) / 0.02, y = g.cell_y(k) / 0.02;
    B.x[k] = 0.05 * std::sin(3 * x + a) * std::cos(2 * y + b);
    B.y[k] = B0 + 0.05 * std::cos(2 * x + c) * std::sin(3 * y + d);
    const auto [i, j] = g.cell_ij[k];
    o.X(i, j) = B.x[k];
    o.Y(i, j) = B.y[k];
  }
  const auto F = compute_lorentz_force(g, B, mu0, magnetic_ghost(g, B, B0));
  const Vector q = compute_joule_heating(g, B, sigma, mu0, magnetic_ghost(g, B, B0));
  double scale = 0.0;
  for (int k = 0; k < n; ++k) scale = std::max({scale, std::abs(F.x[k]), std::abs(F.y[k])});
  for (int k = 0; k < n; ++k) {
    const auto [i, j] = g.cell_ij[k];
    const double J = (o.b(i + 1, j, B0).y() - o.b(i - 1, j, B0).y()) / (2 * o.dx) -
                     (o.b(i, j + 1, B0).x() - o.b(i, j - 1, B0).x()) / (2 * o.dy);
    CHECK(std::abs(F.x[k] - (-J * o.Y(i, j) / mu0)) <= 1e-12 * scale);
    CHECK(std::abs(F.y[k] - (J * o.X(i, j) / mu0)) <= 1e-12 * scale);
    CHECK(q[k] == doctest::Approx(J * J / (sigma * mu0 * mu0)).epsilon(1e-12));
    CHECK(q[k] >= 0.0);
  }
}

TEST_CASE("viscous stress divergence: analytic fields and hand-written stencil") {
  const Grid g = build_grid(Geometry::plain_channel(0.02, 0.02), 12, 12);
  const int n = g.fluid_count();
  const double mu = 1.93e-3;
  VectorField u{Vector::Constant(n, 0.7), Vector::Constant(n, -0.2)};
  auto D = compute_viscous_stress_divergence(g, u, mu, velocity_ghost(g, u, 0.0));
  for (int c : interior_cells(g, 2)) {
    CHECK(std::abs(D.x[c]) <= 1e-12);
    CHECK(std::abs(D.y[c]) <= 1e-12);
  }

  // u = (a y^2, 0): x-component 2 a mu.
  const double a = 40.0;
  for (int c = 0; c < n; ++c) {
    u.x[c] = a * g.cell_y(c) * g.cell_y(c);
    u.y[c] = 0.0;
  }
  D = compute_viscous_stress_divergence(g, u, mu, velocity_ghost(g, u, 0.0));
  for (int c : interior_cells(g, 2)) {
    CHECK(D.x[c] == doctest::Approx(2 * a * mu).epsilon(1e-9));
    CHECK(std::abs(D.y[c]) <= 1e-12);
  }

  // Rigid rotation about the channel centre.
  const double w = 3.0;
  for (int c = 0; c < n; ++c) {
    u.x[c] = -w * (g.cell_y(c) - 0.01);
    u.y[c] = w * (g.cell_x(c) - 0.01);
  }
  D = compute_viscous_stress_divergence(g, u, mu, velocity_ghost(g, u, 0.0));
  for (int c : interior_cells(g, 2)) {
    CHECK(std::abs(D.x[c]) <= 1e-12);
    CHECK(std::abs(D.y[c]) <= 1e-12);
  }

  // Random field against an (i, j) re-implementation, boundaries included.
  const double u_in = 0.05;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-0.1, 0.1);
  PlainOracle o{12, 12, g.dx, g.dy, std::vector<double>(144), std::vector<double>(144)};
  for (int c = 0; c < n; ++c) {
    u.x[c] = U(rng);
    u.y[c] = U(rng);
    o.X(g.cell_ij[c][0], g.cell_ij[c][1]) = u.x[c];
    o.Y(g.cell_ij[c][0], g.cell_ij[c][1]) = u.y[c];
  }
  D = compute_viscous_stress_divergence(g, u, mu, velocity_ghost(g, u, u_in));
  auto grad = [&](int i, int j) {  // dux/dx, dux/dy, duy/dx, duy/dy
    const auto e = o.u(i + 1, j, u_in), w2 = o.u(i - 1, j, u_in), nn = o.u(i, j + 1, u_in), s = o.u(i, j - 1, u_in);
    return std::array<double, 4>{(e.x() - w2.x()) / (2 * o.dx), (nn.x() - s.x()) / (2 * o.dy),
                                 (e.y() - w2.y()) / (2 * o.dx), (nn.y() - s.y()) / (2 * o.dy)};
  };
  auto face = [&](int i, int j, int fi, int fj, int comp) {
    const bool inside = fi >= 0 && fj >= 0 && fi < 12 && fj < 12;
    return inside ? 0.5 * (grad(i, j)[comp] + grad(fi, fj)[comp]) : grad(i, j)[comp];
  };
  double scale = 0.0;
  for (int c = 0; c < n; ++c) scale = std::max({scale, std::abs(D.x[c]), std::abs(D.y[c])});
  for (int c = 0; c < n; ++c) {
    const int i = g.cell_ij[c][0], j = g.cell_ij[c][1];
    const auto P = o.u(i, j, u_in), E = o.u(i + 1, j, u_in), W = o.u(i - 1, j, u_in);
    const auto N = o.u(i, j + 1, u_in), S = o.u(i, j - 1, u_in);
    const double dx = o.dx, dy = o.dy;
    const double txx_e = mu * (2 * (E.x() - P.x()) / dx - 2.0 / 3 * ((E.x() - P.x()) / dx + face(i, j, i + 1, j, 3)));
    const double txx_w = mu * (2 * (P.x() - W.x()) / dx - 2.0 / 3 * ((P.x() - W.x()) / dx + face(i, j, i - 1, j, 3)));
    const double txy_n = mu * ((N.x() - P.x()) / dy + face(i, j, i, j + 1, 2));
    const double txy_s = mu * ((P.x() - S.x()) / dy + face(i, j, i, j - 1, 2));
    const double tyy_n = mu * (2 * (N.y() - P.y()) / dy - 2.0 / 3 * (face(i, j, i, j + 1, 0) + (N.y() - P.y()) / dy));
    const double tyy_s = mu * (2 * (P.y() - S.y()) / dy - 2.0 / 3 * (face(i, j, i, j - 1, 0) + (P.y() - S.y()) / dy));
    const double tyx_e = mu * ((E.y() - P.y()) / dx + face(i, j, i + 1, j, 1));
    const double tyx_w = mu * ((P.y() - W.y()) / dx + face(i, j, i - 1, j, 1));
    CHECK(std::abs(D.x[c] - ((txx_e - txx_w) / dx + (txy_n - txy_s) / dy)) <= 1e-12 * scale);
    CHECK(std::abs(D.y[c] - ((tyx_e - tyx_w) / dx + (tyy_n - tyy_s) / dy)) <= 1e-12 * scale);
  }
}

TEST_CASE("cfl_dt: advective limit, diffusive limit, non-finite input") {
  const Grid g = build_grid(Geometry::plain_channel(0.04, 0.01), 40, 10);  // dx = dy = 1e-3
  PhysicalParams p;
  p.B0 = 0.0;
  SolverOptions opt;
  opt.cfl = 0.5;
  opt.dt_max = 1.0;
  SimState s = initialize(p, g);
  s.ux[7] = 0.1;
  CHECK(cfl_dt(s, p, g, opt) == doctest::Approx(5e-3).epsilon(1e-12));

  s.ux.setZero();
  const auto lim = time_step_limits(s, p, g);
  CHECK(cfl_dt(s, p, g, opt) == doctest::Approx(0.5 * std::min(lim.viscous, lim.thermal)).epsilon(1e-14));
  CHECK(lim.viscous == doctest::Approx(p.rho0 * 1e-6 / (4 * p.mu)).epsilon(1e-12));
  CHECK(lim.thermal == doctest::Approx(p.rho0 * p.cv * 1e-6 / (4 * p.kappa)).epsilon(1e-12));
  opt.implicit_magnetic_diffusion = false;
  CHECK(cfl_dt(s, p, g, opt) ==
        doctest::Approx(0.5 * std::min({lim.viscous, lim.thermal, lim.magnetic_diffusive})).epsilon(1e-14));
  CHECK(lim.magnetic_diffusive == doctest::Approx(p.sigma * p.mu0 * 1e-6 / 4).epsilon(1e-12));

  s.ux[3] = std::nan("");
  try {
    cfl_dt(s, p, g, opt);
    FAIL("expected a blow-up error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BlowUp);
  }
}

TEST_CASE("equilibrium is a fixed point over 1000 steps") {
  PhysicalParams p;
  p.u_in = 0.0;
  p.T_top = p.T_bottom = p.T0;
  p.B0 = 0.06;
  Solver solver(p, build_grid(Geometry::stepped_channel(), 40, 8));
  SimState s = solver.initial_state();
  const SimState s0 = s;
  for (int i = 0; i < 1000; ++i) solver.step(s, solver.stable_dt(s));
  CHECK(s.ux.cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.uy.cwiseAbs().maxCoeff() == 0.0);
  CHECK((s.T - s0.T).cwiseAbs().maxCoeff() == 0.0);
  CHECK((s.p - s0.p).cwiseAbs().maxCoeff() <= 1e-9 * p.p_out);
  CHECK((s.By - s0.By).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(s.Bx.cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("zero field, isothermal channel develops the Poiseuille profile") {
  // Viscous enough that the profile develops within a second of model time.
  PhysicalParams p;
  p.B0 = 0.0;
  p.mu = 2.0;
  p.T_top = p.T_bottom = p.T0;
  p.g = {0.0, 0.0};
  const double H = 0.01;
  Solver solver(p, build_grid(Geometry::plain_channel(0.1, H), 48, 12));
  SimState s = solver.initial_state();
  while (s.t < 1.0) solver.step(s, solver.stable_dt(s));

  const Grid& g = solver.grid();
  VectorField B = s.magnetic();
  CHECK(B.x.cwiseAbs().maxCoeff() == 0.0);
  CHECK(B.y.cwiseAbs().maxCoeff() == 0.0);
  const auto ghost = magnetic_ghost(g, B, 0.0);
  const auto F = compute_lorentz_force(g, B, p.mu0, ghost);
  CHECK(F.x.cwiseAbs().maxCoeff() == 0.0);
  CHECK(F.y.cwiseAbs().maxCoeff() == 0.0);
  CHECK(compute_joule_heating(g, B, p.sigma, p.mu0, ghost).cwiseAbs().maxCoeff() == 0.0);

  // Profile 1.5 u_in (1 - eta^2) three quarters down the channel.
  const double peak = 1.5 * p.u_in;
  for (int k = 0; k < g.fluid_count(); ++k) {
    if (g.cell_ij[k][0] != 36) continue;
    const double eta = 2.0 * g.cell_y(k) / H - 1.0;
    CHECK(std::abs(s.ux[k] - peak * (1.0 - eta * eta)) <= 0.05 * peak);
  }
}

TEST_CASE("stepped-channel run: div B, EOS and mass balance") {
  PhysicalParams p;
  p.B0 = 0.1;
  Solver solver(p, build_grid(Geometry::stepped_channel(), 60, 12));
  SimState s = solver.initial_state();
  const double dx = std::min(solver.grid().dx, solver.grid().dy);
  StepReport r;
  while (s.t < 1.0) {
    r = solver.step(s, solver.stable_dt(s));
    REQUIRE(r.max_div_b <= 1e-10 * p.B0 / dx);
    REQUIRE(r.max_eos_residual == 0.0);
  }
  CHECK(std::abs(r.inlet_mass_flux - r.outlet_mass_flux) <= 0.02 * r.inlet_mass_flux);
  CHECK(r.inlet_mass_flux == doctest::Approx(p.rho0 * p.u_in * 0.02).epsilon(1e-3));
}

TEST_CASE("trajectory counting and seeded determinism") {
  PhysicalParams p;
  const Geometry geo = Geometry::stepped_channel();
  const Grid g = build_grid(geo, 40, 8);
  const auto a = run_trajectory(p, geo, g, 0.1, 0.05, 3);
  CHECK(a.instants() == 2);
  CHECK(a.cells() == g.fluid_count());
  CHECK(a.save_dt == 0.05);

  SolverOptions opt;
  opt.initial_perturbation = 1e-3;
  const auto x = run_trajectory(p, geo, g, 0.1, 0.025, 9, opt);
  const auto y = run_trajectory(p, geo, g, 0.1, 0.025, 9, opt);
  const auto z = run_trajectory(p, geo, g, 0.1, 0.025, 10, opt);
  CHECK(x.instants() == 4);
  CHECK(x.T == y.T);
  CHECK(x.u == y.u);
  CHECK(x.p == y.p);
  CHECK(x.u != z.u);
}

}  // TEST_SUITE
