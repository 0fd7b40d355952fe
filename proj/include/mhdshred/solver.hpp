#pragma once

#include "mhdshred/common.hpp"
#include "mhdshred/snapshots.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

/// Desk-scale finite-volume integrator of the compressible visco-resistive
/// MHD channel model (Boussinesq-type EOS, 2-D, stepped channel).
///
/// Layout: cell-centred rho, u, p, T, B on a uniform nx x ny grid with solid
/// step blocks masked out. Face mass fluxes carry advection and are made
/// consistent with continuity by a pressure projection. The in-plane magnetic
/// field is stored through its flux function A (B = curl(A z)) on cell
/// vertices, so the face-based discrete divergence of B vanishes identically.
namespace mhdshred::solver {

struct PhysicalParams {
  double rho0 = 9806.0;     // kg/m^3
  double mu = 1.93e-3;      // Pa s
  double mu0 = 1.26e-6;     // H/m
  double sigma = 7.82e5;    // 1/(Ohm m)
  double beta = 1.3e-4;     // 1/K
  double cv = 189.5;        // J/(kg K)
  double kappa = 20.93;     // W/(m K)
  std::array<double, 2> g{0.0, -9.81};
  double u_in = 0.0492;     // m/s
  double p_out = 1.0e5;     // Pa
  double T0 = 600.0;
  double T_top = 550.0;
  double T_bottom = 650.0;
  double B0 = 0.06;         // T, applied vertical field

  /// Positivity of material constants and T_top <= T0 <= T_bottom.
  void validate() const;
  double density(double T) const { return rho0 * (1.0 - beta * (T - T0)); }
};

enum class StepWall { Top, Bottom };

struct StepSpan {
  double x_start = 0.0;
  double x_end = 0.0;
  StepWall wall = StepWall::Top;
};

struct Geometry {
  double L = 0.2;
  double H = 0.02;
  double H1 = 0.006;  // upper-step height
  double H2 = 0.008;  // lower-step height
  std::vector<StepSpan> steps;

  /// Two upper steps at [0.05, 0.06] and [0.13, 0.14] m, lower step at
  /// [0.09, 0.10] m.
  static Geometry stepped_channel();
  static Geometry plain_channel(double L, double H);

  /// Empty step list is accepted (plain channel); otherwise exactly two top
  /// and one bottom step, non-overlapping, inside (0, L).
  void validate() const;
};

enum class Dir : int { East = 0, West = 1, North = 2, South = 3 };
inline constexpr std::array<Dir, 4> kDirs = {Dir::East, Dir::West, Dir::North, Dir::South};

enum class FaceKind : std::uint8_t {
  Interior,
  Inlet,
  Outlet,
  WallOther,
  WallTopStep,
  WallBottomStep,
};

inline bool is_wall(FaceKind k) {
  return k == FaceKind::WallOther || k == FaceKind::WallTopStep ||
         k == FaceKind::WallBottomStep;
}

struct Grid {
  int nx = 0;
  int ny = 0;
  double dx = 0.0;
  double dy = 0.0;
  double L = 0.0;
  double H = 0.0;

  std::vector<int> fluid_index;                 // nx*ny, -1 for solid
  std::vector<std::array<int, 2>> cell_ij;      // per fluid cell
  std::vector<std::array<int, 4>> neighbor;     // fluid index or -1, by Dir
  std::vector<std::array<FaceKind, 4>> face;    // by Dir

  // Vertex lattice (nx+1)*(ny+1) for the magnetic flux function.
  // vertex_unknown >= 0 for free vertices, -1 for wall (Dirichlet) or
  // inactive vertices.
  std::vector<int> vertex_unknown;
  std::vector<std::array<int, 2>> unknown_ij;
  std::vector<std::uint8_t> vertex_active;

  int fluid_count() const { return static_cast<int>(cell_ij.size()); }
  int unknown_count() const { return static_cast<int>(unknown_ij.size()); }
  double cell_x(int k) const { return (cell_ij[k][0] + 0.5) * dx; }
  double cell_y(int k) const { return (cell_ij[k][1] + 0.5) * dy; }
  double cell_volume() const { return dx * dy; }
  double face_area(Dir d) const { return (d == Dir::East || d == Dir::West) ? dy : dx; }
  int vertex_id(int i, int j) const { return i + (nx + 1) * j; }
  bool is_fluid(int i, int j) const {
    return i >= 0 && j >= 0 && i < nx && j < ny && fluid_index[i + nx * j] >= 0;
  }
};

/// Mask solid step blocks (cell centre inside a step rectangle) and tag faces.
Grid build_grid(const Geometry& geometry, int nx, int ny);

struct VectorField {
  Vector x;
  Vector y;
};

/// Ghost value for a boundary face of a fluid cell.
using ScalarGhost = std::function<double(int cell, Dir dir, FaceKind kind)>;
using VectorGhost = std::function<Eigen::Vector2d(int cell, Dir dir, FaceKind kind)>;

/// Boundary rule for B: the wall-normal component is pinned to the applied
/// field (Bx = 0 on vertical walls, By = B0 on horizontal ones), the tangential
/// component is extrapolated linearly; zero normal gradient on inlet/outlet.
VectorGhost magnetic_ghost(const Grid& grid, const VectorField& B, double B0);
/// Boundary rule for u: no-slip walls, uniform inflow, zero-gradient outlet.
VectorGhost velocity_ghost(const Grid& grid, const VectorField& u, double u_in);

/// z-component of curl(B) by centred differences.
Vector compute_current_density(const Grid& grid, const VectorField& B, const VectorGhost& ghost);
/// (1/mu0) (curl B) x B.
VectorField compute_lorentz_force(const Grid& grid, const VectorField& B, double mu0,
                                  const VectorGhost& ghost);
/// |curl B|^2 / (sigma mu0^2).
Vector compute_joule_heating(const Grid& grid, const VectorField& B, double sigma, double mu0,
                             const VectorGhost& ghost);
/// div(tau) with tau = mu (grad u + grad u^T) - 2/3 mu (div u) I, evaluated on
/// cell faces from compact normal differences and centred tangential ones.
VectorField compute_viscous_stress_divergence(const Grid& grid, const VectorField& u, double mu,
                                              const VectorGhost& ghost);

struct SimState {
  double t = 0.0;
  Vector rho;
  Vector ux;
  Vector uy;
  Vector p;
  Vector T;
  Vector Bx;
  Vector By;
  Vector flux_function;                         // perturbation of A on free vertices
  std::vector<std::array<double, 4>> mass_flux; // outward, per fluid cell and Dir

  VectorField velocity() const { return {ux, uy}; }
  VectorField magnetic() const { return {Bx, By}; }
};

struct SolverOptions {
  double cfl = 0.5;
  double dt_max = 5.0e-3;
  /// Backward-Euler magnetic diffusion; removes the magnetic-diffusive limit.
  bool implicit_magnetic_diffusion = true;
  /// Relative residual accepted from the elliptic solves.
  double linear_tolerance = 1.0e-8;
  /// Amplitude [m/s] of a seeded random initial velocity perturbation.
  double initial_perturbation = 0.0;
};

SimState initialize(const PhysicalParams& params, const Grid& grid);

/// Individual stability limits; dt = cfl * min(active limits), capped by dt_max.
struct TimeStepLimits {
  double advective = 0.0;
  double viscous = 0.0;
  double magnetic_diffusive = 0.0;
  double thermal = 0.0;
};

TimeStepLimits time_step_limits(const SimState& state, const PhysicalParams& params,
                                const Grid& grid);
double cfl_dt(const SimState& state, const PhysicalParams& params, const Grid& grid,
              const SolverOptions& options);

/// Face-based divergence of B, evaluated from the flux function.
Vector magnetic_divergence(const Grid& grid, const SimState& state, double B0);
/// Hydrostatic reference p_out + rho0 g.(x - x_top_outlet) at every fluid cell.
Vector hydrostatic_pressure(const PhysicalParams& params, const Grid& grid);

struct StepReport {
  double dt = 0.0;
  double inlet_mass_flux = 0.0;   // kg/(s m), entering
  double outlet_mass_flux = 0.0;  // kg/(s m), leaving
  double max_div_b = 0.0;
  double max_eos_residual = 0.0;
  double pressure_residual = 0.0;
  double magnetic_residual = 0.0;
};

/// Time integrator holding the factorised elliptic operators for one grid.
class Solver {
 public:
  Solver(PhysicalParams params, Grid grid, SolverOptions options = {});
  ~Solver();
  Solver(Solver&&) noexcept;
  Solver& operator=(Solver&&) noexcept;

  const PhysicalParams& params() const { return params_; }
  const Grid& grid() const { return grid_; }
  const SolverOptions& options() const { return options_; }

  SimState initial_state(std::uint64_t seed = 0) const;
  double stable_dt(const SimState& state) const { return cfl_dt(state, params_, grid_, options_); }
  /// Advance in place. Throws Error(BlowUp) on non-finite values and
  /// Error(LinearSolver) when an elliptic solve misses its tolerance.
  StepReport step(SimState& state, double dt);

 private:
  struct Impl;
  PhysicalParams params_;
  Grid grid_;
  SolverOptions options_;
  std::unique_ptr<Impl> impl_;
};

/// One-off step; factorises the operators on every call.
SimState step(const SimState& state, const PhysicalParams& params, const Grid& grid, double dt,
              const SolverOptions& options = {});

struct TrajectoryDiagnostics {
  std::size_t steps = 0;
  std::vector<double> save_times;
  std::vector<double> inlet_mass_flux;   // at save instants
  std::vector<double> outlet_mass_flux;  // at save instants
  double max_div_b = 0.0;                // max over every step
  double max_eos_residual = 0.0;
  double min_dt = 0.0;
  double max_dt = 0.0;
};

/// Integrate to t_end, saving (T, u, p) every save_every seconds.
SnapshotTrajectory run_trajectory(const PhysicalParams& params, const Geometry& geometry,
                                  const Grid& grid, double t_end, double save_every,
                                  std::uint64_t seed, const SolverOptions& options = {},
                                  TrajectoryDiagnostics* diagnostics = nullptr);

/// Mean squared deviation of velocity from its time mean over the trailing
/// fraction of saved instants, averaged over cells.
double velocity_fluctuation_energy(const SnapshotTrajectory& trajectory, double trailing_fraction);

}  // namespace mhdshred::solver
