#include "mhdshred/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mhdshred::solver {

void PhysicalParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      fail(ErrorKind::InvalidArgument, std::string("physical parameter ") + name + " must be positive");
  };
  positive(rho0, "rho0");
  positive(mu, "mu");
  positive(mu0, "mu0");
  positive(sigma, "sigma");
  positive(cv, "cv");
  positive(kappa, "kappa");
  if (!(T_top <= T0 && T0 <= T_bottom))
    fail(ErrorKind::InvalidArgument, "wall temperatures must satisfy T_top <= T0 <= T_bottom");
  if (!std::isfinite(beta) || !std::isfinite(u_in) || !std::isfinite(p_out) || !std::isfinite(B0) ||
      !std::isfinite(g[0]) || !std::isfinite(g[1]))
    fail(ErrorKind::InvalidArgument, "non-finite physical parameter");
}

Geometry Geometry::stepped_channel() {
  Geometry geo;
  geo.steps = {{0.05, 0.06, StepWall::Top}, {0.09, 0.10, StepWall::Bottom}, {0.13, 0.14, StepWall::Top}};
  return geo;
}

Geometry Geometry::plain_channel(double L, double H) {
  Geometry geo;
  geo.L = L;
  geo.H = H;
  geo.steps.clear();
  return geo;
}

void Geometry::validate() const {
  if (!(L > 0.0) || !(H > 0.0)) fail(ErrorKind::Geometry, "channel length and height must be positive");
  if (steps.empty()) return;
  if (!(H1 > 0.0 && H1 < H) || !(H2 > 0.0 && H2 < H))
    fail(ErrorKind::Geometry, "step heights must lie in (0, H)");
  int top = 0;
  int bottom = 0;
  for (const auto& s : steps) {
    if (!(s.x_start > 0.0 && s.x_end < L && s.x_start < s.x_end))
      fail(ErrorKind::Geometry, "step span must lie inside (0, L) with x_start < x_end");
    (s.wall == StepWall::Top ? top : bottom)++;
  }
  if (top != 2 || bottom != 1)
    fail(ErrorKind::Geometry, "stepped channel needs exactly two upper steps and one lower step");
  auto sorted = steps;
  std::sort(sorted.begin(), sorted.end(),
            [](const StepSpan& a, const StepSpan& b) { return a.x_start < b.x_start; });
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i].x_start < sorted[i - 1].x_end) fail(ErrorKind::Geometry, "step spans overlap");
}

namespace {

// Per-cell owner of a solid block: 0 fluid, 1 upper step, 2 lower step.
std::vector<std::uint8_t> solid_owner(const Geometry& geo, int nx, int ny, double dx, double dy) {
  std::vector<std::uint8_t> owner(static_cast<std::size_t>(nx) * ny, 0);
  for (const auto& s : geo.steps) {
    int columns = 0;
    int rows = 0;
    for (int i = 0; i < nx; ++i) {
      const double x = (i + 0.5) * dx;
      if (x < s.x_start || x > s.x_end) continue;
      ++columns;
      int col_rows = 0;
      for (int j = 0; j < ny; ++j) {
        const double y = (j + 0.5) * dy;
        const bool inside = s.wall == StepWall::Top ? y >= geo.H - geo.H1 : y <= geo.H2;
        if (!inside) continue;
        owner[i + nx * j] = s.wall == StepWall::Top ? 1 : 2;
        ++col_rows;
      }
      rows = col_rows;
    }
    if (columns == 0 || rows < 2) {
      std::ostringstream msg;
      msg << "step [" << s.x_start << ", " << s.x_end << "] resolves to " << columns
          << " column(s) x " << rows << " row(s); need >= 1 column and >= 2 rows";
      fail(ErrorKind::Geometry, msg.str());
    }
  }
  return owner;
}

}  // namespace

Grid build_grid(const Geometry& geometry, int nx, int ny) {
  geometry.validate();
  if (nx < 8 || ny < 8) fail(ErrorKind::Geometry, "grid needs nx, ny >= 8");
  Grid g;
  g.nx = nx;
  g.ny = ny;
  g.L = geometry.L;
  g.H = geometry.H;
  g.dx = geometry.L / nx;
  g.dy = geometry.H / ny;
  for (const auto& s : geometry.steps)
    if (s.x_end - s.x_start < g.dx)
      fail(ErrorKind::Geometry, "step span narrower than one cell");

  const auto owner = solid_owner(geometry, nx, ny, g.dx, g.dy);
  for (int i = 0; i < nx; ++i) {
    int open = 0;
    for (int j = 0; j < ny; ++j) open += owner[i + nx * j] == 0;
    if (open < 2) fail(ErrorKind::Geometry, "steps close the channel (fewer than 2 open rows)");
  }

  g.fluid_index.assign(static_cast<std::size_t>(nx) * ny, -1);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      if (owner[i + nx * j] == 0) {
        g.fluid_index[i + nx * j] = static_cast<int>(g.cell_ij.size());
        g.cell_ij.push_back({i, j});
      }

  const int n = g.fluid_count();
  g.neighbor.resize(n);
  g.face.resize(n);
  constexpr std::array<std::array<int, 2>, 4> offset = {{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  for (int k = 0; k < n; ++k) {
    const auto [i, j] = g.cell_ij[k];
    for (Dir d : kDirs) {
      const int di = static_cast<int>(d);
      const int ni = i + offset[di][0];
      const int nj = j + offset[di][1];
      auto& kind = g.face[k][di];
      g.neighbor[k][di] = -1;
      if (ni < 0) {
        kind = FaceKind::Inlet;
      } else if (ni >= nx) {
        kind = FaceKind::Outlet;
      } else if (nj < 0 || nj >= ny) {
        kind = FaceKind::WallOther;
      } else if (owner[ni + nx * nj] == 1) {
        kind = FaceKind::WallTopStep;
      } else if (owner[ni + nx * nj] == 2) {
        kind = FaceKind::WallBottomStep;
      } else {
        kind = FaceKind::Interior;
        g.neighbor[k][di] = g.fluid_index[ni + nx * nj];
      }
    }
  }

  // Vertex classification for the flux function.
  const int nv = (nx + 1) * (ny + 1);
  g.vertex_active.assign(nv, 0);
  std::vector<std::uint8_t> dirichlet(nv, 0);
  for (int k = 0; k < n; ++k) {
    const auto [i, j] = g.cell_ij[k];
    const int sw = g.vertex_id(i, j), se = g.vertex_id(i + 1, j);
    const int nw = g.vertex_id(i, j + 1), ne = g.vertex_id(i + 1, j + 1);
    g.vertex_active[sw] = g.vertex_active[se] = g.vertex_active[nw] = g.vertex_active[ne] = 1;
    const std::array<std::array<int, 2>, 4> ends = {{{se, ne}, {sw, nw}, {nw, ne}, {sw, se}}};
    for (Dir d : kDirs)
      if (is_wall(g.face[k][static_cast<int>(d)]))
        for (int v : ends[static_cast<int>(d)]) dirichlet[v] = 1;
  }
  g.vertex_unknown.assign(nv, -1);
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) {
      const int v = g.vertex_id(i, j);
      if (g.vertex_active[v] && !dirichlet[v]) {
        g.vertex_unknown[v] = static_cast<int>(g.unknown_ij.size());
        g.unknown_ij.push_back({i, j});
      }
    }
  return g;
}

}  // namespace mhdshred::solver
