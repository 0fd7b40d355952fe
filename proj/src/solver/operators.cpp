#include "mhdshred/solver.hpp"

namespace mhdshred::solver {

namespace {

inline int dir_index(Dir d) { return static_cast<int>(d); }

struct VectorStencil {
  const Grid& grid;
  const VectorField& f;
  const VectorGhost& ghost;

  Eigen::Vector2d at(int k) const { return {f.x[k], f.y[k]}; }
  Eigen::Vector2d nb(int k, Dir d) const {
    const int n = grid.neighbor[k][dir_index(d)];
    if (n >= 0) return at(n);
    return ghost(k, d, grid.face[k][dir_index(d)]);
  }
};

}  // namespace

VectorGhost magnetic_ghost(const Grid& grid, const VectorField& B, double B0) {
  // Walls carry the return-current sheet, so only the normal component is
  // pinned to the applied field; the tangential one is extrapolated linearly
  // from the interior.
  return [&grid, &B, B0](int k, Dir d, FaceKind kind) -> Eigen::Vector2d {
    Eigen::Vector2d ghost(B.x[k], B.y[k]);
    if (!is_wall(kind)) return ghost;
    static constexpr Dir opposite[4] = {Dir::West, Dir::East, Dir::South, Dir::North};
    const int across = grid.neighbor[k][dir_index(opposite[dir_index(d)])];
    if (d == Dir::East || d == Dir::West) {
      ghost.x() = -B.x[k];
      if (across >= 0) ghost.y() = 2.0 * B.y[k] - B.y[across];
    } else {
      ghost.y() = 2.0 * B0 - B.y[k];
      if (across >= 0) ghost.x() = 2.0 * B.x[k] - B.x[across];
    }
    return ghost;
  };
}

VectorGhost velocity_ghost(const Grid& grid, const VectorField& u, double u_in) {
  (void)grid;
  return [&u, u_in](int k, Dir, FaceKind kind) -> Eigen::Vector2d {
    const Eigen::Vector2d own(u.x[k], u.y[k]);
    switch (kind) {
      case FaceKind::Inlet: return Eigen::Vector2d(2.0 * u_in, 0.0) - own;
      case FaceKind::Outlet: return own;
      default: return -own;
    }
  };
}

Vector compute_current_density(const Grid& grid, const VectorField& B, const VectorGhost& ghost) {
  const VectorStencil s{grid, B, ghost};
  const int n = grid.fluid_count();
  Vector J(n);
  for (int k = 0; k < n; ++k) {
    const double dBy_dx = (s.nb(k, Dir::East).y() - s.nb(k, Dir::West).y()) / (2.0 * grid.dx);
    const double dBx_dy = (s.nb(k, Dir::North).x() - s.nb(k, Dir::South).x()) / (2.0 * grid.dy);
    J[k] = dBy_dx - dBx_dy;
  }
  return J;
}

VectorField compute_lorentz_force(const Grid& grid, const VectorField& B, double mu0,
                                  const VectorGhost& ghost) {
  const Vector J = compute_current_density(grid, B, ghost);
  // (J z) x (Bx, By) = J (-By, Bx)
  VectorField F;
  F.x = -(J.array() * B.y.array()) / mu0;
  F.y = (J.array() * B.x.array()) / mu0;
  return F;
}

Vector compute_joule_heating(const Grid& grid, const VectorField& B, double sigma, double mu0,
                             const VectorGhost& ghost) {
  const Vector J = compute_current_density(grid, B, ghost);
  return J.array().square() / (sigma * mu0 * mu0);
}

VectorField compute_viscous_stress_divergence(const Grid& grid, const VectorField& u, double mu,
                                              const VectorGhost& ghost) {
  const VectorStencil s{grid, u, ghost};
  const int n = grid.fluid_count();
  const double dx = grid.dx;
  const double dy = grid.dy;

  // Centred cell gradients: columns dux/dx, dux/dy, duy/dx, duy/dy.
  Eigen::Matrix<double, Eigen::Dynamic, 4> grad(n, 4);
  for (int k = 0; k < n; ++k) {
    const auto e = s.nb(k, Dir::East), w = s.nb(k, Dir::West);
    const auto no = s.nb(k, Dir::North), so = s.nb(k, Dir::South);
    grad(k, 0) = (e.x() - w.x()) / (2.0 * dx);
    grad(k, 1) = (no.x() - so.x()) / (2.0 * dy);
    grad(k, 2) = (e.y() - w.y()) / (2.0 * dx);
    grad(k, 3) = (no.y() - so.y()) / (2.0 * dy);
  }
  // Tangential derivative on a face: mean of the two adjacent cells, or the
  // owning cell's value on a boundary face.
  auto face_grad = [&](int k, Dir d, int col) {
    const int nb = grid.neighbor[k][dir_index(d)];
    return nb >= 0 ? 0.5 * (grad(k, col) + grad(nb, col)) : grad(k, col);
  };

  constexpr double two_thirds = 2.0 / 3.0;
  VectorField out{Vector(n), Vector(n)};
  for (int k = 0; k < n; ++k) {
    const Eigen::Vector2d P = s.at(k);
    const auto E = s.nb(k, Dir::East), W = s.nb(k, Dir::West);
    const auto N = s.nb(k, Dir::North), S = s.nb(k, Dir::South);

    const double dux_e = (E.x() - P.x()) / dx, dux_w = (P.x() - W.x()) / dx;
    const double duy_n = (N.y() - P.y()) / dy, duy_s = (P.y() - S.y()) / dy;
    const double dux_n = (N.x() - P.x()) / dy, dux_s = (P.x() - S.x()) / dy;
    const double duy_e = (E.y() - P.y()) / dx, duy_w = (P.y() - W.y()) / dx;

    const double txx_e = mu * (2.0 * dux_e - two_thirds * (dux_e + face_grad(k, Dir::East, 3)));
    const double txx_w = mu * (2.0 * dux_w - two_thirds * (dux_w + face_grad(k, Dir::West, 3)));
    const double txy_n = mu * (dux_n + face_grad(k, Dir::North, 2));
    const double txy_s = mu * (dux_s + face_grad(k, Dir::South, 2));
    out.x[k] = (txx_e - txx_w) / dx + (txy_n - txy_s) / dy;

    const double tyy_n = mu * (2.0 * duy_n - two_thirds * (face_grad(k, Dir::North, 0) + duy_n));
    const double tyy_s = mu * (2.0 * duy_s - two_thirds * (face_grad(k, Dir::South, 0) + duy_s));
    const double tyx_e = mu * (duy_e + face_grad(k, Dir::East, 1));
    const double tyx_w = mu * (duy_w + face_grad(k, Dir::West, 1));
    out.y[k] = (tyx_e - tyx_w) / dx + (tyy_n - tyy_s) / dy;
  }
  return out;
}

}  // namespace mhdshred::solver
