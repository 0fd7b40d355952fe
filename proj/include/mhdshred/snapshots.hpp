#pragma once

#include "mhdshred/common.hpp"

namespace mhdshred {

/// Saved states of one parametric run. Columns are saved instants; velocity
/// rows hold all x-components followed by all y-components.
struct SnapshotTrajectory {
  double param_value = 0.0;  // B0 [T]
  double save_dt = 0.0;      // [s]
  Matrix T;                  // cells x N_t
  Matrix u;                  // 2 cells x N_t
  Matrix p;                  // cells x N_t

  Eigen::Index cells() const { return T.rows(); }
  Eigen::Index instants() const { return T.cols(); }

  const Matrix& field(FieldKind f) const;
  Matrix& field(FieldKind f);

  /// Throws ShapeMismatch unless every field shares N_t and the cell count.
  void validate() const;
};

/// One matrix per field, indexed by FieldKind.
struct FieldSet {
  std::array<Matrix, 3> m;

  Matrix& operator[](FieldKind f) { return m[static_cast<int>(f)]; }
  const Matrix& operator[](FieldKind f) const { return m[static_cast<int>(f)]; }
};

inline Eigen::Index field_rows(FieldKind f, Eigen::Index cells) {
  return f == FieldKind::Velocity ? 2 * cells : cells;
}

}  // namespace mhdshred
