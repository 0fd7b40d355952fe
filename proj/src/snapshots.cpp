#include "mhdshred/snapshots.hpp"

#include <sstream>

namespace mhdshred {

const Matrix& SnapshotTrajectory::field(FieldKind f) const {
  switch (f) {
    case FieldKind::Temperature: return T;
    case FieldKind::Velocity: return u;
    case FieldKind::Pressure: return p;
  }
  fail(ErrorKind::InvalidArgument, "unknown field");
}

Matrix& SnapshotTrajectory::field(FieldKind f) {
  return const_cast<Matrix&>(static_cast<const SnapshotTrajectory&>(*this).field(f));
}

void SnapshotTrajectory::validate() const {
  const Eigen::Index nt = T.cols();
  const Eigen::Index cells = T.rows();
  if (u.cols() != nt || p.cols() != nt || u.rows() != 2 * cells || p.rows() != cells) {
    std::ostringstream msg;
    msg << "trajectory B0=" << param_value << " has inconsistent shapes: T " << T.rows() << "x"
        << T.cols() << ", u " << u.rows() << "x" << u.cols() << ", p " << p.rows() << "x" << p.cols();
    fail(ErrorKind::ShapeMismatch, msg.str());
  }
}

}  // namespace mhdshred
