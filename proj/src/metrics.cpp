#include "mhdshred/metrics.hpp"

#include <cmath>

namespace mhdshred::metrics {

double relative_l2_error(const Eigen::Ref<const Vector>& truth,
                         const Eigen::Ref<const Vector>& prediction) {
  if (truth.size() != prediction.size())
    fail(ErrorKind::ShapeMismatch, "relative error: truth and prediction sizes differ");
  const double norm = truth.norm();
  if (!(norm > 0.0)) fail(ErrorKind::InvalidArgument, "relative error undefined for a zero-norm truth");
  return (truth - prediction).norm() / norm;
}

Vector relative_l2_series(const Matrix& truth, const Matrix& prediction) {
  if (truth.rows() != prediction.rows() || truth.cols() != prediction.cols())
    fail(ErrorKind::ShapeMismatch, "relative error: matrix shapes differ");
  Vector out(truth.cols());
  for (Eigen::Index t = 0; t < truth.cols(); ++t)
    out[t] = relative_l2_error(truth.col(t), prediction.col(t));
  return out;
}

double spatial_average(const Eigen::Ref<const Vector>& field) {
  if (field.size() == 0) fail(ErrorKind::InvalidArgument, "spatial average of an empty field");
  return field.mean();
}

Matrix velocity_magnitude(const Matrix& velocity) {
  if (velocity.rows() % 2 != 0) fail(ErrorKind::ShapeMismatch, "velocity rows must be even");
  const Eigen::Index n = velocity.rows() / 2;
  return (velocity.topRows(n).array().square() + velocity.bottomRows(n).array().square()).sqrt();
}

double spatial_average_magnitude(const Eigen::Ref<const Vector>& velocity) {
  return spatial_average(velocity_magnitude(velocity).col(0));
}

Vector spatial_average_series(const Matrix& field, bool is_velocity) {
  const Matrix values = is_velocity ? velocity_magnitude(field) : field;
  if (values.rows() == 0) fail(ErrorKind::InvalidArgument, "spatial average of an empty field");
  return values.colwise().mean().transpose();
}

SeriesStats summarize(const Eigen::Ref<const Vector>& series) {
  if (series.size() == 0) fail(ErrorKind::InvalidArgument, "cannot summarize an empty series");
  SeriesStats s;
  s.mean = series.mean();
  s.std = std::sqrt((series.array() - s.mean).square().mean());
  s.min = series.minCoeff();
  s.max = series.maxCoeff();
  return s;
}

ErrorReport summarize_errors(const Vector& ensemble_series, const std::vector<Vector>& member_series) {
  ErrorReport r;
  r.series = ensemble_series;
  r.over_time = summarize(ensemble_series);
  if (!member_series.empty()) {
    r.member_time_means.resize(static_cast<Eigen::Index>(member_series.size()));
    for (std::size_t m = 0; m < member_series.size(); ++m)
      r.member_time_means[static_cast<Eigen::Index>(m)] = summarize(member_series[m]).mean;
    r.over_members = summarize(r.member_time_means);
    r.member_cv = r.over_members.mean > 0.0 ? r.over_members.std / r.over_members.mean : 0.0;
  }
  return r;
}

}  // namespace mhdshred::metrics
