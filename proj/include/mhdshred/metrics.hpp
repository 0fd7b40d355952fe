#pragma once

#include "mhdshred/common.hpp"

#include <string>
#include <vector>

/// Reconstruction error measures and their summaries.
namespace mhdshred::metrics {

/// |truth - prediction|_2 / |truth|_2 over a flattened snapshot. Throws on a
/// zero-norm truth.
double relative_l2_error(const Eigen::Ref<const Vector>& truth,
                         const Eigen::Ref<const Vector>& prediction);

/// Per-column relative error of two cells x N_t matrices.
Vector relative_l2_series(const Matrix& truth, const Matrix& prediction);

/// Mean over fluid cells of a scalar snapshot (uniform cells, so the plain
/// arithmetic mean).
double spatial_average(const Eigen::Ref<const Vector>& field);
/// Mean velocity magnitude; rows hold all x-components then all y-components.
double spatial_average_magnitude(const Eigen::Ref<const Vector>& velocity);

/// Per-column spatial averages; velocity uses the magnitude.
Vector spatial_average_series(const Matrix& field, bool is_velocity);

/// Velocity magnitude per cell and instant from stacked components.
Matrix velocity_magnitude(const Matrix& velocity);

struct SeriesStats {
  double mean = 0.0;
  double std = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
};

SeriesStats summarize(const Eigen::Ref<const Vector>& series);

/// Time statistics of the ensemble-mean error plus per-member time means and
/// their spread across members.
struct ErrorReport {
  Vector series;                 // error of the ensemble-mean reconstruction
  SeriesStats over_time;
  Vector member_time_means;      // empty when no members were supplied
  SeriesStats over_members;
  /// std / mean of the member time means; 0 when the mean is 0.
  double member_cv = 0.0;
};

ErrorReport summarize_errors(const Vector& ensemble_series, const std::vector<Vector>& member_series);

}  // namespace mhdshred::metrics
