#pragma once

#include "mhdshred/common.hpp"
#include "mhdshred/snapshots.hpp"
#include "mhdshred/solver.hpp"

#include <vector>

/// From raw trajectories to the training corpus.
namespace mhdshred::dataset {

/// p' = p - rho0 g.x per cell, x measured from the inlet-bottom corner.
/// With g = (0, -g) this is p + rho0 g h, which is flat for a hydrostatic p.
Matrix remove_hydrostatic(const Matrix& p, double rho0, const std::array<double, 2>& g,
                          const solver::Grid& grid);
Matrix add_hydrostatic(const Matrix& p_prime, double rho0, const std::array<double, 2>& g,
                       const solver::Grid& grid);

struct ScalingParams {
  double field_min = 0.0;
  double field_max = 1.0;

  void validate() const;
};

/// Global min/max over every entry of every matrix. Throws when the range
/// is degenerate.
ScalingParams fit_scaling(const std::vector<const Matrix*>& matrices);
Matrix minmax_scale(const Matrix& X, const ScalingParams& sp);
Matrix minmax_unscale(const Matrix& X, const ScalingParams& sp);

/// Column blocks per parameter in ascending order, N_t columns each.
struct StackedDataset {
  std::vector<double> params;
  Eigen::Index instants = 0;
  FieldSet fields;
  std::array<ScalingParams, 3> scaling{};

  Eigen::Index block_count() const { return static_cast<Eigen::Index>(params.size()); }
  /// Column range of the block for params[i].
  Eigen::Index block_start(std::size_t i) const { return static_cast<Eigen::Index>(i) * instants; }
};

/// Concatenate trajectories column-wise after sorting by parameter value.
/// Rejects mismatched shapes and duplicate parameter values.
StackedDataset stack_parametric(std::vector<SnapshotTrajectory> trajectories);

/// Columns of the blocks whose parameter is listed in `keep`, in the
/// dataset's block order.
Matrix select_blocks(const StackedDataset& data, FieldKind f, const std::vector<double>& keep);

struct SplitRatios {
  double train = 0.737;
  double validation = 0.158;
  double test = 0.105;
};

struct SplitSpec {
  std::vector<double> train;
  std::vector<double> validation;
  std::vector<double> test;
};

/// Counts are round(ratio * N) with the remainder absorbed by training.
/// Test values are interior. Each designated value claims the interior value
/// nearest to it in log distance (an exact match when present); remaining
/// test and validation slots are spread evenly over the interior.
SplitSpec assign_split(std::vector<double> values, const SplitRatios& ratios,
                       const std::vector<double>& designated_test = {0.06, 0.3});

/// `count` values log-spaced on [lo, hi], both ends included.
std::vector<double> log_spaced(double lo, double hi, int count);

/// 19 values on [0.01, 0.5] T: 12 log-spaced below 0.1 T, 7 from 0.1 T up,
/// with the nearest entries replaced by 0.06 and 0.3 T. Rounded to four
/// significant digits.
std::vector<double> default_field_grid();

struct SensorConfig {
  std::array<int, 3> cells{};
  std::uint64_t seed = 0;
};

/// `n_configs` distinct triplets of distinct fluid cells, uniform without
/// replacement, reproducible for a fixed seed.
std::vector<SensorConfig> sample_sensor_triplets(int fluid_cells, int n_configs,
                                                 std::uint64_t seed);

/// Rows follow the config order; columns follow the stacked temperature matrix.
Matrix extract_measurements(const Matrix& temperature, const SensorConfig& config);

/// Causal windows: column j holds readings at instants t-L+1 .. t of its
/// parameter block, oldest first, sensor-minor (row = lag * sensors + s).
/// Entries before the block start are zero.
struct LaggedSequences {
  int lag = 0;
  int sensors = 0;
  Matrix windows;
};

LaggedSequences build_lagged_sequences(const Matrix& measurements, Eigen::Index block_length,
                                       int lag);

}  // namespace mhdshred::dataset
