#include "mhdshred/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace mhdshred::dataset {

namespace {

Vector hydrostatic_offset(double rho0, const std::array<double, 2>& g, const solver::Grid& grid) {
  const int n = grid.fluid_count();
  Vector h(n);
  for (int k = 0; k < n; ++k) h[k] = rho0 * (g[0] * grid.cell_x(k) + g[1] * grid.cell_y(k));
  return h;
}

void check_pressure_rows(const Matrix& p, const solver::Grid& grid) {
  if (p.rows() != grid.fluid_count())
    fail(ErrorKind::ShapeMismatch, "pressure rows (" + std::to_string(p.rows()) +
                                       ") differ from fluid cell count (" +
                                       std::to_string(grid.fluid_count()) + ")");
}

// Pick k of m slots spread evenly: the midpoint of each of k equal bins.
std::vector<std::size_t> evenly_spaced(std::size_t m, std::size_t k) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < k; ++j)
    out.push_back(static_cast<std::size_t>(std::floor((j + 0.5) * static_cast<double>(m) / k)));
  return out;
}

double round_significant(double v, int digits) {
  if (v == 0.0) return 0.0;
  const double scale = std::pow(10.0, digits - 1 - static_cast<int>(std::floor(std::log10(std::abs(v)))));
  return std::round(v * scale) / scale;
}

}  // namespace

Matrix remove_hydrostatic(const Matrix& p, double rho0, const std::array<double, 2>& g,
                          const solver::Grid& grid) {
  check_pressure_rows(p, grid);
  return p.colwise() - hydrostatic_offset(rho0, g, grid);
}

Matrix add_hydrostatic(const Matrix& p_prime, double rho0, const std::array<double, 2>& g,
                       const solver::Grid& grid) {
  check_pressure_rows(p_prime, grid);
  return p_prime.colwise() + hydrostatic_offset(rho0, g, grid);
}

void ScalingParams::validate() const {
  if (!std::isfinite(field_min) || !std::isfinite(field_max) || !(field_max > field_min)) {
    std::ostringstream msg;
    msg << "degenerate scaling range [" << field_min << ", " << field_max << "]";
    fail(ErrorKind::InvalidArgument, msg.str());
  }
}

ScalingParams fit_scaling(const std::vector<const Matrix*>& matrices) {
  ScalingParams sp{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Matrix* m : matrices) {
    if (m->size() == 0) continue;
    sp.field_min = std::min(sp.field_min, m->minCoeff());
    sp.field_max = std::max(sp.field_max, m->maxCoeff());
  }
  sp.validate();
  return sp;
}

Matrix minmax_scale(const Matrix& X, const ScalingParams& sp) {
  sp.validate();
  return (X.array() - sp.field_min) / (sp.field_max - sp.field_min);
}

Matrix minmax_unscale(const Matrix& X, const ScalingParams& sp) {
  sp.validate();
  return X.array() * (sp.field_max - sp.field_min) + sp.field_min;
}

StackedDataset stack_parametric(std::vector<SnapshotTrajectory> trajectories) {
  if (trajectories.empty()) fail(ErrorKind::InvalidArgument, "no trajectories to stack");
  std::sort(trajectories.begin(), trajectories.end(),
            [](const auto& a, const auto& b) { return a.param_value < b.param_value; });
  const Eigen::Index cells = trajectories.front().cells();
  const Eigen::Index nt = trajectories.front().instants();
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& tr = trajectories[i];
    tr.validate();
    if (tr.cells() != cells || tr.instants() != nt)
      fail(ErrorKind::ShapeMismatch, "trajectory B0=" + std::to_string(tr.param_value) +
                                         " does not share the cell count and instant count");
    if (i > 0 && tr.param_value == trajectories[i - 1].param_value)
      fail(ErrorKind::InvalidArgument, "duplicate parameter value " + std::to_string(tr.param_value));
  }
  StackedDataset out;
  out.instants = nt;
  const auto np = static_cast<Eigen::Index>(trajectories.size());
  for (FieldKind f : kAllFields) out.fields[f].resize(field_rows(f, cells), nt * np);
  for (Eigen::Index b = 0; b < np; ++b) {
    const auto& tr = trajectories[b];
    out.params.push_back(tr.param_value);
    for (FieldKind f : kAllFields) out.fields[f].middleCols(b * nt, nt) = tr.field(f);
  }
  return out;
}

Matrix select_blocks(const StackedDataset& data, FieldKind f, const std::vector<double>& keep) {
  std::vector<std::size_t> blocks;
  for (std::size_t i = 0; i < data.params.size(); ++i)
    if (std::find(keep.begin(), keep.end(), data.params[i]) != keep.end()) blocks.push_back(i);
  if (blocks.size() != keep.size())
    fail(ErrorKind::InvalidArgument, "requested parameter value missing from the dataset");
  const Matrix& src = data.fields[f];
  Matrix out(src.rows(), data.instants * static_cast<Eigen::Index>(blocks.size()));
  for (std::size_t j = 0; j < blocks.size(); ++j)
    out.middleCols(static_cast<Eigen::Index>(j) * data.instants, data.instants) =
        src.middleCols(data.block_start(blocks[j]), data.instants);
  return out;
}

SplitSpec assign_split(std::vector<double> values, const SplitRatios& ratios,
                       const std::vector<double>& designated_test) {
  std::sort(values.begin(), values.end());
  if (std::adjacent_find(values.begin(), values.end()) != values.end())
    fail(ErrorKind::InvalidArgument, "parameter list contains duplicates");
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9)
    fail(ErrorKind::InvalidArgument, "split ratios must be non-negative and sum to 1");

  const auto n = static_cast<long>(values.size());
  const long n_test = std::lround(ratios.test * n);
  const long n_val = std::lround(ratios.validation * n);
  const long n_train = n - n_test - n_val;
  if (n_test < 1 || n_val < 1 || n_train < 1 || n_test > n - 2) {
    std::ostringstream msg;
    msg << n << " parameter values cannot fill three non-empty splits (train " << n_train
        << ", validation " << n_val << ", test " << n_test << ") with interior test values";
    fail(ErrorKind::InvalidArgument, msg.str());
  }

  const bool use_log = values.front() > 0.0;
  auto distance = [&](double a, double b) {
    return use_log && b > 0.0 ? std::abs(std::log(a) - std::log(b)) : std::abs(a - b);
  };

  std::vector<char> is_test(values.size(), 0);
  long picked = 0;
  for (double d : designated_test) {
    if (picked == n_test) break;
    long best = -1;
    for (long i = 1; i + 1 < n; ++i)
      if (!is_test[i] && (best < 0 || distance(values[i], d) < distance(values[best], d))) best = i;
    if (best >= 0) {
      is_test[best] = 1;
      ++picked;
    }
  }
  if (picked < n_test) {
    std::vector<std::size_t> free;
    for (long i = 1; i + 1 < n; ++i)
      if (!is_test[i]) free.push_back(i);
    for (std::size_t j : evenly_spaced(free.size(), n_test - picked)) is_test[free[j]] = 1;
  }

  std::vector<std::size_t> candidates;
  for (long i = 1; i + 1 < n; ++i)
    if (!is_test[i]) candidates.push_back(i);
  if (static_cast<long>(candidates.size()) < n_val) {
    candidates.clear();
    for (long i = 0; i < n; ++i)
      if (!is_test[i]) candidates.push_back(i);
  }
  std::vector<char> is_val(values.size(), 0);
  for (std::size_t j : evenly_spaced(candidates.size(), n_val)) is_val[candidates[j]] = 1;

  SplitSpec split;
  for (long i = 0; i < n; ++i) {
    if (is_test[i]) split.test.push_back(values[i]);
    else if (is_val[i]) split.validation.push_back(values[i]);
    else split.train.push_back(values[i]);
  }
  return split;
}

std::vector<double> log_spaced(double lo, double hi, int count) {
  if (!(lo > 0.0) || !(hi > lo) || count < 2)
    fail(ErrorKind::InvalidArgument, "log_spaced needs 0 < lo < hi and count >= 2");
  std::vector<double> out(count);
  for (int k = 0; k < count; ++k)
    out[k] = lo * std::pow(hi / lo, static_cast<double>(k) / (count - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

std::vector<double> default_field_grid() {
  std::vector<double> grid;
  for (int k = 0; k < 12; ++k) grid.push_back(0.01 * std::pow(10.0, k / 12.0));
  for (int k = 0; k < 7; ++k) grid.push_back(0.1 * std::pow(5.0, k / 6.0));
  for (double forced : {0.06, 0.3}) {
    auto nearest = std::min_element(grid.begin(), grid.end(), [forced](double a, double b) {
      return std::abs(std::log(a / forced)) < std::abs(std::log(b / forced));
    });
    *nearest = forced;
  }
  for (double& v : grid) v = round_significant(v, 4);
  return grid;
}

std::vector<SensorConfig> sample_sensor_triplets(int fluid_cells, int n_configs,
                                                 std::uint64_t seed) {
  if (fluid_cells < 3) fail(ErrorKind::InvalidArgument, "sensor sampling needs at least 3 fluid cells");
  if (n_configs < 1) fail(ErrorKind::InvalidArgument, "n_configs must be positive");
  const double n = fluid_cells;
  if (n_configs > n * (n - 1) * (n - 2) / 6.0)
    fail(ErrorKind::InvalidArgument, "more sensor configurations requested than distinct triplets exist");

  std::set<std::array<int, 3>> seen;
  std::vector<SensorConfig> out;
  for (int c = 0; c < n_configs; ++c) {
    SensorConfig cfg;
    cfg.seed = mix_seed(seed, static_cast<std::uint64_t>(c));
    std::mt19937_64 rng(cfg.seed);
    for (;;) {
      for (int s = 0; s < 3; ++s) {
        int cell;
        do {
          cell = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(fluid_cells)));
        } while (std::find(cfg.cells.begin(), cfg.cells.begin() + s, cell) != cfg.cells.begin() + s);
        cfg.cells[s] = cell;
      }
      auto key = cfg.cells;
      std::sort(key.begin(), key.end());
      if (seen.insert(key).second) break;
    }
    out.push_back(cfg);
  }
  return out;
}

Matrix extract_measurements(const Matrix& temperature, const SensorConfig& config) {
  Matrix out(3, temperature.cols());
  for (int s = 0; s < 3; ++s) {
    const int cell = config.cells[s];
    if (cell < 0 || cell >= temperature.rows())
      fail(ErrorKind::InvalidArgument, "sensor cell " + std::to_string(cell) + " out of range");
    out.row(s) = temperature.row(cell);
  }
  return out;
}

LaggedSequences build_lagged_sequences(const Matrix& measurements, Eigen::Index block_length,
                                       int lag) {
  if (lag < 1) fail(ErrorKind::InvalidArgument, "lag must be at least 1");
  if (block_length < 1 || measurements.cols() % block_length != 0)
    fail(ErrorKind::ShapeMismatch, "measurement columns are not a multiple of the block length");
  const auto s = static_cast<int>(measurements.rows());
  LaggedSequences seq;
  seq.lag = lag;
  seq.sensors = s;
  seq.windows = Matrix::Zero(static_cast<Eigen::Index>(lag) * s, measurements.cols());
  for (Eigen::Index j = 0; j < measurements.cols(); ++j) {
    const Eigen::Index t = j % block_length;
    for (int k = 0; k < lag; ++k) {
      const Eigen::Index src = t - (lag - 1) + k;
      if (src >= 0) seq.windows.block(k * s, j, s, 1) = measurements.col(j - t + src);
    }
  }
  return seq;
}

}  // namespace mhdshred::dataset
