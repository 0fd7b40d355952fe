#include "mhdshred/dataset.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

using namespace mhdshred;
using namespace mhdshred::dataset;

namespace {

SnapshotTrajectory random_trajectory(double b0, Eigen::Index cells, Eigen::Index nt, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto fill = [&](Eigen::Index r) {
    Matrix m(r, nt);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform_unit(rng);
    return m;
  };
  SnapshotTrajectory t;
  t.param_value = b0;
  t.save_dt = 0.025;
  t.T = fill(cells);
  t.u = fill(2 * cells);
  t.p = fill(cells);
  return t;
}

template <class F>
ErrorKind error_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("hydrostatic removal: flat for a hydrostatic column, identity for g = 0, round trip") {
  const auto grid = solver::build_grid(solver::Geometry::stepped_channel(), 60, 12);
  const int n = grid.fluid_count();
  const double rho0 = 9806.0, H = 0.02;
  Matrix p(n, 2);
  for (int k = 0; k < n; ++k) p(k, 0) = p(k, 1) = 1e5 + rho0 * 9.81 * (H - grid.cell_y(k));
  const Matrix pp = remove_hydrostatic(p, rho0, {0.0, -9.81}, grid);
  CHECK(pp.maxCoeff() - pp.minCoeff() <= 1e-9 * 1e5);
  CHECK(pp(0, 0) == doctest::Approx(1e5 + rho0 * 9.81 * H).epsilon(1e-12));

  CHECK(remove_hydrostatic(p, rho0, {0.0, 0.0}, grid) == p);

  std::mt19937_64 rng(3);
  Matrix r(n, 5);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = 1e5 * uniform_unit(rng);
  const Matrix back = add_hydrostatic(remove_hydrostatic(r, rho0, {0.0, -9.81}, grid), rho0, {0.0, -9.81}, grid);
  CHECK((back - r).cwiseAbs().maxCoeff() <= 1e-15 * 2e5);

  CHECK(error_kind([&] { remove_hydrostatic(Matrix::Zero(n + 1, 1), rho0, {0, -9.81}, grid); }) ==
        ErrorKind::ShapeMismatch);
}

TEST_CASE("min-max scaling") {
  const ScalingParams sp{550.0, 650.0};
  Matrix T(1, 3);
  T << 550.0, 600.0, 650.0;
  const Matrix s = minmax_scale(T, sp);
  CHECK(s(0, 0) == 0.0);
  CHECK(s(0, 1) == 0.5);
  CHECK(s(0, 2) == 1.0);

  std::mt19937_64 rng(8);
  Matrix X(30, 20);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = 3.0 + 40.0 * uniform_unit(rng);
  const ScalingParams fit = fit_scaling({&X});
  CHECK(fit.field_min == X.minCoeff());
  CHECK(fit.field_max == X.maxCoeff());
  const Matrix Xs = minmax_scale(X, fit);
  CHECK(Xs.minCoeff() == 0.0);
  CHECK(Xs.maxCoeff() == 1.0);
  CHECK(((minmax_unscale(Xs, fit) - X).array().abs() / X.array().abs()).maxCoeff() <= 1e-12);

  const Matrix flat = Matrix::Constant(4, 4, 2.0);
  CHECK(error_kind([&] { fit_scaling({&flat}); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("parametric stacking: shapes, order, duplicates") {
  std::vector<SnapshotTrajectory> three;
  for (double b : {0.3, 0.01, 0.06}) three.push_back(random_trajectory(b, 100, 120, 17 + three.size()));
  const auto copy = three;
  const auto d = stack_parametric(three);
  CHECK(d.fields[FieldKind::Temperature].rows() == 100);
  CHECK(d.fields[FieldKind::Temperature].cols() == 360);
  CHECK(d.fields[FieldKind::Velocity].rows() == 200);
  CHECK(d.fields[FieldKind::Pressure].cols() == 360);
  CHECK(d.params == std::vector<double>{0.01, 0.06, 0.3});
  CHECK(d.fields[FieldKind::Temperature].middleCols(d.block_start(0), 120) == copy[1].T);
  CHECK(d.fields[FieldKind::Velocity].middleCols(d.block_start(2), 120) == copy[0].u);
  CHECK(select_blocks(d, FieldKind::Pressure, {0.3, 0.01}).rightCols(120) == copy[0].p);

  const auto one = stack_parametric({copy[0]});
  CHECK(one.fields[FieldKind::Temperature] == copy[0].T);

  std::vector<SnapshotTrajectory> many;
  for (int i = 0; i < 19; ++i) many.push_back(random_trajectory(0.01 * (i + 1), 2, 120, i));
  CHECK(stack_parametric(many).fields[FieldKind::Temperature].cols() == 2280);

  CHECK(error_kind([&] { stack_parametric({copy[0], copy[0]}); }) == ErrorKind::InvalidArgument);
  auto wrong = random_trajectory(0.5, 99, 120, 1);
  CHECK(error_kind([&] { stack_parametric({copy[0], wrong}); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("default grid and log spacing") {
  const auto grid = default_field_grid();
  CHECK(grid.size() == 19);
  CHECK(std::is_sorted(grid.begin(), grid.end()));
  CHECK(grid.front() == doctest::Approx(0.01));
  CHECK(grid.back() == doctest::Approx(0.5));
  CHECK(std::count(grid.begin(), grid.end(), 0.06) == 1);
  CHECK(std::count(grid.begin(), grid.end(), 0.3) == 1);
  const auto ls = log_spaced(0.01, 0.5, 9);
  CHECK(ls.size() == 9);
  for (std::size_t i = 1; i + 1 < ls.size(); ++i)
    CHECK(ls[i] * ls[i] == doctest::Approx(ls[i - 1] * ls[i + 1]).epsilon(1e-12));
}

TEST_CASE("split assignment") {
  const auto grid = default_field_grid();
  const auto s = assign_split(grid, SplitRatios{});
  CHECK(s.train.size() == 14);
  CHECK(s.validation.size() == 3);
  CHECK(s.test.size() == 2);
  CHECK(s.test == std::vector<double>{0.06, 0.3});
  std::multiset<double> all(s.train.begin(), s.train.end());
  all.insert(s.validation.begin(), s.validation.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(std::vector<double>(all.begin(), all.end()) == grid);
  for (double t : s.test) {
    CHECK(t != grid.front());
    CHECK(t != grid.back());
  }

  const auto three = assign_split({0.1, 0.2, 0.3}, {1.0 / 3, 1.0 / 3, 1.0 / 3}, {});
  CHECK(three.train.size() == 1);
  CHECK(three.validation.size() == 1);
  CHECK(three.test == std::vector<double>{0.2});

  // Designated values snap to the nearest interior value in log distance.
  const auto nine = assign_split(log_spaced(0.01, 0.5, 9), {7.0 / 9, 1.0 / 9, 1.0 / 9}, {0.06});
  CHECK(nine.test.size() == 1);
  CHECK(nine.test[0] == doctest::Approx(0.0707107).epsilon(1e-5));

  CHECK(error_kind([] { assign_split({0.1, 0.2}, SplitRatios{}); }) == ErrorKind::InvalidArgument);
  CHECK(error_kind([] { assign_split({0.1, 0.2, 0.3}, {0.5, 0.2, 0.2}); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("sensor triplets") {
  const auto a = sample_sensor_triplets(2736, 30, 42);
  CHECK(a.size() == 30);
  std::set<std::array<int, 3>> seen;
  for (const auto& c : a) {
    std::set<int> cells(c.cells.begin(), c.cells.end());
    CHECK(cells.size() == 3);
    for (int k : c.cells) CHECK((k >= 0 && k < 2736));
    auto sorted = c.cells;
    std::sort(sorted.begin(), sorted.end());
    seen.insert(sorted);
  }
  CHECK(seen.size() == 30);
  const auto b = sample_sensor_triplets(2736, 30, 42);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].cells == b[i].cells);
  const auto other = sample_sensor_triplets(2736, 30, 43);
  CHECK(other[0].cells != a[0].cells);

  const auto unique = sample_sensor_triplets(3, 1, 5);
  auto cells = unique[0].cells;
  std::sort(cells.begin(), cells.end());
  CHECK(cells == std::array<int, 3>{0, 1, 2});
  CHECK(error_kind([] { sample_sensor_triplets(3, 2, 5); }) == ErrorKind::InvalidArgument);
  CHECK(sample_sensor_triplets(5, 10, 1).size() == 10);  // all C(5,3) triplets
}

TEST_CASE("measurement extraction") {
  const Matrix c = Matrix::Constant(50, 40, 612.5);
  SensorConfig cfg{{3, 17, 49}, 0};
  const Matrix m = extract_measurements(c, cfg);
  CHECK(m.rows() == 3);
  CHECK(m.cols() == 40);
  CHECK((m.array() == 612.5).all());

  std::mt19937_64 rng(2);
  Matrix X(50, 40);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = uniform_unit(rng);
  const Matrix r = extract_measurements(X, cfg);
  for (int s = 0; s < 3; ++s)
    for (int t = 0; t < 40; ++t) CHECK(r(s, t) == X(cfg.cells[s], t));
  cfg.cells[1] = 50;
  CHECK(error_kind([&] { extract_measurements(X, cfg); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("lagged windows: padding rule and block boundaries") {
  Matrix abc(1, 3);
  abc << 1.0, 2.0, 3.0;
  const auto w = build_lagged_sequences(abc, 3, 2);
  Matrix expect(2, 3);
  expect << 0.0, 1.0, 2.0,
            1.0, 2.0, 3.0;
  CHECK(w.windows == expect);
  CHECK(build_lagged_sequences(abc, 3, 1).windows == abc);

  // Two parameter blocks of 120 instants, three sensors, lag 20.
  std::mt19937_64 rng(4);
  Matrix m(3, 240);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 1.0 + uniform_unit(rng);
  const auto seq = build_lagged_sequences(m, 120, 20);
  CHECK(seq.windows.rows() == 60);
  CHECK(seq.windows.cols() == 240);
  for (Eigen::Index j = 0; j < 240; ++j) {
    const Eigen::Index block = j / 120, t = j % 120;
    for (int k = 0; k < 20; ++k) {
      const Eigen::Index src = t - 19 + k;
      for (int s = 0; s < 3; ++s) {
        const double expected = src >= 0 ? m(s, block * 120 + src) : 0.0;
        REQUIRE(seq.windows(k * 3 + s, j) == expected);
      }
    }
  }
}

}  // TEST_SUITE
