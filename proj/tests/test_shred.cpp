#include "mhdshred/shred.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mhdshred;
using namespace mhdshred::shred;

namespace {

Matrix uniform_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = lo + (hi - lo) * uniform_unit(rng);
  return m;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Sample-by-sample recurrence written directly from the LSTM equations.
Vector oracle_forward(const ShredNet& net, const Vector& window) {
  const auto& a = net.arch();
  const auto& L = net.layout();
  const Vector& th = net.params();
  const int H = a.hidden;
  const int lag = static_cast<int>(window.size()) / a.inputs;
  std::vector<Vector> seq;
  for (int t = 0; t < lag; ++t) seq.push_back(window.segment(t * a.inputs, a.inputs));
  for (int l = 0; l < a.layers; ++l) {
    const Matrix Wi = view(th, L.w_ih[l]), Wh = view(th, L.w_hh[l]);
    const Vector b = view(th, L.b[l]).col(0);
    Vector h = Vector::Zero(H), c = Vector::Zero(H);
    std::vector<Vector> out;
    for (int t = 0; t < lag; ++t) {
      const Vector z = Wi * seq[t] + Wh * h + b;
      Vector i(H), f(H), g(H), o(H);
      for (int u = 0; u < H; ++u) {
        i[u] = logistic(z[u]);
        f[u] = logistic(z[H + u]);
        g[u] = std::tanh(z[2 * H + u]);
        o[u] = logistic(z[3 * H + u]);
      }
      c = f.cwiseProduct(c) + i.cwiseProduct(g);
      for (int u = 0; u < H; ++u) h[u] = o[u] * std::tanh(c[u]);
      out.push_back(h);
    }
    seq = out;
  }
  Vector z = seq.back();
  for (std::size_t d = 0; d < L.dec_w.size(); ++d) {
    z = Matrix(view(th, L.dec_w[d])) * z + Vector(view(th, L.dec_b[d]).col(0));
    if (d + 1 < L.dec_w.size()) z = z.cwiseMax(0.0);
  }
  return z;
}

}  // namespace

TEST_SUITE("shred") {

TEST_CASE("layout of the full-size network") {
  ShredArch a;
  a.outputs = 60;
  const ParamLayout L(a);
  const Eigen::Index lstm = 4 * 64 * 3 + 4 * 64 * 64 + 4 * 64 + 4 * 64 * 64 + 4 * 64 * 64 + 4 * 64;
  const Eigen::Index dec = 350 * 64 + 350 + 400 * 350 + 400 + 60 * 400 + 60;
  CHECK(L.total == lstm + dec);
  CHECK(L.all().size() == 2 * 3 + 3 * 2);
}

TEST_CASE("zero network outputs zero") {
  ShredArch a;
  a.hidden = 5;
  a.decoder = {7, 6};
  a.outputs = 4;
  ShredNet net(a);
  net.params().setZero();
  std::mt19937_64 rng(1);
  ForwardCache cache;
  const Matrix y = forward(net, uniform_matrix(3 * 4, 6, rng), &cache);
  CHECK(y.cwiseAbs().maxCoeff() == 0.0);
  for (const auto& h : cache.hidden) CHECK(h.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single unit, single lag: hand computation") {
  ShredArch a;
  a.inputs = 1;
  a.hidden = 1;
  a.layers = 1;
  a.decoder = {};
  a.outputs = 1;
  ShredNet net(a);
  net.params().setZero();
  ForwardCache cache;
  Matrix x(1, 1);
  x << 0.8;
  forward(net, x, &cache);
  CHECK(cache.gates[0](0, 0) == 0.5);
  CHECK(cache.gates[0](1, 0) == 0.5);
  CHECK(cache.gates[0](2, 0) == 0.0);
  CHECK(cache.gates[0](3, 0) == 0.5);
  CHECK(cache.cell[0](0, 0) == 0.0);
  CHECK(cache.hidden[0](0, 0) == 0.0);

  // Non-zero pre-activations through the input weights.
  auto W = view(net.params(), net.layout().w_ih[0]);
  W << 1.0, -0.5, 2.0, 0.25;
  view(net.params(), net.layout().dec_w[0])(0, 0) = 3.0;
  view(net.params(), net.layout().dec_b[0])(0, 0) = -1.0;
  const double h = logistic(0.2) * std::tanh(logistic(0.8) * std::tanh(1.6));
  CHECK(forward(net, x)(0, 0) == doctest::Approx(3.0 * h - 1.0).epsilon(1e-15));
}

TEST_CASE("forward matches the step-by-step recurrence oracle") {
  ShredArch a;
  a.hidden = 4;
  a.decoder = {6, 5};
  a.outputs = 7;
  ShredNet net(a);
  net.initialize(17);
  std::mt19937_64 rng(2);
  const Matrix X = uniform_matrix(3 * 3, 9, rng);
  const Matrix Y = forward(net, X);
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    CHECK((Y.col(j) - oracle_forward(net, X.col(j))).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((predict(net, X, 4) - Y).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("initialisation: bounds and forget bias") {
  ShredArch a;
  a.hidden = 8;
  a.decoder = {10};
  a.outputs = 3;
  ShredNet net(a);
  net.initialize(5);
  const auto& L = net.layout();
  const auto Wi = view(net.params(), L.w_ih[0]);
  CHECK(Wi.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(3.0));
  const auto b = view(net.params(), L.b[1]);
  for (int u = 0; u < 8; ++u) {
    CHECK(b(u, 0) == 0.0);
    CHECK(b(8 + u, 0) == 1.0);
  }
  ShredNet again(a);
  again.initialize(5);
  CHECK(again.params() == net.params());
}

TEST_CASE("loss examples") {
  std::mt19937_64 rng(3);
  const Matrix P = uniform_matrix(4, 6, rng), T = uniform_matrix(4, 6, rng);
  CHECK(loss(P, P) == 0.0);
  Matrix z(1, 1), o(1, 1);
  z << 0.0;
  o << 1.0;
  CHECK(loss(z, o) == 1.0);
  double sum = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 6; ++j) sum += (P(i, j) - T(i, j)) * (P(i, j) - T(i, j));
  CHECK(loss(P, T) == doctest::Approx(sum / 24.0).epsilon(1e-14));
}

TEST_CASE("backward: zero loss, finite differences, duplicated batch") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    ShredArch a;
    a.hidden = 2 + static_cast<int>(uniform_index(rng, 7));  // 2..8
    a.layers = 1 + static_cast<int>(uniform_index(rng, 2));
    a.decoder = {3 + static_cast<int>(uniform_index(rng, 4)), 2 + static_cast<int>(uniform_index(rng, 4))};
    a.outputs = 1 + static_cast<int>(uniform_index(rng, 5));
    const int lag = 1 + static_cast<int>(uniform_index(rng, 5));
    const int batch = 1 + static_cast<int>(uniform_index(rng, 4));
    ShredNet net(a);
    net.initialize(100 + trial);
    // Nudge biases away from zero so rectifiers sit off their kinks.
    for (const auto& s : net.layout().dec_b) view(net.params(), s).array() += 0.05;
    const Matrix X = uniform_matrix(3 * lag, batch, rng);
    const Matrix T = uniform_matrix(a.outputs, batch, rng, -1.0, 1.0);

    ForwardCache cache;
    const Matrix Y = forward(net, X, &cache);
    CHECK(backward(net, cache, Y, Y).cwiseAbs().maxCoeff() == 0.0);
    const Vector g = backward(net, cache, Y, T);

    for (const TensorSpan* s : net.layout().all()) {
      Vector fd(s->size());
      for (Eigen::Index k = 0; k < s->size(); ++k) {
        double& w = net.params()[s->offset + k];
        const double w0 = w;
        w = w0 + 1e-5;
        const double lp = loss(forward(net, X), T);
        w = w0 - 1e-5;
        const double lm = loss(forward(net, X), T);
        w = w0;
        fd[k] = (lp - lm) / 2e-5;
      }
      const Vector an = g.segment(s->offset, s->size());
      INFO("tensor " << s->name << " trial " << trial);
      CHECK((an - fd).norm() <= 1e-4 * std::max(fd.norm(), 1e-8));
    }

    Matrix X2(X.rows(), 2 * batch), T2(T.rows(), 2 * batch);
    X2 << X, X;
    T2 << T, T;
    ForwardCache c2;
    const Matrix Y2 = forward(net, X2, &c2);
    const Vector g2 = backward(net, c2, Y2, T2);
    CHECK((g2 - g).cwiseAbs().maxCoeff() <= 1e-13 * std::max(1.0, g.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("training: constant target reaches the bias-only floor") {
  ShredArch a;
  a.hidden = 4;
  a.decoder = {8};
  a.outputs = 3;
  ShredNet net(a);
  net.initialize(1);
  std::mt19937_64 rng(6);
  const Matrix X = uniform_matrix(3 * 4, 256, rng), Xv = uniform_matrix(3 * 4, 16, rng);
  Vector c(3);
  c << 0.3, -0.2, 0.7;
  const Matrix T = c.replicate(1, 256), Tv = c.replicate(1, 16);
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 16;
  cfg.max_epochs = 200;
  cfg.patience = 200;
  cfg.seed = 3;
  const auto h = train(net, X, T, Xv, Tv, cfg);
  CHECK(h.best_val_loss <= 1e-6);
  CHECK(h.best_epoch <= 200);
}

TEST_CASE("training: linear teacher on the window sum") {
  ShredArch a;
  a.hidden = 8;
  a.decoder = {16};
  a.outputs = 2;
  ShredNet net(a);
  net.initialize(2);
  std::mt19937_64 rng(7);
  const int lag = 3;
  const Matrix X = uniform_matrix(3 * lag, 256, rng), Xv = uniform_matrix(3 * lag, 64, rng);
  Vector w(2);
  w << 0.15, -0.1;
  auto teacher = [&](const Matrix& W) {
    Matrix T(2, W.cols());
    for (Eigen::Index j = 0; j < W.cols(); ++j) T.col(j) = w * (W.col(j).sum() / (3.0 * lag));
    return T;
  };
  TrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 32;
  cfg.max_epochs = 400;
  cfg.patience = 60;
  cfg.seed = 9;
  const auto h = train(net, X, teacher(X), Xv, teacher(Xv), cfg);
  CHECK(h.best_val_loss <= 1e-4);
}

TEST_CASE("training: determinism, best parameters kept, non-finite loss reported") {
  ShredArch a;
  a.hidden = 4;
  a.decoder = {6};
  a.outputs = 2;
  std::mt19937_64 rng(8);
  const Matrix X = uniform_matrix(6, 40, rng), T = uniform_matrix(2, 40, rng);
  const Matrix Xv = uniform_matrix(6, 10, rng), Tv = uniform_matrix(2, 10, rng);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.max_epochs = 60;
  cfg.patience = 5;
  cfg.learning_rate = 0.05;  // noisy on purpose, so validation loss wanders
  cfg.seed = 21;
  ShredNet n1(a), n2(a);
  n1.initialize(4);
  n2.initialize(4);
  const auto h1 = train(n1, X, T, Xv, Tv, cfg);
  const auto h2 = train(n2, X, T, Xv, Tv, cfg);
  CHECK(h1.csv() == h2.csv());
  CHECK(n1.params() == n2.params());
  CHECK(loss(predict(n1, Xv), Tv) == h1.best_val_loss);
  if (h1.stopped_early) CHECK(h1.epochs.size() == static_cast<std::size_t>(h1.best_epoch + cfg.patience));

  Matrix bad = T;
  bad(0, 3) = std::numeric_limits<double>::infinity();
  ShredNet n3(a);
  n3.initialize(4);
  try {
    train(n3, X, bad, Xv, Tv, cfg);
    FAIL("expected a training error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Training);
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("full-state decoding: projected coefficients, zero model") {
  std::mt19937_64 rng(10);
  const int cells = 64;  // 8 x 8 plain channel
  ShredModel model;
  model.ranks = {2, 3, 2};
  ShredArch a;
  a.hidden = 3;
  a.decoder = {4};
  a.outputs = 7;
  model.net = ShredNet(a);
  model.lag = 4;
  model.scaling = {dataset::ScalingParams{550, 650}, dataset::ScalingParams{-0.1, 0.2},
                   dataset::ScalingParams{-50, 80}};
  std::array<reduction::ReducedBasis, 3> bases;
  for (FieldKind f : kAllFields) {
    const int k = static_cast<int>(f);
    const Matrix M = uniform_matrix(field_rows(f, cells), model.ranks[k], rng);
    bases[k] = {"U", Eigen::HouseholderQR<Matrix>(M).householderQ() * Matrix::Identity(M.rows(), M.cols())};
  }

  // Exact projections of a known snapshot: error equals the truncation residual.
  FieldSet truth;
  Matrix coeffs(7, 5);
  for (FieldKind f : kAllFields) {
    const int k = static_cast<int>(f);
    truth[f] = uniform_matrix(field_rows(f, cells), 5, rng);
    coeffs.middleRows(model.output_offset(f), model.ranks[k]) = reduction::project(bases[k], truth[f]);
  }
  const auto rec = decode_coefficients(model, bases, coeffs, {});
  for (FieldKind f : kAllFields) {
    const Vector err = (truth[f] - rec.scaled[f]).colwise().norm().transpose();
    const Vector res = reduction::projection_residual(bases[static_cast<int>(f)], truth[f]);
    CHECK((err - res).cwiseAbs().maxCoeff() <= 1e-12);
  }

  model.net.params().setZero();
  const auto grid = solver::build_grid(solver::Geometry::plain_channel(0.06, 0.01), 8, 8);
  const shred::HydrostaticContext hydro{1000.0, {0.0, -9.81}, &grid};
  const auto zero = predict_full_state(model, bases, uniform_matrix(3, 8, rng), hydro);
  CHECK((zero.physical[FieldKind::Temperature].array() == 550.0).all());
  CHECK((zero.physical[FieldKind::Velocity].array() == -0.1).all());
  CHECK(zero.physical[FieldKind::Pressure].cols() == 8);
  for (int c = 0; c < cells; ++c)
    CHECK(zero.pressure(c, 0) == doctest::Approx(-50.0 - 1000.0 * 9.81 * grid.cell_y(c)).epsilon(1e-14));
}

}  // TEST_SUITE
