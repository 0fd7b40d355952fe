#include "mhdshred/shred.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace mhdshred::shred {

namespace {

using Array = Eigen::ArrayXXd;

Array sigmoid(const Array& a) { return 1.0 / (1.0 + (-a).exp()); }

}  // namespace

void ShredArch::validate() const {
  if (inputs < 1 || hidden < 1 || layers < 1 || outputs < 1)
    fail(ErrorKind::InvalidArgument, "network widths must be positive");
  for (int w : decoder)
    if (w < 1) fail(ErrorKind::InvalidArgument, "decoder widths must be positive");
}

ParamLayout::ParamLayout(const ShredArch& arch) {
  arch.validate();
  auto add = [this](std::vector<TensorSpan>& into, std::string name, Eigen::Index r, Eigen::Index c) {
    into.push_back({std::move(name), total, r, c});
    total += r * c;
  };
  const int H = arch.hidden;
  for (int l = 0; l < arch.layers; ++l) {
    const std::string tag = "lstm" + std::to_string(l);
    add(w_ih, tag + ".w_ih", 4 * H, l == 0 ? arch.inputs : H);
    add(w_hh, tag + ".w_hh", 4 * H, H);
    add(b, tag + ".b", 4 * H, 1);
  }
  int in = H;
  std::vector<int> widths = arch.decoder;
  widths.push_back(arch.outputs);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string tag = "dec" + std::to_string(i);
    add(dec_w, tag + ".w", widths[i], in);
    add(dec_b, tag + ".b", widths[i], 1);
    in = widths[i];
  }
}

std::vector<const TensorSpan*> ParamLayout::all() const {
  std::vector<const TensorSpan*> out;
  for (std::size_t l = 0; l < w_ih.size(); ++l) {
    out.push_back(&w_ih[l]);
    out.push_back(&w_hh[l]);
    out.push_back(&b[l]);
  }
  for (std::size_t i = 0; i < dec_w.size(); ++i) {
    out.push_back(&dec_w[i]);
    out.push_back(&dec_b[i]);
  }
  return out;
}

ShredNet::ShredNet(ShredArch arch)
    : arch_(std::move(arch)), layout_(arch_), theta_(Vector::Zero(layout_.total)) {}

void ShredNet::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0x1417));
  theta_.setZero();
  auto fill = [&](const TensorSpan& s) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.cols));
    for (Eigen::Index k = 0; k < s.size(); ++k)
      theta_[s.offset + k] = bound * (2.0 * uniform_unit(rng) - 1.0);
  };
  for (int l = 0; l < arch_.layers; ++l) {
    fill(layout_.w_ih[l]);
    fill(layout_.w_hh[l]);
    view(theta_, layout_.b[l]).middleRows(arch_.hidden, arch_.hidden).setOnes();
  }
  for (const auto& w : layout_.dec_w) fill(w);
}

Matrix forward(const ShredNet& net, const Matrix& windows, ForwardCache* cache,
               const DropoutSpec& dropout) {
  const ShredArch& a = net.arch();
  const ParamLayout& lay = net.layout();
  const Vector& theta = net.params();
  if (windows.rows() % a.inputs != 0 || windows.rows() == 0)
    fail(ErrorKind::ShapeMismatch, "window rows must be a positive multiple of the input width");
  if (!windows.allFinite()) fail(ErrorKind::InvalidArgument, "non-finite network input");
  const Eigen::Index lag = windows.rows() / a.inputs;
  const Eigen::Index B = windows.cols();
  const int H = a.hidden;

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.batch = B;
  c.lag = lag;
  c.inputs.resize(a.layers);
  c.gates.resize(a.layers);
  c.cell.resize(a.layers);
  c.hidden.resize(a.layers);
  c.dec_in.clear();
  c.dec_mask.clear();

  // Time-major input sequence of the first layer.
  c.inputs[0].resize(a.inputs, lag * B);
  for (Eigen::Index t = 0; t < lag; ++t)
    c.inputs[0].middleCols(t * B, B) = windows.middleRows(t * a.inputs, a.inputs);

  for (int l = 0; l < a.layers; ++l) {
    if (l > 0) c.inputs[l] = c.hidden[l - 1];
    const auto Whh = view(theta, lay.w_hh[l]);
    Matrix& G = c.gates[l];
    G.noalias() = view(theta, lay.w_ih[l]) * c.inputs[l];
    G.colwise() += view(theta, lay.b[l]).col(0);
    Matrix& C = c.cell[l];
    Matrix& Hs = c.hidden[l];
    C.resize(H, lag * B);
    Hs.resize(H, lag * B);
    for (Eigen::Index t = 0; t < lag; ++t) {
      auto A = G.middleCols(t * B, B);
      if (t > 0) A.noalias() += Whh * Hs.middleCols((t - 1) * B, B);
      A.topRows(2 * H) = sigmoid(A.topRows(2 * H).array());
      A.middleRows(2 * H, H) = A.middleRows(2 * H, H).array().tanh();
      A.bottomRows(H) = sigmoid(A.bottomRows(H).array());
      auto ct = C.middleCols(t * B, B);
      ct = A.topRows(H).cwiseProduct(A.middleRows(2 * H, H));
      if (t > 0) ct += A.middleRows(H, H).cwiseProduct(C.middleCols((t - 1) * B, B));
      Hs.middleCols(t * B, B) = A.bottomRows(H).array() * ct.array().tanh();
    }
  }

  Matrix z = c.hidden.back().rightCols(B);
  const std::size_t nd = lay.dec_w.size();
  const double keep = 1.0 - dropout.rate;
  for (std::size_t i = 0;; ++i) {
    Matrix pre = view(theta, lay.dec_w[i]) * z;
    pre.colwise() += view(theta, lay.dec_b[i]).col(0);
    c.dec_in.push_back(std::move(z));
    if (i + 1 == nd) return pre;
    z = pre.cwiseMax(0.0);
    if (dropout.rate > 0.0 && dropout.rng) {
      Matrix mask(z.rows(), z.cols());
      for (Eigen::Index k = 0; k < mask.size(); ++k)
        mask.data()[k] = uniform_unit(*dropout.rng) < keep ? 1.0 / keep : 0.0;
      z = z.cwiseProduct(mask);
      c.dec_mask.push_back(std::move(mask));
    }
  }
}

double loss(const Matrix& predictions, const Matrix& targets) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols())
    fail(ErrorKind::ShapeMismatch, "loss: prediction and target shapes differ");
  if (predictions.size() == 0) return 0.0;
  return (predictions - targets).squaredNorm() / static_cast<double>(predictions.size());
}

Vector backward(const ShredNet& net, const ForwardCache& cache, const Matrix& predictions,
                const Matrix& targets) {
  const ShredArch& a = net.arch();
  const ParamLayout& lay = net.layout();
  const Vector& theta = net.params();
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols() ||
      predictions.cols() != cache.batch)
    fail(ErrorKind::ShapeMismatch, "backward: prediction, target and cache shapes differ");
  Vector grad = Vector::Zero(lay.total);
  const int H = a.hidden;
  const Eigen::Index B = cache.batch;
  const Eigen::Index lag = cache.lag;

  Matrix delta = 2.0 * (predictions - targets) / static_cast<double>(predictions.size());
  const std::size_t nd = lay.dec_w.size();
  // Gradient flowing into the hidden sequence of the current LSTM layer.
  Matrix dh_seq = Matrix::Zero(H, lag * B);
  for (std::size_t i = nd; i-- > 0;) {
    const Matrix& in = cache.dec_in[i];
    view(grad, lay.dec_w[i]).noalias() += delta * in.transpose();
    view(grad, lay.dec_b[i]) += delta.rowwise().sum();
    Matrix d_in = view(theta, lay.dec_w[i]).transpose() * delta;
    if (i == 0) {
      dh_seq.rightCols(B) = d_in;
      break;
    }
    // in = relu(pre) (* mask): in > 0 exactly where the unit was active and kept.
    if (!cache.dec_mask.empty()) d_in = d_in.cwiseProduct(cache.dec_mask[i - 1]);
    delta = (in.array() > 0.0).select(d_in, 0.0);
  }

  for (int l = a.layers - 1; l >= 0; --l) {
    const auto Whh = view(theta, lay.w_hh[l]);
    const Matrix& G = cache.gates[l];
    const Matrix& C = cache.cell[l];
    const Matrix& Hs = cache.hidden[l];
    Matrix dA(4 * H, lag * B);
    Matrix dh_next = Matrix::Zero(H, B);
    Array dc_next = Array::Zero(H, B);
    for (Eigen::Index t = lag - 1; t >= 0; --t) {
      const auto cols = [&](const Matrix& M) { return M.middleCols(t * B, B); };
      const Array gi = cols(G).topRows(H).array();
      const Array gf = cols(G).middleRows(H, H).array();
      const Array gg = cols(G).middleRows(2 * H, H).array();
      const Array go = cols(G).bottomRows(H).array();
      const Array tc = cols(C).array().tanh();
      const Array dh = cols(dh_seq).array() + dh_next.array();
      const Array dc = dc_next + dh * go * (1.0 - tc.square());
      auto d = dA.middleCols(t * B, B);
      d.topRows(H) = dc * gg * gi * (1.0 - gi);
      if (t > 0) d.middleRows(H, H) = dc * C.middleCols((t - 1) * B, B).array() * gf * (1.0 - gf);
      else d.middleRows(H, H).setZero();
      d.middleRows(2 * H, H) = dc * gi * (1.0 - gg.square());
      d.bottomRows(H) = dh * tc * go * (1.0 - go);
      dc_next = dc * gf;
      if (t > 0) dh_next.noalias() = Whh.transpose() * d;
    }
    view(grad, lay.w_ih[l]).noalias() += dA * cache.inputs[l].transpose();
    if (lag > 1)
      view(grad, lay.w_hh[l]).noalias() +=
          dA.rightCols((lag - 1) * B) * Hs.leftCols((lag - 1) * B).transpose();
    view(grad, lay.b[l]) += dA.rowwise().sum();
    if (l > 0) dh_seq.noalias() = view(theta, lay.w_ih[l]).transpose() * dA;
  }
  return grad;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || batch_size < 1 || max_epochs < 1 || patience < 1 ||
      !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0) ||
      !(dropout >= 0.0 && dropout < 1.0))
    fail(ErrorKind::InvalidArgument, "invalid training configuration");
}

void AdamState::update(Vector& theta, const Vector& grad, const TrainConfig& cfg) {
  ++step;
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  theta.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
}

std::string TrainHistory::csv() const {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss\n" << std::setprecision(17);
  for (const auto& e : epochs) out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << '\n';
  return out.str();
}

Matrix predict(const ShredNet& net, const Matrix& windows, Eigen::Index chunk) {
  Matrix out(net.arch().outputs, windows.cols());
  for (Eigen::Index s = 0; s < windows.cols(); s += chunk) {
    const Eigen::Index n = std::min(chunk, windows.cols() - s);
    out.middleCols(s, n) = forward(net, windows.middleCols(s, n));
  }
  return out;
}

TrainHistory train(ShredNet& net, const Matrix& train_windows, const Matrix& train_targets,
                   const Matrix& val_windows, const Matrix& val_targets, const TrainConfig& cfg) {
  cfg.validate();
  const ShredArch& a = net.arch();
  if (train_windows.cols() != train_targets.cols() || val_windows.cols() != val_targets.cols() ||
      train_targets.rows() != a.outputs || val_targets.rows() != a.outputs ||
      train_windows.rows() != val_windows.rows())
    fail(ErrorKind::ShapeMismatch, "training data shapes do not match the network");
  if (train_windows.cols() == 0 || val_windows.cols() == 0)
    fail(ErrorKind::InvalidArgument, "training and validation sets must be non-empty");

  std::mt19937_64 order_rng(mix_seed(cfg.seed, 0xB47C));
  std::mt19937_64 dropout_rng(mix_seed(cfg.seed, 0xD209));
  const DropoutSpec drop{cfg.dropout, &dropout_rng};
  const Eigen::Index n = train_windows.cols();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);

  AdamState adam(net.params().size());
  Vector best = net.params();
  TrainHistory history;
  history.best_val_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  ForwardCache cache;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (Eigen::Index i = n - 1; i > 0; --i)
      std::swap(order[i], order[uniform_index(order_rng, static_cast<std::uint64_t>(i + 1))]);
    double sum = 0.0;
    int batch_no = 0;
    for (Eigen::Index s = 0; s < n; s += cfg.batch_size, ++batch_no) {
      const Eigen::Index nb = std::min<Eigen::Index>(cfg.batch_size, n - s);
      const std::vector<Eigen::Index> idx(order.begin() + s, order.begin() + s + nb);
      const Matrix xb = train_windows(Eigen::all, idx);
      const Matrix tb = train_targets(Eigen::all, idx);
      const Matrix yb = forward(net, xb, &cache, drop);
      const double l = loss(yb, tb);
      if (!std::isfinite(l))
        fail(ErrorKind::Training, "non-finite training loss at epoch " + std::to_string(epoch) +
                                      ", batch " + std::to_string(batch_no));
      adam.update(net.params(), backward(net, cache, yb, tb), cfg);
      sum += l * static_cast<double>(nb);
    }
    const double val = loss(predict(net, val_windows), val_targets);
    if (!std::isfinite(val))
      fail(ErrorKind::Training, "non-finite validation loss at epoch " + std::to_string(epoch));
    history.epochs.push_back({epoch, sum / static_cast<double>(n), val});
    if (val < history.best_val_loss) {
      history.best_val_loss = val;
      history.best_epoch = epoch;
      best = net.params();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      history.stopped_early = true;
      break;
    }
  }
  net.params() = best;
  return history;
}

Eigen::Index ShredModel::output_offset(FieldKind f) const {
  Eigen::Index off = 0;
  for (int k = 0; k < static_cast<int>(f); ++k) off += ranks[k];
  return off;
}

Reconstruction decode_coefficients(const ShredModel& model,
                                   const std::array<reduction::ReducedBasis, 3>& bases,
                                   const Matrix& coefficients, const HydrostaticContext& hydro) {
  const Eigen::Index total = model.ranks[0] + model.ranks[1] + model.ranks[2];
  if (coefficients.rows() != total)
    fail(ErrorKind::ShapeMismatch, "coefficient rows differ from the summed field ranks");
  Reconstruction out;
  for (FieldKind f : kAllFields) {
    const auto& basis = bases[static_cast<int>(f)];
    const int r = model.ranks[static_cast<int>(f)];
    if (basis.rank() != r)
      fail(ErrorKind::ShapeMismatch, "basis rank for field " + std::string(field_label(f)) +
                                         " differs from the model");
    out.scaled[f] = reduction::reconstruct(basis, coefficients.middleRows(model.output_offset(f), r));
    out.physical[f] = dataset::minmax_unscale(out.scaled[f], model.scaling[static_cast<int>(f)]);
  }
  const Matrix& p_prime = out.physical[FieldKind::Pressure];
  out.pressure = hydro.grid ? dataset::add_hydrostatic(p_prime, hydro.rho0, hydro.g, *hydro.grid) : p_prime;
  return out;
}

Reconstruction predict_full_state(const ShredModel& model,
                                  const std::array<reduction::ReducedBasis, 3>& bases,
                                  const Matrix& measurements, const HydrostaticContext& hydro) {
  if (measurements.rows() != model.net.arch().inputs || measurements.cols() == 0)
    fail(ErrorKind::ShapeMismatch, "measurements must have one row per sensor and at least one instant");
  const auto seq = dataset::build_lagged_sequences(measurements, measurements.cols(), model.lag);
  return decode_coefficients(model, bases, predict(model.net, seq.windows), hydro);
}

}  // namespace mhdshred::shred
