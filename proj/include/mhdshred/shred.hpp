#pragma once

#include "mhdshred/common.hpp"
#include "mhdshred/dataset.hpp"
#include "mhdshred/reduction.hpp"

#include <string>
#include <vector>

/// Shallow recurrent decoder: stacked LSTM over lagged sensor windows, then a
/// fully connected decoder to the latent coefficients of every field.
namespace mhdshred::shred {

struct ShredArch {
  int inputs = 3;
  int hidden = 64;
  int layers = 2;
  std::vector<int> decoder{350, 400};
  int outputs = 3;  // sum of the three field ranks

  void validate() const;
};

/// Location of one parameter tensor inside the flat parameter vector.
/// Matrices are column-major.
struct TensorSpan {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Index size() const { return rows * cols; }
};

/// Flat parameter layout. Gate blocks inside each LSTM tensor are stacked in
/// the order input, forget, cell candidate, output.
struct ParamLayout {
  std::vector<TensorSpan> w_ih, w_hh, b;   // per LSTM layer
  std::vector<TensorSpan> dec_w, dec_b;    // per decoder layer, output last
  Eigen::Index total = 0;

  explicit ParamLayout(const ShredArch& arch);
  std::vector<const TensorSpan*> all() const;
};

using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

inline MatrixMap view(Vector& v, const TensorSpan& s) { return {v.data() + s.offset, s.rows, s.cols}; }
inline ConstMatrixMap view(const Vector& v, const TensorSpan& s) {
  return {v.data() + s.offset, s.rows, s.cols};
}

class ShredNet {
 public:
  explicit ShredNet(ShredArch arch);

  const ShredArch& arch() const { return arch_; }
  const ParamLayout& layout() const { return layout_; }
  Vector& params() { return theta_; }
  const Vector& params() const { return theta_; }
  Eigen::Index parameter_count() const { return layout_.total; }

  /// Uniform in +-1/sqrt(fan_in) per weight matrix, zero biases, forget-gate
  /// bias +1.
  void initialize(std::uint64_t seed);

 private:
  ShredArch arch_;
  ParamLayout layout_;
  Vector theta_;
};

/// Activations kept for the backward pass. Time-major column blocks: the
/// columns [t * batch, (t + 1) * batch) belong to lag t.
struct ForwardCache {
  Eigen::Index batch = 0;
  Eigen::Index lag = 0;
  std::vector<Matrix> inputs;  // per layer, input sequence
  std::vector<Matrix> gates;   // per layer, activated gates (4 hidden rows)
  std::vector<Matrix> cell;    // per layer
  std::vector<Matrix> hidden;  // per layer
  std::vector<Matrix> dec_in;  // input to every decoder layer
  std::vector<Matrix> dec_mask;  // scaled dropout masks of hidden layers
};

struct DropoutSpec {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;
};

/// windows: (lag * inputs) x batch, oldest lag first. Returns outputs x batch.
Matrix forward(const ShredNet& net, const Matrix& windows, ForwardCache* cache = nullptr,
               const DropoutSpec& dropout = {});

/// Mean of squared differences over every entry.
double loss(const Matrix& predictions, const Matrix& targets);

/// Gradient of loss(forward(windows), targets) with respect to the flat
/// parameters, using the activations in `cache`.
Vector backward(const ShredNet& net, const ForwardCache& cache, const Matrix& predictions,
                const Matrix& targets);

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 64;
  int max_epochs = 300;
  int patience = 20;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double dropout = 0.0;

  void validate() const;
};

struct AdamState {
  Vector m;
  Vector v;
  std::uint64_t step = 0;

  explicit AdamState(Eigen::Index n = 0) : m(Vector::Zero(n)), v(Vector::Zero(n)) {}
  void update(Vector& theta, const Vector& grad, const TrainConfig& cfg);
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;

  std::string csv() const;
};

/// Minibatch Adam with early stopping on validation loss; the network is left
/// holding the best-validation parameters.
TrainHistory train(ShredNet& net, const Matrix& train_windows, const Matrix& train_targets,
                   const Matrix& val_windows, const Matrix& val_targets, const TrainConfig& cfg);

/// Forward in chunks without caching.
Matrix predict(const ShredNet& net, const Matrix& windows, Eigen::Index chunk = 512);

/// Everything needed to turn sensor readings into physical fields, apart from
/// the bases themselves, which are referenced by content hash.
struct ShredModel {
  ShredNet net{ShredArch{}};
  int lag = 20;
  dataset::SensorConfig sensors;
  std::array<int, 3> ranks{};
  std::array<dataset::ScalingParams, 3> scaling{};
  std::array<std::string, 3> basis_hash;
  TrainConfig train_config;
  TrainHistory history;

  Eigen::Index output_offset(FieldKind f) const;
};

struct Reconstruction {
  FieldSet scaled;    // in [0, 1] units, each column inside span(U_f)
  FieldSet physical;  // T, u, p' in physical units
  Matrix pressure;    // full pressure, hydrostatic part added back
};

struct HydrostaticContext {
  double rho0 = 0.0;
  std::array<double, 2> g{0.0, 0.0};
  const solver::Grid* grid = nullptr;
};

/// `measurements` are scaled temperature readings, 3 x N_t, one trajectory.
Reconstruction predict_full_state(const ShredModel& model,
                                  const std::array<reduction::ReducedBasis, 3>& bases,
                                  const Matrix& measurements, const HydrostaticContext& hydro);

/// Same pipeline from latent coefficients (3r x N_t) straight to fields.
Reconstruction decode_coefficients(const ShredModel& model,
                                   const std::array<reduction::ReducedBasis, 3>& bases,
                                   const Matrix& coefficients, const HydrostaticContext& hydro);

}  // namespace mhdshred::shred
