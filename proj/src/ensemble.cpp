#include "mhdshred/ensemble.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace mhdshred::ensemble {

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv(kWorkersEnv)) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      fail(ErrorKind::Config, std::string(kWorkersEnv) + " must be a positive integer, got '" + env + "'");
    return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const auto count = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  if (count == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex guard;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(guard);
        if (!first) first = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < count; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

std::uint64_t member_seed(std::uint64_t master_seed, std::size_t index) {
  return mix_seed(master_seed, 0x5E0000 + index);
}

std::vector<MemberOutcome> train_ensemble(
    const EnsembleInputs& inputs, const std::vector<dataset::SensorConfig>& configs,
    const shred::TrainConfig& cfg, int workers,
    const std::function<void(const MemberOutcome&)>& on_done) {
  if (configs.empty()) fail(ErrorKind::InvalidArgument, "ensemble needs at least one sensor configuration");
  std::vector<MemberOutcome> out(configs.size());
  std::mutex report;
  parallel_for(configs.size(), workers, [&](std::size_t i) {
    MemberOutcome& m = out[i];
    m.index = i;
    m.config = configs[i];
    m.seed = member_seed(cfg.seed, i);
    try {
      shred::ShredModel model = inputs.prototype;
      model.sensors = configs[i];
      model.train_config = cfg;
      model.train_config.seed = m.seed;
      model.net.initialize(m.seed);
      const int lag = model.lag;
      const auto train_seq = dataset::build_lagged_sequences(
          dataset::extract_measurements(inputs.train_temperature, configs[i]), inputs.block_length, lag);
      const auto val_seq = dataset::build_lagged_sequences(
          dataset::extract_measurements(inputs.val_temperature, configs[i]), inputs.block_length, lag);
      model.history = shred::train(model.net, train_seq.windows, inputs.train_targets, val_seq.windows,
                                   inputs.val_targets, model.train_config);
      m.model = std::move(model);
    } catch (const std::exception& e) {
      m.error = e.what();
    }
    if (on_done) {
      std::lock_guard lock(report);
      on_done(m);
    }
  });
  bool any = false;
  for (const auto& m : out) any = any || m.model.has_value();
  if (!any) fail(ErrorKind::Training, "every ensemble member failed; first error: " + out.front().error);
  return out;
}

EnsembleResult aggregate(const std::vector<const Matrix*>& members) {
  if (members.empty()) fail(ErrorKind::InvalidArgument, "aggregate needs at least one member");
  const Matrix& first = *members.front();
  for (const Matrix* m : members)
    if (m->rows() != first.rows() || m->cols() != first.cols())
      fail(ErrorKind::ShapeMismatch, "ensemble members differ in shape");
  EnsembleResult r;
  r.members = members.size();
  const double n = static_cast<double>(members.size());
  r.mean = Matrix::Zero(first.rows(), first.cols());
  for (const Matrix* m : members) r.mean += *m;
  r.mean /= n;
  Matrix var = Matrix::Zero(first.rows(), first.cols());
  for (const Matrix* m : members) var.array() += (m->array() - r.mean.array()).square();
  r.std = (var / n).cwiseSqrt();
  return r;
}

}  // namespace mhdshred::ensemble
