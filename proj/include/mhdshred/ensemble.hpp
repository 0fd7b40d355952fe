#pragma once

#include "mhdshred/shred.hpp"

#include <functional>
#include <optional>

/// One SHRED model per sensor triplet, and aggregation of their outputs.
namespace mhdshred::ensemble {

/// Environment variable that overrides the worker count.
inline constexpr const char* kWorkersEnv = "MHDSHRED_WORKERS";

/// requested > 0 wins; otherwise the environment override; otherwise the
/// hardware concurrency (at least 1).
int resolve_workers(int requested);

/// Calls fn(i) for every i in [0, n) on a bounded pool. Each index runs
/// exactly once; the first exception is rethrown after all workers join.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

std::uint64_t member_seed(std::uint64_t master_seed, std::size_t index);

/// Scaled training and validation corpora shared by every member.
struct EnsembleInputs {
  Matrix train_temperature;  // scaled, parameter blocks of block_length columns
  Matrix val_temperature;
  Matrix train_targets;      // stacked latent coefficients, sum(ranks) rows
  Matrix val_targets;
  Eigen::Index block_length = 0;
  /// Architecture, lag, ranks, scaling and basis hashes copied into members.
  shred::ShredModel prototype;
};

struct MemberOutcome {
  std::size_t index = 0;
  dataset::SensorConfig config;
  std::uint64_t seed = 0;
  std::optional<shred::ShredModel> model;
  std::string error;
};

/// Member i trains with seed member_seed(cfg.seed, i). Failures are recorded
/// and skipped; throws Error(Training) only when every member fails.
/// `on_done` runs serialised, in completion order.
std::vector<MemberOutcome> train_ensemble(
    const EnsembleInputs& inputs, const std::vector<dataset::SensorConfig>& configs,
    const shred::TrainConfig& cfg, int workers,
    const std::function<void(const MemberOutcome&)>& on_done = {});

struct EnsembleResult {
  Matrix mean;
  Matrix std;  // population
  std::size_t members = 0;
};

/// Pointwise mean and population standard deviation (two passes).
EnsembleResult aggregate(const std::vector<const Matrix*>& members);

}  // namespace mhdshred::ensemble
