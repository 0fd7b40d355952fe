#pragma once

#include "mhdshred/dataset.hpp"
#include "mhdshred/ensemble.hpp"
#include "mhdshred/io.hpp"
#include "mhdshred/metrics.hpp"
#include "mhdshred/reduction.hpp"
#include "mhdshred/shred.hpp"
#include "mhdshred/solver.hpp"

#include <iosfwd>
#include <map>
#include <optional>

/// Staged workflow over an output directory:
///   snapshots/  solver or imported trajectories (one file per B0 and field)
///   dataset/    scaled, stacked fields plus split and scaling
///   reduction/  per-field bases, spectra and latent coefficients
///   models/     one checkpoint per sensor triplet
///   recon/      ensemble mean and spread of reconstructed fields
///   reports/    error, trace and summary CSVs
/// Every directory carries a manifest.ini with the SHA-256 of its files.
namespace mhdshred::pipeline {

namespace fs = std::filesystem;

struct AcceptanceThresholds {
  double max_error_T = 0.10;
  double max_error_u = 0.10;
  double max_error_p = 0.10;
  double max_member_cv = 0.5;

  double max_error(FieldKind f) const;
};

struct PipelineConfig {
  solver::PhysicalParams physics;
  solver::Geometry geometry = solver::Geometry::stepped_channel();
  int nx = 120;
  int ny = 24;
  solver::SolverOptions solver;
  double t_end = 3.0;
  double save_every = 0.025;
  std::vector<double> b0_values = dataset::default_field_grid();

  dataset::SplitRatios split;
  std::vector<double> test_values{0.06, 0.3};
  int lag = 20;

  double energy_threshold = 1e-3;
  int r_min = 1;
  int fixed_rank = 0;  // > 0 overrides the energy criterion

  shred::ShredArch arch;
  shred::TrainConfig train;
  int members = 30;

  std::uint64_t seed = 0;
  int workers = 0;  // 0: environment override or hardware concurrency

  AcceptanceThresholds acceptance;

  /// Unknown sections or keys are rejected with Error(Config).
  static PipelineConfig from_manifest(const io::Manifest& m);
  io::Manifest to_manifest() const;
  void validate() const;
};

PipelineConfig load_config(const fs::path& path);

/// Seeds derived from the master seed, one stream per consumer.
std::uint64_t trajectory_seed(std::uint64_t seed, double b0);
std::uint64_t sensor_seed(std::uint64_t seed);
std::uint64_t training_seed(std::uint64_t seed);

struct Context {
  fs::path out;
  PipelineConfig config;
  int workers = 1;
  std::ostream* log = nullptr;

  void note(const std::string& line) const;
  solver::Grid grid() const;
};

std::string snapshot_stem(double b0);

// ------------------------------------------------------------------ sweep

struct SweepReport {
  std::vector<double> computed;
  std::vector<double> skipped;
  std::vector<std::pair<double, std::string>> failed;
};

/// Runs the solver for each value (the config list when empty). Values whose
/// three snapshot files already read back cleanly are skipped. Failures are
/// collected, not thrown. Rewrites snapshots/manifest.ini.
SweepReport run_sweep(const Context& ctx, const std::vector<double>& values = {});

/// Store external snapshots read from CSV (full pressure, as the solver
/// writes it) and refresh the manifest.
void import_csv(const Context& ctx, double b0, double save_dt, const fs::path& T_csv,
                const fs::path& u_csv, const fs::path& p_csv);

/// Scan snapshots/, verify each trajectory and rewrite the manifest.
io::Manifest refresh_snapshot_manifest(const Context& ctx);

SnapshotTrajectory load_trajectory(const Context& ctx, double b0);

// --------------------------------------------------------------- compress

struct CompressReport {
  dataset::SplitSpec split;
  std::array<int, 3> ranks{};
  std::array<double, 3> discarded{};
  std::array<reduction::SingularSpectrum, 3> spectra;
};

/// Builds dataset/ and reduction/ from verified snapshots.
CompressReport run_compress(const Context& ctx);

// ------------------------------------------------------------------ train

struct TrainReport {
  std::vector<ensemble::MemberOutcome> members;
  Eigen::Index parameter_count = 0;
};

TrainReport run_train(const Context& ctx);

// ------------------------------------------------------------ reconstruct

/// Everything downstream stages read back, verified against manifests.
struct LoadedArtifacts {
  io::Manifest dataset_manifest;
  io::Manifest reduction_manifest;
  io::Manifest models_manifest;
  dataset::StackedDataset scaled;  // every parameter block, scaled
  dataset::SplitSpec split;
  std::array<reduction::ReducedBasis, 3> bases;
  std::array<std::string, 3> basis_hash;
  std::vector<shred::ShredModel> models;
};

/// Throws Error(Integrity) on any hash mismatch, including models whose
/// recorded basis hashes differ from the basis files.
LoadedArtifacts load_artifacts(const Context& ctx);

struct ParameterReconstruction {
  double b0 = 0.0;
  std::vector<shred::Reconstruction> members;
  std::array<ensemble::EnsembleResult, 3> aggregate;  // physical units, p'
  ensemble::EnsembleResult pressure;                  // full pressure
};

ParameterReconstruction reconstruct_parameter(const Context& ctx, const LoadedArtifacts& art, double b0);

/// Defaults to the test values. Writes recon/ files and manifest.
std::vector<ParameterReconstruction> run_reconstruct(const Context& ctx,
                                                     const std::vector<double>& values = {});

// --------------------------------------------------------------- evaluate

struct FieldEvaluation {
  metrics::ErrorReport error;        // vector-norm error, ensemble mean and members
  metrics::SeriesStats magnitude;    // velocity only: magnitude-based error over time
  double mean_std = 0.0;             // ensemble std averaged over cells and instants
  double mean_abs_residual = 0.0;    // |truth - ensemble mean| averaged likewise
  std::size_t snapshots_checked = 0; // lower-bound comparisons made
  std::size_t lower_bound_violations = 0;
  double min_bound_margin = 0.0;     // min over checks of (error - residual)
};

struct ParameterEvaluation {
  double b0 = 0.0;
  std::array<FieldEvaluation, 3> fields;
};

struct EvaluationReport {
  std::vector<ParameterEvaluation> parameters;
  std::vector<std::string> failures;  // empty when every threshold holds

  bool passed() const { return failures.empty(); }
};

/// Evaluate on the given values (test values by default); writes reports/.
EvaluationReport run_evaluate(const Context& ctx, const std::vector<double>& values = {});

/// Evaluation of already reconstructed parameters, without file output.
ParameterEvaluation evaluate_parameter(const Context& ctx, const LoadedArtifacts& art,
                                       const ParameterReconstruction& rec);

// ----------------------------------------------------------------- report

/// Human-readable summary of every stage present under ctx.out; also written
/// to report.md.
std::string run_report(const Context& ctx);

/// SHA-256 of every regular file under `root`, keyed by relative path.
std::map<std::string, std::string> hash_tree(const fs::path& root);

}  // namespace mhdshred::pipeline
