#include "mhdshred/pipeline.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <sys/wait.h>

using namespace mhdshred;
using namespace mhdshred::pipeline;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("mhdshred_pipe_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

fs::path smoke_ini() { return fs::path(MHDSHRED_SOURCE_DIR) / "configs" / "smoke.ini"; }

Context context(const fs::path& out, PipelineConfig cfg) {
  Context ctx;
  ctx.out = out;
  ctx.config = std::move(cfg);
  ctx.workers = 2;
  return ctx;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Acceptance;
}

/// Exit status of the command-line tool, or -1 when it is unavailable.
int cli(const std::string& args) {
  const char* exe = std::getenv("MHDSHRED_CLI");
  if (!exe) return -1;
  const std::string cmd = std::string("\"") + exe + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("configuration: defaults, round trip, rejection of unknown keys") {
  const PipelineConfig def;
  CHECK(def.nx == 120);
  CHECK(def.ny == 24);
  CHECK(def.b0_values.size() == 19);
  CHECK(def.lag == 20);
  CHECK(def.members == 30);
  CHECK(def.arch.hidden == 64);
  CHECK(def.arch.decoder == std::vector<int>{350, 400});
  CHECK_NOTHROW(def.validate());

  const PipelineConfig smoke = load_config(smoke_ini());
  CHECK(smoke.nx == 40);
  CHECK(smoke.b0_values.size() == 5);
  CHECK(smoke.arch.decoder == std::vector<int>{32, 32});
  CHECK(smoke.physics.rho0 == def.physics.rho0);
  const std::string text = smoke.to_manifest().serialize();
  CHECK(PipelineConfig::from_manifest(io::Manifest::parse(text)).to_manifest().serialize() == text);

  CHECK(kind_of([] { PipelineConfig::from_manifest(io::Manifest::parse("[grid]\nnz = 3\n")); }) == ErrorKind::Config);
  CHECK(kind_of([] { PipelineConfig::from_manifest(io::Manifest::parse("[gird]\nnx = 3\n")); }) == ErrorKind::Config);
  CHECK(kind_of([] { PipelineConfig::from_manifest(io::Manifest::parse("[grid]\nnx = three\n")); }) ==
        ErrorKind::Config);
  CHECK(kind_of([] { PipelineConfig::from_manifest(io::Manifest::parse("[dataset]\nlag = 0\n")).validate(); }) ==
        ErrorKind::Config);
  const auto steps = PipelineConfig::from_manifest(io::Manifest::parse("[geometry]\nsteps = none\n"));
  CHECK(steps.geometry.steps.empty());
}

TEST_CASE("shipped configurations") {
  const fs::path dir = fs::path(MHDSHRED_SOURCE_DIR) / "configs";
  CHECK(load_config(dir / "default.ini").to_manifest().serialize() == PipelineConfig{}.to_manifest().serialize());
  const PipelineConfig desk = load_config(dir / "desk.ini");
  CHECK(desk.b0_values.size() == 9);
  CHECK(desk.members == 10);
  CHECK(dataset::assign_split(desk.b0_values, desk.split, desk.test_values).train.size() == 7);
}

TEST_CASE("seed streams are distinct") {
  CHECK(trajectory_seed(1, 0.06) != trajectory_seed(1, 0.3));
  CHECK(trajectory_seed(1, 0.06) == trajectory_seed(1, 0.06));
  CHECK(sensor_seed(1) != training_seed(1));
  CHECK(sensor_seed(1) != sensor_seed(2));
}

TEST_CASE("staged workflow on the smoke configuration") {
  TempDir dir;
  const Context ctx = context(dir.path / "run", load_config(smoke_ini()));

  const auto sweep = run_sweep(ctx);
  CHECK(sweep.computed.size() == 5);
  CHECK(sweep.failed.empty());
  const auto again = run_sweep(ctx);
  CHECK(again.computed.empty());
  CHECK(again.skipped.size() == 5);
  // A damaged trajectory is recomputed, and only that one.
  const double b0 = ctx.config.b0_values[2];
  {
    std::ofstream(ctx.out / "snapshots" / (snapshot_stem(b0) + "_u.shrd"), std::ios::app) << "junk";
  }
  const auto repair = run_sweep(ctx);
  CHECK(repair.computed == std::vector<double>{b0});
  CHECK(repair.skipped.size() == 4);
  io::Manifest::read(ctx.out / "snapshots" / "manifest.ini").verify_files(ctx.out / "snapshots");

  const auto traj = load_trajectory(ctx, b0);
  CHECK(traj.T.cols() == 20);
  CHECK(traj.T.rows() == ctx.grid().fluid_count());

  const auto comp = run_compress(ctx);
  CHECK(comp.split.test.size() == 1);
  for (int k = 0; k < 3; ++k) {
    CHECK(comp.ranks[k] >= 1);
    CHECK(comp.discarded[k] < ctx.config.energy_threshold);
  }
  const auto first = hash_tree(ctx.out / "reduction");
  run_compress(ctx);
  CHECK(hash_tree(ctx.out / "reduction") == first);

  const auto tr = run_train(ctx);
  CHECK(tr.members.size() == 3);
  for (const auto& m : tr.members) CHECK(m.model.has_value());

  const auto ev = run_evaluate(ctx);
  REQUIRE(ev.parameters.size() == 1);
  for (const auto& f : ev.parameters[0].fields) {
    CHECK(f.snapshots_checked > 0);
    CHECK(f.lower_bound_violations == 0);
    CHECK(std::isfinite(f.error.over_time.mean));
  }
  CHECK(fs::exists(ctx.out / "reports" / "summary.csv"));
  const std::string report = run_report(ctx);
  CHECK(report.find("## Snapshots") != std::string::npos);
  CHECK(report.find("## Reconstruction error") != std::string::npos);
  CHECK(fs::exists(ctx.out / "report.md"));

  // Tampered basis: every downstream read refuses it.
  {
    std::ofstream(ctx.out / "reduction" / "basis_T.shrd", std::ios::app) << "x";
  }
  CHECK(kind_of([&] { load_artifacts(ctx); }) == ErrorKind::Integrity);
}

TEST_CASE("one-member ensemble has zero spread") {
  TempDir dir;
  PipelineConfig cfg = load_config(smoke_ini());
  cfg.members = 1;
  cfg.train.max_epochs = 3;
  const Context ctx = context(dir.path, cfg);
  run_sweep(ctx);
  run_compress(ctx);
  run_train(ctx);
  const auto recs = run_reconstruct(ctx);
  REQUIRE(recs.size() == 1);
  for (const auto& a : recs[0].aggregate) CHECK(a.std.cwiseAbs().maxCoeff() == 0.0);
  CHECK(recs[0].pressure.std.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("CSV import reproduces solver snapshots") {
  TempDir dir;
  PipelineConfig cfg = load_config(smoke_ini());
  cfg.b0_values = {0.1};
  const Context sim = context(dir.path / "sim", cfg);
  run_sweep(sim);
  const auto t = load_trajectory(sim, 0.1);
  const fs::path csv = dir.path / "csv";
  fs::create_directories(csv);
  io::atomic_write(csv / "T.csv", io::csv_matrix(t.T));
  io::atomic_write(csv / "u.csv", io::csv_matrix(t.u));
  io::atomic_write(csv / "p.csv", io::csv_matrix(t.p));
  const Context imp = context(dir.path / "imp", cfg);
  import_csv(imp, 0.1, t.save_dt, csv / "T.csv", csv / "u.csv", csv / "p.csv");
  const auto back = load_trajectory(imp, 0.1);
  CHECK(back.T == t.T);
  CHECK(back.u == t.u);
  CHECK(back.p == t.p);

  io::atomic_write(csv / "short.csv", io::csv_matrix(t.T.topRows(5)));
  CHECK(kind_of([&] { import_csv(imp, 0.2, t.save_dt, csv / "short.csv", csv / "u.csv", csv / "p.csv"); }) ==
        ErrorKind::ShapeMismatch);
}

TEST_CASE("command line: exit codes") {
  if (!std::getenv("MHDSHRED_CLI")) {
    MESSAGE("MHDSHRED_CLI not set; command-line checks skipped");
    return;
  }
  TempDir dir;
  const std::string out = "--out \"" + (dir.path / "run").string() + "\" ";
  const std::string cfg = "--config \"" + smoke_ini().string() + "\" ";
  CHECK(cli("") == 2);
  CHECK(cli("frobnicate") == 2);
  CHECK(cli(out + "--workers 0 sweep") == 2);
  ::setenv("MHDSHRED_WORKERS", "abc", 1);
  CHECK(cli(out + "report") == 2);
  ::unsetenv("MHDSHRED_WORKERS");
  CHECK(cli(out + "compress") != 0);  // nothing to compress yet

  CHECK(cli(cfg + out + "sweep") == 0);
  CHECK(cli(out + "compress") == 0);  // config taken from the output directory
  CHECK(cli(out + "train") == 0);
  CHECK(cli(out + "reconstruct") == 0);
  CHECK(cli(out + "report") == 0);

  const fs::path strict = dir.path / "strict.ini";
  {
    std::ofstream s(strict);
    s << io::read_file(smoke_ini()) << "\n[acceptance]\nmax_error_T = 1e-9\n";
  }
  CHECK(cli("--config \"" + strict.string() + "\" " + out + "evaluate") == 5);
  {
    std::ofstream(dir.path / "run" / "reduction" / "basis_p.shrd", std::ios::app) << "x";
  }
  CHECK(cli(out + "evaluate") == 4);
}

}  // TEST_SUITE
