// Command-line front end for the staged workflow.

#include "mhdshred/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace mhdshred;
namespace fs = std::filesystem;

/// Process exit codes.
enum Exit : int {
  kOk = 0,
  kOther = 1,
  kConfig = 2,
  kBlowUp = 3,
  kIntegrity = 4,
  kAcceptance = 5,
};

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::InvalidArgument: return kConfig;
    case ErrorKind::BlowUp:
    case ErrorKind::LinearSolver: return kBlowUp;
    case ErrorKind::Integrity: return kIntegrity;
    case ErrorKind::Acceptance: return kAcceptance;
    default: return kOther;
  }
}

struct Globals {
  std::string config;
  std::string out = "run";
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

pipeline::Context make_context(const Globals& g) {
  pipeline::Context ctx;
  ctx.out = g.out;
  ctx.log = &std::cerr;
  const fs::path stored = ctx.out / "config.ini";
  if (!g.config.empty()) {
    ctx.config = pipeline::load_config(g.config);
  } else if (fs::exists(stored)) {
    ctx.config = pipeline::load_config(stored);
    ctx.note("using " + stored.string());
  }
  if (g.seed) ctx.config.seed = *g.seed;
  if (g.workers) ctx.config.workers = *g.workers;
  ctx.config.validate();
  ctx.workers = ensemble::resolve_workers(ctx.config.workers);
  fs::create_directories(ctx.out);
  return ctx;
}

void print_list(const char* what, const std::vector<double>& v) {
  std::cout << what << ':';
  for (double x : v) std::cout << ' ' << io::format_double(x);
  std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stepped-channel MHD snapshots, truncated-SVD compression and SHRED ensembles"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "INI configuration file (default: <out>/config.ini if present)");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--seed", g.seed, "Master seed, overrides [run] seed");
  app.add_option("--workers", g.workers, "Worker threads, overrides [run] workers and MHDSHRED_WORKERS")
      ->check(CLI::PositiveNumber);

  std::vector<double> b0;
  std::vector<std::string> csv;
  double save_dt = 0.0;

  auto* simulate = app.add_subcommand("simulate", "Run the solver for one or more B0 values, or import CSV snapshots");
  simulate->add_option("--b0", b0, "Applied field [T]")->required();
  simulate->add_option("--from-csv", csv, "Import T, u, p CSV files (cells x instants) instead of simulating")
      ->expected(3);
  simulate->add_option("--save-dt", save_dt, "Snapshot spacing [s] of imported CSV data");

  auto* sweep = app.add_subcommand("sweep", "Run the solver over the configured B0 grid, skipping finished values");
  auto* compress = app.add_subcommand("compress", "Split, scale and compress snapshots per field");
  auto* train = app.add_subcommand("train", "Train one SHRED model per sensor triplet");
  auto* reconstruct = app.add_subcommand("reconstruct", "Reconstruct full fields from sensor readings");
  reconstruct->add_option("--b0", b0, "Values to reconstruct (default: test values)");
  auto* evaluate = app.add_subcommand("evaluate", "Reconstruct, compare with the truth and check thresholds");
  evaluate->add_option("--b0", b0, "Values to evaluate (default: test values)");
  auto* report = app.add_subcommand("report", "Summarise every stage present in the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    const pipeline::Context ctx = make_context(g);

    if (simulate->parsed()) {
      if (!csv.empty()) {
        if (b0.size() != 1) fail(ErrorKind::Config, "--from-csv imports exactly one --b0 value");
        if (!(save_dt > 0.0)) fail(ErrorKind::Config, "--from-csv needs --save-dt > 0");
        pipeline::import_csv(ctx, b0.front(), save_dt, csv[0], csv[1], csv[2]);
        return kOk;
      }
    }
    if (simulate->parsed() || sweep->parsed()) {
      const auto r = pipeline::run_sweep(ctx, sweep->parsed() ? std::vector<double>{} : b0);
      print_list("computed", r.computed);
      print_list("skipped", r.skipped);
      for (const auto& [v, why] : r.failed) std::cout << "failed: " << io::format_double(v) << ": " << why << '\n';
      return r.failed.empty() ? kOk : kBlowUp;
    }
    if (compress->parsed()) {
      const auto r = pipeline::run_compress(ctx);
      print_list("train", r.split.train);
      print_list("validation", r.split.validation);
      print_list("test", r.split.test);
      for (FieldKind f : kAllFields)
        std::cout << "rank " << field_label(f) << ": " << r.ranks[static_cast<int>(f)] << " (discarded energy "
                  << r.discarded[static_cast<int>(f)] << ")\n";
      return kOk;
    }
    if (train->parsed()) {
      const auto r = pipeline::run_train(ctx);
      std::size_t ok = 0;
      for (const auto& m : r.members) ok += m.model.has_value();
      std::cout << "trained " << ok << " of " << r.members.size() << " members, " << r.parameter_count
                << " parameters each\n";
      return kOk;
    }
    if (reconstruct->parsed()) {
      for (const auto& r : pipeline::run_reconstruct(ctx, b0))
        std::cout << "reconstructed B0 = " << io::format_double(r.b0) << " from " << r.members.size()
                  << " members\n";
      return kOk;
    }
    if (evaluate->parsed()) {
      const auto r = pipeline::run_evaluate(ctx, b0);
      for (const auto& p : r.parameters)
        for (FieldKind f : kAllFields) {
          const auto& e = p.fields[static_cast<int>(f)].error;
          std::cout << "B0 = " << io::format_double(p.b0) << " " << field_label(f) << ": error "
                    << e.over_time.mean << " +/- " << e.over_time.std << ", member cv " << e.member_cv << '\n';
        }
      for (const auto& f : r.failures) std::cout << "FAIL " << f << '\n';
      std::cout << (r.passed() ? "thresholds met\n" : "thresholds NOT met\n");
      return r.passed() ? kOk : kAcceptance;
    }
    if (report->parsed()) {
      std::cout << pipeline::run_report(ctx);
      return kOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}
