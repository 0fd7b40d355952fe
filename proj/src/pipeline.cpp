#include "mhdshred/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <limits>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>

namespace mhdshred::pipeline {

namespace {

// ------------------------------------------------------------ text helpers

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& text, const std::string& what) {
  const std::string s = trim(text);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    fail(ErrorKind::Config, what + ": expected a number, got '" + text + "'");
  return v;
}

long parse_long(const std::string& text, const std::string& what) {
  const std::string s = trim(text);
  long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail(ErrorKind::Config, what + ": expected an integer, got '" + text + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
  const std::string s = trim(text);
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail(ErrorKind::Config, what + ": expected a non-negative integer, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& text, const std::string& what) {
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  fail(ErrorKind::Config, what + ": expected true/false, got '" + text + "'");
}

std::vector<double> parse_doubles(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) out.push_back(parse_double(item, what));
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + io::format_double(v[i]);
  return out;
}

std::vector<double> parse_b0_values(const std::string& text) {
  const std::string s = trim(text);
  if (s == "default") return dataset::default_field_grid();
  if (s.rfind("log:", 0) == 0) {
    const auto parts = split_list(s.substr(4), ':');
    if (parts.size() != 3) fail(ErrorKind::Config, "sweep.b0_values: expected log:lo:hi:count");
    try {
      return dataset::log_spaced(parse_double(parts[0], "sweep.b0_values"),
                                 parse_double(parts[1], "sweep.b0_values"),
                                 static_cast<int>(parse_long(parts[2], "sweep.b0_values")));
    } catch (const Error& e) {
      fail(ErrorKind::Config, std::string("sweep.b0_values: ") + e.what());
    }
  }
  return parse_doubles(s, "sweep.b0_values");
}

std::vector<solver::StepSpan> parse_steps(const std::string& text) {
  std::vector<solver::StepSpan> out;
  if (trim(text) == "none") return out;
  for (const auto& item : split_list(text)) {
    const auto parts = split_list(item, ':');
    if (parts.size() != 3 || (parts[2] != "top" && parts[2] != "bottom"))
      fail(ErrorKind::Config, "geometry.steps: expected x_start:x_end:top|bottom, got '" + item + "'");
    out.push_back({parse_double(parts[0], "geometry.steps"), parse_double(parts[1], "geometry.steps"),
                   parts[2] == "top" ? solver::StepWall::Top : solver::StepWall::Bottom});
  }
  return out;
}

std::string format_steps(const std::vector<solver::StepSpan>& steps) {
  if (steps.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i)
    out += (i ? ", " : "") + io::format_double(steps[i].x_start) + ":" + io::format_double(steps[i].x_end) +
           ":" + (steps[i].wall == solver::StepWall::Top ? "top" : "bottom");
  return out;
}

std::string sanitize(std::string s) {
  std::replace_if(s.begin(), s.end(), [](char c) { return c == '\n' || c == '\r'; }, ' ');
  return s;
}

std::string member_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "member_%03zu", i);
  return buf;
}

fs::path snapshot_path(const fs::path& dir, double b0, FieldKind f) {
  return dir / (snapshot_stem(b0) + "_" + std::string(field_label(f)) + ".shrd");
}

Eigen::Index expected_instants(const PipelineConfig& c) {
  return static_cast<Eigen::Index>(std::llround(c.t_end / c.save_every));
}

std::string config_text(const PipelineConfig& c) { return c.to_manifest().serialize(); }

void write_config_copy(const Context& ctx) {
  io::atomic_write(ctx.out / "config.ini", config_text(ctx.config));
}

Matrix select_columns(const Matrix& M, const std::vector<double>& params, Eigen::Index instants,
                      const std::vector<double>& keep) {
  Matrix out(M.rows(), instants * static_cast<Eigen::Index>(keep.size()));
  Eigen::Index j = 0;
  for (std::size_t b = 0; b < params.size(); ++b)
    if (std::find(keep.begin(), keep.end(), params[b]) != keep.end())
      out.middleCols(instants * j++, instants) = M.middleCols(instants * static_cast<Eigen::Index>(b), instants);
  if (j != static_cast<Eigen::Index>(keep.size()))
    fail(ErrorKind::Integrity, "split lists a parameter value absent from the dataset");
  return out;
}

std::size_t block_of(const std::vector<double>& params, double b0) {
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i] == b0 || snapshot_stem(params[i]) == snapshot_stem(b0)) return i;
  fail(ErrorKind::InvalidArgument, "B0 = " + io::format_double(b0) + " is not part of the dataset");
}

}  // namespace

// ------------------------------------------------------------------ config

double AcceptanceThresholds::max_error(FieldKind f) const {
  switch (f) {
    case FieldKind::Temperature: return max_error_T;
    case FieldKind::Velocity: return max_error_u;
    case FieldKind::Pressure: return max_error_p;
  }
  return 0.0;
}

PipelineConfig PipelineConfig::from_manifest(const io::Manifest& m) {
  PipelineConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto num = [](double& dst) -> Setter { return [&dst](const std::string& v, const std::string& w) { dst = parse_double(v, w); }; };
  auto integer = [](int& dst) -> Setter {
    return [&dst](const std::string& v, const std::string& w) { dst = static_cast<int>(parse_long(v, w)); };
  };
  const std::map<std::string, Setter> setters = {
      {"physics.rho0", num(c.physics.rho0)},
      {"physics.mu", num(c.physics.mu)},
      {"physics.mu0", num(c.physics.mu0)},
      {"physics.sigma", num(c.physics.sigma)},
      {"physics.beta", num(c.physics.beta)},
      {"physics.cv", num(c.physics.cv)},
      {"physics.kappa", num(c.physics.kappa)},
      {"physics.gx", num(c.physics.g[0])},
      {"physics.gy", num(c.physics.g[1])},
      {"physics.u_in", num(c.physics.u_in)},
      {"physics.p_out", num(c.physics.p_out)},
      {"physics.T0", num(c.physics.T0)},
      {"physics.T_top", num(c.physics.T_top)},
      {"physics.T_bottom", num(c.physics.T_bottom)},
      {"geometry.L", num(c.geometry.L)},
      {"geometry.H", num(c.geometry.H)},
      {"geometry.H1", num(c.geometry.H1)},
      {"geometry.H2", num(c.geometry.H2)},
      {"geometry.steps", [&c](const std::string& v, const std::string&) { c.geometry.steps = parse_steps(v); }},
      {"grid.nx", integer(c.nx)},
      {"grid.ny", integer(c.ny)},
      {"solver.cfl", num(c.solver.cfl)},
      {"solver.dt_max", num(c.solver.dt_max)},
      {"solver.implicit_magnetic_diffusion",
       [&c](const std::string& v, const std::string& w) { c.solver.implicit_magnetic_diffusion = parse_bool(v, w); }},
      {"solver.linear_tolerance", num(c.solver.linear_tolerance)},
      {"solver.initial_perturbation", num(c.solver.initial_perturbation)},
      {"solver.t_end", num(c.t_end)},
      {"solver.save_every", num(c.save_every)},
      {"sweep.b0_values", [&c](const std::string& v, const std::string&) { c.b0_values = parse_b0_values(v); }},
      {"dataset.train_ratio", num(c.split.train)},
      {"dataset.validation_ratio", num(c.split.validation)},
      {"dataset.test_ratio", num(c.split.test)},
      {"dataset.test_values", [&c](const std::string& v, const std::string& w) { c.test_values = parse_doubles(v, w); }},
      {"dataset.lag", integer(c.lag)},
      {"reduction.energy_threshold", num(c.energy_threshold)},
      {"reduction.r_min", integer(c.r_min)},
      {"reduction.fixed_rank", integer(c.fixed_rank)},
      {"shred.hidden", integer(c.arch.hidden)},
      {"shred.layers", integer(c.arch.layers)},
      {"shred.decoder",
       [&c](const std::string& v, const std::string& w) {
         c.arch.decoder.clear();
         for (const auto& item : split_list(v)) c.arch.decoder.push_back(static_cast<int>(parse_long(item, w)));
       }},
      {"shred.learning_rate", num(c.train.learning_rate)},
      {"shred.batch_size", integer(c.train.batch_size)},
      {"shred.max_epochs", integer(c.train.max_epochs)},
      {"shred.patience", integer(c.train.patience)},
      {"shred.beta1", num(c.train.beta1)},
      {"shred.beta2", num(c.train.beta2)},
      {"shred.epsilon", num(c.train.epsilon)},
      {"shred.dropout", num(c.train.dropout)},
      {"ensemble.members", integer(c.members)},
      {"run.seed", [&c](const std::string& v, const std::string& w) { c.seed = parse_u64(v, w); }},
      {"run.workers", integer(c.workers)},
      {"acceptance.max_error_T", num(c.acceptance.max_error_T)},
      {"acceptance.max_error_u", num(c.acceptance.max_error_u)},
      {"acceptance.max_error_p", num(c.acceptance.max_error_p)},
      {"acceptance.max_member_cv", num(c.acceptance.max_member_cv)},
  };
  const std::set<std::string> known = {"physics", "geometry", "grid", "solver", "sweep", "dataset",
                                       "reduction", "shred", "ensemble", "run", "acceptance"};
  for (const auto& sec : m.section_names()) {
    if (!known.count(sec)) fail(ErrorKind::Config, "unknown configuration section [" + sec + "]");
    for (const auto& [k, v] : m.section(sec)) {
      const std::string key = sec + "." + k;
      auto it = setters.find(key);
      if (it == setters.end()) fail(ErrorKind::Config, "unknown configuration key '" + key + "'");
      it->second(v, key);
    }
  }
  c.validate();
  return c;
}

io::Manifest PipelineConfig::to_manifest() const {
  io::Manifest m;
  const auto& p = physics;
  m.set_value("physics", "rho0", p.rho0);
  m.set_value("physics", "mu", p.mu);
  m.set_value("physics", "mu0", p.mu0);
  m.set_value("physics", "sigma", p.sigma);
  m.set_value("physics", "beta", p.beta);
  m.set_value("physics", "cv", p.cv);
  m.set_value("physics", "kappa", p.kappa);
  m.set_value("physics", "gx", p.g[0]);
  m.set_value("physics", "gy", p.g[1]);
  m.set_value("physics", "u_in", p.u_in);
  m.set_value("physics", "p_out", p.p_out);
  m.set_value("physics", "T0", p.T0);
  m.set_value("physics", "T_top", p.T_top);
  m.set_value("physics", "T_bottom", p.T_bottom);
  m.set_value("geometry", "L", geometry.L);
  m.set_value("geometry", "H", geometry.H);
  m.set_value("geometry", "H1", geometry.H1);
  m.set_value("geometry", "H2", geometry.H2);
  m.set("geometry", "steps", format_steps(geometry.steps));
  m.set_value("grid", "nx", nx);
  m.set_value("grid", "ny", ny);
  m.set_value("solver", "cfl", solver.cfl);
  m.set_value("solver", "dt_max", solver.dt_max);
  m.set("solver", "implicit_magnetic_diffusion", solver.implicit_magnetic_diffusion ? "true" : "false");
  m.set_value("solver", "linear_tolerance", solver.linear_tolerance);
  m.set_value("solver", "initial_perturbation", solver.initial_perturbation);
  m.set_value("solver", "t_end", t_end);
  m.set_value("solver", "save_every", save_every);
  m.set("sweep", "b0_values", join(b0_values));
  m.set_value("dataset", "train_ratio", split.train);
  m.set_value("dataset", "validation_ratio", split.validation);
  m.set_value("dataset", "test_ratio", split.test);
  m.set("dataset", "test_values", join(test_values));
  m.set_value("dataset", "lag", lag);
  m.set_value("reduction", "energy_threshold", energy_threshold);
  m.set_value("reduction", "r_min", r_min);
  m.set_value("reduction", "fixed_rank", fixed_rank);
  m.set_value("shred", "hidden", arch.hidden);
  m.set_value("shred", "layers", arch.layers);
  std::string dec;
  for (std::size_t i = 0; i < arch.decoder.size(); ++i) dec += (i ? ", " : "") + std::to_string(arch.decoder[i]);
  m.set("shred", "decoder", dec);
  m.set_value("shred", "learning_rate", train.learning_rate);
  m.set_value("shred", "batch_size", train.batch_size);
  m.set_value("shred", "max_epochs", train.max_epochs);
  m.set_value("shred", "patience", train.patience);
  m.set_value("shred", "beta1", train.beta1);
  m.set_value("shred", "beta2", train.beta2);
  m.set_value("shred", "epsilon", train.epsilon);
  m.set_value("shred", "dropout", train.dropout);
  m.set_value("ensemble", "members", members);
  m.set_value("run", "seed", seed);
  m.set_value("run", "workers", workers);
  m.set_value("acceptance", "max_error_T", acceptance.max_error_T);
  m.set_value("acceptance", "max_error_u", acceptance.max_error_u);
  m.set_value("acceptance", "max_error_p", acceptance.max_error_p);
  m.set_value("acceptance", "max_member_cv", acceptance.max_member_cv);
  return m;
}

void PipelineConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) fail(ErrorKind::Config, msg);
  };
  try {
    physics.validate();
    geometry.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, e.what());
  }
  check(nx >= 8 && ny >= 8, "grid.nx and grid.ny must be at least 8");
  check(solver.cfl > 0.0 && solver.cfl <= 1.0, "solver.cfl must lie in (0, 1]");
  check(solver.dt_max > 0.0, "solver.dt_max must be positive");
  check(solver.linear_tolerance > 0.0, "solver.linear_tolerance must be positive");
  check(solver.initial_perturbation >= 0.0, "solver.initial_perturbation must be non-negative");
  check(t_end > 0.0 && save_every > 0.0 && save_every <= t_end, "need 0 < solver.save_every <= solver.t_end");
  check(std::abs(t_end / save_every - std::round(t_end / save_every)) < 1e-6,
        "solver.save_every must divide solver.t_end");
  check(!b0_values.empty(), "sweep.b0_values is empty");
  for (double b : b0_values) check(b >= 0.0, "sweep.b0_values must be non-negative");
  std::set<std::string> stems;
  for (double b : b0_values)
    check(stems.insert(snapshot_stem(b)).second, "sweep.b0_values has values indistinguishable at 6 digits");
  check(split.train >= 0 && split.validation >= 0 && split.test >= 0 &&
            std::abs(split.train + split.validation + split.test - 1.0) < 1e-9,
        "dataset ratios must be non-negative and sum to 1");
  check(lag >= 1, "dataset.lag must be at least 1");
  check(energy_threshold > 0.0 && energy_threshold < 1.0, "reduction.energy_threshold must lie in (0, 1)");
  check(r_min >= 1 && fixed_rank >= 0, "reduction.r_min >= 1 and reduction.fixed_rank >= 0 required");
  check(arch.hidden >= 1 && arch.layers >= 1, "shred.hidden and shred.layers must be positive");
  for (int w : arch.decoder) check(w >= 1, "shred.decoder widths must be positive");
  try {
    train.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, std::string("shred: ") + e.what());
  }
  check(members >= 1, "ensemble.members must be positive");
  check(workers >= 0, "run.workers must be non-negative");
  check(acceptance.max_error_T > 0 && acceptance.max_error_u > 0 && acceptance.max_error_p > 0 &&
            acceptance.max_member_cv > 0,
        "acceptance thresholds must be positive");
}

PipelineConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error& e) {
    fail(ErrorKind::Config, e.what());
  }
  return PipelineConfig::from_manifest(io::Manifest::parse(text, path.string()));
}

std::uint64_t trajectory_seed(std::uint64_t seed, double b0) {
  return mix_seed(seed, std::bit_cast<std::uint64_t>(b0));
}
std::uint64_t sensor_seed(std::uint64_t seed) { return mix_seed(seed, 0x5E5502); }
std::uint64_t training_seed(std::uint64_t seed) { return mix_seed(seed, 0x7EA1); }

void Context::note(const std::string& line) const {
  if (log) *log << line << std::endl;
}

solver::Grid Context::grid() const { return solver::build_grid(config.geometry, config.nx, config.ny); }

std::string snapshot_stem(double b0) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "b0_%.6g", b0);
  return buf;
}

// ------------------------------------------------------------------- sweep

namespace {

void write_trajectory(const fs::path& dir, const SnapshotTrajectory& tr) {
  for (FieldKind f : kAllFields)
    io::write_matrix(snapshot_path(dir, tr.param_value, f), tr.field(f),
                     {std::string(field_label(f)), 0, 0, tr.param_value, tr.save_dt});
}

SnapshotTrajectory read_trajectory(const fs::path& dir, double b0) {
  SnapshotTrajectory tr;
  bool first = true;
  for (FieldKind f : kAllFields) {
    auto [h, m] = io::read_matrix(snapshot_path(dir, b0, f));
    if (h.label != field_label(f))
      fail(ErrorKind::Integrity, snapshot_path(dir, b0, f).string() + ": field label '" + h.label + "'");
    if (first) {
      tr.param_value = h.param_value;
      tr.save_dt = h.save_dt;
      first = false;
    } else if (h.param_value != tr.param_value || h.save_dt != tr.save_dt) {
      fail(ErrorKind::Integrity, "snapshot files for " + snapshot_stem(b0) + " disagree on B0 or save_dt");
    }
    tr.field(f) = std::move(m);
  }
  tr.validate();
  return tr;
}

bool trajectory_complete(const Context& ctx, const fs::path& dir, double b0, Eigen::Index cells) {
  for (FieldKind f : kAllFields)
    if (!fs::exists(snapshot_path(dir, b0, f))) return false;
  try {
    const auto tr = read_trajectory(dir, b0);
    return snapshot_stem(tr.param_value) == snapshot_stem(b0) && tr.cells() == cells &&
           tr.instants() == expected_instants(ctx.config);
  } catch (const Error&) {
    return false;
  }
}

}  // namespace

io::Manifest refresh_snapshot_manifest(const Context& ctx) {
  const fs::path dir = ctx.out / "snapshots";
  fs::create_directories(dir);
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 7 && name.rfind("b0_", 0) == 0 && name.substr(name.size() - 7) == "_T.shrd")
      stems.push_back(name.substr(0, name.size() - 7));
  }
  std::sort(stems.begin(), stems.end());

  std::vector<SnapshotTrajectory> found;
  for (const auto& stem : stems) {
    // Parse the value back from the first file header.
    const auto [h, m] = io::read_matrix(dir / (stem + "_T.shrd"));
    (void)m;
    found.push_back(read_trajectory(dir, h.param_value));
  }
  std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.param_value < b.param_value; });

  io::Manifest man;
  std::vector<double> values;
  for (const auto& tr : found) values.push_back(tr.param_value);
  man.set("snapshots", "b0_values", join(values));
  man.set_value("snapshots", "count", values.size());
  if (!found.empty()) {
    man.set_value("snapshots", "cells", found.front().cells());
    man.set_value("snapshots", "instants", found.front().instants());
    man.set_value("snapshots", "save_dt", found.front().save_dt);
  }
  const auto cfg = ctx.config.to_manifest();
  for (const std::string sec : {"grid", "geometry", "physics"})
    for (const auto& [k, v] : cfg.section(sec)) man.set(sec, k, v);
  man.set_value("solver", "t_end", ctx.config.t_end);
  man.set_value("solver", "save_every", ctx.config.save_every);
  man.set_value("run", "seed", ctx.config.seed);
  man.set("run", "config_sha256", io::sha256_hex(config_text(ctx.config)));
  for (const auto& tr : found) {
    man.set("trajectories", snapshot_stem(tr.param_value), io::format_double(tr.param_value));
    for (FieldKind f : kAllFields) {
      const fs::path p = snapshot_path(dir, tr.param_value, f);
      man.add_file(dir, p, io::sha256_file(p));
    }
  }
  man.write(dir / "manifest.ini");
  return man;
}

SweepReport run_sweep(const Context& ctx, const std::vector<double>& requested) {
  const auto& cfg = ctx.config;
  const std::vector<double> values = requested.empty() ? cfg.b0_values : requested;
  const fs::path dir = ctx.out / "snapshots";
  fs::create_directories(dir);
  write_config_copy(ctx);
  const solver::Grid grid = ctx.grid();

  enum class Status { Computed, Skipped, Failed };
  std::vector<Status> status(values.size(), Status::Failed);
  std::vector<std::string> errors(values.size());
  std::mutex log_guard;
  ensemble::parallel_for(values.size(), ctx.workers, [&](std::size_t i) {
    const double b0 = values[i];
    if (trajectory_complete(ctx, dir, b0, grid.fluid_count())) {
      status[i] = Status::Skipped;
      std::lock_guard lock(log_guard);
      ctx.note("sweep: B0 = " + io::format_double(b0) + " T already present, skipped");
      return;
    }
    try {
      solver::PhysicalParams params = cfg.physics;
      params.B0 = b0;
      solver::TrajectoryDiagnostics diag;
      const auto tr = solver::run_trajectory(params, cfg.geometry, grid, cfg.t_end, cfg.save_every,
                                             trajectory_seed(cfg.seed, b0), cfg.solver, &diag);
      write_trajectory(dir, tr);
      status[i] = Status::Computed;
      std::ostringstream msg;
      msg << "sweep: B0 = " << io::format_double(b0) << " T done, " << diag.steps << " steps, dt "
          << diag.min_dt << " .. " << diag.max_dt << " s, max |div B| " << diag.max_div_b;
      std::lock_guard lock(log_guard);
      ctx.note(msg.str());
    } catch (const Error& e) {
      errors[i] = e.what();
      std::lock_guard lock(log_guard);
      ctx.note("sweep: B0 = " + io::format_double(b0) + " T failed: " + e.what());
    }
  });

  SweepReport report;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (status[i] == Status::Computed) report.computed.push_back(values[i]);
    else if (status[i] == Status::Skipped) report.skipped.push_back(values[i]);
    else report.failed.push_back({values[i], errors[i]});
  }
  refresh_snapshot_manifest(ctx);
  return report;
}

void import_csv(const Context& ctx, double b0, double save_dt, const fs::path& T_csv, const fs::path& u_csv,
                const fs::path& p_csv) {
  if (!(save_dt > 0.0)) fail(ErrorKind::InvalidArgument, "import: save_dt must be positive");
  SnapshotTrajectory tr;
  tr.param_value = b0;
  tr.save_dt = save_dt;
  tr.T = io::read_csv_matrix(T_csv);
  tr.u = io::read_csv_matrix(u_csv);
  tr.p = io::read_csv_matrix(p_csv);
  tr.validate();
  const int cells = ctx.grid().fluid_count();
  if (tr.cells() != cells)
    fail(ErrorKind::ShapeMismatch, "import: " + std::to_string(tr.cells()) + " rows, but the configured grid has " +
                                       std::to_string(cells) + " fluid cells");
  write_trajectory(ctx.out / "snapshots", tr);
  refresh_snapshot_manifest(ctx);
  ctx.note("import: stored B0 = " + io::format_double(b0) + " T, " + std::to_string(tr.instants()) + " instants");
}

SnapshotTrajectory load_trajectory(const Context& ctx, double b0) {
  return read_trajectory(ctx.out / "snapshots", b0);
}

// ---------------------------------------------------------------- compress

namespace {

std::vector<double> manifest_list(const io::Manifest& m, const std::string& sec, const std::string& key) {
  try {
    return parse_doubles(m.get(sec, key), sec + "." + key);
  } catch (const Error& e) {
    fail(ErrorKind::Integrity, e.what());
  }
}

std::string scaled_name(FieldKind f) { return "scaled_" + std::string(field_label(f)) + ".shrd"; }
std::string basis_name(FieldKind f) { return "basis_" + std::string(field_label(f)) + ".shrd"; }
std::string coeffs_name(FieldKind f) { return "coeffs_" + std::string(field_label(f)) + ".shrd"; }

}  // namespace

CompressReport run_compress(const Context& ctx) {
  const auto& cfg = ctx.config;
  write_config_copy(ctx);
  const fs::path snap_dir = ctx.out / "snapshots";
  const auto snap = io::Manifest::read(snap_dir / "manifest.ini");
  snap.verify_files(snap_dir);
  const std::vector<double> values = manifest_list(snap, "snapshots", "b0_values");
  if (values.empty()) fail(ErrorKind::InvalidArgument, "compress: no snapshots found");

  const solver::Grid grid = ctx.grid();
  std::vector<SnapshotTrajectory> trajectories;
  for (double b0 : values) {
    auto tr = load_trajectory(ctx, b0);
    if (tr.cells() != grid.fluid_count())
      fail(ErrorKind::ShapeMismatch, "compress: snapshot cell count differs from the configured grid");
    tr.p = dataset::remove_hydrostatic(tr.p, cfg.physics.rho0, cfg.physics.g, grid);
    trajectories.push_back(std::move(tr));
  }
  const double save_dt = trajectories.front().save_dt;

  CompressReport report;
  report.split = dataset::assign_split(values, cfg.split, cfg.test_values);
  std::vector<double> fit = report.split.train;
  fit.insert(fit.end(), report.split.validation.begin(), report.split.validation.end());
  std::sort(fit.begin(), fit.end());

  dataset::StackedDataset data = dataset::stack_parametric(std::move(trajectories));
  const fs::path ds_dir = ctx.out / "dataset";
  io::Manifest ds;
  ds.set("dataset", "b0_values", join(data.params));
  ds.set_value("dataset", "instants", data.instants);
  ds.set_value("dataset", "save_dt", save_dt);
  ds.set_value("dataset", "cells", data.fields[FieldKind::Temperature].rows());
  ds.set("dataset", "pressure", "hydrostatic part removed: p - rho0 g.x");
  ds.set("split", "train", join(report.split.train));
  ds.set("split", "validation", join(report.split.validation));
  ds.set("split", "test", join(report.split.test));
  for (FieldKind f : kAllFields) {
    const Matrix fit_block = dataset::select_blocks(data, f, fit);
    data.scaling[static_cast<int>(f)] = dataset::fit_scaling({&fit_block});
    data.fields[f] = dataset::minmax_scale(data.fields[f], data.scaling[static_cast<int>(f)]);
    const auto& sp = data.scaling[static_cast<int>(f)];
    ds.set_value("scaling", std::string(field_label(f)) + "_min", sp.field_min);
    ds.set_value("scaling", std::string(field_label(f)) + "_max", sp.field_max);
  }
  ds.set("source", "snapshots_manifest_sha256", io::sha256_file(snap_dir / "manifest.ini"));
  for (FieldKind f : kAllFields) {
    const fs::path p = ds_dir / scaled_name(f);
    ds.add_file(ds_dir, p, io::write_matrix(p, data.fields[f], {"scaled_" + std::string(field_label(f)), 0, 0, 0.0, save_dt}));
  }
  ds.write(ds_dir / "manifest.ini");

  const fs::path red_dir = ctx.out / "reduction";
  io::Manifest red;
  red.set_value("svd", "energy_threshold", cfg.energy_threshold);
  red.set_value("svd", "r_min", cfg.r_min);
  red.set_value("svd", "fixed_rank", cfg.fixed_rank);
  red.set("svd", "fit_values", join(fit));
  for (FieldKind f : kAllFields) {
    const std::string lbl(field_label(f));
    const Matrix X = dataset::select_blocks(data, f, fit);
    const int max_rank = static_cast<int>(std::min(X.rows(), X.cols()));
    const auto svd = cfg.fixed_rank > 0 ? reduction::truncated_svd(X, std::min(cfg.fixed_rank, max_rank))
                                        : reduction::truncated_svd_by_energy(X, cfg.energy_threshold, cfg.r_min);
    const int i = static_cast<int>(f);
    report.ranks[i] = svd.rank();
    report.discarded[i] = svd.spectrum.discarded_energy()[svd.rank()];
    report.spectra[i] = svd.spectrum;
    const reduction::ReducedBasis basis{"U_" + lbl, svd.U};
    const fs::path bp = red_dir / basis_name(f);
    const std::string basis_hash = io::write_matrix(bp, svd.U, {"U_" + lbl, 0, 0, 0.0, 0.0});
    red.add_file(red_dir, bp, basis_hash);
    const fs::path cp = red_dir / coeffs_name(f);
    red.add_file(red_dir, cp, io::write_matrix(cp, reduction::project(basis, data.fields[f]), {"V_" + lbl, 0, 0, 0.0, save_dt}));
    const fs::path sp = red_dir / ("spectrum_" + lbl + ".csv");
    const std::string csv = reduction::spectrum_csv(svd.spectrum);
    io::atomic_write(sp, csv);
    red.add_file(red_dir, sp, io::sha256_hex(csv));
    red.set_value("ranks", lbl, svd.rank());
    red.set_value("numerical_rank", lbl, svd.numerical_rank);
    red.set_value("discarded_energy", lbl, report.discarded[i]);
    red.set("basis_sha256", lbl, basis_hash);
    std::ostringstream msg;
    msg << "compress: field " << lbl << " rank " << svd.rank() << " (discarded energy " << report.discarded[i]
        << ", numerical rank " << svd.numerical_rank << ")";
    ctx.note(msg.str());
  }
  red.set("source", "dataset_manifest_sha256", io::sha256_file(ds_dir / "manifest.ini"));
  red.write(red_dir / "manifest.ini");
  return report;
}

// ------------------------------------------------------------------- train

namespace {

struct DatasetAndBasis {
  io::Manifest ds;
  io::Manifest red;
  dataset::StackedDataset scaled;
  dataset::SplitSpec split;
  std::array<reduction::ReducedBasis, 3> bases;
  std::array<std::string, 3> basis_hash;
  FieldSet coeffs;
};

DatasetAndBasis load_dataset_and_basis(const Context& ctx) {
  DatasetAndBasis out;
  const fs::path ds_dir = ctx.out / "dataset";
  const fs::path red_dir = ctx.out / "reduction";
  out.ds = io::Manifest::read(ds_dir / "manifest.ini");
  out.ds.verify_files(ds_dir);
  out.red = io::Manifest::read(red_dir / "manifest.ini");
  out.red.verify_files(red_dir);
  if (out.red.get("source", "dataset_manifest_sha256") != io::sha256_file(ds_dir / "manifest.ini"))
    fail(ErrorKind::Integrity, "reduction artifacts were built from a different dataset");

  out.scaled.params = manifest_list(out.ds, "dataset", "b0_values");
  out.scaled.instants = out.ds.get_int("dataset", "instants");
  out.split.train = manifest_list(out.ds, "split", "train");
  out.split.validation = manifest_list(out.ds, "split", "validation");
  out.split.test = manifest_list(out.ds, "split", "test");
  for (FieldKind f : kAllFields) {
    const int i = static_cast<int>(f);
    const std::string lbl(field_label(f));
    out.scaled.fields[f] = io::read_matrix(ds_dir / scaled_name(f)).second;
    out.scaled.scaling[i] = {out.ds.get_double("scaling", lbl + "_min"), out.ds.get_double("scaling", lbl + "_max")};
    out.bases[i] = {"U_" + lbl, io::read_matrix(red_dir / basis_name(f)).second};
    out.basis_hash[i] = out.red.get("basis_sha256", lbl);
    out.coeffs[f] = io::read_matrix(red_dir / coeffs_name(f)).second;
  }
  return out;
}

Matrix stacked_targets(const DatasetAndBasis& d, const std::vector<double>& keep) {
  std::vector<Matrix> parts;
  Eigen::Index rows = 0;
  for (FieldKind f : kAllFields) {
    parts.push_back(select_columns(d.coeffs[f], d.scaled.params, d.scaled.instants, keep));
    rows += parts.back().rows();
  }
  Matrix out(rows, parts.front().cols());
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

}  // namespace

TrainReport run_train(const Context& ctx) {
  const auto& cfg = ctx.config;
  write_config_copy(ctx);
  const DatasetAndBasis d = load_dataset_and_basis(ctx);
  const Matrix& T = d.scaled.fields[FieldKind::Temperature];

  ensemble::EnsembleInputs inputs;
  inputs.block_length = d.scaled.instants;
  inputs.train_temperature = select_columns(T, d.scaled.params, d.scaled.instants, d.split.train);
  inputs.val_temperature = select_columns(T, d.scaled.params, d.scaled.instants, d.split.validation);
  inputs.train_targets = stacked_targets(d, d.split.train);
  inputs.val_targets = stacked_targets(d, d.split.validation);

  shred::ShredArch arch = cfg.arch;
  arch.inputs = 3;
  arch.outputs = 0;
  for (FieldKind f : kAllFields) {
    inputs.prototype.ranks[static_cast<int>(f)] = d.bases[static_cast<int>(f)].rank();
    arch.outputs += d.bases[static_cast<int>(f)].rank();
  }
  inputs.prototype.net = shred::ShredNet(arch);
  inputs.prototype.lag = cfg.lag;
  inputs.prototype.scaling = d.scaled.scaling;
  inputs.prototype.basis_hash = d.basis_hash;

  const auto sensors = dataset::sample_sensor_triplets(static_cast<int>(T.rows()), cfg.members, sensor_seed(cfg.seed));
  shred::TrainConfig tc = cfg.train;
  tc.seed = training_seed(cfg.seed);
  ctx.note("train: " + std::to_string(sensors.size()) + " members, " +
           std::to_string(inputs.prototype.net.parameter_count()) + " parameters each, " +
           std::to_string(inputs.train_targets.cols()) + " training windows");

  TrainReport report;
  report.parameter_count = inputs.prototype.net.parameter_count();
  report.members = ensemble::train_ensemble(inputs, sensors, tc, ctx.workers, [&](const ensemble::MemberOutcome& m) {
    std::ostringstream msg;
    msg << "train: " << member_name(m.index) << " sensors (" << m.config.cells[0] << ", " << m.config.cells[1]
        << ", " << m.config.cells[2] << ") ";
    if (m.model)
      msg << "best val loss " << m.model->history.best_val_loss << " at epoch " << m.model->history.best_epoch << " of "
          << m.model->history.epochs.size();
    else
      msg << "failed: " << m.error;
    ctx.note(msg.str());
  });

  const fs::path dir = ctx.out / "models";
  fs::create_directories(dir);
  io::Manifest man;
  std::size_t trained = 0;
  std::string sensors_csv = "member,cell_0,cell_1,cell_2,sensor_seed,train_seed,status\n";
  for (const auto& m : report.members) {
    const std::string name = member_name(m.index);
    sensors_csv += std::to_string(m.index) + "," + std::to_string(m.config.cells[0]) + "," +
                   std::to_string(m.config.cells[1]) + "," + std::to_string(m.config.cells[2]) + "," +
                   std::to_string(m.config.seed) + "," + std::to_string(m.seed) + "," + (m.model ? "ok" : "failed") + "\n";
    man.set(name, "status", m.model ? "ok" : "failed");
    man.set_value(name, "seed", m.seed);
    man.set(name, "sensors", std::to_string(m.config.cells[0]) + ", " + std::to_string(m.config.cells[1]) + ", " +
                                 std::to_string(m.config.cells[2]));
    if (!m.model) {
      man.set(name, "error", sanitize(m.error));
      continue;
    }
    ++trained;
    const auto& h = m.model->history;
    man.set_value(name, "best_epoch", h.best_epoch);
    man.set_value(name, "epochs", h.epochs.size());
    man.set_value(name, "best_val_loss", h.best_val_loss);
    const fs::path mp = dir / (name + ".shrdm");
    man.add_file(dir, mp, io::write_model(mp, *m.model));
    const fs::path hp = dir / ("history_" + name.substr(7) + ".csv");
    const std::string hist = h.csv();
    io::atomic_write(hp, hist);
    man.add_file(dir, hp, io::sha256_hex(hist));
  }
  io::atomic_write(dir / "sensors.csv", sensors_csv);
  man.add_file(dir, dir / "sensors.csv", io::sha256_hex(sensors_csv));
  man.set_value("ensemble", "requested", report.members.size());
  man.set_value("ensemble", "trained", trained);
  man.set_value("ensemble", "failed", report.members.size() - trained);
  man.set_value("ensemble", "parameter_count", report.parameter_count);
  man.set_value("ensemble", "lag", cfg.lag);
  man.set_value("ensemble", "sensor_seed", sensor_seed(cfg.seed));
  man.set_value("ensemble", "training_seed", tc.seed);
  for (FieldKind f : kAllFields) man.set("basis_sha256", std::string(field_label(f)), d.basis_hash[static_cast<int>(f)]);
  man.write(dir / "manifest.ini");
  return report;
}

// ------------------------------------------------------------- reconstruct

LoadedArtifacts load_artifacts(const Context& ctx) {
  DatasetAndBasis d = load_dataset_and_basis(ctx);
  LoadedArtifacts art;
  art.dataset_manifest = std::move(d.ds);
  art.reduction_manifest = std::move(d.red);
  art.scaled = std::move(d.scaled);
  art.split = std::move(d.split);
  art.bases = std::move(d.bases);
  art.basis_hash = d.basis_hash;

  const fs::path dir = ctx.out / "models";
  art.models_manifest = io::Manifest::read(dir / "manifest.ini");
  art.models_manifest.verify_files(dir);
  const long requested = art.models_manifest.get_int("ensemble", "requested");
  for (long i = 0; i < requested; ++i) {
    const std::string name = member_name(static_cast<std::size_t>(i));
    if (art.models_manifest.get(name, "status") != "ok") continue;
    auto model = io::read_model(dir / (name + ".shrdm"));
    for (FieldKind f : kAllFields) {
      const int k = static_cast<int>(f);
      if (model.basis_hash[k] != art.basis_hash[k])
        fail(ErrorKind::Integrity, name + " was trained against a different " + std::string(field_label(f)) +
                                       " basis (hash mismatch); refusing to run");
      if (model.ranks[k] != art.bases[k].rank())
        fail(ErrorKind::Integrity, name + " rank differs from the stored basis");
    }
    art.models.push_back(std::move(model));
  }
  if (art.models.empty()) fail(ErrorKind::Integrity, "no trained models found under " + dir.string());
  return art;
}

ParameterReconstruction reconstruct_parameter(const Context& ctx, const LoadedArtifacts& art, double b0) {
  const std::size_t block = block_of(art.scaled.params, b0);
  const Eigen::Index nt = art.scaled.instants;
  const Matrix T_block =
      art.scaled.fields[FieldKind::Temperature].middleCols(static_cast<Eigen::Index>(block) * nt, nt);
  const solver::Grid grid = ctx.grid();
  const shred::HydrostaticContext hydro{ctx.config.physics.rho0, ctx.config.physics.g, &grid};

  ParameterReconstruction rec;
  rec.b0 = art.scaled.params[block];
  for (const auto& model : art.models)
    rec.members.push_back(
        shred::predict_full_state(model, art.bases, dataset::extract_measurements(T_block, model.sensors), hydro));
  for (FieldKind f : kAllFields) {
    std::vector<const Matrix*> ptrs;
    for (const auto& m : rec.members) ptrs.push_back(&m.physical[f]);
    rec.aggregate[static_cast<int>(f)] = ensemble::aggregate(ptrs);
  }
  std::vector<const Matrix*> ptrs;
  for (const auto& m : rec.members) ptrs.push_back(&m.pressure);
  rec.pressure = ensemble::aggregate(ptrs);
  return rec;
}

std::vector<ParameterReconstruction> run_reconstruct(const Context& ctx, const std::vector<double>& requested) {
  const LoadedArtifacts art = load_artifacts(ctx);
  const std::vector<double> values = requested.empty() ? art.split.test : requested;
  const double save_dt = art.dataset_manifest.get_double("dataset", "save_dt");
  const fs::path dir = ctx.out / "recon";
  fs::create_directories(dir);
  io::Manifest man;
  std::vector<ParameterReconstruction> out;
  for (double b0 : values) {
    auto rec = reconstruct_parameter(ctx, art, b0);
    const std::string stem = snapshot_stem(rec.b0);
    auto put = [&](const std::string& suffix, const Matrix& m) {
      const fs::path p = dir / (stem + "_" + suffix + ".shrd");
      man.add_file(dir, p, io::write_matrix(p, m, {suffix, 0, 0, rec.b0, save_dt}));
    };
    for (FieldKind f : kAllFields) {
      const std::string lbl = f == FieldKind::Pressure ? "pprime" : std::string(field_label(f));
      put(lbl + "_mean", rec.aggregate[static_cast<int>(f)].mean);
      put(lbl + "_std", rec.aggregate[static_cast<int>(f)].std);
    }
    put("p_mean", rec.pressure.mean);
    put("p_std", rec.pressure.std);
    ctx.note("reconstruct: B0 = " + io::format_double(rec.b0) + " T from " + std::to_string(rec.members.size()) +
             " members");
    out.push_back(std::move(rec));
  }
  std::vector<double> done;
  for (const auto& r : out) done.push_back(r.b0);
  man.set("recon", "b0_values", join(done));
  man.set_value("recon", "members", art.models.size());
  man.set("recon", "models_manifest_sha256", io::sha256_file(ctx.out / "models" / "manifest.ini"));
  man.write(dir / "manifest.ini");
  return out;
}

// ---------------------------------------------------------------- evaluate

ParameterEvaluation evaluate_parameter(const Context& ctx, const LoadedArtifacts& art,
                                       const ParameterReconstruction& rec) {
  auto truth = load_trajectory(ctx, rec.b0);
  const solver::Grid grid = ctx.grid();
  truth.p = dataset::remove_hydrostatic(truth.p, ctx.config.physics.rho0, ctx.config.physics.g, grid);

  ParameterEvaluation ev;
  ev.b0 = rec.b0;
  for (FieldKind f : kAllFields) {
    const int k = static_cast<int>(f);
    FieldEvaluation& fe = ev.fields[k];
    const Matrix& X = truth.field(f);
    const auto& agg = rec.aggregate[k];
    std::vector<Vector> member_series;
    for (const auto& m : rec.members) member_series.push_back(metrics::relative_l2_series(X, m.physical[f]));
    fe.error = metrics::summarize_errors(metrics::relative_l2_series(X, agg.mean), member_series);
    if (f == FieldKind::Velocity)
      fe.magnitude = metrics::summarize(
          metrics::relative_l2_series(metrics::velocity_magnitude(X), metrics::velocity_magnitude(agg.mean)));
    fe.mean_std = agg.std.mean();
    fe.mean_abs_residual = (X - agg.mean).cwiseAbs().mean();

    // Lower bound in scaled space: every prediction lies in span(U), so its
    // distance to a snapshot cannot undercut the projection residual.
    const Matrix Xs = dataset::minmax_scale(X, art.scaled.scaling[k]);
    const Vector residual = reduction::projection_residual(art.bases[k], Xs);
    std::vector<const Matrix*> scaled_members;
    for (const auto& m : rec.members) scaled_members.push_back(&m.scaled[f]);
    const Matrix scaled_mean = ensemble::aggregate(scaled_members).mean;
    scaled_members.push_back(&scaled_mean);
    fe.min_bound_margin = std::numeric_limits<double>::infinity();
    for (const Matrix* pred : scaled_members) {
      const Vector err = (Xs - *pred).colwise().norm().transpose();
      for (Eigen::Index t = 0; t < err.size(); ++t) {
        ++fe.snapshots_checked;
        if (err[t] < residual[t]) ++fe.lower_bound_violations;
        fe.min_bound_margin = std::min(fe.min_bound_margin, err[t] - residual[t]);
      }
    }
  }
  return ev;
}

EvaluationReport run_evaluate(const Context& ctx, const std::vector<double>& requested) {
  const LoadedArtifacts art = load_artifacts(ctx);
  const std::vector<double> values = requested.empty() ? art.split.test : requested;
  const double save_dt = art.dataset_manifest.get_double("dataset", "save_dt");
  const auto& th = ctx.config.acceptance;
  const fs::path dir = ctx.out / "reports";
  fs::create_directories(dir);
  io::Manifest man;
  EvaluationReport report;
  std::ostringstream summary;
  summary << "b0,field,ensemble_error_mean,ensemble_error_std,member_error_mean,member_error_std,member_cv,"
             "mean_ensemble_std,mean_abs_residual,lower_bound_checks,lower_bound_violations\n"
          << std::setprecision(10);

  for (double b0 : values) {
    const auto rec = reconstruct_parameter(ctx, art, b0);
    auto ev = evaluate_parameter(ctx, art, rec);
    const std::string stem = snapshot_stem(ev.b0);
    const Eigen::Index nt = rec.aggregate[0].mean.cols();
    Vector time(nt);
    for (Eigen::Index t = 0; t < nt; ++t) time[t] = (t + 1) * save_dt;

    // Error series of the ensemble mean.
    std::vector<std::string> names{"time"};
    std::vector<Vector> cols{time};
    for (FieldKind f : kAllFields) {
      names.push_back("eps_" + std::string(field_label(f)));
      cols.push_back(ev.fields[static_cast<int>(f)].error.series);
    }
    auto truth = load_trajectory(ctx, ev.b0);
    names.push_back("eps_u_magnitude");
    cols.push_back(metrics::relative_l2_series(metrics::velocity_magnitude(truth.u),
                                               metrics::velocity_magnitude(rec.aggregate[1].mean)));
    const std::string errors_csv = io::csv_columns(names, cols);

    // Per-member time statistics.
    std::ostringstream members_csv;
    members_csv << "member,field,time_mean\n" << std::setprecision(10);
    for (FieldKind f : kAllFields) {
      const auto& means = ev.fields[static_cast<int>(f)].error.member_time_means;
      for (Eigen::Index m = 0; m < means.size(); ++m)
        members_csv << m << ',' << field_label(f) << ',' << means[m] << '\n';
    }

    // Spatial-average traces: truth, ensemble mean, member spread.
    truth.p = dataset::remove_hydrostatic(truth.p, ctx.config.physics.rho0, ctx.config.physics.g, ctx.grid());
    names = {"time"};
    cols = {time};
    for (FieldKind f : kAllFields) {
      const bool vel = f == FieldKind::Velocity;
      const std::string lbl(f == FieldKind::Pressure ? "pprime" : std::string(field_label(f)));
      Matrix member_avgs(static_cast<Eigen::Index>(rec.members.size()), nt);
      for (std::size_t m = 0; m < rec.members.size(); ++m)
        member_avgs.row(static_cast<Eigen::Index>(m)) = metrics::spatial_average_series(rec.members[m].physical[f], vel).transpose();
      const Vector band_mean = member_avgs.colwise().mean().transpose();
      const Vector band_std = ((member_avgs.rowwise() - band_mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
      names.insert(names.end(), {lbl + "_truth", lbl + "_ensemble", lbl + "_member_mean", lbl + "_member_std"});
      cols.insert(cols.end(), {metrics::spatial_average_series(truth.field(f), vel),
                               metrics::spatial_average_series(rec.aggregate[static_cast<int>(f)].mean, vel), band_mean,
                               band_std});
    }
    const std::string traces_csv = io::csv_columns(names, cols);

    for (const auto& [suffix, text] : std::vector<std::pair<std::string, std::string>>{
             {"errors", errors_csv}, {"members", members_csv.str()}, {"traces", traces_csv}}) {
      const fs::path p = dir / (suffix + "_" + stem + ".csv");
      io::atomic_write(p, text);
      man.add_file(dir, p, io::sha256_hex(text));
    }

    for (FieldKind f : kAllFields) {
      const auto& fe = ev.fields[static_cast<int>(f)];
      const std::string lbl(field_label(f));
      summary << io::format_double(ev.b0) << ',' << lbl << ',' << fe.error.over_time.mean << ','
              << fe.error.over_time.std << ',' << fe.error.over_members.mean << ',' << fe.error.over_members.std << ','
              << fe.error.member_cv << ',' << fe.mean_std << ',' << fe.mean_abs_residual << ',' << fe.snapshots_checked
              << ',' << fe.lower_bound_violations << '\n';
      std::ostringstream msg;
      msg << "evaluate: B0 = " << io::format_double(ev.b0) << " T, " << lbl << ": ensemble-mean error "
          << fe.error.over_time.mean << " (std over time " << fe.error.over_time.std << "), mean member error "
          << fe.error.over_members.mean << ", member cv " << fe.error.member_cv;
      ctx.note(msg.str());
      const std::string where = "B0 = " + io::format_double(ev.b0) + " T, field " + lbl;
      if (!(fe.error.over_time.mean <= th.max_error(f)))
        report.failures.push_back(where + ": time-mean error " + io::format_double(fe.error.over_time.mean) +
                                  " exceeds " + io::format_double(th.max_error(f)));
      if (rec.members.size() > 1 && !(fe.error.member_cv <= th.max_member_cv))
        report.failures.push_back(where + ": member coefficient of variation " +
                                  io::format_double(fe.error.member_cv) + " exceeds " +
                                  io::format_double(th.max_member_cv));
      if (fe.lower_bound_violations > 0)
        report.failures.push_back(where + ": " + std::to_string(fe.lower_bound_violations) +
                                  " predictions fall below the projection residual");
    }
    report.parameters.push_back(std::move(ev));
  }
  const std::string summary_csv = summary.str();
  io::atomic_write(dir / "summary.csv", summary_csv);
  man.add_file(dir, dir / "summary.csv", io::sha256_hex(summary_csv));
  man.set("acceptance", "passed", report.passed() ? "true" : "false");
  man.set_value("acceptance", "failures", report.failures.size());
  for (std::size_t i = 0; i < report.failures.size(); ++i)
    man.set("acceptance", "failure_" + std::to_string(i), sanitize(report.failures[i]));
  man.write(dir / "manifest.ini");
  for (const auto& f : report.failures) ctx.note("evaluate: FAIL " + f);
  return report;
}

// ------------------------------------------------------------------ report

std::string run_report(const Context& ctx) {
  std::ostringstream out;
  out << "# mhdshred run report\n\n";
  auto section = [&](const fs::path& p) -> std::optional<io::Manifest> {
    if (!fs::exists(p)) return std::nullopt;
    return io::Manifest::read(p);
  };
  if (auto m = section(ctx.out / "snapshots" / "manifest.ini")) {
    out << "## Snapshots\n\n"
        << "- grid: " << m->get("grid", "nx") << " x " << m->get("grid", "ny") << " cells\n"
        << "- trajectories: " << m->get("snapshots", "count") << " (B0 = " << m->get("snapshots", "b0_values")
        << " T)\n";
    if (m->has("snapshots", "instants"))
      out << "- saved instants per trajectory: " << m->get("snapshots", "instants") << ", every "
          << m->get("snapshots", "save_dt") << " s\n";
    out << '\n';
  }
  if (auto m = section(ctx.out / "dataset" / "manifest.ini")) {
    out << "## Split\n\n"
        << "- train: " << m->get("split", "train") << "\n"
        << "- validation: " << m->get("split", "validation") << "\n"
        << "- test: " << m->get("split", "test") << "\n\n";
  }
  if (auto m = section(ctx.out / "reduction" / "manifest.ini")) {
    out << "## Reduced bases\n\n| field | rank | discarded energy |\n|---|---|---|\n";
    for (FieldKind f : kAllFields) {
      const std::string lbl(field_label(f));
      out << "| " << lbl << " | " << m->get("ranks", lbl) << " | " << m->get("discarded_energy", lbl) << " |\n";
    }
    out << '\n';
  }
  if (auto m = section(ctx.out / "models" / "manifest.ini")) {
    out << "## Ensemble\n\n"
        << "- members trained: " << m->get("ensemble", "trained") << " of " << m->get("ensemble", "requested") << "\n"
        << "- trainable parameters per member: " << m->get("ensemble", "parameter_count") << "\n"
        << "- lag: " << m->get("ensemble", "lag") << "\n\n";
  }
  const fs::path summary = ctx.out / "reports" / "summary.csv";
  if (fs::exists(summary)) {
    out << "## Reconstruction error\n\n"
        << "| B0 [T] | field | ensemble-mean error | std over time | mean member error | member cv |\n"
        << "|---|---|---|---|---|---|\n";
    std::istringstream in(io::read_file(summary));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto c = split_list(line);
      if (c.size() < 7) continue;
      out << "| " << c[0] << " | " << c[1] << " | " << c[2] << " | " << c[3] << " | " << c[4] << " | " << c[6]
          << " |\n";
    }
    if (auto m = section(ctx.out / "reports" / "manifest.ini"))
      out << "\nAcceptance thresholds " << (m->get("acceptance", "passed") == "true" ? "met" : "NOT met") << ".\n";
  }
  const std::string text = out.str();
  io::atomic_write(ctx.out / "report.md", text);
  return text;
}

std::map<std::string, std::string> hash_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file())
      out[fs::relative(entry.path(), root).generic_string()] = io::sha256_file(entry.path());
  return out;
}

}  // namespace mhdshred::pipeline
