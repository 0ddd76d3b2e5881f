#include "flatmin/bench.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using flatmin::GridConfig;
using flatmin::GridFamily;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned threads = 1;
  std::string cell;
  bool full = false;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

nlohmann::json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::optional<std::pair<flatmin::Index, flatmin::Index>> parse_cell(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::istringstream is(s);
  long i = -1;
  long j = -1;
  char comma = 0;
  if (!(is >> i >> comma >> j) || comma != ',' || !is.eof())
    throw ConfigError("--cell expects 'i,j', got '" + s + "'");
  return std::make_pair(static_cast<flatmin::Index>(i), static_cast<flatmin::Index>(j));
}

// Desk-scale grids used when no config file is given.
GridConfig desk_default(GridFamily f) {
  GridConfig c;
  c.family = f;
  c.solver.max_iter = 20000;
  switch (f) {
    case GridFamily::matrix_sensing:
    case GridFamily::bilinear:
      c.d_list = {10, 20};
      c.axis = {45, 90, 120, 200, 280, 400};
      break;
    case GridFamily::completion:
      c.d_list = {20, 30};
      c.axis = {0.3, 0.5, 0.7, 0.9};
      break;
    case GridFamily::quadratic_nn:
      c.d_list = {10};
      c.axis = {50, 100, 150};
      c.r_list = {3};
      break;
    case GridFamily::rpca:
      c.d_list = {20};
      c.axis = {1, 2};
      c.r_list = {1};
      break;
    case GridFamily::depth:
      c.d_list = {200};
      c.r_list = {1, 2, 3};
      c.axis = {2, 3, 4, 5, 6, 7, 8, 9, 10};
      c.trials = 10;
      break;
    case GridFamily::noisy:
      c.d_list = {15};
      c.m = 300;
      c.axis = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
      c.trials = 10;
      break;
  }
  return c;
}

GridConfig grid_config(const CommonOptions& o, GridFamily fallback) {
  GridConfig c;
  if (!o.config_path.empty()) {
    try {
      c = GridConfig::from_json(load_json(o.config_path));
    } catch (const flatmin::ParameterError& e) {
      throw ConfigError(e.what());
    }
  } else {
    c = desk_default(fallback);
  }
  if (o.full) {
    std::cerr << "warning: --full runs the large-scale grid for " << to_string(c.family)
              << "; expect hours of runtime\n";
    const GridConfig keep = c;
    c = GridConfig::full_scale(keep.family);
    c.seed = keep.seed;
    c.solver = keep.solver;
    c.success_threshold = keep.success_threshold;
  }
  if (o.seed) c.seed = *o.seed;
  return c;
}

void emit(const flatmin::CsvTable& table, const std::string& command, const nlohmann::json& config,
          const std::string& out) {
  if (out.empty()) {
    table.write(std::cout);
    return;
  }
  try {
    table.save(out);
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
  std::ofstream side(out + ".json");
  if (!side) throw IoError("cannot write " + out + ".json");
  side << flatmin::sidecar(command, config).dump(2) << '\n';
}

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--config", o.config_path, "JSON config file");
  sub->add_option("--seed", o.seed, "Master seed (overrides the config)");
  sub->add_option("--out", o.out, "CSV output path; a sidecar <out>.json is written next to it");
  sub->add_option("--threads", o.threads, "Worker threads")->check(CLI::Range(1u, 1024u));
  sub->add_option("--cell", o.cell, "Run a single grid cell 'i,j'");
  sub->add_flag("--full", o.full, "Use the large-scale grid");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flatmin: flat minima experiments for low-rank recovery"};
  app.set_version_flag("--version", std::string(FLATMIN_VERSION));
  app.require_subcommand(1);

  CommonOptions o;
  auto* phase = app.add_subcommand("phase", "Exact-recovery phase transition grid");
  auto* regularity = app.add_subcommand("regularity", "Norm-minimality and balancedness grid");
  auto* depth = app.add_subcommand("depth", "Depth-k Hadamard sparse recovery grid");
  auto* noisy = app.add_subcommand("noisy", "Noisy sensing error versus sigma");
  auto* rpca = app.add_subcommand("rpca", "Robust PCA recovery grid");
  auto* rip = app.add_subcommand("rip", "Empirical RIP constants");
  auto* trace = app.add_subcommand("trace-check", "Direct versus closed-form scaled trace");
  for (auto* sub : {phase, regularity, depth, noisy, rpca, rip, trace}) add_common(sub, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit cleanly; every other parse failure is a usage error.
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    flatmin::RunOptions run;
    run.threads = o.threads;
    run.cell = parse_cell(o.cell);

    if (phase->parsed() || regularity->parsed()) {
      const GridConfig c = grid_config(o, GridFamily::matrix_sensing);
      const flatmin::GridResult res = flatmin::run_phase(c, run);
      if (phase->parsed())
        emit(flatmin::phase_table(res), "phase", c.to_json(), o.out);
      else
        emit(flatmin::regularity_table(res), "regularity", c.to_json(), o.out);
    } else if (depth->parsed()) {
      const GridConfig c = grid_config(o, GridFamily::depth);
      emit(flatmin::depth_table(flatmin::run_depth(c, run)), "depth", c.to_json(), o.out);
    } else if (noisy->parsed()) {
      const GridConfig c = grid_config(o, GridFamily::noisy);
      emit(flatmin::noisy_table(flatmin::run_noisy(c, run)), "noisy", c.to_json(), o.out);
    } else if (rpca->parsed()) {
      const GridConfig c = grid_config(o, GridFamily::rpca);
      emit(flatmin::rpca_table(flatmin::run_rpca(c, run)), "rpca", c.to_json(), o.out);
    } else if (rip->parsed()) {
      flatmin::RipConfig c;
      if (!o.config_path.empty()) c = flatmin::RipConfig::from_json(load_json(o.config_path));
      if (o.seed) c.seed = *o.seed;
      emit(flatmin::run_rip(c, run), "rip", c.to_json(), o.out);
    } else if (trace->parsed()) {
      flatmin::TraceCheckConfig c;
      if (!o.config_path.empty()) c = flatmin::TraceCheckConfig::from_json(load_json(o.config_path));
      if (o.seed) c.seed = *o.seed;
      const flatmin::TraceCheckResult res = flatmin::run_trace_check(c, run);
      emit(res.table, "trace-check", c.to_json(), o.out);
      std::cerr << "max relative deviation: " << flatmin::format_double(res.max_rel_dev) << '\n';
    }
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const flatmin::ParameterError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
