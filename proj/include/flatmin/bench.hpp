#pragma once

#include "flatmin/csv.hpp"
#include "flatmin/recovery.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace flatmin {

enum class GridFamily { matrix_sensing, bilinear, completion, quadratic_nn, rpca, depth, noisy };

std::string to_string(GridFamily f);
GridFamily grid_family_from_string(const std::string& name);

/// One Monte-Carlo grid. Rows and columns depend on the family:
///   matrix-sensing, bilinear, quadratic-nn  rows d_list, columns m
///   completion                              rows d_list, columns p
///   rpca                                    rows d_list, columns l (corruptions per row/column)
///   depth                                   rows r_list, columns k; d = d_list[0]
///   noisy                                   rows r_list, columns sigma; d = d_list[0], m fixed
struct GridConfig {
  GridFamily family = GridFamily::matrix_sensing;
  std::vector<Index> d_list{20};
  std::vector<double> axis;
  std::vector<Index> r_list{2};  // phase-type families use r_list[0]
  Index r1 = 2;                  // quadratic-nn signed ranks
  Index r2 = 1;
  Index width = 0;  // factor width k (k1 = k2 for quadratic-nn); 0 means d
  Index m = 300;    // noisy only
  double m_factor = 3.0;  // depth: m = m_factor * ceil(r ln d)
  double corruption_scale = 1.0;  // rpca: corruption magnitudes are U(0.5, 1) * scale
  Index trials = 10;
  std::uint64_t seed = 1;
  SolverConfig solver;
  double success_threshold = 1e-6;
  bool baseline = true;
  bool certify = false;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected. The
  /// "family" key is required.
  static GridConfig from_json(const nlohmann::json& j);
  /// The large-scale grid for a family (larger dimensions, more trials).
  static GridConfig full_scale(GridFamily f);
};

/// Everything recorded about one trial.
struct TrialRecord {
  bool success = false;
  bool baseline_success = false;
  bool singular_D = false;
  bool solver_failed = false;  // did not converge within max_iter
  double fro_error = 0.0;
  double nuc_error = 0.0;
  double baseline_fro_error = 0.0;
  double balancedness = 0.0;
  double norm_ratio = 0.0;
  double generalization_gap = 0.0;
  double kappa = 1.0;
  long iterations = 0;
  // certificate of the flat solve, when requested
  bool certified = false;
  double cert_gap = 0.0;
  double cert_offtangent = 0.0;
  double cert_tangent_residual = 0.0;
};

struct CellResult {
  Index i = 0;  // row index
  Index j = 0;  // column index
  Index d = 0;
  Index r = 0;
  double axis_value = 0.0;
  Index m = 0;  // measurement count where it is fixed per cell (depth, noisy)
  std::uint64_t truth_seed = 0;
  double mu = 0.0;  // incoherence of the cell's ground truth
  std::vector<TrialRecord> trials;

  double success_rate() const;
  double baseline_success_rate() const;
  Index solver_failures() const;
  Index singular_count() const;
  /// Mean of a field over the non-singular trials (NaN when none).
  double mean(double TrialRecord::*field) const;
};

struct GridResult {
  GridConfig config;
  std::vector<CellResult> cells;  // row-major order over (i, j)
};

struct RunOptions {
  unsigned threads = 1;
  std::optional<std::pair<Index, Index>> cell;  // run a single (i, j) cell
};

/// Runs every trial of the grid on a bounded worker pool. Trials are seeded
/// from (master seed, family, cell coordinates, trial), so the result does not
/// depend on the thread count or on which cells are selected.
GridResult run_grid(const GridConfig& cfg, const RunOptions& opts = {});

/// Checks the family and runs the grid.
GridResult run_phase(const GridConfig& cfg, const RunOptions& opts = {});
GridResult run_depth(const GridConfig& cfg, const RunOptions& opts = {});
GridResult run_noisy(const GridConfig& cfg, const RunOptions& opts = {});
GridResult run_rpca(const GridConfig& cfg, const RunOptions& opts = {});

/// Seeds used for a cell's ground truth and for one of its trials.
std::uint64_t truth_seed(const GridConfig& cfg, Index i, Index j);
std::uint64_t trial_seed(const GridConfig& cfg, Index i, Index j, Index t);

/// Per-cell CSV tables. Each has a leading "schema" column naming the layout
/// and its version.
CsvTable phase_table(const GridResult& res);
CsvTable regularity_table(const GridResult& res);  // 1e20 sentinel on singular cells
CsvTable depth_table(const GridResult& res);
CsvTable noisy_table(const GridResult& res);
CsvTable rpca_table(const GridResult& res);

inline constexpr double kSingularSentinel = 1e20;

/// RIP bench: empirical constants per (kind, m), raw and rescaled.
struct RipConfig {
  std::vector<std::string> kinds{"gaussian"};
  Index d = 10;
  std::vector<double> m_list{400};
  Index r = 1;
  Index trials = 200;
  PNorm p_norm = PNorm::l2;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static RipConfig from_json(const nlohmann::json& j);
};
CsvTable run_rip(const RipConfig& cfg, const RunOptions& opts = {});

/// Trace identity sweep: direct versus closed-form scaled trace at random
/// interpolating points.
struct TraceCheckConfig {
  std::vector<std::string> kinds{"gaussian",         "bilinear", "completion", "quadratic",
                                 "hadamard-columns", "identity", "split-bilinear"};
  Index max_dim = 6;
  Index seeds = 50;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static TraceCheckConfig from_json(const nlohmann::json& j);
};
struct TraceCheckResult {
  CsvTable table{{"schema", "kind", "samples", "max_rel_dev", "mean_rel_dev"}};
  double max_rel_dev = 0.0;
};
TraceCheckResult run_trace_check(const TraceCheckConfig& cfg, const RunOptions& opts = {});

/// Sidecar JSON: library version, command, config, seed.
nlohmann::json sidecar(const std::string& command, const nlohmann::json& config);

/// Runs fn(0), ..., fn(n-1) on up to `threads` workers. Exceptions from fn are
/// rethrown after all workers stop.
void parallel_for(Index n, unsigned threads, const std::function<void(Index)>& fn);

}  // namespace flatmin
