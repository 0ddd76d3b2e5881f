#include "flatmin/bench.hpp"

#include "flatmin/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

namespace flatmin {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool rows_are_ranks(GridFamily f) { return f == GridFamily::depth || f == GridFamily::noisy; }

Index rows_of(const GridConfig& c) {
  return static_cast<Index>(rows_are_ranks(c.family) ? c.r_list.size() : c.d_list.size());
}

Index as_index(double x) { return static_cast<Index>(std::llround(x)); }

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(a + (b - a) * i / (n - 1));
  return out;
}

// One sparse corruption pattern with exactly l entries in every row and column:
// entry (i, perm[(i + s) mod d]) for shifts s = 0..l-1.
Matrix sample_corruption(Index d1, Index d2, Index l, double scale, std::uint64_t seed) {
  Rng rng(seed);
  const Index d = std::min(d1, d2);
  std::vector<Index> perm(static_cast<std::size_t>(d));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  Matrix s = Matrix::Zero(d1, d2);
  for (Index i = 0; i < d; ++i) {
    for (Index sh = 0; sh < l; ++sh) {
      const Index c = perm[static_cast<std::size_t>((i + sh) % d)];
      const double mag = scale * (0.5 + 0.5 * rng.uniform());
      s(i, c) = rng.bernoulli(0.5) ? mag : -mag;
    }
  }
  return s;
}

void fill_from(TrialRecord& t, const RecoveryReport& rep) {
  t.singular_D = rep.singular_D;
  t.kappa = rep.kappa;
  t.baseline_success = rep.baseline_success;
  t.baseline_fro_error = rep.baseline_fro_error;
  if (rep.singular_D) return;
  t.success = rep.success;
  t.fro_error = rep.fro_error;
  t.nuc_error = rep.nuc_error;
  t.balancedness = rep.balancedness;
  t.norm_ratio = rep.norm_ratio;
  t.generalization_gap = rep.generalization_gap;
  t.iterations = rep.solver.iterations;
  t.solver_failed = !rep.solver.converged;
  if (rep.solver.certificate) {
    t.certified = true;
    t.cert_gap = rep.solver.certificate->duality_gap;
    t.cert_offtangent = rep.solver.certificate->offtangent_opnorm;
    t.cert_tangent_residual = rep.solver.certificate->tangent_residual;
  }
}

void mark_failed(TrialRecord& t) {
  t.solver_failed = true;
  t.success = false;
  t.fro_error = t.nuc_error = t.balancedness = t.norm_ratio = kNaN;
  t.generalization_gap = t.baseline_fro_error = kNaN;
}

struct CellSetup {
  GroundTruth truth;
  Index m = 0;
  std::optional<SensingOperator> shared_op;  // noisy: one operator per rank
};

CellSetup setup_cell(const GridConfig& cfg, CellResult& cell) {
  CellSetup s;
  const std::uint64_t ts = truth_seed(cfg, cell.i, cell.j);
  cell.truth_seed = ts;
  const Index d = cell.d;
  switch (cfg.family) {
    case GridFamily::quadratic_nn:
      s.truth = sample_symmetric_signed(d, cfg.r1, cfg.r2, true, ts);
      cell.mu = incoherence(s.truth.matrix, cfg.r1 + cfg.r2).mu;
      break;
    case GridFamily::depth:
      s.truth = leading_ones_vector(d, cell.r);
      s.m = as_index(cfg.m_factor *
                     std::ceil(static_cast<double>(cell.r) * std::log(static_cast<double>(d))));
      cell.m = s.m;
      break;
    case GridFamily::noisy:
      s.truth = sample_low_rank(d, d, cell.r, true, ts);
      s.m = cfg.m;
      cell.m = s.m;
      cell.mu = incoherence(s.truth.matrix, cell.r).mu;
      s.shared_op = sample_ensemble(EnsembleKind::gaussian, d, d, static_cast<double>(cfg.m),
                                    derive_seed(cfg.seed, {tag("operator"), tag(to_string(cfg.family)),
                                                           static_cast<std::uint64_t>(cell.i)}));
      break;
    case GridFamily::rpca:
      s.truth = sample_low_rank(d, d, cell.r, true, ts);
      cell.mu = incoherence(s.truth.matrix, cell.r).mu_strong;
      break;
    default:
      s.truth = sample_low_rank(d, d, cell.r, true, ts);
      cell.mu = incoherence(s.truth.matrix, cell.r).mu;
      break;
  }
  return s;
}

void run_trial(const GridConfig& cfg, const CellResult& cell, const CellSetup& setup, Index t,
               TrialRecord& out) {
  const std::uint64_t seed = trial_seed(cfg, cell.i, cell.j, t);
  const Index d = cell.d;
  const Index width = cfg.width > 0 ? cfg.width : d;
  RecoveryConfig rc;
  rc.solver = cfg.solver;
  rc.success_threshold = cfg.success_threshold;
  rc.run_baseline = cfg.baseline;
  rc.certify = cfg.certify;
  const Matrix& M = setup.truth.matrix;

  switch (cfg.family) {
    case GridFamily::matrix_sensing:
    case GridFamily::bilinear:
    case GridFamily::completion: {
      const EnsembleKind kind = cfg.family == GridFamily::matrix_sensing ? EnsembleKind::gaussian
                                : cfg.family == GridFamily::bilinear   ? EnsembleKind::bilinear
                                                                       : EnsembleKind::completion;
      const SensingOperator op = sample_ensemble(kind, d, d, cell.axis_value, seed);
      fill_from(out, flat_pipeline(op, setup.truth, width, rc));
      return;
    }
    case GridFamily::quadratic_nn: {
      const SensingOperator op =
          sample_ensemble(EnsembleKind::quadratic, d, d, cell.axis_value, seed);
      fill_from(out, symmetric_pipeline(op, setup.truth, width, width, rc));
      return;
    }
    case GridFamily::rpca: {
      const Matrix S = sample_corruption(d, d, as_index(cell.axis_value), cfg.corruption_scale, seed);
      const Matrix Y = M + S;
      fill_from(out, rpca_pipeline(Y, M, S.cwiseAbs().sum(), width, rc));
      return;
    }
    case GridFamily::depth: {
      const SensingOperator op =
          sample_ensemble(EnsembleKind::hadamard_columns, d, 1, static_cast<double>(setup.m), seed);
      const DepthReport rep = depth_pipeline(op, M.col(0), static_cast<int>(as_index(cell.axis_value)), rc);
      out.singular_D = rep.singular_D;
      if (rep.singular_D) return;
      out.fro_error = rep.relative_error;
      out.success = rep.relative_error < cfg.success_threshold;
      out.solver_failed = !rep.converged;
      out.iterations = rep.iterations;
      return;
    }
    case GridFamily::noisy: {
      const SensingOperator& op = *setup.shared_op;
      Rng rng(seed);
      Vector z(op.m());
      for (Index q = 0; q < z.size(); ++q) z(q) = rng.normal();
      const Vector noise = cell.axis_value * z;
      const Vector b = op.forward(M) + noise;
      const NoisyReport rep = noisy_pipeline(op, M, b, noise.norm(), rc);
      out.singular_D = rep.singular_D;
      out.fro_error = rep.flat_error;
      out.baseline_fro_error = rep.baseline_error;
      out.solver_failed = !rep.converged;
      return;
    }
  }
}

double log10_or_nan(double x) { return x > 0.0 ? std::log10(x) : kNaN; }

std::string cell_family(const GridResult& r) { return to_string(r.config.family); }

}  // namespace

std::string to_string(GridFamily f) {
  switch (f) {
    case GridFamily::matrix_sensing: return "matrix-sensing";
    case GridFamily::bilinear: return "bilinear";
    case GridFamily::completion: return "completion";
    case GridFamily::quadratic_nn: return "quadratic-nn";
    case GridFamily::rpca: return "rpca";
    case GridFamily::depth: return "depth";
    case GridFamily::noisy: return "noisy";
  }
  return "unknown";
}

GridFamily grid_family_from_string(const std::string& name) {
  for (GridFamily f : {GridFamily::matrix_sensing, GridFamily::bilinear, GridFamily::completion,
                       GridFamily::quadratic_nn, GridFamily::rpca, GridFamily::depth,
                       GridFamily::noisy}) {
    if (to_string(f) == name) return f;
  }
  throw ParameterError("unknown grid family '" + name + "'");
}

void GridConfig::validate() const {
  solver.validate();
  if (d_list.empty() || axis.empty() || r_list.empty())
    throw ParameterError("grid config: d_list, axis and r_list must be non-empty");
  if (trials < 1) throw ParameterError("grid config: trials must be >= 1");
  for (Index d : d_list)
    if (d < 1) throw ParameterError("grid config: dimensions must be positive");
  const Index dmin = *std::min_element(d_list.begin(), d_list.end());
  for (Index r : r_list)
    if (r < 1 || r > dmin) throw ParameterError("grid config: ranks must lie in [1, d]");
  if (!(success_threshold > 0.0)) throw ParameterError("grid config: success_threshold must be > 0");
  if (width < 0) throw ParameterError("grid config: width must be >= 0");
  for (double a : axis) {
    if (!std::isfinite(a)) throw ParameterError("grid config: axis values must be finite");
    switch (family) {
      case GridFamily::completion:
        if (!(a > 0.0 && a <= 1.0)) throw ParameterError("grid config: p must lie in (0, 1]");
        break;
      case GridFamily::depth:
        if (a < 2.0 || a != std::round(a)) throw ParameterError("grid config: k must be an integer >= 2");
        break;
      case GridFamily::noisy:
        if (a < 0.0) throw ParameterError("grid config: sigma must be >= 0");
        break;
      case GridFamily::rpca:
        if (a < 0.0 || a != std::round(a) || a > static_cast<double>(dmin))
          throw ParameterError("grid config: l must be an integer in [0, d]");
        break;
      default:
        if (a < 1.0 || a != std::round(a))
          throw ParameterError("grid config: m must be a positive integer");
    }
  }
  if (family == GridFamily::quadratic_nn) {
    if (r1 < 0 || r2 < 0 || r1 + r2 < 1 || r1 + r2 > dmin)
      throw ParameterError("grid config: need 1 <= r1 + r2 <= d");
    if (width > 0 && width < std::max(r1, r2))
      throw ParameterError("grid config: width below the signed ranks");
  } else if (width > 0 && !rows_are_ranks(family) && width < r_list.front()) {
    throw ParameterError("grid config: width below the rank");
  }
  if (family == GridFamily::noisy && m < 1) throw ParameterError("grid config: m must be >= 1");
  if (family == GridFamily::depth && !(m_factor > 0.0))
    throw ParameterError("grid config: m_factor must be > 0");
  if (family == GridFamily::rpca && !(corruption_scale > 0.0))
    throw ParameterError("grid config: corruption_scale must be > 0");
}

nlohmann::json GridConfig::to_json() const {
  nlohmann::json j = {{"family", to_string(family)},
                      {"d_list", d_list},
                      {"axis", axis},
                      {"r_list", r_list},
                      {"trials", trials},
                      {"seed", seed},
                      {"solver", solver.to_json()},
                      {"success_threshold", success_threshold},
                      {"baseline", baseline},
                      {"certify", certify},
                      {"width", width}};
  if (family == GridFamily::quadratic_nn) {
    j["r1"] = r1;
    j["r2"] = r2;
  }
  if (family == GridFamily::noisy) j["m"] = m;
  if (family == GridFamily::depth) j["m_factor"] = m_factor;
  if (family == GridFamily::rpca) j["corruption_scale"] = corruption_scale;
  return j;
}

GridConfig GridConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParameterError("grid config must be a JSON object");
  if (!j.contains("family")) throw ParameterError("grid config: missing 'family'");
  GridConfig c;
  c.family = grid_family_from_string(j.at("family").get<std::string>());
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "family") continue;
      if (key == "d_list") c.d_list = value.get<std::vector<Index>>();
      else if (key == "d") c.d_list = {value.get<Index>()};
      else if (key == "axis" || key == "m_list" || key == "p_list" || key == "k_list" ||
               key == "sigma_list" || key == "l_list")
        c.axis = value.get<std::vector<double>>();
      else if (key == "r_list") c.r_list = value.get<std::vector<Index>>();
      else if (key == "r") c.r_list = {value.get<Index>()};
      else if (key == "r1") c.r1 = value.get<Index>();
      else if (key == "r2") c.r2 = value.get<Index>();
      else if (key == "width") c.width = value.get<Index>();
      else if (key == "m") c.m = value.get<Index>();
      else if (key == "m_factor") c.m_factor = value.get<double>();
      else if (key == "corruption_scale") c.corruption_scale = value.get<double>();
      else if (key == "trials") c.trials = value.get<Index>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "solver") c.solver = SolverConfig::from_json(value);
      else if (key == "success_threshold") c.success_threshold = value.get<double>();
      else if (key == "baseline") c.baseline = value.get<bool>();
      else if (key == "certify") c.certify = value.get<bool>();
      else throw ParameterError("grid config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("grid config: ") + e.what());
  }
  c.validate();
  return c;
}

GridConfig GridConfig::full_scale(GridFamily f) {
  GridConfig c;
  c.family = f;
  c.trials = 10;
  switch (f) {
    case GridFamily::matrix_sensing:
    case GridFamily::bilinear:
      c.d_list = {10, 20, 30, 40, 50};
      c.axis = linspace(50, 1000, 20);
      break;
    case GridFamily::completion:
      c.d_list = {10, 20, 30, 40, 50};
      c.axis = linspace(0.1, 1.0, 10);
      break;
    case GridFamily::quadratic_nn:
      c.d_list = {10, 20, 30, 40, 50};
      c.axis = linspace(50, 1000, 20);
      c.r_list = {3};
      c.r1 = 2;
      c.r2 = 1;
      break;
    case GridFamily::rpca:
      c.d_list = {20, 40, 60};
      c.axis = {1, 2, 3, 4};
      c.r_list = {1};
      break;
    case GridFamily::depth:
      c.d_list = {1000};
      c.r_list = {1, 2, 3, 4, 5};
      c.axis = linspace(2, 10, 9);
      c.trials = 25;
      c.baseline = false;
      break;
    case GridFamily::noisy:
      c.d_list = {25};
      c.m = 1000;
      c.r_list = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
      c.axis = linspace(0.1, 1.5, 15);
      c.trials = 25;
      break;
  }
  return c;
}

double CellResult::success_rate() const {
  if (trials.empty()) return kNaN;
  const auto n = std::count_if(trials.begin(), trials.end(), [](const auto& t) { return t.success; });
  return static_cast<double>(n) / static_cast<double>(trials.size());
}

double CellResult::baseline_success_rate() const {
  if (trials.empty()) return kNaN;
  const auto n =
      std::count_if(trials.begin(), trials.end(), [](const auto& t) { return t.baseline_success; });
  return static_cast<double>(n) / static_cast<double>(trials.size());
}

Index CellResult::solver_failures() const {
  return std::count_if(trials.begin(), trials.end(), [](const auto& t) { return t.solver_failed; });
}

Index CellResult::singular_count() const {
  return std::count_if(trials.begin(), trials.end(), [](const auto& t) { return t.singular_D; });
}

double CellResult::mean(double TrialRecord::*field) const {
  double sum = 0.0;
  Index n = 0;
  for (const auto& t : trials) {
    if (t.singular_D) continue;
    const double v = t.*field;
    if (!std::isfinite(v)) continue;
    sum += v;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : kNaN;
}

std::uint64_t truth_seed(const GridConfig& cfg, Index i, Index j) {
  // depth and noisy rows share one truth across their columns
  const Index jj = rows_are_ranks(cfg.family) ? 0 : j;
  return derive_seed(cfg.seed, {tag("truth"), tag(to_string(cfg.family)),
                                static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(jj)});
}

std::uint64_t trial_seed(const GridConfig& cfg, Index i, Index j, Index t) {
  // common random numbers across k (depth) and sigma (noisy)
  const Index jj = rows_are_ranks(cfg.family) ? 0 : j;
  return derive_seed(cfg.seed, {tag("trial"), tag(to_string(cfg.family)),
                                static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(jj),
                                static_cast<std::uint64_t>(t)});
}

void parallel_for(Index n, unsigned threads, const std::function<void(Index)>& fn) {
  if (n <= 0) return;
  const unsigned workers =
      static_cast<unsigned>(std::max<Index>(1, std::min<Index>(n, std::max(1u, threads))));
  if (workers == 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      const Index i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

GridResult run_grid(const GridConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  GridResult res;
  res.config = cfg;
  const Index rows = rows_of(cfg);
  const Index cols = static_cast<Index>(cfg.axis.size());
  if (opts.cell) {
    const auto [ci, cj] = *opts.cell;
    if (ci < 0 || ci >= rows || cj < 0 || cj >= cols)
      throw ParameterError("cell (" + std::to_string(ci) + ", " + std::to_string(cj) +
                           ") is outside the " + std::to_string(rows) + " x " +
                           std::to_string(cols) + " grid");
  }

  std::vector<CellSetup> setups;
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      if (opts.cell && *opts.cell != std::make_pair(i, j)) continue;
      CellResult cell;
      cell.i = i;
      cell.j = j;
      cell.axis_value = cfg.axis[static_cast<std::size_t>(j)];
      if (rows_are_ranks(cfg.family)) {
        cell.d = cfg.d_list.front();
        cell.r = cfg.r_list[static_cast<std::size_t>(i)];
      } else {
        cell.d = cfg.d_list[static_cast<std::size_t>(i)];
        cell.r = cfg.family == GridFamily::quadratic_nn ? cfg.r1 + cfg.r2 : cfg.r_list.front();
      }
      cell.trials.resize(static_cast<std::size_t>(cfg.trials));
      setups.push_back(setup_cell(cfg, cell));
      res.cells.push_back(std::move(cell));
    }
  }

  const Index per_cell = cfg.trials;
  const Index total = static_cast<Index>(res.cells.size()) * per_cell;
  parallel_for(total, opts.threads, [&](Index task) {
    const auto c = static_cast<std::size_t>(task / per_cell);
    const Index t = task % per_cell;
    TrialRecord& rec = res.cells[c].trials[static_cast<std::size_t>(t)];
    try {
      run_trial(cfg, res.cells[c], setups[c], t, rec);
    } catch (const std::exception&) {
      // a failing solve is data, not a reason to abort the grid
      mark_failed(rec);
    }
  });
  return res;
}

GridResult run_phase(const GridConfig& cfg, const RunOptions& opts) {
  switch (cfg.family) {
    case GridFamily::matrix_sensing:
    case GridFamily::bilinear:
    case GridFamily::completion:
    case GridFamily::quadratic_nn:
      return run_grid(cfg, opts);
    default:
      throw ParameterError("phase grids need a sensing family, got " + to_string(cfg.family));
  }
}

GridResult run_depth(const GridConfig& cfg, const RunOptions& opts) {
  if (cfg.family != GridFamily::depth) throw ParameterError("run_depth: family must be depth");
  return run_grid(cfg, opts);
}

GridResult run_noisy(const GridConfig& cfg, const RunOptions& opts) {
  if (cfg.family != GridFamily::noisy) throw ParameterError("run_noisy: family must be noisy");
  return run_grid(cfg, opts);
}

GridResult run_rpca(const GridConfig& cfg, const RunOptions& opts) {
  if (cfg.family != GridFamily::rpca) throw ParameterError("run_rpca: family must be rpca");
  return run_grid(cfg, opts);
}

CsvTable phase_table(const GridResult& res) {
  CsvTable t({"schema", "family", "i", "j", "d1", "d2", "m_or_p", "r", "trials", "successes",
              "success_rate", "baseline_success_rate", "mean_fro_error",
              "mean_baseline_fro_error", "mean_nuc_error", "mean_balancedness",
              "mean_norm_ratio", "mean_kappa", "mu", "mean_iterations", "solver_failures",
              "singular_D", "seed"});
  for (const auto& c : res.cells) {
    const auto n = static_cast<long long>(c.trials.size());
    double iters = 0.0;
    for (const auto& tr : c.trials) iters += static_cast<double>(tr.iterations);
    CsvTable::Row row;
    row.add("flatmin.phase.v1").add(cell_family(res)).add(c.i).add(c.j).add(c.d).add(c.d);
    row.add(c.axis_value).add(c.r).add(n);
    row.add(static_cast<long long>(std::llround(c.success_rate() * static_cast<double>(n))));
    row.add(c.success_rate()).add(c.baseline_success_rate());
    row.add(c.mean(&TrialRecord::fro_error)).add(c.mean(&TrialRecord::baseline_fro_error));
    row.add(c.mean(&TrialRecord::nuc_error)).add(c.mean(&TrialRecord::balancedness));
    row.add(c.mean(&TrialRecord::norm_ratio)).add(c.mean(&TrialRecord::kappa)).add(c.mu);
    row.add(iters / static_cast<double>(n)).add(c.solver_failures()).add(c.singular_count());
    row.add(c.truth_seed);
    t.push(std::move(row));
  }
  return t;
}

CsvTable regularity_table(const GridResult& res) {
  CsvTable t({"schema", "family", "i", "j", "d1", "d2", "m_or_p", "r", "trials", "success_rate",
              "norm_minimality", "balancedness", "log10_norm_minimality", "log10_balancedness",
              "solver_failures", "singular_D", "seed"});
  for (const auto& c : res.cells) {
    // per-trial sentinel on singular D, then the plain average
    double nm = 0.0;
    double bal = 0.0;
    Index n = 0;
    for (const auto& tr : c.trials) {
      if (tr.singular_D) {
        nm += kSingularSentinel;
        bal += kSingularSentinel;
        ++n;
      } else if (std::isfinite(tr.norm_ratio) && std::isfinite(tr.balancedness)) {
        nm += tr.norm_ratio - 1.0;
        bal += tr.balancedness;
        ++n;
      }
    }
    nm = n ? nm / static_cast<double>(n) : kNaN;
    bal = n ? bal / static_cast<double>(n) : kNaN;
    CsvTable::Row row;
    row.add("flatmin.regularity.v1").add(cell_family(res)).add(c.i).add(c.j).add(c.d).add(c.d);
    row.add(c.axis_value).add(c.r).add(static_cast<long long>(c.trials.size()));
    row.add(c.success_rate()).add(nm).add(bal).add(log10_or_nan(nm)).add(log10_or_nan(bal));
    row.add(c.solver_failures()).add(c.singular_count()).add(c.truth_seed);
    t.push(std::move(row));
  }
  return t;
}

CsvTable depth_table(const GridResult& res) {
  CsvTable t({"schema", "i", "j", "d", "m", "r", "k", "trials", "mean_relative_error",
              "max_relative_error", "exact_rate", "solver_failures", "singular_D", "seed"});
  for (const auto& c : res.cells) {
    double worst = 0.0;
    for (const auto& tr : c.trials)
      if (std::isfinite(tr.fro_error)) worst = std::max(worst, tr.fro_error);
    CsvTable::Row row;
    row.add("flatmin.depth.v1").add(c.i).add(c.j).add(c.d).add(c.m).add(c.r);
    row.add(as_index(c.axis_value)).add(static_cast<long long>(c.trials.size()));
    row.add(c.mean(&TrialRecord::fro_error)).add(worst).add(c.success_rate());
    row.add(c.solver_failures()).add(c.singular_count()).add(c.truth_seed);
    t.push(std::move(row));
  }
  return t;
}

CsvTable noisy_table(const GridResult& res) {
  CsvTable t({"schema", "i", "j", "d", "m", "r", "sigma", "trials", "mean_flat_error",
              "mean_baseline_error", "rate", "solver_failures", "singular_D", "seed"});
  for (const auto& c : res.cells) {
    const double rate = c.axis_value * std::sqrt(static_cast<double>(c.r) * 2.0 *
                                                 static_cast<double>(c.d) / static_cast<double>(c.m));
    CsvTable::Row row;
    row.add("flatmin.noisy.v1").add(c.i).add(c.j).add(c.d).add(c.m).add(c.r).add(c.axis_value);
    row.add(static_cast<long long>(c.trials.size())).add(c.mean(&TrialRecord::fro_error));
    row.add(c.mean(&TrialRecord::baseline_fro_error)).add(rate);
    row.add(c.solver_failures()).add(c.singular_count()).add(c.truth_seed);
    t.push(std::move(row));
  }
  return t;
}

CsvTable rpca_table(const GridResult& res) {
  CsvTable t({"schema", "i", "j", "d", "r", "l", "trials", "success_rate", "mean_fro_error",
              "mean_balancedness", "mu_strong", "solver_failures", "seed"});
  for (const auto& c : res.cells) {
    CsvTable::Row row;
    row.add("flatmin.rpca.v1").add(c.i).add(c.j).add(c.d).add(c.r).add(as_index(c.axis_value));
    row.add(static_cast<long long>(c.trials.size())).add(c.success_rate());
    row.add(c.mean(&TrialRecord::fro_error)).add(c.mean(&TrialRecord::balancedness)).add(c.mu);
    row.add(c.solver_failures()).add(c.truth_seed);
    t.push(std::move(row));
  }
  return t;
}

void RipConfig::validate() const {
  if (kinds.empty() || m_list.empty()) throw ParameterError("rip config: empty kinds or m_list");
  for (const auto& k : kinds) ensemble_kind_from_string(k);
  if (d < 1 || r < 1 || r > d || trials < 1) throw ParameterError("rip config: bad d, r or trials");
}

nlohmann::json RipConfig::to_json() const {
  return {{"kinds", kinds}, {"d", d},           {"m_list", m_list}, {"r", r},
          {"trials", trials}, {"p_norm", to_string(p_norm)}, {"seed", seed}};
}

RipConfig RipConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParameterError("rip config must be a JSON object");
  RipConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "kinds") c.kinds = value.get<std::vector<std::string>>();
      else if (key == "kind") c.kinds = {value.get<std::string>()};
      else if (key == "d") c.d = value.get<Index>();
      else if (key == "m_list") c.m_list = value.get<std::vector<double>>();
      else if (key == "m") c.m_list = {value.get<double>()};
      else if (key == "r") c.r = value.get<Index>();
      else if (key == "trials") c.trials = value.get<Index>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "p_norm") {
        const auto s = value.get<std::string>();
        if (s == "l1") c.p_norm = PNorm::l1;
        else if (s == "l2") c.p_norm = PNorm::l2;
        else throw ParameterError("rip config: p_norm must be l1 or l2");
      } else {
        throw ParameterError("rip config: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("rip config: ") + e.what());
  }
  c.validate();
  return c;
}

CsvTable run_rip(const RipConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  CsvTable t({"schema", "kind", "d1", "d2", "m", "r", "trials", "p_norm", "delta1", "delta2",
              "mean_ratio", "kappa", "rescaled_delta1", "rescaled_delta2", "transfer_delta1",
              "transfer_delta2"});
  struct Job {
    std::size_t kind;
    std::size_t mi;
  };
  std::vector<Job> jobs;
  for (std::size_t k = 0; k < cfg.kinds.size(); ++k)
    for (std::size_t mi = 0; mi < cfg.m_list.size(); ++mi) jobs.push_back({k, mi});
  std::vector<CsvTable::Row> rows(jobs.size());
  parallel_for(static_cast<Index>(jobs.size()), opts.threads, [&](Index q) {
    const Job& job = jobs[static_cast<std::size_t>(q)];
    const EnsembleKind kind = ensemble_kind_from_string(cfg.kinds[job.kind]);
    const std::uint64_t s = derive_seed(cfg.seed, {tag("rip"), tag(cfg.kinds[job.kind]), job.mi});
    const Index d2 = kind == EnsembleKind::hadamard_columns ? 1 : cfg.d;
    const Index r = std::min(cfg.r, std::min(cfg.d, d2));
    const SensingOperator op = sample_ensemble(kind, cfg.d, d2, cfg.m_list[job.mi], s);
    const RipEstimate raw = estimate_rip(op, r, cfg.trials, cfg.p_norm, derive_seed(s, {tag("x")}));
    const RescalingPair pair = build_rescaling(op);
    CsvTable::Row row;
    row.add("flatmin.rip.v1").add(to_string(kind)).add(op.d1()).add(op.d2()).add(op.m()).add(r);
    row.add(cfg.trials).add(to_string(cfg.p_norm)).add(raw.delta1_hat).add(raw.delta2_hat);
    row.add(raw.mean_ratio).add(pair.kappa);
    if (pair.singular()) {
      row.add(kNaN).add(kNaN).add(kNaN).add(kNaN);
    } else {
      const RipEstimate resc =
          estimate_rip(op, pair, r, cfg.trials, cfg.p_norm, derive_seed(s, {tag("x")}));
      const RipEstimate tr = transfer_rip(raw, pair);
      row.add(resc.delta1_hat).add(resc.delta2_hat).add(tr.delta1_hat).add(tr.delta2_hat);
    }
    rows[static_cast<std::size_t>(q)] = std::move(row);
  });
  for (auto& row : rows) t.push(std::move(row));
  return t;
}

void TraceCheckConfig::validate() const {
  if (kinds.empty()) throw ParameterError("trace-check config: empty kinds");
  for (const auto& k : kinds) ensemble_kind_from_string(k);
  if (max_dim < 2 || seeds < 1) throw ParameterError("trace-check config: max_dim >= 2, seeds >= 1");
}

nlohmann::json TraceCheckConfig::to_json() const {
  return {{"kinds", kinds}, {"max_dim", max_dim}, {"seeds", seeds}, {"seed", seed}};
}

TraceCheckConfig TraceCheckConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParameterError("trace-check config must be a JSON object");
  TraceCheckConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "kinds") c.kinds = value.get<std::vector<std::string>>();
      else if (key == "max_dim") c.max_dim = value.get<Index>();
      else if (key == "seeds") c.seeds = value.get<Index>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw ParameterError("trace-check config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("trace-check config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

Matrix gaussian(Rng& rng, Index rows, Index cols) {
  Matrix a(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) a(i, j) = rng.normal();
  return a;
}

// Relative deviation of the two trace evaluations at one random interpolating point.
double trace_sample(EnsembleKind kind, Index max_dim, std::uint64_t seed) {
  Rng rng(seed);
  auto draw = [&](Index lo, Index hi) { return lo + static_cast<Index>(rng.below(hi - lo + 1)); };
  const bool symmetric = kind == EnsembleKind::quadratic || kind == EnsembleKind::split_bilinear;
  const Index d1 = draw(2, max_dim);
  const Index d2 = kind == EnsembleKind::hadamard_columns ? 1 : symmetric ? d1 : draw(2, max_dim);
  const std::uint64_t op_seed = derive_seed(seed, {tag("op")});
  SensingOperator op = [&] {
    switch (kind) {
      case EnsembleKind::completion:
        return sample_ensemble(kind, d1, d2, 0.3 + 0.7 * rng.uniform(), op_seed);
      case EnsembleKind::split_bilinear:
        return split_bilinear(sample_ensemble(EnsembleKind::quadratic, d1, d1,
                                              static_cast<double>(2 * draw(1, 2 * d1 * d1)), op_seed));
      default:
        return sample_ensemble(kind, d1, d2, static_cast<double>(draw(1, 2 * d1 * d2)), op_seed);
    }
  }();
  FactorPair f;
  if (kind == EnsembleKind::hadamard_columns) {
    std::vector<Vector> v;
    const Index k = draw(2, 5);
    for (Index h = 0; h < k; ++h) v.push_back(gaussian(rng, d1, 1).col(0));
    f = FactorPair::hadamard(std::move(v));
  } else if (symmetric) {
    f = FactorPair::signed_symmetric(gaussian(rng, d1, draw(1, max_dim)),
                                     gaussian(rng, d1, draw(1, max_dim)));
  } else {
    const Index k = draw(1, max_dim);
    f = FactorPair::asymmetric(gaussian(rng, d1, k), gaussian(rng, d2, k));
  }
  const Vector b = op.forward(f.product());
  const double direct = scaled_trace_direct(op, f, b);
  const double closed = scaled_trace_closed(op, build_rescaling(op), f);
  const double scale = std::max(std::abs(closed), 1e-300);
  return std::abs(direct - closed) / scale;
}

}  // namespace

TraceCheckResult run_trace_check(const TraceCheckConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  TraceCheckResult out;
  for (const auto& name : cfg.kinds) {
    const EnsembleKind kind = ensemble_kind_from_string(name);
    std::vector<double> dev(static_cast<std::size_t>(cfg.seeds));
    parallel_for(cfg.seeds, opts.threads, [&](Index s) {
      dev[static_cast<std::size_t>(s)] = trace_sample(
          kind, cfg.max_dim,
          derive_seed(cfg.seed, {tag("trace-check"), tag(name), static_cast<std::uint64_t>(s)}));
    });
    const double worst = *std::max_element(dev.begin(), dev.end());
    const double avg = std::accumulate(dev.begin(), dev.end(), 0.0) / static_cast<double>(dev.size());
    out.max_rel_dev = std::max(out.max_rel_dev, worst);
    CsvTable::Row row;
    row.add("flatmin.trace-check.v1").add(name).add(cfg.seeds).add(worst).add(avg);
    out.table.push(std::move(row));
  }
  return out;
}

nlohmann::json sidecar(const std::string& command, const nlohmann::json& config) {
  return {{"library", "flatmin"},
          {"version", FLATMIN_VERSION},
          {"command", command},
          {"config", config}};
}

}  // namespace flatmin
