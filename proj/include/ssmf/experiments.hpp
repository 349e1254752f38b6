#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ssmf/model.hpp"
#include "ssmf/solver.hpp"
#include "ssmf/synthetic.hpp"

namespace ssmf {

enum class Protocol { Ex1, Ex2, Ex3, Mnist };

inline std::string protocol_name(Protocol p) {
  switch (p) {
    case Protocol::Ex1: return "table1";
    case Protocol::Ex2: return "table2";
    case Protocol::Ex3: return "table3";
    case Protocol::Mnist: return "mnist";
  }
  return "?";
}

inline std::string algorithm_name(Algorithm a) {
  return a == Algorithm::RowWise ? "rowwise" : "palm";
}

/// Batch definition. The grid is the varying quantity of each protocol:
/// prescribed sparsity s for Ex1/Ex2/Mnist, the size multiplier j for Ex3.
/// Ex1 regenerates data per trial with ts = s; Ex2 fixes one instance
/// (ts from this spec) and varies only the start; Ex3 scales m and n by j
/// at fixed ts and prescribed s.
struct ExperimentSpec {
  Protocol protocol = Protocol::Ex1;
  std::size_t m = 400;
  std::size_t n = 200;
  std::size_t r = 15;
  std::size_t ts = 30;
  std::size_t s = 20;
  std::vector<std::size_t> grid;
  std::size_t trials = 20;
  double tol = 1e-5;
  std::size_t max_iter = 4000;
  std::vector<Algorithm> algorithms = {Algorithm::RowWise, Algorithm::Palm};
  std::uint64_t base_seed = 1;
  double success_threshold = 0.01;
  double delta1 = 1e-5;
  double delta2 = 1e-6;
  double c = 10.0;

  static ExperimentSpec table1_defaults() {
    ExperimentSpec spec;
    spec.protocol = Protocol::Ex1;
    spec.m = 400;
    spec.n = 200;
    spec.r = 15;
    spec.grid = {10, 20, 30, 40, 50};
    spec.tol = 1e-5;
    spec.max_iter = 4000;
    return spec;
  }

  static ExperimentSpec table2_defaults() {
    ExperimentSpec spec;
    spec.protocol = Protocol::Ex2;
    spec.m = 400;
    spec.n = 200;
    spec.r = 15;
    spec.ts = 30;
    spec.grid = {30, 31, 32, 33, 34, 35};
    spec.tol = 1e-5;
    spec.max_iter = 4000;
    return spec;
  }

  static ExperimentSpec table3_defaults() {
    ExperimentSpec spec;
    spec.protocol = Protocol::Ex3;
    spec.m = 200;
    spec.n = 100;
    spec.r = 15;
    spec.ts = 15;
    spec.s = 20;
    spec.grid = {1, 2, 3, 4, 5};
    spec.tol = 1e-5;
    spec.max_iter = 6000;
    return spec;
  }

  static ExperimentSpec mnist_defaults() {
    ExperimentSpec spec;
    spec.protocol = Protocol::Mnist;
    spec.r = 196;
    spec.grid = {50, 60};
    spec.trials = 1;
    spec.tol = 1e-3;
    spec.max_iter = 5000;
    return spec;
  }
};

struct TrialResult {
  bool success = false;
  double final_residual = 0.0;
  std::size_t iterations = 0;
  double wall_time = 0.0;
  std::uint64_t trace_hash = 0;

  bool operator==(const TrialResult&) const = default;
};

struct CellReport {
  std::string algorithm;
  std::size_t grid_value = 0;
  std::size_t success_count = 0;
  std::size_t trials = 0;
  double success_rate = 0.0;
  double mean_ct_s = 0.0;  // over successful trials only; 0 when none
  double mean_res = 0.0;   // over all trials
  double worst_row_sum_err = 0.0;
  double worst_min_entry = 0.0;
  std::size_t worst_max_l0 = 0;
  std::vector<TrialResult> trial_results;

  bool operator==(const CellReport&) const = default;
};

struct ExperimentReport {
  std::string protocol;
  double success_threshold = 0.01;
  std::size_t trials = 0;
  std::vector<CellReport> rows;

  bool operator==(const ExperimentReport&) const = default;
};

/// Hash of the deterministic trace fields (wall time excluded; it is the one
/// field that legitimately differs between reruns).
inline std::uint64_t deterministic_trace_hash(
    const std::vector<IterRecord>& trace) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  const auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  const auto mix_double = [&](double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    mix(bits);
  };
  for (const auto& rec : trace) {
    mix(rec.k);
    mix_double(rec.F_value);
    mix_double(rec.rel_change);
    mix_double(rec.rel_residual);
    mix_double(rec.gap_w_sq);
    mix_double(rec.gap_h_sq);
    for (auto kind : rec.step_kind_w) mix(static_cast<std::uint64_t>(kind));
    for (auto kind : rec.step_kind_h) mix(static_cast<std::uint64_t>(kind));
  }
  return h;
}

namespace detail {

// Seed streams: one child generator per (cell, trial, purpose) so trial
// outcomes do not depend on execution order. Purpose 0 draws data, 1 the
// starting point.
inline std::uint64_t trial_stream(std::size_t cell, std::size_t trial,
                                  unsigned purpose) {
  return (static_cast<std::uint64_t>(cell) << 24) |
         (static_cast<std::uint64_t>(trial) << 1) | purpose;
}

constexpr std::uint64_t kFixedDataStream = 1ULL << 40;

struct TrialOutcome {
  std::vector<TrialResult> per_algorithm;
  std::vector<FeasibilityReport> worst_feas;
  std::vector<std::vector<IterRecord>> traces;  // kept only when requested
};

template <typename MakeProblemFn>
ExperimentReport run_trials(const ExperimentSpec& spec,
                            MakeProblemFn&& make_problem_fn, bool keep_traces,
                            std::vector<std::vector<std::vector<IterRecord>>>*
                                traces_out) {
  const std::size_t cells = spec.grid.size();
  const std::size_t algos = spec.algorithms.size();
  const std::size_t tasks = cells * spec.trials;
  std::vector<TrialOutcome> outcomes(tasks);
  const RandomSource base_src(spec.base_seed);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t task = 0; task < tasks; ++task) {
    const std::size_t cell = task / spec.trials;
    const std::size_t trial = task % spec.trials;
    const SsmfProblem problem = make_problem_fn(cell, trial);
    RandomSource init_src = base_src.split(trial_stream(cell, trial, 1));
    const FactorPair init = init_random_feasible(problem, init_src);

    TrialOutcome& outcome = outcomes[task];
    outcome.per_algorithm.resize(algos);
    outcome.worst_feas.resize(algos);
    if (keep_traces) outcome.traces.resize(algos);
    for (std::size_t a = 0; a < algos; ++a) {
      SolverConfig cfg;
      cfg.algorithm = spec.algorithms[a];
      cfg.tol = spec.tol;
      cfg.max_iter = spec.max_iter;
      cfg.delta1 = spec.delta1;
      cfg.delta2 = spec.delta2;
      cfg.c = spec.c;
      cfg.seed = init_src.seed();
      TrialResult& res = outcome.per_algorithm[a];
      try {
        SolveResult solved = solve(problem, init, cfg);
        res.final_residual = solved.trace.back().rel_residual;
        res.success = res.final_residual < spec.success_threshold;
        res.iterations = solved.iterations;
        res.wall_time = solved.trace.back().wall_time;
        res.trace_hash = deterministic_trace_hash(solved.trace);
        FeasibilityReport& worst = outcome.worst_feas[a];
        worst.min_entry = std::numeric_limits<double>::infinity();
        for (const auto& rec : solved.trace) {
          worst.max_row_sum_err =
              std::max(worst.max_row_sum_err, rec.feas.max_row_sum_err);
          worst.min_entry = std::min(worst.min_entry, rec.feas.min_entry);
          worst.max_l0 = std::max(worst.max_l0, rec.feas.max_l0);
        }
        if (keep_traces) outcome.traces[a] = std::move(solved.trace);
      } catch (const NumericalBreakdown&) {
        res.success = false;  // counted as failure, run continues
        res.final_residual = std::numeric_limits<double>::infinity();
      }
    }
  }

  ExperimentReport report;
  report.protocol = protocol_name(spec.protocol);
  report.success_threshold = spec.success_threshold;
  report.trials = spec.trials;
  if (traces_out) traces_out->assign(cells, {});
  for (std::size_t cell = 0; cell < cells; ++cell) {
    for (std::size_t a = 0; a < algos; ++a) {
      CellReport row;
      row.algorithm = algorithm_name(spec.algorithms[a]);
      row.grid_value = spec.grid[cell];
      row.trials = spec.trials;
      row.worst_min_entry = std::numeric_limits<double>::infinity();
      double ct_sum = 0.0;
      for (std::size_t trial = 0; trial < spec.trials; ++trial) {
        const TrialOutcome& outcome = outcomes[cell * spec.trials + trial];
        const TrialResult& res = outcome.per_algorithm[a];
        row.trial_results.push_back(res);
        if (res.success) {
          ++row.success_count;
          ct_sum += res.wall_time;
        }
        row.mean_res += res.final_residual;
        if (!outcome.worst_feas.empty()) {
          row.worst_row_sum_err = std::max(
              row.worst_row_sum_err, outcome.worst_feas[a].max_row_sum_err);
          row.worst_min_entry =
              std::min(row.worst_min_entry, outcome.worst_feas[a].min_entry);
          row.worst_max_l0 =
              std::max(row.worst_max_l0, outcome.worst_feas[a].max_l0);
        }
      }
      row.success_rate =
          static_cast<double>(row.success_count) / static_cast<double>(row.trials);
      row.mean_ct_s = row.success_count > 0
                          ? ct_sum / static_cast<double>(row.success_count)
                          : 0.0;
      row.mean_res /= static_cast<double>(row.trials);
      report.rows.push_back(std::move(row));
    }
    if (traces_out) {
      (*traces_out)[cell].resize(algos);
      for (std::size_t a = 0; a < algos; ++a)
        (*traces_out)[cell][a] =
            std::move(outcomes[cell * spec.trials].traces[a]);
    }
  }
  return report;
}

}  // namespace detail

/// Fixed size, fresh data and start per trial, ts = prescribed s.
inline ExperimentReport run_table1(const ExperimentSpec& spec) {
  const RandomSource base_src(spec.base_seed);
  return detail::run_trials(
      spec,
      [&](std::size_t cell, std::size_t trial) {
        const std::size_t s = spec.grid[cell];
        SyntheticSpec synth{spec.m, spec.n, spec.r, s,
                            base_src.split(detail::trial_stream(cell, trial, 0)).seed()};
        auto inst = gen_synthetic(synth);
        return make_problem(std::move(inst.V), spec.r, SparsityLevel{s},
                            spec.delta1, spec.delta2, spec.c);
      },
      false, nullptr);
}

/// One fixed instance (ts from the spec); the start point and the
/// prescribed sparsity vary.
inline ExperimentReport run_table2(const ExperimentSpec& spec) {
  const RandomSource base_src(spec.base_seed);
  SyntheticSpec synth{spec.m, spec.n, spec.r, spec.ts,
                      base_src.split(detail::kFixedDataStream).seed()};
  const auto inst = gen_synthetic(synth);
  return detail::run_trials(
      spec,
      [&](std::size_t cell, std::size_t) {
        return make_problem(inst.V, spec.r, SparsityLevel{spec.grid[cell]},
                            spec.delta1, spec.delta2, spec.c);
      },
      false, nullptr);
}

/// Size sweep: dimensions (m j, n j) over the grid of j, fixed rank,
/// fixed ts and prescribed s.
inline ExperimentReport run_table3(const ExperimentSpec& spec) {
  const RandomSource base_src(spec.base_seed);
  return detail::run_trials(
      spec,
      [&](std::size_t cell, std::size_t trial) {
        const std::size_t j = spec.grid[cell];
        SyntheticSpec synth{spec.m * j, spec.n * j, spec.r, spec.ts,
                            base_src.split(detail::trial_stream(cell, trial, 0)).seed()};
        auto inst = gen_synthetic(synth);
        return make_problem(std::move(inst.V), spec.r, SparsityLevel{spec.s},
                            spec.delta1, spec.delta2, spec.c);
      },
      false, nullptr);
}

struct MnistRunOutput {
  ExperimentReport report;
  // One trace per (grid cell, algorithm), from the first trial: the
  // convergence-curve export.
  std::vector<std::vector<std::vector<IterRecord>>> traces;
};

/// Factors a prepared image matrix at each sparsity level of the grid and
/// keeps per-iteration traces for plotting.
inline MnistRunOutput run_mnist(const ExperimentSpec& spec,
                                const DenseMatrix& v) {
  MnistRunOutput out;
  out.report = detail::run_trials(
      spec,
      [&](std::size_t cell, std::size_t) {
        return make_problem(v, spec.r, SparsityLevel{spec.grid[cell]},
                            spec.delta1, spec.delta2, spec.c);
      },
      true, &out.traces);
  return out;
}

inline void to_json(nlohmann::json& j, const TrialResult& r) {
  std::ostringstream hash;
  hash << "0x" << std::hex << r.trace_hash;
  j = nlohmann::json{{"success", r.success},
                     {"res", r.final_residual},
                     {"iterations", r.iterations},
                     {"ct_s", r.wall_time},
                     {"trace_hash", hash.str()}};
}

inline void from_json(const nlohmann::json& j, TrialResult& r) {
  r.success = j.at("success").get<bool>();
  r.final_residual = j.at("res").get<double>();
  r.iterations = j.at("iterations").get<std::size_t>();
  r.wall_time = j.at("ct_s").get<double>();
  r.trace_hash = std::stoull(j.at("trace_hash").get<std::string>(), nullptr, 16);
}

inline void to_json(nlohmann::json& j, const CellReport& c) {
  j = nlohmann::json{{"grid", c.grid_value},
                     {"algorithm", c.algorithm},
                     {"success_count", c.success_count},
                     {"trials", c.trials},
                     {"success_rate", c.success_rate},
                     {"mean_ct_s", c.mean_ct_s},
                     {"mean_res", c.mean_res},
                     {"worst_row_sum_err", c.worst_row_sum_err},
                     {"worst_min_entry", c.worst_min_entry},
                     {"worst_max_l0", c.worst_max_l0},
                     {"trial_results", c.trial_results}};
}

inline void from_json(const nlohmann::json& j, CellReport& c) {
  c.grid_value = j.at("grid").get<std::size_t>();
  c.algorithm = j.at("algorithm").get<std::string>();
  c.success_count = j.at("success_count").get<std::size_t>();
  c.trials = j.at("trials").get<std::size_t>();
  c.success_rate = j.at("success_rate").get<double>();
  c.mean_ct_s = j.at("mean_ct_s").get<double>();
  c.mean_res = j.at("mean_res").get<double>();
  c.worst_row_sum_err = j.at("worst_row_sum_err").get<double>();
  c.worst_min_entry = j.at("worst_min_entry").get<double>();
  c.worst_max_l0 = j.at("worst_max_l0").get<std::size_t>();
  c.trial_results = j.at("trial_results").get<std::vector<TrialResult>>();
}

inline void to_json(nlohmann::json& j, const ExperimentReport& r) {
  j = nlohmann::json{{"protocol", r.protocol},
                     {"success_threshold", r.success_threshold},
                     {"trials", r.trials},
                     {"rows", r.rows}};
}

inline void from_json(const nlohmann::json& j, ExperimentReport& r) {
  r.protocol = j.at("protocol").get<std::string>();
  r.success_threshold = j.at("success_threshold").get<double>();
  r.trials = j.at("trials").get<std::size_t>();
  r.rows = j.at("rows").get<std::vector<CellReport>>();
}

/// Human-readable table in the layout of the result tables: one line per
/// grid value, probability and mean time columns per algorithm.
inline std::string format_report_table(const ExperimentReport& report) {
  std::vector<std::string> algorithms;
  std::vector<std::size_t> grid_values;
  for (const auto& row : report.rows) {
    if (std::find(algorithms.begin(), algorithms.end(), row.algorithm) ==
        algorithms.end())
      algorithms.push_back(row.algorithm);
    if (std::find(grid_values.begin(), grid_values.end(), row.grid_value) ==
        grid_values.end())
      grid_values.push_back(row.grid_value);
  }
  const auto find_row = [&](std::size_t g,
                            const std::string& a) -> const CellReport* {
    for (const auto& row : report.rows)
      if (row.grid_value == g && row.algorithm == a) return &row;
    return nullptr;
  };
  std::ostringstream out;
  const bool is_mnist = report.protocol == "mnist";
  out << std::left << std::setw(8) << (report.protocol == "table3" ? "j" : "s");
  for (const auto& a : algorithms) {
    out << std::setw(16) << (a + (is_mnist ? " res." : " prob."))
        << std::setw(14) << (a + " ct.");
  }
  out << "\n";
  for (std::size_t g : grid_values) {
    out << std::left << std::setw(8) << g;
    for (const auto& a : algorithms) {
      const CellReport* row = find_row(g, a);
      std::ostringstream cell1, cell2;
      if (row) {
        if (is_mnist)
          cell1 << std::fixed << std::setprecision(4) << row->mean_res;
        else
          cell1 << std::fixed << std::setprecision(1)
                << 100.0 * row->success_rate << "%";
        cell2 << std::fixed << std::setprecision(4) << row->mean_ct_s;
      }
      out << std::setw(16) << cell1.str() << std::setw(14) << cell2.str();
    }
    out << "\n";
  }
  return out.str();
}

/// Writes <base>.json and <base>.txt.
inline void emit_report(const ExperimentReport& report,
                        const std::string& base_path) {
  {
    std::ofstream out(base_path + ".json");
    if (!out) fail(ErrorCode::IoError, "cannot open for writing: " + base_path + ".json");
    nlohmann::json j = report;
    out << j.dump(2) << "\n";
    if (!out) fail(ErrorCode::IoError, "write failed: " + base_path + ".json");
  }
  {
    std::ofstream out(base_path + ".txt");
    if (!out) fail(ErrorCode::IoError, "cannot open for writing: " + base_path + ".txt");
    out << format_report_table(report);
    if (!out) fail(ErrorCode::IoError, "write failed: " + base_path + ".txt");
  }
}

}  // namespace ssmf
