// ssmf: solver and experiment driver for sparse stochastic matrix
// factorization. Subcommands: solve, project, synth, table1, table2,
// table3, mnist.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ssmf/ssmf.hpp"

namespace {

struct CommonSolveOpts {
  double tol = 1e-5;
  std::size_t max_iter = 4000;
  double delta1 = 1e-5;
  double delta2 = 1e-6;
  double c = 10.0;
  std::uint64_t seed = 1;
  std::size_t threads = 0;  // 0 = library default
};

void add_solver_flags(CLI::App* cmd, CommonSolveOpts& opts) {
  cmd->add_option("--tol", opts.tol, "relative product-change stopping tolerance")
      ->capture_default_str();
  cmd->add_option("--max-iter", opts.max_iter, "iteration cap")
      ->capture_default_str();
  cmd->add_option("--delta1", opts.delta1,
                  "sufficient-decrease margin for W rows")
      ->capture_default_str();
  cmd->add_option("--delta2", opts.delta2,
                  "sufficient-decrease margin for H rows")
      ->capture_default_str();
  cmd->add_option("-c,--step-cap", opts.c, "cap on the spectral trial step")
      ->capture_default_str();
  cmd->add_option("--seed", opts.seed, "random seed")->capture_default_str();
  cmd->add_option("--threads", opts.threads, "worker threads (0 = auto)")
      ->capture_default_str();
}

void apply_threads(std::size_t threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(static_cast<int>(threads));
#else
  (void)threads;
#endif
}

ssmf::DenseMatrix read_matrix_any(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".bin")
    return ssmf::read_matrix_bin(path);
  return ssmf::read_matrix_csv(path);
}

ssmf::Algorithm parse_algorithm(const std::string& name) {
  if (name == "rowwise") return ssmf::Algorithm::RowWise;
  if (name == "palm") return ssmf::Algorithm::Palm;
  ssmf::fail(ssmf::ErrorCode::InvalidInput,
             "unknown algorithm '" + name + "' (expected rowwise or palm)");
}

std::vector<ssmf::Algorithm> parse_algorithms(
    const std::vector<std::string>& names) {
  std::vector<ssmf::Algorithm> out;
  for (const auto& name : names) out.push_back(parse_algorithm(name));
  return out;
}

int cmd_solve(const std::string& input, const std::string& algorithm,
              std::size_t r, std::size_t s, const CommonSolveOpts& opts,
              const std::string& out_w, const std::string& out_h,
              const std::string& out_trace, const std::string& out_summary,
              bool verbose) {
  apply_threads(opts.threads);
  auto v = read_matrix_any(input);
  const auto problem = ssmf::make_problem(std::move(v), r, ssmf::SparsityLevel{s},
                                          opts.delta1, opts.delta2, opts.c);
  ssmf::SolverConfig cfg;
  cfg.algorithm = parse_algorithm(algorithm);
  cfg.tol = opts.tol;
  cfg.max_iter = opts.max_iter;
  cfg.delta1 = opts.delta1;
  cfg.delta2 = opts.delta2;
  cfg.c = opts.c;
  cfg.seed = opts.seed;

  ssmf::RandomSource src(opts.seed);
  const auto init = ssmf::init_random_feasible(problem, src);
  const auto result = ssmf::solve(problem, init, cfg);

  const auto& last = result.trace.back();
  if (verbose)
    for (const auto& rec : result.trace)
      std::cerr << "iter " << rec.k << "  F " << rec.F_value << "  rel_change "
                << rec.rel_change << "  rel_residual " << rec.rel_residual
                << "\n";

  if (!out_w.empty()) ssmf::write_matrix_csv(out_w, result.final.W);
  if (!out_h.empty()) ssmf::write_matrix_csv(out_h, result.final.H);
  if (!out_trace.empty()) ssmf::write_trace_csv(out_trace, result.trace);
  if (!out_summary.empty()) {
    nlohmann::json summary{
        {"f", last.F_value},
        {"rel_residual", last.rel_residual},
        {"iterations", result.iterations},
        {"stop_reason",
         result.stop_reason == ssmf::StopReason::Tolerance ? "tolerance"
                                                           : "max_iter"},
        {"algorithm", algorithm},
        {"seed", opts.seed}};
    std::ofstream out(out_summary);
    if (!out)
      ssmf::fail(ssmf::ErrorCode::IoError, "cannot write " + out_summary);
    out << summary.dump(2) << "\n";
  }
  std::cout << "stop=" << (result.stop_reason == ssmf::StopReason::Tolerance
                               ? "tolerance"
                               : "max_iter")
            << " iterations=" << result.iterations << " F=" << last.F_value
            << " rel_residual=" << last.rel_residual << "\n";
  return result.stop_reason == ssmf::StopReason::Tolerance ? 0 : 2;
}

int cmd_project(const std::string& input, std::size_t s,
                const std::string& output) {
  const auto y = ssmf::read_vector_csv(input);
  const auto z = ssmf::project_sparse_simplex(y, ssmf::SparsityLevel{s});
  ssmf::write_vector_csv(output, z);
  return 0;
}

int cmd_synth(const ssmf::SyntheticSpec& spec, const std::string& out_v,
              const std::string& out_w, const std::string& out_h) {
  const auto inst = ssmf::gen_synthetic(spec);
  const auto write = [](const std::string& path, const ssmf::DenseMatrix& a) {
    if (path.empty()) return;
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".bin")
      ssmf::write_matrix_bin(path, a);
    else
      ssmf::write_matrix_csv(path, a);
  };
  write(out_v, inst.V);
  write(out_w, inst.W_true);
  write(out_h, inst.H_true);
  return 0;
}

int run_table(ssmf::Protocol protocol, const ssmf::ExperimentSpec& spec,
              const std::string& out_base) {
  ssmf::ExperimentReport report;
  switch (protocol) {
    case ssmf::Protocol::Ex1: report = ssmf::run_table1(spec); break;
    case ssmf::Protocol::Ex2: report = ssmf::run_table2(spec); break;
    case ssmf::Protocol::Ex3: report = ssmf::run_table3(spec); break;
    default:
      ssmf::fail(ssmf::ErrorCode::InvalidInput, "not a table protocol");
  }
  ssmf::emit_report(report, out_base);
  std::cout << ssmf::format_report_table(report);
  std::cout << "report written to " << out_base << ".json and " << out_base
            << ".txt\n";
  return 0;
}

int cmd_mnist(const std::string& dir, const ssmf::ExperimentSpec& spec,
              std::size_t count, int digit, std::size_t crop,
              const std::string& out_base) {
  namespace fs = std::filesystem;
  const auto locate =
      [&dir](std::initializer_list<const char*> names) -> std::string {
    for (const char* name : names) {
      const auto path = fs::path(dir) / name;
      if (fs::exists(path)) return path.string();
    }
    ssmf::fail(ssmf::ErrorCode::IoError,
               "MNIST file not found under " + dir +
                   " (expected train-images-idx3-ubyte / "
                   "train-labels-idx1-ubyte; download from the MNIST "
                   "distribution site and gunzip them)");
  };
  const auto images_path =
      locate({"train-images-idx3-ubyte", "train-images.idx3-ubyte"});
  const auto labels_path =
      locate({"train-labels-idx1-ubyte", "train-labels.idx1-ubyte"});
  const auto images = ssmf::parse_idx_images(ssmf::read_file_bytes(images_path));
  const auto labels = ssmf::parse_idx_labels(ssmf::read_file_bytes(labels_path));
  const auto v = ssmf::build_mnist_matrix(images, labels, digit, count, crop);

  const auto out = ssmf::run_mnist(spec, v);
  ssmf::emit_report(out.report, out_base);
  for (std::size_t cell = 0; cell < spec.grid.size(); ++cell)
    for (std::size_t a = 0; a < spec.algorithms.size(); ++a) {
      const auto path = out_base + "_trace_" +
                        ssmf::algorithm_name(spec.algorithms[a]) + "_s" +
                        std::to_string(spec.grid[cell]) + ".csv";
      ssmf::write_trace_csv(path, out.traces[cell][a]);
    }
  std::cout << ssmf::format_report_table(out.report);
  std::cout << "report written to " << out_base << ".json, traces alongside\n";
  return 0;
}

void add_experiment_flags(CLI::App* cmd, ssmf::ExperimentSpec& spec,
                          CommonSolveOpts& opts,
                          std::vector<std::string>& algo_names,
                          std::vector<std::size_t>& grid,
                          std::string& out_base) {
  add_solver_flags(cmd, opts);
  cmd->add_option("--trials", spec.trials, "trials per grid cell")
      ->capture_default_str();
  cmd->add_option("--algorithms", algo_names,
                  "algorithms to run (rowwise, palm)");
  cmd->add_option("--grid", grid, "grid values (sparsity s, or j for table3)");
  cmd->add_option("--success-threshold", spec.success_threshold,
                  "relative-residual success cutoff")
      ->capture_default_str();
  cmd->add_option("--m", spec.m, "data rows")->capture_default_str();
  cmd->add_option("--n", spec.n, "data columns")->capture_default_str();
  cmd->add_option("-r,--rank", spec.r, "factor rank")->capture_default_str();
  cmd->add_option("--out", out_base, "output path base (writes .json and .txt)");
}

void finish_experiment_spec(ssmf::ExperimentSpec& spec,
                            const CommonSolveOpts& opts,
                            const std::vector<std::string>& algo_names,
                            const std::vector<std::size_t>& grid) {
  spec.tol = opts.tol;
  spec.max_iter = opts.max_iter;
  spec.delta1 = opts.delta1;
  spec.delta2 = opts.delta2;
  spec.c = opts.c;
  spec.base_seed = opts.seed;
  if (!algo_names.empty()) spec.algorithms = parse_algorithms(algo_names);
  if (!grid.empty()) spec.grid = grid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse stochastic matrix factorization solver"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value configuration file");

  // solve
  auto* solve_cmd = app.add_subcommand("solve", "factor one matrix");
  std::string solve_input, solve_algorithm = "rowwise";
  std::size_t solve_r = 0, solve_s = 0;
  CommonSolveOpts solve_opts;
  std::string out_w, out_h, out_trace, out_summary;
  bool verbose = false;
  solve_cmd->add_option("--input", solve_input, "row-stochastic matrix (.csv or .bin)")
      ->required();
  solve_cmd->add_option("--algorithm", solve_algorithm, "rowwise or palm")
      ->capture_default_str();
  solve_cmd->add_option("-r,--rank", solve_r, "factor rank")->required();
  solve_cmd->add_option("-s,--sparsity", solve_s, "max nonzeros per H row")
      ->required();
  add_solver_flags(solve_cmd, solve_opts);
  solve_cmd->add_option("--out-w", out_w, "write the W factor (CSV)");
  solve_cmd->add_option("--out-h", out_h, "write the H factor (CSV)");
  solve_cmd->add_option("--trace", out_trace, "write the iteration trace (CSV)");
  solve_cmd->add_option("--summary", out_summary, "write a JSON run summary");
  solve_cmd->add_flag("--verbose", verbose, "log every iteration");

  // project
  auto* project_cmd =
      app.add_subcommand("project", "sparse simplex projection of a vector");
  std::string project_input, project_output;
  std::size_t project_s = 0;
  project_cmd->add_option("--input", project_input, "vector CSV")->required();
  project_cmd->add_option("-s,--sparsity", project_s, "max nonzeros")
      ->required();
  project_cmd->add_option("--output", project_output, "projected vector CSV")
      ->required();

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a planted instance");
  ssmf::SyntheticSpec synth_spec{400, 200, 15, 30, 1};
  std::string synth_v = "V.csv", synth_w, synth_h;
  synth_cmd->add_option("--m", synth_spec.m, "rows")->capture_default_str();
  synth_cmd->add_option("--n", synth_spec.n, "columns")->capture_default_str();
  synth_cmd->add_option("-r,--rank", synth_spec.r, "rank")->capture_default_str();
  synth_cmd->add_option("--ts", synth_spec.ts, "true sparsity per H row")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth_spec.seed, "seed")->capture_default_str();
  synth_cmd->add_option("--out-v", synth_v, "output path for V")
      ->capture_default_str();
  synth_cmd->add_option("--out-w", synth_w, "output path for the true W");
  synth_cmd->add_option("--out-h", synth_h, "output path for the true H");

  // tables
  auto table1_spec = ssmf::ExperimentSpec::table1_defaults();
  auto table2_spec = ssmf::ExperimentSpec::table2_defaults();
  auto table3_spec = ssmf::ExperimentSpec::table3_defaults();
  CommonSolveOpts t1_opts, t2_opts, t3_opts;
  t1_opts.tol = table1_spec.tol;
  t1_opts.max_iter = table1_spec.max_iter;
  t2_opts.tol = table2_spec.tol;
  t2_opts.max_iter = table2_spec.max_iter;
  t3_opts.tol = table3_spec.tol;
  t3_opts.max_iter = table3_spec.max_iter;
  std::vector<std::string> t1_algos, t2_algos, t3_algos;
  std::vector<std::size_t> t1_grid, t2_grid, t3_grid;
  std::string t1_out = "table1", t2_out = "table2", t3_out = "table3";

  auto* table1_cmd = app.add_subcommand(
      "table1", "success rates over fresh instances, ts = s grid");
  add_experiment_flags(table1_cmd, table1_spec, t1_opts, t1_algos, t1_grid,
                       t1_out);

  auto* table2_cmd = app.add_subcommand(
      "table2", "success rates on one fixed instance, varying s");
  add_experiment_flags(table2_cmd, table2_spec, t2_opts, t2_algos, t2_grid,
                       t2_out);
  table2_cmd->add_option("--ts", table2_spec.ts, "true sparsity of the instance")
      ->capture_default_str();

  auto* table3_cmd = app.add_subcommand(
      "table3", "success rates while scaling dimensions by j");
  add_experiment_flags(table3_cmd, table3_spec, t3_opts, t3_algos, t3_grid,
                       t3_out);
  table3_cmd->add_option("--ts", table3_spec.ts, "true sparsity")
      ->capture_default_str();
  table3_cmd->add_option("-s,--sparsity", table3_spec.s, "prescribed sparsity")
      ->capture_default_str();

  // mnist
  auto* mnist_cmd =
      app.add_subcommand("mnist", "factor handwritten-digit images");
  auto mnist_spec = ssmf::ExperimentSpec::mnist_defaults();
  CommonSolveOpts mnist_opts;
  mnist_opts.tol = mnist_spec.tol;
  mnist_opts.max_iter = mnist_spec.max_iter;
  std::vector<std::string> mnist_algos;
  std::vector<std::size_t> mnist_grid;
  std::string mnist_dir, mnist_out = "mnist";
  std::size_t mnist_count = 800, mnist_crop = 4;
  int mnist_digit = 3;
  add_experiment_flags(mnist_cmd, mnist_spec, mnist_opts, mnist_algos,
                       mnist_grid, mnist_out);
  mnist_cmd->add_option("--mnist-dir", mnist_dir,
                        "directory holding the IDX files (never downloaded)")
      ->required();
  mnist_cmd->add_option("--count", mnist_count, "images to use")
      ->capture_default_str();
  mnist_cmd->add_option("--digit", mnist_digit, "digit to select")
      ->capture_default_str();
  mnist_cmd->add_option("--crop", mnist_crop, "pixels cropped from each edge")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve_cmd->parsed())
      return cmd_solve(solve_input, solve_algorithm, solve_r, solve_s,
                       solve_opts, out_w, out_h, out_trace, out_summary,
                       verbose);
    if (project_cmd->parsed())
      return cmd_project(project_input, project_s, project_output);
    if (synth_cmd->parsed())
      return cmd_synth(synth_spec, synth_v, synth_w, synth_h);
    if (table1_cmd->parsed()) {
      apply_threads(t1_opts.threads);
      finish_experiment_spec(table1_spec, t1_opts, t1_algos, t1_grid);
      return run_table(ssmf::Protocol::Ex1, table1_spec, t1_out);
    }
    if (table2_cmd->parsed()) {
      apply_threads(t2_opts.threads);
      finish_experiment_spec(table2_spec, t2_opts, t2_algos, t2_grid);
      return run_table(ssmf::Protocol::Ex2, table2_spec, t2_out);
    }
    if (table3_cmd->parsed()) {
      apply_threads(t3_opts.threads);
      finish_experiment_spec(table3_spec, t3_opts, t3_algos, t3_grid);
      return run_table(ssmf::Protocol::Ex3, table3_spec, t3_out);
    }
    if (mnist_cmd->parsed()) {
      apply_threads(mnist_opts.threads);
      finish_experiment_spec(mnist_spec, mnist_opts, mnist_algos, mnist_grid);
      return cmd_mnist(mnist_dir, mnist_spec, mnist_count, mnist_digit,
                       mnist_crop, mnist_out);
    }
  } catch (const ssmf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
