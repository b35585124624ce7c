// memtax: train, trace, verify and compare the four memory architectures.
//
// Exit codes: 0 success, 2 run completed without reaching its target,
// 3 training diverged, 64 bad flags, 65 bad input data.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "memtax/io.hpp"
#include "memtax/reductions.hpp"
#include "memtax/training.hpp"

namespace {

using namespace memtax;

constexpr int kOk = 0;
constexpr int kTargetMissed = 2;
constexpr int kDiverged = 3;
constexpr int kUsage = 64;
constexpr int kDataError = 65;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Architecture arch_flag(const std::string& s) {
  const auto a = parse_architecture(s);
  if (!a) throw UsageError("unknown architecture '" + s + "' (expected rnn, lstm, stack or ram)");
  return *a;
}

TaskKind task_flag(const std::string& s) {
  const auto k = parse_task(s);
  if (!k) throw UsageError("unknown task '" + s + "' (expected count, count-interf, reverse or repeat-copy)");
  return *k;
}

void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
  } else {
    write_file_atomic(path, content);
  }
}

// ------------------------------------------------------------------ train

struct TrainFlags {
  std::string arch, task, config, out_model, out_curve;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> budget;
  bool verbose = false;
};

TrainConfig resolve_config(const TrainFlags& f) {
  TrainConfig c = default_config(arch_flag(f.arch), task_flag(f.task));
  if (!f.config.empty()) apply_config(c, parse_json(read_file(f.config), "config " + f.config));
  if (f.seed) c.seed = *f.seed;
  if (f.budget) c.budget = *f.budget;
  return c;
}

int run_train(const TrainFlags& f) {
  const TrainConfig c = resolve_config(f);
  c.validate();
  const std::string stem = f.arch + "_" + f.task + "_s" + std::to_string(c.seed);
  const std::string model_path = f.out_model.empty() ? stem + ".json" : f.out_model;
  const std::string curve_path = f.out_curve.empty() ? stem + "_curve.csv" : f.out_curve;

  TrainResult r;
  try {
    r = train(c, [&](const CurvePoint& p) {
      if (f.verbose) std::cerr << "episode " << p.episode << " loss " << p.loss << " held-out " << p.success << "\n";
    });
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDiverged;
  }
  ModelFile file{r.model, c.seed, c.init_mode, config_json(c)};
  write_file_atomic(model_path, save_model(file));
  write_file_atomic(curve_path, curve_csv(r.curve));
  std::cout << to_string(c.network.arch) << " " << to_string(c.task.kind) << " seed " << c.seed
            << (r.success ? " success" : " fail") << " metric " << format_double(r.metric) << " episodes "
            << r.episodes << "\n";
  return r.success ? kOk : kTargetMissed;
}

// ------------------------------------------------------------------ trace

int run_trace(const std::string& model_path, const std::string& input, const std::string& task,
              const std::string& out) {
  const ModelFile f = load_model(read_file(model_path));
  const TaskKind kind = task.empty() ? model_task(f) : task_flag(task);
  emit(out, trace_csv(f.model, kind, input));
  return kOk;
}

// ------------------------------------------------------------------ reduce-verify

int run_reduce_verify(const std::string& pair, std::size_t len, std::size_t n_seeds, std::uint64_t first_seed,
                      double perturb, const std::string& out) {
  const auto p = parse_pair(pair);
  if (!p) throw UsageError("unknown pair '" + pair + "' (expected ram-stack, stack-lstm, lstm-rnn or chain)");
  if (n_seeds == 0) throw UsageError("--seeds must be at least 1");
  std::vector<std::uint64_t> seeds(n_seeds);
  for (std::size_t i = 0; i < n_seeds; ++i) seeds[i] = first_seed + i;
  VerifyOptions opt;
  opt.perturbation = perturb;
  const EquivalenceReport rep = verify_equivalence(*p, len, seeds, opt);
  emit(out, report_json(rep).dump(1) + "\n");
  std::cerr << pair << ": max deviation " << format_double(rep.max_deviation()) << " over " << n_seeds
            << " seeds, " << (rep.equivalent() ? "equivalent" : "NOT equivalent") << "\n";
  return rep.equivalent() ? kOk : kTargetMissed;
}

// ------------------------------------------------------------------ grad-check

int run_grad_check(const std::string& arch, std::size_t trials, std::uint64_t seed, const std::string& addressing) {
  if (trials == 0) throw UsageError("--trials must be at least 1");
  NetworkConfig n;
  n.arch = arch_flag(arch);
  n.dims = {3, 4, 3, 3, 4};
  std::vector<std::pair<std::string, AddressingMode>> modes;
  if (n.arch == Architecture::Ram) {
    if (addressing != "content-location") modes.emplace_back("direct", AddressingMode::direct());
    if (addressing != "direct") modes.emplace_back("content-location", AddressingMode::content_location(10.0, 1));
  } else {
    modes.emplace_back("", AddressingMode::direct());
  }
  double worst = 0;
  for (const auto& [name, mode] : modes) {
    n.addressing = mode;
    const GradCheckResult r = grad_check_cell(n, seed, trials);
    std::cout << arch << (name.empty() ? "" : " " + name) << " trials " << trials << " max_relative_error "
              << format_double(r.max_relative_error) << " worst " << r.worst << "\n";
    worst = std::max(worst, r.max_relative_error);
  }
  return worst < 1e-5 ? kOk : kTargetMissed;
}

// ------------------------------------------------------------------ matrix

struct MatrixFlags {
  double budget_scale = 1.0;
  std::size_t seeds = 3;
  std::size_t repeat_copy_seeds = 5;
  std::uint64_t first_seed = 1;
  std::string out, detail, model_dir;
};

struct SeedRun {
  std::uint64_t seed = 0;
  bool success = false;
  bool diverged = false;
  double metric = 0;
  std::size_t episodes = 0;
};

struct Cell {
  Architecture arch;
  TaskKind task;
  std::vector<SeedRun> runs;
};

std::size_t thread_cap() {
  if (const char* v = std::getenv("MEMTAX_THREADS")) {
    try {
      const long n = std::stol(v);
      if (n >= 1) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
    throw UsageError("MEMTAX_THREADS must be a positive integer");
  }
  return 1;
}

// Seeds of one cell run in order until one succeeds (best of k).
void run_cell(Cell& cell, const MatrixFlags& f, std::mutex& log) {
  const std::size_t k = cell.task == TaskKind::RepeatCopy ? f.repeat_copy_seeds : f.seeds;
  for (std::uint64_t seed = f.first_seed; seed < f.first_seed + k; ++seed) {
    TrainConfig c = default_config(cell.arch, cell.task);
    c.seed = seed;
    c.budget = static_cast<std::size_t>(std::llround(static_cast<double>(c.budget) * f.budget_scale));
    SeedRun run{seed};
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const TrainResult r = train(c);
      run.success = r.success;
      run.metric = r.metric;
      run.episodes = r.episodes;
      if (!f.model_dir.empty()) {
        const std::string path = f.model_dir + "/" + to_string(cell.arch) + "_" + to_string(cell.task) + "_s" +
                                 std::to_string(seed) + ".json";
        write_file_atomic(path, save_model({r.model, seed, c.init_mode, config_json(c)}));
      }
    } catch (const DivergenceError&) {
      run.diverged = true;
      run.metric = std::nan("");
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    {
      std::lock_guard<std::mutex> lock(log);
      std::cerr << to_string(cell.arch) << " " << to_string(cell.task) << " seed " << seed
                << (run.success ? " success" : run.diverged ? " diverged" : " fail") << " metric "
                << format_double(run.metric) << " episodes " << run.episodes << " (" << std::lround(secs) << " s)\n";
    }
    cell.runs.push_back(run);
    if (run.success) break;
  }
}

// Best metric over a cell's runs: lowest MSE or highest accuracy.
double best_metric(const Cell& c) {
  std::optional<double> best;
  for (const SeedRun& r : c.runs) {
    if (std::isnan(r.metric)) continue;
    if (!best || (is_counting(c.task) ? r.metric < *best : r.metric > *best)) best = r.metric;
  }
  return best.value_or(std::nan(""));
}

int run_matrix(const MatrixFlags& f) {
  if (!(f.budget_scale >= 0)) throw UsageError("--budget-scale must be non-negative");
  if (f.seeds == 0 || f.repeat_copy_seeds == 0) throw UsageError("seed counts must be at least 1");
  if (!f.model_dir.empty()) std::filesystem::create_directories(f.model_dir);
  std::vector<Cell> cells;
  for (TaskKind t : kAllTasks)
    for (Architecture a : kAllArchitectures) cells.push_back({a, t, {}});

  std::atomic<std::size_t> next{0};
  std::mutex log;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(cells[i], f, log);
  };
  const std::size_t n = std::min(thread_cap(), cells.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  std::string matrix = "architecture,task,success,best_metric,seeds_run\n";
  std::string detail = "architecture,task,seed,success,diverged,metric,episodes\n";
  for (const Cell& c : cells) {
    const bool ok = std::any_of(c.runs.begin(), c.runs.end(), [](const SeedRun& r) { return r.success; });
    matrix += std::string(to_string(c.arch)) + "," + to_string(c.task) + "," + (ok ? "1" : "0") + "," +
              format_double(best_metric(c)) + "," + std::to_string(c.runs.size()) + "\n";
    for (const SeedRun& r : c.runs) {
      detail += std::string(to_string(c.arch)) + "," + to_string(c.task) + "," + std::to_string(r.seed) + "," +
                (r.success ? "1" : "0") + "," + (r.diverged ? "1" : "0") + "," + format_double(r.metric) + "," +
                std::to_string(r.episodes) + "\n";
    }
  }
  emit(f.out, matrix);
  if (!f.detail.empty()) write_file_atomic(f.detail, detail);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memtax: memory-augmented recurrent networks on counting, reversing and repeat-copy tasks"};
  app.require_subcommand(1);

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "train one architecture on one task");
  train_cmd->add_option("--arch", tf.arch, "rnn, lstm, stack or ram")->required();
  train_cmd->add_option("--task", tf.task, "count, count-interf, reverse or repeat-copy")->required();
  train_cmd->add_option("--config", tf.config, "JSON file overriding the defaults");
  train_cmd->add_option("--out-model", tf.out_model, "model file (default <arch>_<task>_s<seed>.json)");
  train_cmd->add_option("--out-curve", tf.out_curve, "learning curve CSV (default <arch>_<task>_s<seed>_curve.csv)");
  train_cmd->add_option("--seed", tf.seed, "seed for initialization and data");
  train_cmd->add_option("--budget", tf.budget, "training episodes");
  train_cmd->add_flag("--verbose", tf.verbose, "print each evaluation point to stderr");

  std::string model_path, input, trace_task, trace_out;
  auto* trace_cmd = app.add_subcommand("trace", "dump every internal quantity while running one input");
  trace_cmd->add_option("--model", model_path, "model file")->required();
  trace_cmd->add_option("--input", input, "input in symbol notation, e.g. bbacacbabababcc or abcD")->required();
  trace_cmd->add_option("--task", trace_task, "task notation to parse the input with (default: the model's task)");
  trace_cmd->add_option("--out", trace_out, "trace CSV (default stdout)");

  std::string pair, report_out;
  std::size_t len = 20, n_seeds = 50;
  std::uint64_t rv_seed = 1;
  double perturb = 0;
  auto* reduce_cmd = app.add_subcommand("reduce-verify", "check a constrained outer network against its inner one");
  reduce_cmd->add_option("--pair", pair, "ram-stack, stack-lstm, lstm-rnn or chain")->required();
  reduce_cmd->add_option("--len", len, "input sequence length")->capture_default_str();
  reduce_cmd->add_option("--seeds", n_seeds, "number of seeds")->capture_default_str();
  reduce_cmd->add_option("--seed", rv_seed, "first seed")->capture_default_str();
  reduce_cmd->add_option("--perturb", perturb, "add this to one outer weight")->capture_default_str();
  reduce_cmd->add_option("--out", report_out, "JSON report (default stdout)");

  std::string gc_arch, gc_addressing = "both";
  std::size_t trials = 20;
  std::uint64_t gc_seed = 1;
  auto* grad_cmd = app.add_subcommand("grad-check", "compare tape gradients with finite differences");
  grad_cmd->add_option("--arch", gc_arch, "rnn, lstm, stack or ram")->required();
  grad_cmd->add_option("--trials", trials, "random configurations")->capture_default_str();
  grad_cmd->add_option("--seed", gc_seed, "seed")->capture_default_str();
  grad_cmd->add_option("--addressing", gc_addressing, "ram only: direct, content-location or both")
      ->check(CLI::IsMember({"direct", "content-location", "both"}))
      ->capture_default_str();

  MatrixFlags mf;
  auto* matrix_cmd = app.add_subcommand("matrix", "train every architecture on every task, best of k seeds");
  matrix_cmd->add_option("--budget-scale", mf.budget_scale, "multiplier on the default budgets")->capture_default_str();
  matrix_cmd->add_option("--seeds", mf.seeds, "seeds per cell")->capture_default_str();
  matrix_cmd->add_option("--repeat-copy-seeds", mf.repeat_copy_seeds, "seeds per repeat-copy cell")
      ->capture_default_str();
  matrix_cmd->add_option("--seed", mf.first_seed, "first seed of every cell")->capture_default_str();
  matrix_cmd->add_option("--out", mf.out, "matrix CSV (default stdout)");
  matrix_cmd->add_option("--detail", mf.detail, "per-seed CSV");
  matrix_cmd->add_option("--model-dir", mf.model_dir, "save every trained model here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train_cmd) return run_train(tf);
    if (*trace_cmd) return run_trace(model_path, input, trace_task, trace_out);
    if (*reduce_cmd) return run_reduce_verify(pair, len, n_seeds, rv_seed, perturb, report_out);
    if (*grad_cmd) return run_grad_check(gc_arch, trials, gc_seed, gc_addressing);
    if (*matrix_cmd) return run_matrix(mf);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return kUsage;
  } catch (const UnknownSymbolError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}
