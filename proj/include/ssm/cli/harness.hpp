#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ssm/matching/model.hpp"
#include "ssm/set_model/config.hpp"
#include "ssm/synthdata/synthdata.hpp"
#include "ssm/training/training.hpp"

namespace ssm {

enum class Command { Train, Eval, Propcheck, Gradcheck, Compare };
std::string_view to_string(Command c);
Command parse_command(std::string_view name);

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitNumerical = 3,
};

struct PropcheckOptions {
  std::size_t configs = 120;
  double tolerance = 1e-9;              // relative, for scores
  double layer_tolerance = 1e-12;       // absolute, for cross-set layer outputs
  // Configurations cycle through these variants.
  std::vector<Variant> variants{Variant::Attention, Variant::Affinity, Variant::Baseline};
};

struct GradcheckOptions {
  std::size_t k = 3;
  double eps = 1e-6;
  double threshold = 1e-5;
};

struct CompareOptions {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<Variant> variants{Variant::Attention, Variant::Affinity, Variant::Baseline};
  // Re-identification sweep; ignored for the other tasks.
  std::vector<std::pair<NoiseRatio, NoiseRatio>> noise_grid;
  // Minimum lead of every cross variant over the baseline for a "cross" verdict.
  double margin = 0.05;
};

/// Everything a command needs. Built from per-task defaults, then a JSON
/// config file, then command-line flags; the result is echoed to
/// out/config.json and reading that file back reproduces the run.
struct RunSpec {
  Command command = Command::Train;
  TaskSpec task;
  ModelConfig model;
  TrainConfig train;
  GenConfig data;
  PropcheckOptions propcheck;
  GradcheckOptions gradcheck;
  CompareOptions compare;
  std::filesystem::path out = "out";
  std::filesystem::path checkpoint;  // eval input; defaults to out/checkpoint.bin
  std::filesystem::path dataset;     // eval input; generated validation pool when empty
  bool dump_data = false;            // train: also write train.jsonl / val.jsonl
  bool wall_clock = false;           // record real epoch durations in wall_ms
  bool quiet = false;
  std::uint64_t seed = 0;

  void validate() const;
};

// Defaults for a task: triplet loss with K = 16 for subset matching, the
// K-pair-set loss with K = 4 for superset matching and K = 16 for
// re-identification.
RunSpec default_spec(Command command, Task task);

// Applies a JSON object on top of `spec`. Unknown keys and ill-typed values
// throw ConfigError naming the key.
void apply_json(RunSpec& spec, const nlohmann::json& j);
nlohmann::ordered_json to_json(const RunSpec& spec);
// Reads `path` and layers it over the defaults of `task`, or of the task the
// file names when `task` is empty.
RunSpec load_spec(const std::filesystem::path& path, Command command, std::optional<Task> task = std::nullopt);

// Seeds of the independent random streams of one run. Data streams depend on
// the run seed only, so all variants trained with one seed see the same data.
struct RunSeeds {
  std::uint64_t model;
  std::uint64_t data;
  std::uint64_t train_pool;
  std::uint64_t val_pool;
  std::uint64_t shuffle;
};
RunSeeds run_seeds(std::uint64_t seed);

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  std::vector<double> step_losses;
  double initial_val_acc = 0.0;
  double final_val_acc = 0.0;
  ModelParams model;
};

// In-memory training run: generates the pools, trains, evaluates. No files.
TrainResult train_model(const RunSpec& spec);

// Commands. Each writes its artifacts under spec.out, prints a short summary
// to `log` and returns an exit code. Exceptions are mapped to exit codes by
// run_command.
int run_train(const RunSpec& spec, std::ostream& log);
int run_eval(const RunSpec& spec, std::ostream& log);
int run_propcheck(const RunSpec& spec, std::ostream& log);
int run_gradcheck(const RunSpec& spec, std::ostream& log);
int run_compare(const RunSpec& spec, std::ostream& log);
int run_command(const RunSpec& spec, std::ostream& log, std::ostream& err);

// --- property suite -----------------------------------------------------

struct PropertyResult {
  std::string name;
  bool passed = true;
  double worst = 0.0;        // worst deviation observed
  double tolerance = 0.0;
  std::size_t checks = 0;
  std::string worst_case;    // configuration and seed of the worst deviation
};

// Runs the exchangeability properties (permutation_invariance,
// permutation_equivariance, symmetry, two_set_permutation_equivariance) over
// `opts.configs` random configurations seeded from `seed`, cycling through
// `opts.variants`.
std::vector<PropertyResult> check_properties(const PropcheckOptions& opts, std::uint64_t seed, bool untie,
                                             std::size_t d_in);

// --- gradient check -----------------------------------------------------

struct BlockCheck {
  std::string name;
  double rel_error = 0.0;
  bool passed = true;
};

std::vector<BlockCheck> check_gradients(const ModelConfig& cfg, const TaskSpec& task, const GenConfig& data,
                                        const GradcheckOptions& opts, std::uint64_t seed);

// --- comparison ---------------------------------------------------------

struct VariantSummary {
  Variant variant = Variant::Attention;
  std::vector<double> val_acc;  // per seed
  double mean = 0.0;
  double spread = 0.0;          // sample standard deviation
};

struct ConditionReport {
  NoiseRatio noise_x;
  NoiseRatio noise_y;
  std::vector<VariantSummary> variants;
  // Whether every cross variant beats the baseline by at least the margin.
  bool cross_beats_baseline = false;
};

struct ComparisonReport {
  Task task = Task::Subset;
  std::vector<ConditionReport> conditions;
  // Per variant, whether mean accuracy is non-increasing along the sweep.
  std::vector<std::pair<Variant, bool>> monotone;
  std::string verdict;
};

ComparisonReport compare_variants(const RunSpec& spec, std::ostream* log = nullptr);
nlohmann::ordered_json to_json(const ComparisonReport& report);

}  // namespace ssm
