// Command-line entry point: training, evaluation, property and gradient
// checks, and variant comparisons.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ssm/cli/harness.hpp"
#include "ssm/errors.hpp"

namespace {

void set_width(ssm::ModelConfig& m, std::size_t d, std::size_t heads) {
  if (heads == 0 || d % heads != 0) {
    throw ssm::ConfigError("--d (" + std::to_string(d) + ") must be a positive multiple of --heads (" +
                           std::to_string(heads) + ")");
  }
  m.d = d;
  m.heads = heads;
  m.d_g = d / heads;
  m.d_w = d / heads;
  m.ffn_hidden = 2 * d;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Set-to-set matching: train, evaluate and check cross-set matching models"};
  app.require_subcommand(1, 1);

  std::string task, variant, config, out, noise_x, noise_y, checkpoint, dataset;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, k, k_eval, d, heads, layers, configs;
  bool untie = false, wall_clock = false, dump_data = false, quiet = false;

  for (const char* name : {"train", "eval", "propcheck", "gradcheck", "compare"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--task", task, "subset | superset | reid");
    sub->add_option("--variant", variant, "attention | affinity | baseline (propcheck: check only this one)");
    sub->add_option("--config", config, "JSON run specification");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "run seed");
    sub->add_option("--epochs", epochs);
    sub->add_option("--k", k, "candidates per training batch");
    sub->add_option("--k-eval", k_eval, "candidates per evaluation batch");
    sub->add_option("--d", d, "model width");
    sub->add_option("--heads", heads);
    sub->add_option("--layers", layers);
    sub->add_option("--noise-x", noise_x, "re-identification noise ratio of the reference side, a/b");
    sub->add_option("--noise-y", noise_y, "re-identification noise ratio of the query side, a/b");
    sub->add_option("--checkpoint", checkpoint, "eval: checkpoint to load");
    sub->add_option("--dataset", dataset, "eval: JSON-lines dataset instead of the generated pool");
    sub->add_option("--configs", configs, "propcheck: number of random configurations");
    sub->add_flag("--untie", untie, "give the two cross-set directions separate weights");
    sub->add_flag("--wall-clock", wall_clock, "record real epoch durations in wall_ms");
    sub->add_flag("--dump-data", dump_data, "train: write the generated pools as JSON lines");
    sub->add_flag("--quiet", quiet);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return ssm::kExitConfig;
  }

  ssm::RunSpec spec;
  try {
    const ssm::Command command = ssm::parse_command(app.get_subcommands().front()->get_name());
    std::optional<ssm::Task> task_flag;
    if (!task.empty()) task_flag = ssm::parse_task(task);
    spec = config.empty() ? ssm::default_spec(command, task_flag.value_or(ssm::Task::Subset))
                          : ssm::load_spec(config, command, task_flag);
    if (!variant.empty()) {
      spec.model.variant = ssm::parse_variant(variant);
      if (command == ssm::Command::Propcheck) spec.propcheck.variants = {spec.model.variant};
    }
    if (!out.empty()) spec.out = out;
    if (seed) spec.seed = *seed;
    if (epochs) spec.train.epochs = *epochs;
    if (k) spec.train.k = *k;
    if (k_eval) spec.train.k_eval = *k_eval;
    if (d || heads) set_width(spec.model, d.value_or(spec.model.d), heads.value_or(spec.model.heads));
    if (layers) spec.model.layers = *layers;
    if (!noise_x.empty()) spec.task.noise_x = ssm::NoiseRatio::parse(noise_x);
    if (!noise_y.empty()) spec.task.noise_y = ssm::NoiseRatio::parse(noise_y);
    if (!checkpoint.empty()) spec.checkpoint = checkpoint;
    if (!dataset.empty()) spec.dataset = dataset;
    if (configs) spec.propcheck.configs = *configs;
    if (untie) spec.model.untie_directions = true;
    if (wall_clock) spec.wall_clock = true;
    if (dump_data) spec.dump_data = true;
    if (quiet) spec.quiet = true;
  } catch (const ssm::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return ssm::kExitConfig;
  }
  return ssm::run_command(spec, std::cout, std::cerr);
}
