#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "ssm/cli/harness.hpp"
#include "ssm/errors.hpp"
#include "ssm/set_model/checkpoint.hpp"

namespace ssm {

namespace {

struct Pools {
  std::vector<CandidateBatch> train;
  std::vector<CandidateBatch> val;
};

Generator make_generator(const RunSpec& spec) {
  GenConfig g = spec.data;
  g.seed = run_seeds(spec.seed).data;
  return Generator(g);
}

Pools make_pools(const RunSpec& spec) {
  const RunSeeds seeds = run_seeds(spec.seed);
  const Generator gen = make_generator(spec);
  SeededRng train_rng(seeds.train_pool);
  SeededRng val_rng(seeds.val_pool);
  return Pools{make_pool(gen, spec.task, spec.train.train_pairs, spec.train.k, train_rng),
               make_pool(gen, spec.task, spec.train.val_pairs, spec.train.k_eval, val_rng)};
}

using EpochCallback = std::function<void(const EpochMetrics&, const ModelParams&)>;

TrainResult train_with(const RunSpec& spec, const Pools& pools, const EpochCallback& on_epoch,
                       const EpochHooks& hooks) {
  const RunSeeds seeds = run_seeds(spec.seed);
  TrainResult r;
  r.model = init_model(spec.model, seeds.model);
  const BatchScorer scorer = model_scorer(r.model);
  r.initial_val_acc = evaluate_accuracy(pools.val, scorer);
  r.final_val_acc = r.initial_val_acc;
  OptimizerState state = OptimizerState::zeros_like(r.model);
  SeededRng shuffle(seeds.shuffle);
  std::size_t step = 0;
  EpochHooks h = hooks;
  auto user_step = hooks.on_step;
  h.on_step = [&r, user_step](std::size_t s, double loss) {
    r.step_losses.push_back(loss);
    if (user_step) user_step(s, loss);
  };
  for (std::size_t e = 0; e < spec.train.epochs; ++e) {
    EpochMetrics m = train_epoch(r.model, pools.train, pools.val, spec.train, state, e, shuffle, step, h);
    r.epochs.push_back(m);
    r.final_val_acc = m.val_acc;
    if (on_epoch) on_epoch(m, r.model);
  }
  return r;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw FormatError("write to " + path.string() + " failed");
}

void prepare_out(const RunSpec& spec) {
  std::filesystem::create_directories(spec.out);
  write_text(spec.out / "config.json", to_json(spec).dump(2) + "\n");
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

TrainResult train_model(const RunSpec& spec) {
  spec.validate();
  return train_with(spec, make_pools(spec), {}, {});
}

int run_train(const RunSpec& spec, std::ostream& log) {
  spec.validate();
  prepare_out(spec);
  const Pools pools = make_pools(spec);
  if (spec.dump_data) {
    dump_pairs(spec.out / "train.jsonl", pools.train);
    dump_pairs(spec.out / "val.jsonl", pools.val);
  }
  std::ofstream metrics(spec.out / "metrics.jsonl", std::ios::trunc);
  if (!metrics) throw FormatError("cannot open " + (spec.out / "metrics.jsonl").string());
  const auto checkpoint = spec.out / "checkpoint.bin";
  EpochHooks hooks;
  hooks.measure_wall_time = spec.wall_clock;
  const EpochCallback on_epoch = [&](const EpochMetrics& m, const ModelParams& model) {
    metrics << metrics_json_line(m) << '\n' << std::flush;
    if ((m.epoch + 1) % spec.train.decay_every == 0) save_checkpoint(checkpoint, model);
    if (!spec.quiet) {
      log << "epoch " << m.epoch << " loss " << fixed(m.mean_loss) << " lr " << m.lr << " train_acc "
          << fixed(m.train_acc) << " val_acc " << fixed(m.val_acc) << '\n';
    }
  };
  const TrainResult r = train_with(spec, pools, on_epoch, hooks);
  save_checkpoint(checkpoint, r.model);
  write_learning_curve(spec.out / "learning_curve.csv", r.step_losses, pools.train.size());
  log << "train: " << r.epochs.size() << " epochs, final val_acc " << fixed(r.final_val_acc) << " (K="
      << spec.train.k_eval << ")\n";
  return kExitOk;
}

int run_eval(const RunSpec& spec, std::ostream& log) {
  spec.validate();
  std::filesystem::create_directories(spec.out);
  const auto path = spec.checkpoint.empty() ? spec.out / "checkpoint.bin" : spec.checkpoint;
  const ModelParams model = load_checkpoint(path);
  if (model.config.d_in != spec.data.d_in) {
    throw ConfigError("checkpoint expects items of width " + std::to_string(model.config.d_in) + ", data has " +
                      std::to_string(spec.data.d_in));
  }
  std::vector<CandidateBatch> batches;
  if (!spec.dataset.empty()) {
    batches = group_into_batches(load_pairs(spec.dataset), spec.train.k_eval);
  } else {
    batches = make_pools(spec).val;
  }
  const double acc = evaluate_accuracy(batches, model_scorer(model));
  nlohmann::ordered_json report;
  report["command"] = "eval";
  report["checkpoint"] = path.string();
  report["variant"] = to_string(model.config.variant);
  report["k"] = spec.train.k_eval;
  report["batches"] = batches.size();
  report["val_acc"] = acc;
  write_text(spec.out / "report.json", report.dump(2) + "\n");
  log << "eval: val_acc " << fixed(acc) << " over " << batches.size() << " batches (K=" << spec.train.k_eval
      << ")\n";
  return kExitOk;
}

int run_propcheck(const RunSpec& spec, std::ostream& log) {
  spec.validate();
  prepare_out(spec);
  const auto results = check_properties(spec.propcheck, spec.seed, spec.model.untie_directions, spec.data.d_in);
  bool all = true;
  nlohmann::ordered_json report;
  report["command"] = "propcheck";
  report["configs"] = spec.propcheck.configs;
  report["untie_directions"] = spec.model.untie_directions;
  report["properties"] = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    all = all && r.passed;
    nlohmann::ordered_json p;
    p["name"] = r.name;
    p["passed"] = r.passed;
    p["worst_deviation"] = r.worst;
    p["tolerance"] = r.tolerance;
    p["checks"] = r.checks;
    p["worst_case"] = r.worst_case;
    report["properties"].push_back(p);
    log << (r.passed ? "PASS " : "FAIL ") << r.name << " worst " << r.worst << " (tol " << r.tolerance << ") at "
        << r.worst_case << '\n';
  }
  report["passed"] = all;
  write_text(spec.out / "report.json", report.dump(2) + "\n");
  return all ? kExitOk : kExitFailure;
}

std::vector<BlockCheck> check_gradients(const ModelConfig& cfg, const TaskSpec& task, const GenConfig& data,
                                        const GradcheckOptions& opts, std::uint64_t seed) {
  const RunSeeds seeds = run_seeds(seed);
  GenConfig g = data;
  g.seed = seeds.data;
  const Generator gen(g);
  SeededRng data_rng(seeds.train_pool);
  const CandidateBatch batch = gen.make_batch(data_rng, task, opts.k);
  ModelParams model = init_model(cfg, seeds.model);
  TrainConfig tc;
  tc.loss = LossKind::KPair;
  SeededRng unused(0);
  batch_loss_and_grad(model, batch, tc, unused);

  std::vector<BlockCheck> out;
  for (auto& b : model.blocks()) {
    GradSlot* slot = b.slot;
    const Matrix original = slot->value;
    const ScalarFn f = [&](const Matrix& theta) {
      slot->value = theta;
      SeededRng r(0);
      return batch_loss(model, batch, tc, r);
    };
    const Matrix fd = finite_diff_grad(f, original, opts.eps);
    slot->value = original;
    const double err = relative_error(slot->grad, fd);
    out.push_back({b.name, err, err <= opts.threshold});
  }
  return out;
}

int run_gradcheck(const RunSpec& spec, std::ostream& log) {
  spec.validate();
  prepare_out(spec);
  const auto checks = check_gradients(spec.model, spec.task, spec.data, spec.gradcheck, spec.seed);
  bool all = true;
  double worst = 0.0;
  nlohmann::ordered_json report;
  report["command"] = "gradcheck";
  report["variant"] = to_string(spec.model.variant);
  report["threshold"] = spec.gradcheck.threshold;
  report["blocks"] = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    all = all && c.passed;
    worst = std::max(worst, c.rel_error);
    report["blocks"].push_back({{"name", c.name}, {"rel_error", c.rel_error}, {"passed", c.passed}});
    if (!c.passed) log << "FAIL " << c.name << " relative error " << c.rel_error << '\n';
  }
  report["worst_rel_error"] = worst;
  report["passed"] = all;
  write_text(spec.out / "report.json", report.dump(2) + "\n");
  log << "gradcheck: " << checks.size() << " blocks, worst relative error " << worst << (all ? ", pass\n" : ", FAIL\n");
  return all ? kExitOk : kExitFailure;
}

ComparisonReport compare_variants(const RunSpec& spec, std::ostream* log) {
  spec.validate();
  ComparisonReport report;
  report.task = spec.task.task;
  std::vector<std::pair<NoiseRatio, NoiseRatio>> grid;
  if (spec.task.task == Task::Reid && !spec.compare.noise_grid.empty()) {
    grid = spec.compare.noise_grid;
  } else {
    grid = {{spec.task.noise_x, spec.task.noise_y}};
  }
  for (const auto& [nx, ny] : grid) {
    ConditionReport cond;
    cond.noise_x = nx;
    cond.noise_y = ny;
    for (Variant v : spec.compare.variants) {
      VariantSummary vs;
      vs.variant = v;
      for (std::uint64_t seed : spec.compare.seeds) {
        RunSpec run = spec;
        run.command = Command::Train;
        run.model.variant = v;
        run.seed = seed;
        run.task.noise_x = nx;
        run.task.noise_y = ny;
        const TrainResult r = train_model(run);
        vs.val_acc.push_back(r.final_val_acc);
        if (log != nullptr) {
          *log << "compare: " << to_string(spec.task.task) << " (" << nx.to_string() << "," << ny.to_string()
               << ") " << to_string(v) << " seed " << seed << " val_acc " << fixed(r.final_val_acc) << std::endl;
        }
      }
      vs.mean = mean_of(vs.val_acc);
      vs.spread = sample_std(vs.val_acc);
      cond.variants.push_back(vs);
    }
    double baseline = NAN;
    for (const auto& vs : cond.variants) {
      if (vs.variant == Variant::Baseline) baseline = vs.mean;
    }
    cond.cross_beats_baseline = !std::isnan(baseline);
    for (const auto& vs : cond.variants) {
      if (vs.variant != Variant::Baseline && !(vs.mean - baseline >= spec.compare.margin)) {
        cond.cross_beats_baseline = false;
      }
    }
    report.conditions.push_back(cond);
  }
  for (std::size_t i = 0; i < spec.compare.variants.size(); ++i) {
    bool monotone = true;
    for (std::size_t c = 1; c < report.conditions.size(); ++c) {
      if (report.conditions[c].variants[i].mean > report.conditions[c - 1].variants[i].mean) monotone = false;
    }
    report.monotone.emplace_back(spec.compare.variants[i], monotone);
  }
  const ConditionReport& last = report.conditions.back();
  report.verdict = last.cross_beats_baseline ? "cross variants exceed baseline by at least " +
                                                   fixed(spec.compare.margin, 2) + " at the hardest condition"
                                             : "cross variants do not all exceed baseline by " +
                                                   fixed(spec.compare.margin, 2) + " at the hardest condition";
  return report;
}

nlohmann::ordered_json to_json(const ComparisonReport& report) {
  nlohmann::ordered_json j;
  j["command"] = "compare";
  j["task"] = to_string(report.task);
  j["conditions"] = nlohmann::ordered_json::array();
  for (const auto& c : report.conditions) {
    nlohmann::ordered_json cj;
    cj["noise_x"] = c.noise_x.to_string();
    cj["noise_y"] = c.noise_y.to_string();
    cj["variants"] = nlohmann::ordered_json::array();
    for (const auto& v : c.variants) {
      nlohmann::ordered_json vj;
      vj["variant"] = to_string(v.variant);
      vj["val_acc"] = v.val_acc;
      vj["mean"] = v.mean;
      vj["spread"] = v.spread;
      cj["variants"].push_back(vj);
    }
    cj["cross_beats_baseline"] = c.cross_beats_baseline;
    j["conditions"].push_back(cj);
  }
  nlohmann::ordered_json mono;
  for (const auto& [v, ok] : report.monotone) mono[std::string(to_string(v))] = ok;
  j["non_increasing_along_sweep"] = mono;
  j["verdict"] = report.verdict;
  return j;
}

int run_compare(const RunSpec& spec, std::ostream& log) {
  spec.validate();
  prepare_out(spec);
  const ComparisonReport report = compare_variants(spec, spec.quiet ? nullptr : &log);
  write_text(spec.out / "report.json", to_json(report).dump(2) + "\n");
  for (const auto& c : report.conditions) {
    log << "(" << c.noise_x.to_string() << "," << c.noise_y.to_string() << ")";
    for (const auto& v : c.variants) log << ' ' << to_string(v.variant) << '=' << fixed(v.mean);
    log << '\n';
  }
  log << "verdict: " << report.verdict << '\n';
  return kExitOk;
}

int run_command(const RunSpec& spec, std::ostream& log, std::ostream& err) {
  try {
    switch (spec.command) {
      case Command::Train: return run_train(spec, log);
      case Command::Eval: return run_eval(spec, log);
      case Command::Propcheck: return run_propcheck(spec, log);
      case Command::Gradcheck: return run_gradcheck(spec, log);
      case Command::Compare: return run_compare(spec, log);
    }
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace ssm
