#include "ssm/training/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "ssm/errors.hpp"
#include "ssm/numeric/ops.hpp"
#include "ssm/numeric/tape.hpp"

namespace ssm {

namespace {

constexpr std::size_t kTrainAccBatches = 8;

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

std::size_t draw_negative(SeededRng& rng, std::size_t k, std::size_t j) {
  std::size_t n = rng.uniform_int(k - 1);
  return n >= j ? n + 1 : n;
}

// Loss node for one batch under cfg.loss.
Var build_loss(Tape& t, const ModelParams& model, const CandidateBatch& batch, const TrainConfig& cfg,
               SeededRng& rng) {
  batch.validate();
  const std::size_t k = batch.k();
  ScoreGraph graph(t, model);
  std::vector<Var> sx, sy;
  sx.reserve(k);
  sy.reserve(k);
  for (const SetPair& p : batch.pairs) {
    sx.push_back(graph.stem(p.x));
    sy.push_back(graph.stem(p.y));
  }
  if (cfg.loss == LossKind::KPair) {
    std::vector<Var> cells;
    cells.reserve(k * k);
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t c = 0; c < k; ++c) cells.push_back(graph.score(sx[j], sy[c]));
    }
    return ad::kpair_set_loss(ad::stack_scalars(cells, k, k), cfg.symmetric_kpair);
  }
  std::vector<Var> pos, neg;
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t n = draw_negative(rng, k, j);
    pos.push_back(graph.score(sx[j], sy[j]));
    neg.push_back(graph.score(sx[j], sy[n]));
  }
  Var margin = ad::sub(ad::stack_scalars(neg, k, 1), ad::stack_scalars(pos, k, 1));
  return ad::mean_all(ad::softplus(margin));
}

}  // namespace

std::string_view to_string(LossKind k) { return k == LossKind::KPair ? "kpair" : "triplet"; }

LossKind parse_loss_kind(std::string_view name) {
  if (name == "kpair") return LossKind::KPair;
  if (name == "triplet") return LossKind::Triplet;
  throw ConfigError("unknown loss '" + std::string(name) + "' (expected kpair or triplet)");
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw ConfigError("train: lr0 must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be non-negative");
  if (!(decay_factor > 0.0)) throw ConfigError("train: decay_factor must be positive");
  if (!(grad_clip >= 0.0)) throw ConfigError("train: grad_clip must be non-negative");
  if (decay_every == 0) throw ConfigError("train: decay_every must be at least 1");
  if (k < 2) throw ConfigError("train: k must be at least 2");
  if (k_eval < 2) throw ConfigError("train: k_eval must be at least 2");
  if (train_pairs < k) throw ConfigError("train: train_pairs must hold at least one batch of k pairs");
  if (val_pairs < k_eval) throw ConfigError("train: val_pairs must hold at least one batch of k_eval pairs");
}

OptimizerState OptimizerState::zeros_like(const ModelParams& model) {
  OptimizerState s;
  for (const auto& b : model.blocks()) s.velocity.emplace_back(b.slot->value.rows(), b.slot->value.cols());
  return s;
}

double kpair_set_loss(const Matrix& scores, bool symmetric) {
  const std::size_t k = scores.rows();
  if (k == 0 || scores.cols() != k) throw DimensionError("kpair_set_loss: expected a square matrix, got " +
                                                         scores.shape_string());
  double rows = 0.0;
  for (std::size_t j = 0; j < k; ++j) rows += log_sum_exp(scores.row(j)) - scores(j, j);
  rows /= static_cast<double>(k);
  if (!symmetric) return rows;
  const Matrix st = transpose(scores);
  double cols = 0.0;
  for (std::size_t j = 0; j < k; ++j) cols += log_sum_exp(st.row(j)) - st(j, j);
  cols /= static_cast<double>(k);
  return 0.5 * (rows + cols);
}

double triplet_softplus_loss(double s_pos, double s_neg) {
  const double z = s_neg - s_pos;
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.lr0 * std::pow(cfg.decay_factor, static_cast<double>(epoch / cfg.decay_every));
}

void sgd_step(Matrix& theta, const Matrix& grad, Matrix& velocity, double lr, double momentum, double weight_decay) {
  if (theta.rows() != grad.rows() || theta.cols() != grad.cols() || theta.rows() != velocity.rows() ||
      theta.cols() != velocity.cols()) {
    throw DimensionError("sgd_step: parameter " + theta.shape_string() + ", gradient " + grad.shape_string() +
                         " and velocity " + velocity.shape_string() + " disagree");
  }
  auto th = theta.data();
  auto g = grad.data();
  auto v = velocity.data();
  for (std::size_t i = 0; i < th.size(); ++i) {
    v[i] = momentum * v[i] + (g[i] + weight_decay * th[i]);
    th[i] -= lr * v[i];
  }
}

void sgd_update(ModelParams& model, OptimizerState& state, double lr, const TrainConfig& cfg) {
  auto blocks = model.blocks();
  if (state.velocity.size() != blocks.size()) {
    throw DimensionError("sgd_update: optimizer holds " + std::to_string(state.velocity.size()) +
                         " blocks, model has " + std::to_string(blocks.size()));
  }
  if (cfg.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& b : blocks)
      for (double g : b.slot->grad.data()) sq += g * g;
    const double norm = std::sqrt(sq);
    // A non-finite norm is left alone so the loss check still reports it.
    if (std::isfinite(norm) && norm > cfg.grad_clip) {
      const double scale = cfg.grad_clip / norm;
      for (auto& b : blocks)
        for (double& g : b.slot->grad.data()) g *= scale;
    }
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    sgd_step(blocks[i].slot->value, blocks[i].slot->grad, state.velocity[i], lr, cfg.momentum, cfg.weight_decay);
  }
}

Matrix score_matrix(const CandidateBatch& batch, const PairScorer& scorer) {
  batch.validate();
  const std::size_t k = batch.k();
  Matrix s(k, k);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t c = 0; c < k; ++c) s(j, c) = scorer(batch.pairs[j].x, batch.pairs[c].y);
  }
  return s;
}

Matrix score_matrix(const CandidateBatch& batch, const ModelParams& model) {
  batch.validate();
  const std::size_t k = batch.k();
  Tape t(false);
  ScoreGraph graph(t, model);
  std::vector<Var> sx, sy;
  for (const SetPair& p : batch.pairs) {
    sx.push_back(graph.stem(p.x));
    sy.push_back(graph.stem(p.y));
  }
  Matrix s(k, k);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t c = 0; c < k; ++c) s(j, c) = graph.score(sx[j], sy[c]).value()(0, 0);
  }
  return s;
}

BatchScorer pair_scorer(PairScorer scorer) {
  return [scorer = std::move(scorer)](const CandidateBatch& b) { return score_matrix(b, scorer); };
}

BatchScorer model_scorer(const ModelParams& model) {
  return [&model](const CandidateBatch& b) { return score_matrix(b, model); };
}

std::size_t correct_rows(const Matrix& scores) {
  std::size_t correct = 0;
  for (std::size_t j = 0; j < scores.rows(); ++j) {
    const auto row = scores.row(j);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == j) ++correct;
  }
  return correct;
}

double evaluate_accuracy(std::span<const CandidateBatch> batches, const BatchScorer& scorer) {
  std::size_t correct = 0, total = 0;
  for (const CandidateBatch& b : batches) {
    correct += correct_rows(scorer(b));
    total += b.k();
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

double batch_loss_and_grad(ModelParams& model, const CandidateBatch& batch, const TrainConfig& cfg,
                           SeededRng& rng) {
  Tape t;
  Var loss = build_loss(t, model, batch, cfg, rng);
  t.backward(loss);
  for (auto& b : model.blocks()) {
    const Matrix* g = t.param_grad(*b.slot);
    if (g != nullptr) {
      b.slot->grad = *g;
    } else {
      b.slot->zero_grad();
    }
  }
  return loss.value()(0, 0);
}

double batch_loss(const ModelParams& model, const CandidateBatch& batch, const TrainConfig& cfg, SeededRng& rng) {
  Tape t(false);
  return build_loss(t, model, batch, cfg, rng).value()(0, 0);
}

EpochMetrics train_epoch(ModelParams& model, std::span<const CandidateBatch> train,
                         std::span<const CandidateBatch> val, const TrainConfig& cfg, OptimizerState& state,
                         std::size_t epoch, SeededRng& rng, std::size_t& step, const EpochHooks& hooks) {
  const auto start = std::chrono::steady_clock::now();
  EpochMetrics m;
  m.epoch = epoch;
  m.lr = lr_schedule(epoch, cfg);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  double total = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const double loss = batch_loss_and_grad(model, train[order[i]], cfg, rng);
    if (!std::isfinite(loss)) {
      throw NumericalError("non-finite loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(order[i]) + " (step " + std::to_string(i) + " of the epoch)");
    }
    sgd_update(model, state, m.lr, cfg);
    total += loss;
    if (hooks.on_step) hooks.on_step(step, loss);
    ++step;
  }
  m.mean_loss = order.empty() ? 0.0 : total / static_cast<double>(order.size());
  const BatchScorer scorer = model_scorer(model);
  m.train_acc = evaluate_accuracy(train.first(std::min(train.size(), kTrainAccBatches)), scorer);
  m.val_acc = evaluate_accuracy(val, scorer);
  if (hooks.measure_wall_time) {
    m.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
                    .count();
  }
  return m;
}

std::string metrics_json_line(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["loss"] = m.mean_loss;
  j["lr"] = m.lr;
  j["train_acc"] = m.train_acc;
  j["val_acc"] = m.val_acc;
  j["wall_ms"] = m.wall_ms;
  return j.dump();
}

std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  if (window == 0) throw PreconditionError("moving_average: window must be positive");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
    double sum = 0.0;
    for (std::size_t j = lo; j <= i; ++j) sum += values[j];
    out[i] = sum / static_cast<double>(i + 1 - lo);
  }
  return out;
}

void write_learning_curve(const std::filesystem::path& path, std::span<const double> step_losses,
                          std::size_t steps_per_epoch, std::size_t window) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  const std::vector<double> smooth = moving_average(step_losses, window);
  out << "step,epoch,loss,smoothed_loss\n";
  char buf[128];
  for (std::size_t i = 0; i < step_losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g\n", i, steps_per_epoch == 0 ? 0 : i / steps_per_epoch,
                  step_losses[i], smooth[i]);
    out << buf;
  }
  if (!out) throw FormatError("write to " + path.string() + " failed");
}

}  // namespace ssm
