#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ssm/matching/model.hpp"
#include "ssm/numeric/matrix.hpp"
#include "ssm/numeric/rng.hpp"
#include "ssm/training/batch.hpp"

namespace ssm {

enum class LossKind { KPair, Triplet };
std::string_view to_string(LossKind k);
LossKind parse_loss_kind(std::string_view name);

struct TrainConfig {
  double lr0 = 0.005;
  double momentum = 0.5;
  double weight_decay = 4e-5;
  double decay_factor = 0.7;
  std::size_t decay_every = 16;
  // Rescales the joint gradient to at most this L2 norm before each step.
  // 0 disables clipping.
  double grad_clip = 0.0;
  std::size_t k = 16;       // candidates per training batch
  std::size_t k_eval = 4;   // candidates per validation batch
  std::size_t epochs = 64;
  LossKind loss = LossKind::KPair;
  bool symmetric_kpair = false;
  std::size_t train_pairs = 2048;
  std::size_t val_pairs = 512;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Momentum buffers, one per parameter block in canonical order.
struct OptimizerState {
  std::vector<Matrix> velocity;

  static OptimizerState zeros_like(const ModelParams& model);
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  std::int64_t wall_ms = 0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

// --- losses -------------------------------------------------------------

// (1/K) sum_j -log softmax(S[j])[j], via a stable log-sum-exp. With
// `symmetric`, the mean of that and the same term over columns.
double kpair_set_loss(const Matrix& scores, bool symmetric = false);
// log(1 + exp(s_neg - s_pos)), stable for large differences.
double triplet_softplus_loss(double s_pos, double s_neg);

double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

// g' = grad + wd * theta; v = momentum * v + g'; theta -= lr * v.
// Throws DimensionError when the three shapes disagree.
void sgd_step(Matrix& theta, const Matrix& grad, Matrix& velocity, double lr, double momentum, double weight_decay);
// Applies sgd_step to every block of `model` using the gradients stored in
// the slots, after clipping them jointly when cfg.grad_clip > 0.
void sgd_update(ModelParams& model, OptimizerState& state, double lr, const TrainConfig& cfg);

// --- scoring ------------------------------------------------------------

using PairScorer = std::function<double(const FeatureSet& x, const FeatureSet& y)>;
// Produces the K x K score matrix of a batch.
using BatchScorer = std::function<Matrix(const CandidateBatch& batch)>;

// S[j][k] = scorer(X_j, Y_k).
Matrix score_matrix(const CandidateBatch& batch, const PairScorer& scorer);
// Model scores of every cross pair, sharing per-set computation.
Matrix score_matrix(const CandidateBatch& batch, const ModelParams& model);

BatchScorer pair_scorer(PairScorer scorer);
BatchScorer model_scorer(const ModelParams& model);

// Number of rows whose argmax (lowest index on ties) is the diagonal.
std::size_t correct_rows(const Matrix& scores);
double evaluate_accuracy(std::span<const CandidateBatch> batches, const BatchScorer& scorer);

// --- training -----------------------------------------------------------

// Loss of one batch under cfg.loss. Leaves the gradient of the loss in every
// parameter slot (slots are overwritten, not accumulated). Triplet negatives
// are drawn from `rng`.
double batch_loss_and_grad(ModelParams& model, const CandidateBatch& batch, const TrainConfig& cfg, SeededRng& rng);
// Loss only; draws triplet negatives the same way.
double batch_loss(const ModelParams& model, const CandidateBatch& batch, const TrainConfig& cfg, SeededRng& rng);

struct EpochHooks {
  // Called after every optimizer step with the global step index.
  std::function<void(std::size_t step, double loss)> on_step;
  // Left off, wall_ms stays 0 so that metrics are reproducible byte for byte.
  bool measure_wall_time = false;
};

// One pass over `train` in an order shuffled by `rng`, one optimizer step per
// batch. train_acc is measured after the pass on the first (at most) 8
// training batches, val_acc on all of `val`. Throws NumericalError naming the
// epoch and batch when a loss is not finite.
EpochMetrics train_epoch(ModelParams& model, std::span<const CandidateBatch> train,
                         std::span<const CandidateBatch> val, const TrainConfig& cfg, OptimizerState& state,
                         std::size_t epoch, SeededRng& rng, std::size_t& step, const EpochHooks& hooks = {});

// --- artifacts ----------------------------------------------------------

// {"epoch":..,"loss":..,"lr":..,"train_acc":..,"val_acc":..,"wall_ms":..}
std::string metrics_json_line(const EpochMetrics& m);
// Trailing moving average over at most `window` values ending at each index.
std::vector<double> moving_average(std::span<const double> values, std::size_t window);
// CSV with header step,epoch,loss,smoothed_loss.
void write_learning_curve(const std::filesystem::path& path, std::span<const double> step_losses,
                          std::size_t steps_per_epoch, std::size_t window = 30);

}  // namespace ssm
