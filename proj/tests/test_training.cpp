#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "ssm/cli/harness.hpp"
#include "ssm/errors.hpp"
#include "ssm/matching/model.hpp"
#include "ssm/numeric/grad.hpp"
#include "ssm/set_model/checkpoint.hpp"
#include "ssm/synthdata/synthdata.hpp"
#include "ssm/training/training.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace ssm;

namespace {

CandidateBatch toy_batch(SeededRng& rng, std::size_t k, std::size_t d_in) {
  CandidateBatch b;
  for (std::size_t j = 0; j < k; ++j) {
    b.pairs.push_back({gen::feature_set(rng, gen::between(rng, 1, 4), d_in),
                       gen::feature_set(rng, gen::between(rng, 1, 4), d_in)});
  }
  return b;
}

ModelConfig small_model(Variant v, std::size_t d_in = 5) {
  ModelConfig cfg = ModelConfig::with_width(d_in, 8, 2, 2, v);
  cfg.ffn_hidden = 16;
  return cfg;
}

// --- losses -------------------------------------------------------------

TEST(KPairLoss, UniformScoresGiveLogK) {
  EXPECT_NEAR(kpair_set_loss(Matrix(16, 16, 0.3)), 2.772588722239781, 1e-12);
  EXPECT_NEAR(kpair_set_loss(Matrix(4, 4, -2.0)), std::log(4.0), 1e-12);
}

TEST(KPairLoss, SharpDiagonalVanishes) {
  Matrix s(4, 4);
  for (std::size_t j = 0; j < 4; ++j) s(j, j) = 40.0;
  EXPECT_LT(kpair_set_loss(s), 1e-10);
  EXPECT_GE(kpair_set_loss(s), 0.0);
}

TEST(KPairLoss, TwoByTwoExample) {
  // Rows: log(1 + e^-2) and log(1 + e^-1), averaged.
  const double expect = 0.5 * (std::log1p(std::exp(-2.0)) + std::log1p(std::exp(-1.0)));
  EXPECT_NEAR(kpair_set_loss(Matrix{{2, 0}, {0, 1}}), expect, 1e-15);
  EXPECT_NEAR(expect, 0.2201, 1e-4);
}

TEST(KPairLoss, MatchesOracleAndIsShiftInvariantPerRow) {
  SeededRng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t k = gen::between(rng, 2, 9);
    Matrix s = gen::uniform(rng, k, k, -5.0, 5.0);
    const double loss = kpair_set_loss(s);
    EXPECT_NEAR(loss, oracle::kpair_loss(oracle::rows_of(s)), 1e-12);
    EXPECT_GE(loss, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      const double c = 10.0 * (rng.uniform() - 0.5);
      for (std::size_t i = 0; i < k; ++i) s(j, i) += c;
    }
    EXPECT_NEAR(kpair_set_loss(s), loss, 1e-12) << "trial " << trial;
  }
}

TEST(KPairLoss, StableForLargeScores) {
  Matrix s{{800, 0, 0}, {0, 800, -800}, {1000, 0, 900}};
  const double loss = kpair_set_loss(s);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_NEAR(loss, 100.0 / 3.0, 1e-9);
}

TEST(KPairLoss, SymmetricAveragesRowsAndColumns) {
  const Matrix s{{2, 0, 1}, {0, 1, 3}, {-1, 0, 0}};
  const double expect = 0.5 * (kpair_set_loss(s) + kpair_set_loss(transpose(s)));
  EXPECT_NEAR(kpair_set_loss(s, true), expect, 1e-14);
}

TEST(KPairLoss, RejectsNonSquare) { EXPECT_THROW(kpair_set_loss(Matrix(2, 3)), DimensionError); }

TEST(TripletLoss, Examples) {
  EXPECT_NEAR(triplet_softplus_loss(0.7, 0.7), std::log(2.0), 1e-15);
  EXPECT_LT(triplet_softplus_loss(40.0, 0.0), 1e-10);
  EXPECT_NEAR(triplet_softplus_loss(1.0, 0.0), 0.31326, 1e-5);
  EXPECT_NEAR(triplet_softplus_loss(0.0, 800.0), 800.0, 1e-9);
}

// --- schedule and optimizer ---------------------------------------------

TEST(LrSchedule, StepsEverySixteenEpochs) {
  const TrainConfig cfg;
  EXPECT_DOUBLE_EQ(lr_schedule(0, cfg), 0.005);
  EXPECT_DOUBLE_EQ(lr_schedule(15, cfg), 0.005);
  EXPECT_NEAR(lr_schedule(16, cfg), 0.0035, 1e-15);
  EXPECT_NEAR(lr_schedule(32, cfg), 0.00245, 1e-15);
  EXPECT_NEAR(lr_schedule(63, cfg), 0.005 * std::pow(0.7, 3), 1e-15);
}

TEST(Sgd, VanillaStep) {
  Matrix theta{{1.0, -2.0}}, v(1, 2);
  sgd_step(theta, Matrix{{0.5, 1.0}}, v, 0.1, 0.0, 0.0);
  EXPECT_NEAR(theta(0, 0), 0.95, 1e-15);
  EXPECT_NEAR(theta(0, 1), -2.1, 1e-15);
}

TEST(Sgd, ZeroGradientOnlyDecays) {
  Matrix theta{{2.0}}, v{{0.0}};
  sgd_step(theta, Matrix{{0.0}}, v, 0.1, 0.5, 0.0);
  EXPECT_EQ(theta(0, 0), 2.0);
  sgd_step(theta, Matrix{{0.0}}, v, 0.1, 0.5, 0.01);
  EXPECT_NEAR(v(0, 0), 0.02, 1e-15);
  EXPECT_NEAR(theta(0, 0), 2.0 - 0.002, 1e-15);
}

TEST(Sgd, MomentumAccumulates) {
  // v1 = 1, theta = 0.9; v2 = 0.5 + 1 = 1.5, theta = 0.75.
  Matrix theta{{1.0}}, v{{0.0}};
  sgd_step(theta, Matrix{{1.0}}, v, 0.1, 0.5, 0.0);
  sgd_step(theta, Matrix{{1.0}}, v, 0.1, 0.5, 0.0);
  EXPECT_NEAR(theta(0, 0), 0.75, 1e-15);
}

TEST(Sgd, ShapeMismatchThrows) {
  Matrix theta(2, 2), v(2, 2);
  EXPECT_THROW(sgd_step(theta, Matrix(2, 3), v, 0.1, 0.5, 0.0), DimensionError);
}

TEST(Sgd, UpdateTouchesEveryBlock) {
  ModelParams m = init_model(small_model(Variant::Attention), 3);
  const ModelParams ref = m;
  OptimizerState state = OptimizerState::zeros_like(m);
  for (auto& b : m.blocks()) b.slot->grad = Matrix(b.slot->value.rows(), b.slot->value.cols(), 1.0);
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  sgd_update(m, state, 0.01, cfg);
  const auto a = m.blocks();
  const auto b = ref.blocks();
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_LE(max_abs_diff(a[i].slot->value, sub(b[i].slot->value, Matrix(b[i].slot->value.rows(), b[i].slot->value.cols(), 0.01))), 1e-15) << a[i].name;
  }
}

TEST(Sgd, ClipBoundsTheJointStep) {
  ModelParams m = init_model(small_model(Variant::Affinity), 3);
  const ModelParams ref = m;
  OptimizerState state = OptimizerState::zeros_like(m);
  std::size_t n = 0;
  for (auto& b : m.blocks()) {
    b.slot->grad = Matrix(b.slot->value.rows(), b.slot->value.cols(), 3.0);
    n += b.slot->value.data().size();
  }
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  cfg.grad_clip = 2.0;
  sgd_update(m, state, 1.0, cfg);
  // Every coordinate moves by the same amount, so the step norm is sqrt(n) * delta.
  const double delta = 2.0 / std::sqrt(static_cast<double>(n));
  const auto a = m.blocks();
  const auto b = ref.blocks();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto av = a[i].slot->value.data();
    const auto bv = b[i].slot->value.data();
    for (std::size_t j = 0; j < av.size(); ++j) EXPECT_NEAR(bv[j] - av[j], delta, 1e-14) << a[i].name;
  }
}

TEST(Sgd, ClipLeavesSmallGradientsAlone) {
  ModelParams m = init_model(small_model(Variant::Attention), 3);
  ModelParams plain = m;
  for (auto* p : {&m, &plain})
    for (auto& b : p->blocks()) b.slot->grad = Matrix(b.slot->value.rows(), b.slot->value.cols(), 1e-4);
  OptimizerState s1 = OptimizerState::zeros_like(m), s2 = OptimizerState::zeros_like(plain);
  TrainConfig clipped;
  clipped.grad_clip = 10.0;
  sgd_update(m, s1, 0.01, clipped);
  sgd_update(plain, s2, 0.01, TrainConfig{});
  const auto a = m.blocks();
  const auto b = plain.blocks();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(max_abs_diff(a[i].slot->value, b[i].slot->value), 0.0);
}

TEST(TrainConfig, NegativeClipRejected) {
  TrainConfig cfg;
  cfg.grad_clip = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

// --- scoring ------------------------------------------------------------

TEST(ScoreMatrix, IdenticalCandidatesGiveIdenticalColumns) {
  SeededRng rng(31);
  const ModelParams m = init_model(small_model(Variant::Affinity), 4);
  CandidateBatch b = toy_batch(rng, 2, 5);
  b.pairs[1].y = b.pairs[0].y;
  const Matrix s = score_matrix(b, m);
  EXPECT_EQ(s(0, 0), s(0, 1));
  EXPECT_EQ(s(1, 0), s(1, 1));
}

TEST(ScoreMatrix, CandidateItemOrderDoesNotMatter) {
  SeededRng rng(32);
  const ModelParams m = init_model(small_model(Variant::Attention), 5);
  const CandidateBatch b = toy_batch(rng, 3, 5);
  CandidateBatch p = b;
  for (auto& pair : p.pairs) pair.y = pair.y.permuted(gen::permutation(rng, pair.y.size()));
  EXPECT_LE(max_abs_diff(score_matrix(b, m), score_matrix(p, m)), 1e-9);
}

TEST(ScoreMatrix, CellsMatchPairScores) {
  SeededRng rng(33);
  for (Variant v : {Variant::Attention, Variant::Affinity, Variant::Baseline}) {
    const ModelParams m = init_model(small_model(v), 6);
    const CandidateBatch b = toy_batch(rng, 3, 5);
    const Matrix s = score_matrix(b, m);
    for (std::size_t j = 0; j < 3; ++j) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double oracle =
            oracle::model_score(m, oracle::rows_of(b.pairs[j].x.items()), oracle::rows_of(b.pairs[c].y.items()));
        EXPECT_NEAR(s(j, c), oracle, 1e-13) << to_string(v) << " cell " << j << "," << c;
      }
    }
  }
}

// --- accuracy -----------------------------------------------------------

TEST(Accuracy, DiagonalScorerIsPerfect) {
  SeededRng rng(41);
  std::vector<CandidateBatch> batches;
  for (int i = 0; i < 5; ++i) batches.push_back(toy_batch(rng, 4, 3));
  const BatchScorer oracle = [](const CandidateBatch& b) {
    Matrix s(b.k(), b.k());
    for (std::size_t j = 0; j < b.k(); ++j) s(j, j) = 1.0;
    return s;
  };
  EXPECT_EQ(evaluate_accuracy(batches, oracle), 1.0);
}

TEST(Accuracy, ConstantScorerCreditsFirstRowOnly) {
  SeededRng rng(42);
  std::vector<CandidateBatch> batches;
  for (int i = 0; i < 6; ++i) batches.push_back(toy_batch(rng, 4, 3));
  const BatchScorer constant = pair_scorer([](const FeatureSet&, const FeatureSet&) { return 0.5; });
  EXPECT_DOUBLE_EQ(evaluate_accuracy(batches, constant), 0.25);
}

TEST(Accuracy, RandomScorerIsNearChance) {
  SeededRng data(43);
  std::vector<CandidateBatch> batches;
  for (int i = 0; i < 200; ++i) batches.push_back(toy_batch(data, 5, 2));
  SeededRng noise(44);
  const BatchScorer random = pair_scorer([&noise](const FeatureSet&, const FeatureSet&) { return noise.uniform(); });
  EXPECT_NEAR(evaluate_accuracy(batches, random), 0.20, 0.04);
}

TEST(Accuracy, CorrectRowsUsesLowestIndexOnTies) {
  EXPECT_EQ(correct_rows(Matrix{{1, 1}, {1, 1}}), 1u);
  EXPECT_EQ(correct_rows(Matrix{{0, 1}, {2, 1}}), 0u);
}

// --- gradients and steps ------------------------------------------------

void expect_loss_gradients_match(LossKind loss) {
  for (Variant v : {Variant::Attention, Variant::Affinity, Variant::Baseline}) {
    SeededRng rng(51);
    ModelParams m = init_model(small_model(v), 7);
    const CandidateBatch b = toy_batch(rng, 3, 5);
    TrainConfig cfg;
    cfg.loss = loss;
    SeededRng draw(99);
    batch_loss_and_grad(m, b, cfg, draw);
    for (auto& block : m.blocks()) {
      const Matrix analytic = block.slot->grad;
      const Matrix saved = block.slot->value;
      const auto f = [&](const Matrix& theta) {
        block.slot->value = theta;
        SeededRng same(99);
        const double l = batch_loss(m, b, cfg, same);
        block.slot->value = saved;
        return l;
      };
      const Matrix numeric = finite_diff_grad(f, saved);
      EXPECT_LE(relative_error(analytic, numeric), 1e-5) << to_string(v) << " " << block.name;
    }
  }
}

TEST(BatchGradient, KPairMatchesFiniteDifferences) { expect_loss_gradients_match(LossKind::KPair); }
TEST(BatchGradient, TripletMatchesFiniteDifferences) { expect_loss_gradients_match(LossKind::Triplet); }

TEST(BatchGradient, LossAgreesWithValueOnlyPath) {
  SeededRng rng(52);
  ModelParams m = init_model(small_model(Variant::Attention), 8);
  const CandidateBatch b = toy_batch(rng, 4, 5);
  TrainConfig cfg;
  SeededRng a(1), c(1);
  EXPECT_EQ(batch_loss_and_grad(m, b, cfg, a), batch_loss(m, b, cfg, c));
  const Matrix s = score_matrix(b, m);
  EXPECT_NEAR(batch_loss(m, b, cfg, c), kpair_set_loss(s), 1e-13);
}

RunSpec subset_spec(Variant v) {
  RunSpec spec = default_spec(Command::Train, Task::Subset);
  spec.model.variant = v;
  spec.quiet = true;
  return spec;
}

// The loss at random weights varies with the draw of the weights, so the
// check is on its mean over ten draws, each averaged over eight batches.
TEST(Training, InitialKPairLossNearLogK) {
  for (Variant v : {Variant::Attention, Variant::Affinity, Variant::Baseline}) {
    RunSpec spec = subset_spec(v);
    TrainConfig cfg;
    cfg.loss = LossKind::KPair;
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const RunSeeds rs = run_seeds(seed);
      GenConfig data = spec.data;
      data.seed = rs.data;
      SeededRng pool_rng(rs.train_pool);
      const auto pool = make_pool(Generator(data), spec.task, 16 * 8, 16, pool_rng);
      const ModelParams m = init_model(spec.model, rs.model);
      for (const auto& b : pool) {
        SeededRng draw(0);
        total += batch_loss(m, b, cfg, draw) / static_cast<double>(pool.size());
      }
    }
    EXPECT_NEAR(total / 10.0, std::log(16.0), 0.3) << to_string(v);
  }
}

TEST(Training, SmallStepDecreasesLoss) {
  for (Variant v : {Variant::Attention, Variant::Affinity, Variant::Baseline}) {
    RunSpec spec = subset_spec(v);
    const Generator g(spec.data);
    SeededRng rng(63);
    const CandidateBatch b = g.make_subset_batch(rng, 16);
    ModelParams m = init_model(spec.model, 64);
    TrainConfig cfg;
    cfg.loss = LossKind::KPair;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    SeededRng draw(0);
    const double before = batch_loss_and_grad(m, b, cfg, draw);
    OptimizerState state = OptimizerState::zeros_like(m);
    sgd_update(m, state, 1e-5, cfg);
    EXPECT_LT(batch_loss(m, b, cfg, draw), before) << to_string(v);
  }
}

TEST(Training, ZeroEpochsLeavesInitialParameters) {
  RunSpec spec = subset_spec(Variant::Attention);
  spec.train.epochs = 0;
  spec.train.train_pairs = 64;
  spec.train.val_pairs = 16;
  const TrainResult r = train_model(spec);
  EXPECT_TRUE(r.epochs.empty());
  EXPECT_EQ(checkpoint_bytes(r.model), checkpoint_bytes(init_model(spec.model, run_seeds(spec.seed).model)));
  EXPECT_EQ(r.final_val_acc, r.initial_val_acc);
}

TEST(Training, SameSeedGivesIdenticalMetrics) {
  RunSpec spec = subset_spec(Variant::Affinity);
  spec.train.epochs = 2;
  spec.train.train_pairs = 64;
  spec.train.val_pairs = 16;
  spec.seed = 5;
  const TrainResult a = train_model(spec);
  const TrainResult b = train_model(spec);
  ASSERT_EQ(a.epochs.size(), 2u);
  EXPECT_EQ(a.epochs, b.epochs);
  EXPECT_EQ(a.step_losses, b.step_losses);
  EXPECT_EQ(checkpoint_bytes(a.model), checkpoint_bytes(b.model));
  for (const auto& e : a.epochs) EXPECT_EQ(e.wall_ms, 0);
}

TEST(Training, NonFiniteLossNamesTheBatch) {
  SeededRng rng(71);
  ModelParams m = init_model(small_model(Variant::Attention), 9);
  m.blocks().front().slot->value(0, 0) = std::nan("");
  const std::vector<CandidateBatch> train{toy_batch(rng, 3, 5), toy_batch(rng, 3, 5)};
  TrainConfig cfg;
  OptimizerState state = OptimizerState::zeros_like(m);
  std::size_t step = 0;
  SeededRng shuffle(1);
  try {
    train_epoch(m, train, train, cfg, state, 4, shuffle, step);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("epoch 4"), std::string::npos) << what;
    EXPECT_NE(what.find("batch"), std::string::npos) << what;
  }
}

// Sixty-four epochs on subset matching with the K-pair loss at K = 4 halve
// the loss relative to its ln K starting point, for each of three seeds.
TEST(Training, SubsetLossHalvesOverTraining) {
  for (std::uint64_t seed : {0, 1, 2}) {
    RunSpec spec = subset_spec(Variant::Attention);
    spec.train.loss = LossKind::KPair;
    spec.train.k = 4;
    spec.train.train_pairs = 256;
    spec.train.val_pairs = 64;
    spec.seed = seed;
    const TrainResult r = train_model(spec);
    ASSERT_EQ(r.epochs.size(), 64u);
    EXPECT_LE(r.epochs.back().mean_loss, 0.5 * std::log(4.0)) << "seed " << seed;
  }
}

// --- artifacts ----------------------------------------------------------

TEST(Metrics, JsonLineHasFixedKeyOrder) {
  EpochMetrics m;
  m.epoch = 3;
  m.mean_loss = 0.5;
  m.lr = 0.0035;
  m.train_acc = 0.75;
  m.val_acc = 0.625;
  const std::string line = metrics_json_line(m);
  EXPECT_EQ(line, R"({"epoch":3,"loss":0.5,"lr":0.0035,"train_acc":0.75,"val_acc":0.625,"wall_ms":0})");
  EXPECT_EQ(nlohmann::json::parse(line)["val_acc"].get<double>(), 0.625);
}

TEST(Metrics, MovingAverageUsesTrailingWindow) {
  const std::vector<double> v{1, 2, 3, 4, 5};
  EXPECT_EQ(moving_average(v, 2), (std::vector<double>{1, 1.5, 2.5, 3.5, 4.5}));
  EXPECT_EQ(moving_average(v, 30), (std::vector<double>{1, 1.5, 2, 2.5, 3}));
  EXPECT_THROW(moving_average(v, 0), PreconditionError);
}

TEST(Metrics, LearningCurveCsv) {
  const auto path = std::filesystem::temp_directory_path() / "ssm_test_curve.csv";
  const std::vector<double> losses{4, 2, 0};
  write_learning_curve(path, losses, 2, 2);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), "step,epoch,loss,smoothed_loss\n0,0,4,4\n1,0,2,3\n2,1,0,1\n");
  std::filesystem::remove(path);
}

}  // namespace
