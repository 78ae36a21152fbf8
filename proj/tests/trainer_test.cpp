#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "support.hpp"

using namespace compat;
using testing_support::Fixture;

namespace {

struct Split {
  std::vector<Outfit> train, validation;
};

Split split_fixture(const Fixture& fx, std::size_t n_train) {
  Split s;
  const auto& all = fx.ds.data.outfits;
  s.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
  return s;
}

TrainConfig small_config() {
  TrainConfig tc;
  tc.hidden_d = 6;
  tc.steps_T = 2;
  tc.batch_size = 8;
  tc.max_epochs = 3;
  tc.seed = 17;
  return tc;
}

CompatModel small_model(const Fixture& fx, const TrainConfig& tc) {
  auto mc = fx.model_config(tc.model, tc.modality, tc.beta);
  mc.hidden = tc.hidden_d;
  mc.steps = tc.steps_T;
  return CompatModel(mc, tc.seed);
}

}  // namespace

TEST(BprLoss, KnownValues) {
  ParamSet p;
  Tensor w = Tensor::vector(4);
  w.fill(1.0);
  Tensor b = Tensor::vector(1);
  b[0] = 5.0;
  p.add("w", w, ParamRole::weight);
  p.add("b", b, ParamRole::bias);
  EXPECT_DOUBLE_EQ(bpr_loss(0.5, 0.5, 0.0, p), std::log(2.0));
  EXPECT_NEAR(neg_log_sigmoid(10.0), 4.5398899216864647e-05, 1e-18);
  EXPECT_NEAR(bpr_loss(0.5, 0.5, 0.001, p), std::log(2.0) + 0.004, 1e-15);
  EXPECT_DOUBLE_EQ(neg_log_sigmoid(-800.0), 800.0);
  EXPECT_TRUE(std::isfinite(neg_log_sigmoid(800.0)));
}

TEST(BprLoss, L2GradientCoversWeightsOnly) {
  ParamSet p;
  Tensor w = Tensor::matrix(2, 2);
  w(0, 1) = 3.0;
  p.add("w", w, ParamRole::weight);
  p.add("b", Tensor::vector(2), ParamRole::bias);
  p.add("e", Tensor::matrix(2, 2), ParamRole::edge_logit);
  Gradients g(p);
  add_l2_gradient(p, 0.5, g);
  EXPECT_EQ(g.slot(0)(0, 1), 3.0);
  EXPECT_FALSE(g.touched(1));
  EXPECT_FALSE(g.touched(2));
}

TEST(EarlyStop, Examples) {
  EXPECT_TRUE(early_stop_check({1.0, 0.9, 0.9, 0.9, 0.9}, 3, 1e-4));
  EXPECT_FALSE(early_stop_check({1.0, 0.9, 0.8}, 3, 1e-4));
  EXPECT_FALSE(early_stop_check({1.0, 1.0, 1.0}, 3, 1e-4));  // too short
  EXPECT_TRUE(early_stop_check({1.0, 0.99995, 0.99991, 0.99990}, 3, 1e-4));
  EXPECT_FALSE(early_stop_check({1.0, 1.1, 1.2, 0.5}, 3, 1e-4));
  EXPECT_TRUE(early_stop_check({0.5, 1.1, 1.2, 0.6}, 3, 1e-4));
}

TEST(PairLoss, GradientMatchesFiniteDifferences) {
  Fixture fx(9, 50, 6);
  const TrainConfig tc = small_config();
  const CompatModel base = small_model(fx, tc);
  const auto pool = item_pool(fx.ds.data.outfits);
  Rng rng(4);
  const auto pair = NegativeSampler(pool).negative_for(fx.ds.data.outfits[0], rng);
  const auto ctx = fx.context();
  const auto cfg = base.config();
  auto loss = [&](const ParamSet& p) {
    return pair_loss_and_gradient(CompatModel(cfg, p), ctx, pair.positive, pair.negative, nullptr)
        .loss;
  };
  auto analytic = [&](const ParamSet& p) {
    CompatModel m(cfg, p);
    Gradients g(m.params());
    pair_loss_and_gradient(m, ctx, pair.positive, pair.negative, &g);
    return g.to_dense(m.params());
  };
  EXPECT_LT(grad_check(loss, analytic, base.params()).max_relative_error, 1e-6);
}

TEST(TrainConfig, Validation) {
  TrainConfig tc;
  tc.batch_size = 0;
  EXPECT_THROW(tc.validate(), ArgumentError);
  tc = TrainConfig{};
  tc.beta = -0.1;
  EXPECT_THROW(tc.validate(), ArgumentError);
  tc = TrainConfig{};
  tc.validation_negatives = 0;
  EXPECT_THROW(tc.validate(), ArgumentError);
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

TEST(Train, ZeroLearningRateIsANoOp) {
  Fixture fx;
  auto tc = small_config();
  tc.learning_rate = 0.0;
  tc.max_epochs = 2;
  const auto s = split_fixture(fx, 45);
  const auto model = small_model(fx, tc);
  const auto r = train(tc, model, {&s.train, &s.validation, fx.context()});
  EXPECT_TRUE(r.last.params().values_equal(model.params()));
}

TEST(Train, StopsEarlyOnFlatValidationLoss) {
  Fixture fx;
  auto tc = small_config();
  tc.learning_rate = 0.0;
  tc.max_epochs = 20;
  tc.patience = 1;
  const auto s = split_fixture(fx, 45);
  const auto r = train(tc, small_model(fx, tc), {&s.train, &s.validation, fx.context()});
  EXPECT_TRUE(r.stopped_early);
  EXPECT_EQ(r.history.epochs.size(), 2u);
  EXPECT_EQ(r.best_epoch, 1u);
}

TEST(Train, DeterministicAcrossRunsAndThreadCounts) {
  Fixture fx;
  auto tc = small_config();
  tc.learning_rate = 0.01;
  const auto s = split_fixture(fx, 45);
  const TrainData data{&s.train, &s.validation, fx.context()};
  const auto a = train(tc, small_model(fx, tc), data);
  const auto b = train(tc, small_model(fx, tc), data);
  tc.threads = 3;
  const auto c = train(tc, small_model(fx, tc), data);
  EXPECT_EQ(a.history.to_csv(), b.history.to_csv());
  EXPECT_EQ(a.history.to_csv(), c.history.to_csv());
  EXPECT_TRUE(a.last.params().values_equal(b.last.params()));
  EXPECT_TRUE(a.last.params().values_equal(c.last.params()));
}

TEST(Train, LossDecreasesOnCleanPlantedData) {
  Fixture fx(2, 120, 8);
  auto tc = small_config();
  tc.learning_rate = 0.01;
  tc.max_epochs = 3;
  tc.patience = 10;
  const auto s = split_fixture(fx, 100);
  const auto r = train(tc, small_model(fx, tc), {&s.train, &s.validation, fx.context()});
  ASSERT_EQ(r.history.epochs.size(), 3u);
  EXPECT_LT(r.history.epochs[2].train_loss, r.history.epochs[0].train_loss);
}

TEST(Train, BestModelHasLowestValidationLoss) {
  Fixture fx(4, 80, 6);
  auto tc = small_config();
  tc.learning_rate = 0.02;
  tc.max_epochs = 5;
  tc.patience = 10;
  const auto s = split_fixture(fx, 60);
  std::vector<double> seen;
  const auto r = train(tc, small_model(fx, tc), {&s.train, &s.validation, fx.context()},
                       [&](const EpochRecord& e) { seen.push_back(e.val_loss); });
  ASSERT_EQ(seen, r.history.val_losses());
  const auto best = std::min_element(seen.begin(), seen.end()) - seen.begin() + 1;
  EXPECT_EQ(r.best_epoch, static_cast<std::size_t>(best));
}

TEST(Train, RunArtifacts) {
  Fixture fx;
  auto tc = small_config();
  tc.max_epochs = 2;
  const auto s = split_fixture(fx, 45);
  const auto r = train(tc, small_model(fx, tc), {&s.train, &s.validation, fx.context()});
  testing_support::TempDir dir("run");
  write_run_artifacts(r, dir.str());
  const auto best = CompatModel::from_checkpoint(read_checkpoint(dir.file("best.ckpt")));
  EXPECT_TRUE(best.params().values_equal(r.best.params()));
  const auto last = read_checkpoint(dir.file("last.ckpt"));
  const auto st = restore_optimizer(last, r.last.params(), tc.optimizer_config());
  EXPECT_EQ(st.step, r.last_optimizer.step);
  const auto history = read_text_file(dir.file("history.csv"));
  EXPECT_EQ(history.rfind("epoch,train_loss,val_loss,val_auc\n", 0), 0u);
  EXPECT_EQ(history, r.history.to_csv());
  EXPECT_EQ(read_text_file(dir.file("timing.csv")).rfind("epoch,seconds\n", 0), 0u);
}

TEST(Train, EmptyTrainingSetIsDatasetError) {
  Fixture fx;
  const auto tc = small_config();
  const std::vector<Outfit> none;
  EXPECT_THROW(train(tc, small_model(fx, tc), {&none, nullptr, fx.context()}), DatasetError);
}
