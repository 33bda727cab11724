#include <gtest/gtest.h>

#include "bdrlab/error.hpp"
#include "bdrlab/trainer.hpp"

using namespace bdrlab;

namespace {

TrainConfig quick(LossVariant v) {
  TrainConfig c;
  c.variant = v;
  c.epochs = 3;
  c.hidden = {16};
  c.hessian_iters = 5;
  return c;
}

PhaseStream small_stream() { return split_phases(make_gaussian_mixture(4, 40, 4, 3.0, 3), 2, 1, 3); }

}  // namespace

TEST(Classifier, ShapesAndParameterRoundTrip) {
  Rng rng(1);
  Classifier m = Classifier::create(5, {8, 6}, 3, rng);
  EXPECT_EQ(m.feature_dim(), 6u);
  EXPECT_EQ(m.parameter_count(), 5u * 8 + 8 + 8 * 6 + 6 + 6 * 3 + 3);
  auto flat = m.flat_parameters();
  flat[0] = 42.0;
  m.set_flat_parameters(flat);
  EXPECT_DOUBLE_EQ(m.flat_parameters()[0], 42.0);
  EXPECT_THROW(m.set_flat_parameters(std::vector<double>(3)), DimensionError);
}

TEST(Classifier, ExpandHeadKeepsOldLogits) {
  Rng rng(2);
  Classifier m = Classifier::create(4, {8}, 2, rng);
  const Tensor x = Tensor::matrix({{0.1, -0.3, 0.5, 1.0}, {2.0, 0.0, -1.0, 0.2}});
  const Tensor before = m.logits(x);
  m.expand_head(3, rng);
  const Tensor after = m.logits(x);
  ASSERT_EQ(after.cols(), 5u);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_DOUBLE_EQ(after.at(i, j), before.at(i, j));
}

TEST(Distill, ZeroForIdenticalLogits) {
  Tape tape;
  const Tensor t = Tensor::matrix({{1.0, -2.0}, {0.5, 0.5}});
  EXPECT_NEAR(distill_loss(tape.constant(t), t, 2.0).item(), 0.0, 1e-15);
}

TEST(TrainPhase, LossFallsOnSeparableData) {
  const PhaseStream s = small_stream();
  LabeledSet train = s.phases[0].train;
  std::vector<std::size_t> slot(4);
  for (std::size_t p = 0; p < 4; ++p) slot[s.class_order[p]] = p;
  for (auto& y : train.labels) y = slot[y];
  train.class_count = 2;
  Rng rng(0);
  Classifier m = Classifier::create(4, {16}, 2, rng);
  Rng batching(1);
  const PhaseTrace t = train_phase(m, train, quick(LossVariant::CE), PhaseContext{}, batching);
  EXPECT_LT(t.steps.back().loss_new, 0.5 * t.steps.front().loss_new);
  for (const auto& r : t.steps) EXPECT_EQ(r.loss_old, 0.0);
}

TEST(RunExperiment, ReportShapeAndDeterminism) {
  const PhaseStream s = small_stream();
  const RunReport a = run_experiment(s, quick(LossVariant::BDR));
  const RunReport b = run_experiment(s, quick(LossVariant::BDR));
  ASSERT_EQ(a.phases.size(), 3u);
  EXPECT_EQ(a.avg, b.avg);
  EXPECT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) EXPECT_EQ(a.trace[i].loss_old, b.trace[i].loss_old);
  EXPECT_FALSE(a.schedule.empty());
  EXPECT_FALSE(a.phases[0].old_accuracy.has_value());
  EXPECT_TRUE(a.phases[1].old_accuracy.has_value());
  EXPECT_TRUE(a.phases[1].bound.has_value());
  // Distillation starts at zero because the expanded head keeps old logits.
  EXPECT_EQ(a.phases[1].initial_loss_old, 0.0);
  EXPECT_EQ(a.memory.size(), 4u);
}

TEST(RunExperiment, PairedVariantsShareDataAndInit) {
  const PhaseStream s = small_stream();
  const RunReport ce = run_experiment(s, quick(LossVariant::CE));
  const RunReport cr = run_experiment(s, quick(LossVariant::CR));
  // Phase 0 is plain CE for every variant.
  EXPECT_EQ(ce.phases[0].accuracy, cr.phases[0].accuracy);
  EXPECT_TRUE(ce.schedule.empty());
}

TEST(RunExperiment, DivergenceIsReported) {
  TrainConfig c = quick(LossVariant::CE);
  c.learning_rate = 1e200;
  EXPECT_THROW(run_experiment(small_stream(), c), DivergenceError);
}

TEST(Config, InvalidTrainingSettings) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
  EXPECT_THROW(parse_loss_variant("focal"), ArgumentError);
}
