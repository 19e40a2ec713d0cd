#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "wbc/trainer.hpp"

using namespace wbc;

namespace {

/// One scalar parameter: a GAP model on 1-channel feature maps with D = 1.
ModelParams scalar_model(double theta) {
  ModelConfig c;
  c.variant = Variant::kGap;
  c.channels = 1;
  c.embed_dim = 1;
  c.use_backbone = false;
  ModelParams p = init_model(c);
  p.embeddings[0].weight(0, 0) = theta;
  return p;
}

SGDConfig plain(double lr, double momentum, double wd) {
  SGDConfig c;
  c.initial_lr = lr;
  c.momentum = momentum;
  c.weight_decay = wd;
  return c;
}

std::vector<Sample> tiny_dataset(std::size_t ids, std::size_t per_id) {
  SynthConfig s;
  s.identities = ids;
  s.images_per_identity = per_id;
  s.height = 8;
  s.width = 6;
  s.jitter = 1;
  return synth_generate(s).samples;
}

}  // namespace

TEST(LrSchedule, Examples) {
  const SGDConfig cfg;
  EXPECT_EQ(lr_schedule(0, cfg), 0.008);
  EXPECT_EQ(lr_schedule(3999, cfg), 0.008);
  EXPECT_EQ(lr_schedule(4000, cfg), 0.004);
  EXPECT_EQ(lr_schedule(8000, cfg), 0.002);
}

TEST(SgdConfig, FullAndDeskScaleDefaults) {
  const SGDConfig full_scale;
  EXPECT_EQ(full_scale.initial_lr, 0.008);
  EXPECT_EQ(full_scale.halve_period, 4000u);
  EXPECT_EQ(full_scale.momentum, 0.9);
  EXPECT_EQ(full_scale.weight_decay, 0.0005);
  EXPECT_EQ(full_scale.batch_size, 300u);
  EXPECT_NO_THROW(validate_sgd_config(full_scale));
  const SGDConfig desk = SGDConfig::desk_scale();
  EXPECT_EQ(desk.batch_size, 32u);
  EXPECT_EQ(desk.halve_period, 200u);
  EXPECT_EQ(desk.max_iters, 500u);
  EXPECT_EQ(desk.momentum, 0.9);
  EXPECT_EQ(desk.weight_decay, 0.0005);
}

TEST(SgdConfig, RejectsInconsistentBatches) {
  SGDConfig c = SGDConfig::desk_scale();
  c.batch_size = 30;
  EXPECT_THROW(validate_sgd_config(c), ConfigError);
  c = SGDConfig::desk_scale();
  c.images_per_identity = 1;
  EXPECT_THROW(validate_sgd_config(c), ConfigError);
  c = SGDConfig::desk_scale();
  c.momentum = 1.0;
  EXPECT_THROW(validate_sgd_config(c), ConfigError);
}

TEST(SgdStep, PlainGradientStep) {
  ModelParams p = scalar_model(1.0);
  ModelParams g = p.zeros_like();
  g.embeddings[0].weight(0, 0) = 1.0;
  TrainState st = init_train_state(p);
  sgd_step(p, g, st, plain(0.1, 0.0, 0.0));
  EXPECT_DOUBLE_EQ(p.embeddings[0].weight(0, 0), 0.9);
  EXPECT_EQ(st.iteration, 1u);
}

TEST(SgdStep, ZeroGradientIsFixedPoint) {
  ModelParams p = scalar_model(0.7);
  const Vector before = p.flatten();
  TrainState st = init_train_state(p);
  sgd_step(p, p.zeros_like(), st, plain(0.1, 0.9, 0.0));
  EXPECT_EQ(p.flatten(), before);
}

TEST(SgdStep, MomentumAccumulates) {
  const double lr = 0.05, g0 = 2.0;
  ModelParams p = scalar_model(0.0);
  ModelParams g = p.zeros_like();
  g.embeddings[0].weight(0, 0) = g0;
  TrainState st = init_train_state(p);
  const SGDConfig cfg = plain(lr, 0.9, 0.0);
  sgd_step(p, g, st, cfg);
  sgd_step(p, g, st, cfg);
  EXPECT_NEAR(st.velocity.embeddings[0].weight(0, 0), -lr * g0 * (1.0 + 0.9), 1e-15);
}

TEST(SgdStep, WeightDecayPullsTowardZero) {
  ModelParams p = scalar_model(2.0);
  TrainState st = init_train_state(p);
  sgd_step(p, p.zeros_like(), st, plain(0.1, 0.0, 0.5));
  EXPECT_DOUBLE_EQ(p.embeddings[0].weight(0, 0), 2.0 - 0.1 * 0.5 * 2.0);
}

TEST(MakeBatches, PartitionsSmallDataset) {
  const std::vector<int> labels{0, 0, 1, 1, 2, 2, 3, 3};
  SGDConfig c;
  c.batch_size = 4;
  c.identities_per_batch = 2;
  c.images_per_identity = 2;
  Rng rng(1);
  const auto batches = make_batches(labels, c, rng);
  ASSERT_EQ(batches.size(), 2u);
  std::multiset<std::size_t> seen;
  for (const auto& b : batches) {
    EXPECT_EQ(b.size(), 4u);
    std::set<int> ids;
    for (std::size_t i : b) {
      seen.insert(i);
      ids.insert(labels[i]);
    }
    EXPECT_EQ(ids.size(), 2u);
  }
  EXPECT_EQ(seen, (std::multiset<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7}));
}

TEST(MakeBatches, SameSeedSameSequence) {
  std::vector<int> labels;
  for (int id = 0; id < 10; ++id)
    for (int k = 0; k < 6; ++k) labels.push_back(id);
  const SGDConfig c = SGDConfig::desk_scale();
  Rng a(42), b(42), other(43);
  const auto x = make_batches(labels, c, a);
  EXPECT_EQ(x, make_batches(labels, c, b));
  EXPECT_NE(x, make_batches(labels, c, other));
}

TEST(MakeBatches, SingleIdentityIsAConfigError) {
  const std::vector<int> labels(12, 0);
  SGDConfig c;
  c.batch_size = 4;
  c.identities_per_batch = 2;
  c.images_per_identity = 2;
  Rng rng(1);
  EXPECT_THROW(make_batches(labels, c, rng), ConfigError);
}

TEST(Train, ZeroIterationsReturnsInitialization) {
  ModelConfig m;
  m.channels = 4;
  m.embed_dim = 8;
  SGDConfig s = SGDConfig::desk_scale();
  s.max_iters = 0;
  const TrainResult r = train(tiny_dataset(8, 4), m, s);
  EXPECT_EQ(r.params.flatten(), init_model(m).flatten());
  EXPECT_TRUE(r.log.empty());
}

TEST(Train, DeterministicAndThreadIndependent) {
  ModelConfig m;
  m.channels = 4;
  m.embed_dim = 8;
  m.parts = 2;
  SGDConfig s = SGDConfig::desk_scale();
  s.max_iters = 5;
  const auto data = tiny_dataset(8, 4);
  const TrainResult a = train(data, m, s);
  const TrainResult b = train(data, m, s);
  s.threads = 3;
  const TrainResult c = train(data, m, s);
  EXPECT_EQ(a.params.flatten(), b.params.flatten());
  EXPECT_EQ(a.params.flatten(), c.params.flatten());
  std::ostringstream la, lb;
  write_log_csv(la, a.log);
  write_log_csv(lb, c.log);
  EXPECT_EQ(la.str(), lb.str());
  EXPECT_EQ(la.str().substr(0, la.str().find('\n')), "iter,lr,loss,active_frac");
  EXPECT_EQ(a.log.size(), 5u);
}

TEST(Train, NonFiniteLossIsReported) {
  ModelConfig m;
  m.channels = 4;
  m.embed_dim = 8;
  ModelParams p = init_model(m);
  p.embeddings[0].weight(0, 0) = std::numeric_limits<double>::quiet_NaN();
  SGDConfig s = SGDConfig::desk_scale();
  s.max_iters = 1;
  EXPECT_THROW(train_from(tiny_dataset(8, 4), p, s), NonFiniteError);
}
