#include <gtest/gtest.h>

#include <filesystem>

#include "duin/checkpoint.hpp"
#include "duin/trainer.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace duin;
using namespace duin::testing;

namespace {

struct World {
  PreparedData data;
  ModelConfig cfg;
  explicit World(ModelConfig c = tiny_model()) : cfg(c) {
    data = prepare_synthetic(tiny_spec(), tiny_train_config(cfg));
  }
  template <class Real>
  DuinModel<Real> model(std::uint64_t seed = 1) const {
    DuinModel<Real> m(cfg, data.vocabulary, seed);
    m.set_graph(&data.graph);
    return m;
  }
};

}  // namespace

TEST(Losses, ClosedFormBce) {
  std::vector<double> p{0.9, 0.1};
  std::vector<float> y{1, 0};
  EXPECT_NEAR(bce_loss(p, y), 0.10536, 1e-5);
  // The logit path agrees with the probability path.
  auto z = Tensor<double>::of({2}, {std::log(9.0), -std::log(9.0)});
  EXPECT_NEAR(bce_with_logits(z, y).item(), -std::log(0.9), 1e-12);
}

TEST(Losses, FinalLossCombination) {
  EXPECT_DOUBLE_EQ(final_loss(0.4, 0.7, 0.0), 0.4);
  EXPECT_DOUBLE_EQ(final_loss(0.4, 0.7, 1.0), 1.1);
  EXPECT_THROW(final_loss(0.4, 0.7, -0.1), ContractError);
  auto t = final_loss(Tensor<double>::scalar(0.4), Tensor<double>::scalar(0.7), 0.5);
  EXPECT_DOUBLE_EQ(t.item(), 0.75);
}

TEST(Model, ForwardShapesAndSslPresence) {
  World s;
  auto m = s.model<float>();
  auto batch = first_batch(s.data.train, s.cfg, 8, true);
  Rng rng(1);
  auto out = m.forward(batch, rng, SampleMode::kTrain);
  EXPECT_EQ(out.logits.shape(), (Shape{8}));
  ASSERT_TRUE(out.l_ssl.has_value());
  EXPECT_GT(out.l_ssl->item(), 0.0f);
  EXPECT_EQ(out.latent_intent.shape(), (Shape{8, 4 * s.cfg.dim}));
  auto infer = m.forward(first_batch(s.data.train, s.cfg, 8, false), rng, SampleMode::kInfer);
  EXPECT_FALSE(infer.l_ssl.has_value());
  for (double p : infer.probabilities()) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}

TEST(Model, InferenceIsDeterministicWithoutSampling) {
  World s;
  auto m = s.model<float>();
  auto batch = first_batch(s.data.test, s.cfg, 8, false);
  Rng a(1), b(99);
  EXPECT_EQ(m.forward(batch, a, SampleMode::kInfer).logits.values(),
            m.forward(batch, b, SampleMode::kInfer).logits.values());
}

TEST(Model, AblationSwitchesKeepShapes) {
  for (auto set : std::vector<void (*)(AblationFlags&)>{
           [](AblationFlags& f) { f.no_eiem = true; }, [](AblationFlags& f) { f.no_liem = true; },
           [](AblationFlags& f) { f.no_iumm = true; }, [](AblationFlags& f) { f.no_ssl = true; },
           [](AblationFlags& f) { f.sii = true; }, [](AblationFlags& f) { f.trigger_agnostic = true; }}) {
    ModelConfig cfg = tiny_model();
    set(cfg.flags);
    World s(cfg);
    auto m = s.model<float>();
    auto batch = first_batch(s.data.train, cfg, 8, true);
    Rng rng(1);
    auto out = m.forward(batch, rng, SampleMode::kTrain);
    EXPECT_EQ(out.logits.shape(), (Shape{8}));
    EXPECT_EQ(out.l_ssl.has_value(), cfg.ssl_active());
    if (cfg.flags.no_liem) {
      for (float v : out.latent_intent.data()) EXPECT_EQ(v, 0.0f);
    }
    if (cfg.flags.no_eiem) {
      for (float v : out.explicit_intent.data()) EXPECT_EQ(v, 0.0f);
    }
  }
}

TEST(Model, BatchContractErrorsNameTheSlot) {
  World s;
  auto m = s.model<float>();
  auto batch = first_batch(s.data.train, s.cfg, 4, false);
  batch.targets.pop_back();
  Rng rng(1);
  try {
    m.forward(batch, rng, SampleMode::kInfer);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("targets"), std::string::npos);
  }
  auto no_graph = DuinModel<float>(s.cfg, s.data.vocabulary, 1);
  EXPECT_THROW(no_graph.forward(first_batch(s.data.train, s.cfg, 4, false), rng, SampleMode::kInfer), ContractError);
}

TEST(Model, SslNeedsAugmentedViews) {
  World s;
  auto m = s.model<float>();
  auto batch = first_batch(s.data.train, s.cfg, 4, false);
  Rng rng(1);
  EXPECT_THROW(m.forward(batch, rng, SampleMode::kTrain), ContractError);
}

TEST(Model, FullGradientMatchesFiniteDifferences) {
  ModelConfig cfg = tiny_model(4, 4);
  cfg.gamma = 0.5;
  World s(cfg);
  auto m = s.model<double>(3);
  auto batch = first_batch(s.data.train, cfg, 4, true, 5);
  std::vector<Tensor<double>> leaves;
  for (const auto& [_, p] : m.parameters().entries()) leaves.push_back(p);
  auto loss = [&] {
    Rng rng(17);  // same reparameterization noise on every evaluation
    auto out = m.forward(batch, rng, SampleMode::kTrain);
    return m.losses(out, batch.labels).total;
  };
  auto r = grad_check(loss, leaves, 1e-6, 40, 11);
  EXPECT_LT(r.max_rel_error, 1e-2);
}

TEST(Trainer, LossDecreasesAndBestIsRestored) {
  World s;
  auto m = s.model<float>();
  auto cfg = tiny_train_config(s.cfg);
  cfg.epochs = 3;
  auto r = train(m, cfg, s.data.train, &s.data.val);
  ASSERT_EQ(r.epochs.size(), 3u);
  EXPECT_LT(r.epochs.back().mean_loss, r.epochs.front().mean_loss);
  EXPECT_NEAR(evaluate_auc(m, s.data.val, 64), r.best_val_auc, 1e-12);
}

TEST(Trainer, SameSeedSameTrajectory) {
  World s;
  auto cfg = tiny_train_config(s.cfg);
  auto a = s.model<float>(), b = s.model<float>();
  auto ra = train(a, cfg, s.data.train, nullptr);
  auto rb = train(b, cfg, s.data.train, nullptr);
  ASSERT_EQ(ra.steps.size(), rb.steps.size());
  for (std::size_t i = 0; i < ra.steps.size(); ++i) ASSERT_EQ(ra.steps[i].total, rb.steps[i].total);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterStore<double> store;
  auto w = store.add("w", Tensor<double>::of({2}, {1.0, -1.0}));
  Adam<double> adam(store, AdamOptions{0.1});
  {
    Tape<double> tape;
    tape.backward(sum(mul(w, Tensor<double>::of({2}, {3.0, -0.5}))));
  }
  adam.step();
  // With bias correction the first update is lr * g / (|g| + eps).
  EXPECT_NEAR(w[0], 0.9, 1e-7);
  EXPECT_NEAR(w[1], -0.9, 1e-7);
}

TEST(Adam, ParametersWithoutGradientAreUntouched) {
  ParameterStore<double> store;
  auto used = store.add("used", Tensor<double>::of({1}, {1.0}));
  auto idle = store.add("idle", Tensor<double>::of({1}, {5.0}));
  Adam<double> adam(store);
  {
    Tape<double> tape;
    tape.backward(sum(used));
  }
  adam.step();
  EXPECT_EQ(idle[0], 5.0);
  EXPECT_NE(used[0], 1.0);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  World s;
  auto m = s.model<float>(1);
  auto cfg = tiny_train_config(s.cfg);
  train(m, cfg, s.data.train, nullptr);
  const auto dir = (std::filesystem::temp_directory_path() / "duin_ckpt_test").string();
  std::filesystem::remove_all(dir);
  Adam<float> adam(m.parameters());
  adam.set_steps(7);
  save_checkpoint(dir, m.parameters(), &adam, {1, 42, 0, s.data.vocabulary});
  auto fresh = s.model<float>(99);
  Adam<float> adam2(fresh.parameters());
  auto info = load_checkpoint(dir, fresh.parameters(), &adam2);
  EXPECT_EQ(info.config_hash, 42u);
  EXPECT_EQ(adam2.steps(), 7u);
  EXPECT_EQ(info.vocabulary.items, s.data.vocabulary.items);
  auto batch = first_batch(s.data.test, s.cfg, 16, false);
  Rng r1(1), r2(1);
  EXPECT_EQ(m.forward(batch, r1, SampleMode::kInfer).logits.values(),
            fresh.forward(batch, r2, SampleMode::kInfer).logits.values());
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, ShapeMismatchIsDataError) {
  World s;
  auto m = s.model<float>();
  const auto dir = (std::filesystem::temp_directory_path() / "duin_ckpt_bad").string();
  std::filesystem::remove_all(dir);
  save_checkpoint<float>(dir, m.parameters(), nullptr, {1, 0, 0, s.data.vocabulary});
  World other(tiny_model(6));
  auto wider = other.model<float>();
  EXPECT_THROW(load_checkpoint(dir, wider.parameters()), DataError);
  EXPECT_THROW(read_checkpoint_info(dir + "/missing"), DataError);
  std::filesystem::remove_all(dir);
}
