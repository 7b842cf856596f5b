#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include <earlybird/corpus.hpp>
#include <earlybird/model.hpp>
#include <earlybird/rng.hpp>
#include <earlybird/trainer.hpp>

using namespace earlybird;

namespace {

Corpus small_corpus(std::uint64_t seed = 1, int n_train = 256, int n_test = 64) {
  GenSpec spec;
  spec.seed = seed;
  spec.n_train = n_train;
  spec.n_test = n_test;
  return generate(spec);
}

ModelParams small_model(const Corpus& corpus, std::uint64_t seed = 1) {
  const ModelConfig mc = ModelConfig::with_defaults(
      2, 4, 32, corpus.vocab.size(), corpus.spec.seq_len, corpus.spec.n_classes);
  Rng rng = make_rng(seed, Stream::init);
  return init_params(mc, rng);
}

bool params_bitwise_equal(ModelParams& a, ModelParams& b) {
  bool equal = true;
  std::size_t count_a = 0, count_b = 0;
  a.for_each_param([&](const std::string&, Tensor& t) { ++count_a; });
  b.for_each_param([&](const std::string&, Tensor& t) { ++count_b; });
  if (count_a != count_b) return false;
  std::vector<Tensor> ta, tb;
  a.for_each_param([&](const std::string&, Tensor& t) { ta.push_back(t); });
  b.for_each_param([&](const std::string&, Tensor& t) { tb.push_back(t); });
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].shape() != tb[i].shape()) return false;
    equal = equal && std::memcmp(ta[i].data().data(), tb[i].data().data(),
                                 ta[i].size() * sizeof(double)) == 0;
  }
  return equal;
}

SearchConfigs default_search_configs(std::uint64_t seed) {
  SearchConfigs cfgs;
  cfgs.train.seed = seed;
  return cfgs;
}

}  // namespace

TEST_CASE("sgd applies p -= lr * g exactly") {
  Tensor p({3}, {1.0, -2.0, 0.5}, true);
  p.grad() = {0.1, 0.2, -0.4};
  Optimizer opt(OptimizerKind::sgd, 0.5);
  std::vector<Tensor> params = {p};
  opt.step(params);
  CHECK(p.at(0) == 1.0 - 0.5 * 0.1);
  CHECK(p.at(1) == -2.0 - 0.5 * 0.2);
  CHECK(p.at(2) == 0.5 - 0.5 * (-0.4));
}

TEST_CASE("the adam-like first step matches the bias-corrected closed form") {
  Tensor p({2}, {1.0, -1.0}, true);
  const std::vector<double> g = {0.3, -0.07};
  p.grad() = g;
  const double lr = 1e-3;
  Optimizer opt(OptimizerKind::adam_like, lr);
  std::vector<Tensor> params = {p};
  opt.step(params);
  // t=1: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps)
  for (int i = 0; i < 2; ++i) {
    const double m_hat = (0.1 * g[i]) / (1.0 - 0.9);
    const double v_hat = (0.001 * g[i] * g[i]) / (1.0 - 0.999);
    const double expect =
        (i == 0 ? 1.0 : -1.0) - lr * m_hat / (std::sqrt(v_hat) + 1e-8);
    CHECK(p.at(i) == doctest::Approx(expect).epsilon(1e-15));
  }
}

TEST_CASE("optimizer state round-trips and continues identically") {
  Tensor p1({3}, {1.0, 2.0, 3.0}, true);
  Tensor p2 = p1.clone();
  p2.set_requires_grad(true);
  Optimizer a(OptimizerKind::adam_like, 1e-2);
  std::vector<Tensor> pa = {p1}, pb = {p2};
  Rng rng(77);
  for (int step = 0; step < 4; ++step) {
    p1.grad() = {rng.uniform(), rng.uniform(), rng.uniform()};
    a.step(pa);
  }
  std::stringstream ss;
  a.save(ss);
  Optimizer b(OptimizerKind::sgd, 0.0);  // overwritten by load
  b.load(ss);
  for (std::int64_t i = 0; i < 3; ++i) p2.at(i) = p1.at(i);

  Rng grads(99);
  for (int step = 0; step < 3; ++step) {
    const std::vector<double> g = {grads.uniform(), grads.uniform(),
                                   grads.uniform()};
    p1.grad() = g;
    p2.grad() = g;
    a.step(pa);
    b.step(pb);
    for (std::int64_t i = 0; i < 3; ++i) CHECK(p1.at(i) == p2.at(i));
  }
}

TEST_CASE("on a zero-weight model the coefficients follow pure L1 dynamics") {
  // with every weight at zero the task gradient cannot reach the
  // coefficients, so sgd moves them by exactly lr * lambda * sign(c)
  Corpus corpus = small_corpus(3, 64, 16);
  ModelParams params = small_model(corpus, 3);
  params.for_each_weight([](const std::string&, Tensor& t) {
    for (auto& v : t.data()) v = 0.0;
  });

  SearchConfigs cfgs = default_search_configs(3);
  cfgs.train.optimizer = OptimizerKind::sgd;
  cfgs.train.learning_rate = 1e-2;
  cfgs.adv.steps = 0;
  cfgs.reg.lambda_heads = 0.004;
  cfgs.reg.lambda_neurons = 0.007;

  SearchState state = make_search_state(params, cfgs);
  const int k = 5;
  search_stage(corpus.train, state, cfgs, k);

  double expect_head = 1.0, expect_neuron = 1.0;
  for (int i = 0; i < k; ++i) {
    expect_head -= cfgs.train.learning_rate * cfgs.reg.lambda_heads;
    expect_neuron -= cfgs.train.learning_rate * cfgs.reg.lambda_neurons;
  }
  for (const auto& c : state.params.coeffs.heads)
    for (double v : c.data()) CHECK(v == expect_head);
  for (const auto& c : state.params.coeffs.neurons)
    for (double v : c.data()) CHECK(v == expect_neuron);
}

TEST_CASE("search samples the detector every miniepoch") {
  Corpus corpus = small_corpus(4, 64, 16);
  ModelParams params = small_model(corpus, 4);
  SearchConfigs cfgs = default_search_configs(4);
  // 64 examples / 32 batch = 2 steps per epoch; floor(0.05 * 2) < 1 clamps
  // the miniepoch to one step, so every step produces one trace entry
  SearchState state = make_search_state(params, cfgs);
  search_stage(corpus.train, state, cfgs, 4);
  REQUIRE(state.trace.size() == 4);
  CHECK(state.trace[0].miniepoch == 1);
  CHECK(state.trace[3].miniepoch == 4);
  // the first update only records a baseline; the placeholder distances
  // stay out of the detector history
  CHECK(state.trace[0].head_dist == 1.0);
  CHECK(state.detector.history.size() == 3);
}

TEST_CASE("interrupted search resumes bitwise-identically") {
  Corpus corpus = small_corpus(5, 96, 16);
  ModelParams params = small_model(corpus, 5);
  SearchConfigs cfgs = default_search_configs(5);

  SearchState uninterrupted = make_search_state(params, cfgs);
  search_stage(corpus.train, uninterrupted, cfgs, 8);

  SearchState first_half = make_search_state(params, cfgs);
  search_stage(corpus.train, first_half, cfgs, 5);
  const std::string path = "test_trainer_search.state";
  first_half.save(path);
  SearchState resumed = SearchState::load(path);
  search_stage(corpus.train, resumed, cfgs, 3);

  CHECK(resumed.step == uninterrupted.step);
  CHECK(resumed.last_loss == uninterrupted.last_loss);
  CHECK(resumed.trace.size() == uninterrupted.trace.size());
  CHECK(params_bitwise_equal(resumed.params, uninterrupted.params));
  std::remove(path.c_str());
  std::remove((path + ".model").c_str());
}

TEST_CASE("interrupted fine-tuning resumes bitwise-identically") {
  Corpus corpus = small_corpus(6, 128, 32);
  ModelParams params = small_model(corpus, 6);
  TrainConfig cfg;
  cfg.seed = 6;
  cfg.finetune_epochs = 3;

  FinetuneState uninterrupted = make_finetune_state(params, cfg);
  uninterrupted.run(corpus.train, corpus.test, cfg);

  FinetuneState partial = make_finetune_state(params, cfg);
  partial.run(corpus.train, corpus.test, cfg, 1);
  const std::string path = "test_trainer_finetune.state";
  partial.save(path);
  FinetuneState resumed = FinetuneState::load(path);
  resumed.run(corpus.train, corpus.test, cfg);

  CHECK(resumed.epoch == uninterrupted.epoch);
  CHECK(resumed.outcome.first_loss == uninterrupted.outcome.first_loss);
  CHECK(resumed.outcome.final_loss == uninterrupted.outcome.final_loss);
  CHECK(resumed.outcome.epoch_accuracy == uninterrupted.outcome.epoch_accuracy);
  CHECK(params_bitwise_equal(resumed.params, uninterrupted.params));
  std::remove(path.c_str());
  std::remove((path + ".model").c_str());
}

TEST_CASE("fine-tuning learns the synthetic task") {
  Corpus corpus = small_corpus(7, 256, 64);
  ModelParams params = small_model(corpus, 7);
  params.set_requires_grad(true);
  TrainConfig cfg;
  cfg.seed = 7;
  cfg.finetune_epochs = 3;
  Rng rng = make_rng(7, Stream::finetune_order);
  const FinetuneOutcome outcome =
      finetune_stage(params, corpus.train, corpus.test, cfg, rng);
  REQUIRE(outcome.epoch_accuracy.size() == 3);
  CHECK(outcome.final_loss < outcome.first_loss);
  CHECK(outcome.epoch_accuracy.back() > 0.7);
}

TEST_CASE("train config validation rejects bad values with specific messages") {
  TrainConfig cfg;
  cfg.search_max_epochs = 0;
  CHECK_THROWS_WITH_AS(cfg.validate(), "search budget must be positive",
                       std::invalid_argument);
  cfg = TrainConfig{};
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.miniepoch_fraction = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("measure_time reports a non-negative duration") {
  const double t = measure_time([] {
    volatile double x = 0;
    for (int i = 0; i < 1000; ++i) x += i;
  });
  CHECK(t >= 0.0);
}
