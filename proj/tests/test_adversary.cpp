#include <doctest.h>

#include <cmath>
#include <vector>

#include <earlybird/adversary.hpp>
#include <earlybird/model.hpp>
#include <earlybird/rng.hpp>

using namespace earlybird;

namespace {

ModelConfig tiny_config() {
  return ModelConfig::with_defaults(1, 2, 16, 30, 8, 2);
}

TokenBatch tiny_batch() {
  TokenBatch batch;
  batch.tokens = {{3, 4, 5, 0, 0, 0, 0, 0}, {6, 7, 8, 9, 10, 0, 0, 0}};
  batch.labels = {0, 1};
  return batch;
}

}  // namespace

TEST_CASE("init_perturbation gives every example Frobenius norm eps0") {
  AdvConfig cfg;
  cfg.eps0 = 0.05;
  Rng rng = make_rng(3, Stream::perturbation);
  const Perturbation p = init_perturbation(4, 8, 16, cfg, rng);
  REQUIRE(p.delta.shape() == std::vector<int>{32, 16});
  for (int ex = 0; ex < 4; ++ex)
    CHECK(example_frobenius_norm(p.delta, 4, ex) ==
          doctest::Approx(cfg.eps0).epsilon(1e-12));
}

TEST_CASE("projection is idempotent and enforces the ball") {
  Rng rng = make_rng(4, Stream::perturbation);
  Tensor delta({6, 5});
  for (std::int64_t i = 0; i < delta.size(); ++i)
    delta.at(i) = rng.uniform(-2.0, 2.0);
  const double eps = 0.7;
  project_frobenius(delta, 3, eps);
  for (int ex = 0; ex < 3; ++ex)
    CHECK(example_frobenius_norm(delta, 3, ex) <= eps + 1e-12);
  Tensor again = delta.clone();
  project_frobenius(again, 3, eps);
  for (std::int64_t i = 0; i < delta.size(); ++i)
    CHECK(again.at(i) == delta.at(i));
}

TEST_CASE("norm bound holds after arbitrary step sequences") {
  AdvConfig cfg;
  cfg.eps0 = 0.1;
  cfg.step_size = 0.3;
  cfg.ball_radius = 0.25;
  Rng rng = make_rng(5, Stream::perturbation);
  Perturbation p = init_perturbation(3, 4, 6, cfg, rng);
  for (int step = 0; step < 20; ++step) {
    Tensor grad({12, 6});
    for (std::int64_t i = 0; i < grad.size(); ++i)
      grad.at(i) = rng.uniform(-5.0, 5.0);
    pgd_step(p, grad, cfg);
    for (int ex = 0; ex < 3; ++ex)
      CHECK(example_frobenius_norm(p.delta, 3, ex) <= *cfg.ball_radius + 1e-12);
  }
}

TEST_CASE("the ascent direction is invariant to gradient scale") {
  AdvConfig cfg;
  cfg.eps0 = 0.05;
  cfg.step_size = 0.01;
  Rng rng = make_rng(6, Stream::perturbation);
  Perturbation a = init_perturbation(2, 3, 4, cfg, rng);
  Perturbation b;
  b.delta = a.delta.clone();
  b.batch = a.batch;
  b.seq = a.seq;

  Tensor grad({6, 4});
  Rng grng = make_rng(7, Stream::perturbation);
  for (std::int64_t i = 0; i < grad.size(); ++i)
    grad.at(i) = grng.uniform(-1.0, 1.0);
  Tensor scaled = grad.clone();
  for (std::int64_t i = 0; i < scaled.size(); ++i) scaled.at(i) *= 1000.0;

  pgd_step(a, grad, cfg);
  pgd_step(b, scaled, cfg);
  for (std::int64_t i = 0; i < a.delta.size(); ++i)
    CHECK(a.delta.at(i) == doctest::Approx(b.delta.at(i)).epsilon(1e-12));
}

TEST_CASE("a 1-D hand-simulated trajectory matches exactly") {
  // one example, one position, one dimension: the normalized step reduces
  // to delta += step_size * sign(g), then clamping to the ball radius
  AdvConfig cfg;
  cfg.step_size = 0.01;
  cfg.ball_radius = 0.025;
  Perturbation p;
  p.delta = Tensor({1, 1}, std::vector<double>{0.0});
  p.batch = 1;
  p.seq = 1;

  double expect = 0.0;
  const std::vector<double> grads = {2.0, 5.0, 0.3, -1.0, 4.0, 4.0};
  for (double g : grads) {
    Tensor grad({1, 1}, std::vector<double>{g});
    pgd_step(p, grad, cfg);
    expect += cfg.step_size * (g > 0 ? 1.0 : -1.0);
    if (std::abs(expect) > *cfg.ball_radius)
      expect = expect > 0 ? *cfg.ball_radius : -*cfg.ball_radius;
    CHECK(p.delta.at(0) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("near-zero gradients leave the perturbation unchanged") {
  AdvConfig cfg;
  cfg.step_size = 0.01;
  Perturbation p;
  p.delta = Tensor({2, 3}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  p.batch = 2;
  p.seq = 1;
  const Tensor before = p.delta.clone();
  Tensor grad({2, 3});  // all zeros
  pgd_step(p, grad, cfg);
  for (std::int64_t i = 0; i < p.delta.size(); ++i)
    CHECK(p.delta.at(i) == before.at(i));
}

TEST_CASE("freelb accumulation with one step matches single-shot adversarial loss") {
  const ModelConfig mc = tiny_config();
  const TokenBatch batch = tiny_batch();
  AdvConfig cfg;
  cfg.steps = 1;

  Rng init_rng = make_rng(11, Stream::init);
  ModelParams a = init_params(mc, init_rng);
  a.set_requires_grad(true);
  ModelParams b = a.clone();
  b.set_requires_grad(true);

  Rng adv_a = make_rng(12, Stream::perturbation);
  freelb_accumulate(batch, a, cfg, adv_a);

  Rng adv_b = make_rng(12, Stream::perturbation);
  Tape tape;
  const AdvLossResult res = adversarial_loss(tape, batch, b, cfg, adv_b);
  tape.backward(res.loss);

  std::vector<Tensor> ga, gb;
  a.for_each_param([&](const std::string&, Tensor& t) { ga.push_back(t); });
  b.for_each_param([&](const std::string&, Tensor& t) { gb.push_back(t); });
  REQUIRE(ga.size() == gb.size());
  for (std::size_t i = 0; i < ga.size(); ++i) {
    REQUIRE(ga[i].has_grad() == gb[i].has_grad());
    if (!ga[i].has_grad()) continue;
    for (std::size_t j = 0; j < ga[i].grad().size(); ++j)
      CHECK(ga[i].grad()[j] == gb[i].grad()[j]);
  }
}

TEST_CASE("with a vanishing perturbation the adversarial loss reduces to clean loss") {
  const ModelConfig mc = tiny_config();
  const TokenBatch batch = tiny_batch();
  Rng init_rng = make_rng(13, Stream::init);
  ModelParams params = init_params(mc, init_rng);

  AdvConfig cfg;
  cfg.eps0 = 1e-12;
  cfg.steps = 0;
  Rng adv_rng = make_rng(14, Stream::perturbation);
  Tape tape(false);
  const AdvLossResult adv = adversarial_loss(tape, batch, params, cfg, adv_rng);
  const Tensor clean =
      tape.cross_entropy(forward(tape, batch, params), batch.labels);
  CHECK(std::abs(adv.loss.value() - clean.value()) < 1e-9);
}
