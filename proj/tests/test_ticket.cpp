#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <tuple>
#include <vector>

#include <earlybird/model.hpp>
#include <earlybird/rng.hpp>
#include <earlybird/ticket.hpp>

using namespace earlybird;

namespace {

ModelConfig tiny_config() {
  return ModelConfig::with_defaults(2, 4, 32, 50, 12, 2);
}

Coefficients random_coeffs(int n_layers, int n_heads, int n_neurons, Rng& rng) {
  Coefficients coeffs;
  for (int l = 0; l < n_layers; ++l) {
    Tensor ch({n_heads});
    for (auto& v : ch.data()) v = rng.uniform(-1.0, 1.0);
    Tensor cf({n_neurons});
    for (auto& v : cf.data()) v = rng.uniform(-1.0, 1.0);
    coeffs.heads.push_back(ch);
    coeffs.neurons.push_back(cf);
  }
  return coeffs;
}

// independent ranking oracle: sort (|c|, layer, index) ascending, prune the
// first k; for heads, skip entries whose layer would be emptied
std::vector<std::tuple<double, int, int>> ranked(const std::vector<Tensor>& cs) {
  std::vector<std::tuple<double, int, int>> order;
  for (std::size_t l = 0; l < cs.size(); ++l)
    for (std::int64_t i = 0; i < cs[l].size(); ++i)
      order.emplace_back(std::abs(cs[l].at(i)), static_cast<int>(l),
                         static_cast<int>(i));
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

TEST_CASE("global neuron binarization matches a sort-based oracle") {
  Rng rng(201);
  const Coefficients coeffs = random_coeffs(2, 4, 16, rng);
  PruneConfig cfg;
  cfg.neuron_ratio = 0.3;
  const Mask mask = binarize(coeffs, cfg);

  const auto order = ranked(coeffs.neurons);
  const int k = static_cast<int>(std::floor(0.3 * order.size()));
  std::vector<std::vector<std::uint8_t>> expect(2,
                                                std::vector<std::uint8_t>(16, 1));
  for (int i = 0; i < k; ++i)
    expect[std::get<1>(order[i])][std::get<2>(order[i])] = 0;
  CHECK(mask.neuron_keep == expect);
  CHECK(mask.total_neurons() - mask.kept_neurons() == k);
}

TEST_CASE("global-with-survivor head binarization matches a greedy oracle") {
  PruneConfig cfg;
  cfg.head_ratio = 0.5;
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(300 + trial);
    const Coefficients coeffs = random_coeffs(3, 4, 4, rng);
    const Mask mask = binarize(coeffs, cfg);

    const auto order = ranked(coeffs.heads);
    int to_prune = static_cast<int>(std::floor(0.5 * order.size()));
    std::vector<std::vector<std::uint8_t>> expect(3,
                                                  std::vector<std::uint8_t>(4, 1));
    std::vector<int> alive(3, 4);
    for (const auto& [mag, l, i] : order) {
      if (to_prune == 0) break;
      if (alive[l] == 1) continue;
      expect[l][i] = 0;
      --alive[l];
      --to_prune;
    }
    REQUIRE(to_prune == 0);
    CHECK(mask.head_keep == expect);
    for (const auto& layer : mask.head_keep)
      CHECK(std::count(layer.begin(), layer.end(), 1) >= 1);
  }
}

TEST_CASE("an unreachable head ratio under the survivor constraint throws") {
  Rng rng(205);
  const Coefficients coeffs = random_coeffs(2, 2, 4, rng);
  PruneConfig cfg;
  cfg.head_ratio = 0.75;  // 3 of 4 heads, but only 1 per layer may go
  CHECK_THROWS_WITH_AS(binarize(coeffs, cfg),
                       "head prune ratio unreachable under the per-layer "
                       "survivor constraint",
                       std::invalid_argument);
}

TEST_CASE("layer-wise scopes prune floor(ratio * layer size) per layer") {
  Rng rng(206);
  const Coefficients coeffs = random_coeffs(2, 4, 10, rng);
  PruneConfig cfg;
  cfg.head_ratio = 0.25;
  cfg.neuron_ratio = 0.3;
  cfg.head_scope = HeadScope::layer_wise;
  cfg.neuron_scope = NeuronScope::layer_wise;
  const Mask mask = binarize(coeffs, cfg);
  for (const auto& layer : mask.head_keep)
    CHECK(std::count(layer.begin(), layer.end(), 0) == 1);  // floor(.25*4)
  for (const auto& layer : mask.neuron_keep)
    CHECK(std::count(layer.begin(), layer.end(), 0) == 3);  // floor(.3*10)
}

TEST_CASE("mask_distance is the normalized Hamming distance per channel") {
  Mask a, b;
  a.head_keep = {{1, 1, 0, 1}, {1, 0, 1, 1}};
  b.head_keep = {{1, 0, 0, 1}, {1, 0, 1, 0}};
  a.neuron_keep = {{1, 1, 1, 1, 1}};
  b.neuron_keep = {{1, 1, 1, 1, 1}};
  const auto [hd, nd] = mask_distance(a, b);
  CHECK(hd == doctest::Approx(2.0 / 8.0));
  CHECK(nd == 0.0);
  const auto [self_hd, self_nd] = mask_distance(a, a);
  CHECK(self_hd == 0.0);
  CHECK(self_nd == 0.0);
}

TEST_CASE("the scripted distance stream terminates exactly at update 6") {
  const std::vector<double> stream = {0.3, 0.09, 0.08, 0.07, 0.06, 0.05};
  ConvergenceDetector det;
  int terminated_at = -1;
  for (std::size_t i = 0; i < stream.size(); ++i)
    if (det.observe(stream[i], stream[i]) ==
        ConvergenceDetector::Decision::terminate) {
      terminated_at = static_cast<int>(i) + 1;
      break;
    }
  CHECK(terminated_at == 6);
}

TEST_CASE("any value at or above gamma resets the consecutive counter") {
  ConvergenceDetector det;
  for (int i = 0; i < 4; ++i) det.observe(0.05, 0.05);
  CHECK(det.consecutive_hits == 4);
  det.observe(0.1, 0.05);  // boundary value counts as a miss
  CHECK(det.consecutive_hits == 0);
  for (int i = 0; i < 4; ++i) det.observe(0.0, 0.0);
  det.observe(0.0, 0.2);  // either channel alone resets
  CHECK(det.consecutive_hits == 0);
}

TEST_CASE("detector decisions match a reference counter on 1000 random streams") {
  Rng rng(207);
  for (int trial = 0; trial < 1000; ++trial) {
    ConvergenceDetector det;
    int reference_hits = 0;
    bool reference_done = false;
    const int len = 1 + static_cast<int>(rng.next_below(20));
    for (int i = 0; i < len; ++i) {
      const double hd = rng.uniform(0.0, 0.2);
      const double nd = rng.uniform(0.0, 0.2);
      const auto decision = det.observe(hd, nd);
      if (hd < det.gamma && nd < det.gamma)
        ++reference_hits;
      else
        reference_hits = 0;
      reference_done = reference_hits >= det.window;
      CHECK((decision == ConvergenceDetector::Decision::terminate) ==
            reference_done);
      if (reference_done) break;
    }
  }
}

TEST_CASE("detector update records a baseline before measuring distances") {
  Rng rng(208);
  const Coefficients coeffs = random_coeffs(2, 4, 8, rng);
  ConvergenceDetector det;
  PruneConfig cfg;
  CHECK(det.update(coeffs, cfg) == ConvergenceDetector::Decision::continue_search);
  CHECK(det.history.empty());
  // identical coefficients: distance 0 on both channels from here on
  for (int i = 0; i < 4; ++i)
    CHECK(det.update(coeffs, cfg) ==
          ConvergenceDetector::Decision::continue_search);
  CHECK(det.update(coeffs, cfg) == ConvergenceDetector::Decision::terminate);
}

TEST_CASE("detector state serialization resumes mid-stream equivalently") {
  ConvergenceDetector a;
  a.observe(0.3, 0.3);
  a.observe(0.05, 0.05);
  a.observe(0.02, 0.08);
  std::stringstream ss;
  a.save(ss);
  ConvergenceDetector b;
  b.load(ss);
  CHECK(b.consecutive_hits == a.consecutive_hits);
  CHECK(b.history == a.history);
  for (int i = 0; i < 3; ++i) {
    const auto da = a.observe(0.01, 0.01);
    const auto db = b.observe(0.01, 0.01);
    CHECK(da == db);
  }
}

TEST_CASE("pruned logits equal zero-coefficient logits") {
  const ModelConfig mc = tiny_config();
  TokenBatch batch;
  batch.tokens = {{3, 4, 5, 6, 7, 0, 0, 0, 0, 0, 0, 0}};
  batch.labels = {0};
  for (int trial = 0; trial < 5; ++trial) {
    Rng rng = make_rng(400 + trial, Stream::init);
    ModelParams params = init_params(mc, rng);
    Rng mask_rng = make_rng(500 + trial, Stream::random_ticket);
    PruneConfig cfg;
    const Mask mask = random_ticket(mc, cfg, mask_rng);

    ModelParams zeroed = params.clone();
    for (int l = 0; l < mc.n_layers; ++l) {
      for (int h = 0; h < mc.n_heads; ++h)
        if (!mask.head_keep[l][h]) zeroed.coeffs.heads[l].at(h) = 0.0;
      for (int j = 0; j < mc.ffn_dim; ++j)
        if (!mask.neuron_keep[l][j]) zeroed.coeffs.neurons[l].at(j) = 0.0;
    }
    ModelParams pruned = params.clone();
    apply_mask(pruned, mask);

    Tape tape(false);
    const Tensor za = forward(tape, batch, zeroed);
    const Tensor zb = forward(tape, batch, pruned);
    for (std::int64_t i = 0; i < za.size(); ++i)
      CHECK(std::abs(za.at(i) - zb.at(i)) < 1e-12);
  }
}

TEST_CASE("random tickets have exact prune counts and obey the survivor rule") {
  const ModelConfig mc = tiny_config();
  PruneConfig cfg;  // 1/6 heads, 0.3 neurons
  Rng rng = make_rng(31, Stream::random_ticket);
  const Mask a = random_ticket(mc, cfg, rng);
  const int total_heads = mc.n_layers * mc.n_heads;
  const int total_neurons = mc.n_layers * mc.ffn_dim;
  CHECK(a.total_heads() - a.kept_heads() ==
        static_cast<int>(std::floor(cfg.head_ratio * total_heads)));
  CHECK(a.total_neurons() - a.kept_neurons() ==
        static_cast<int>(std::floor(cfg.neuron_ratio * total_neurons)));
  for (const auto& layer : a.head_keep)
    CHECK(std::count(layer.begin(), layer.end(), 1) >= 1);

  Rng rng2 = make_rng(31, Stream::random_ticket);
  CHECK(random_ticket(mc, cfg, rng2) == a);
  Rng rng3 = make_rng(32, Stream::random_ticket);
  CHECK(!(random_ticket(mc, cfg, rng3) == a));
}

TEST_CASE("extract_ticket absorbs coefficients and tracks kept indices") {
  const ModelConfig mc = tiny_config();
  Rng rng = make_rng(41, Stream::init);
  ModelParams theta0 = init_params(mc, rng);
  const std::string path = "test_ticket_theta0.ckpt";
  save_checkpoint(path, theta0);

  PruneConfig cfg;
  Rng mask_rng = make_rng(42, Stream::random_ticket);
  const Mask mask = random_ticket(mc, cfg, mask_rng);
  ModelParams ticket = extract_ticket(path, mask);

  CHECK(ticket.pruned());
  for (int l = 0; l < mc.n_layers; ++l) {
    for (double v : ticket.coeffs.heads[l].data()) CHECK(v == 1.0);
    for (double v : ticket.coeffs.neurons[l].data()) CHECK(v == 1.0);
    std::vector<int> expect_heads, expect_neurons;
    for (int h = 0; h < mc.n_heads; ++h)
      if (mask.head_keep[l][h]) expect_heads.push_back(h);
    for (int j = 0; j < mc.ffn_dim; ++j)
      if (mask.neuron_keep[l][j]) expect_neurons.push_back(j);
    CHECK(ticket.kept_heads[l] == expect_heads);
    CHECK(ticket.kept_neurons[l] == expect_neurons);
    // surviving weights are unchanged
    int hh = 0;
    for (int h = 0; h < mc.n_heads; ++h) {
      if (!mask.head_keep[l][h]) continue;
      for (std::int64_t i = 0; i < theta0.layers[l].w_q[h].size(); ++i)
        CHECK(ticket.layers[l].w_q[hh].at(i) == theta0.layers[l].w_q[h].at(i));
      ++hh;
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("reinit_complement keeps ticket weights at theta0 and redraws the rest") {
  const ModelConfig mc = tiny_config();
  Rng rng = make_rng(51, Stream::init);
  ModelParams theta0 = init_params(mc, rng);
  const std::string path = "test_ticket_theta0b.ckpt";
  save_checkpoint(path, theta0);

  PruneConfig cfg;
  Rng mask_rng = make_rng(52, Stream::random_ticket);
  const Mask mask = random_ticket(mc, cfg, mask_rng);
  Rng reinit_rng = make_rng(53, Stream::reinit);
  ModelParams again =
      reinit_ticket(path, mask, ReinitMode::reinit_complement, reinit_rng);

  CHECK(!again.pruned());
  for (int l = 0; l < mc.n_layers; ++l)
    for (int h = 0; h < mc.n_heads; ++h) {
      bool identical = true;
      for (std::int64_t i = 0; i < theta0.layers[l].w_q[h].size(); ++i)
        identical = identical && again.layers[l].w_q[h].at(i) ==
                                     theta0.layers[l].w_q[h].at(i);
      CHECK(identical == static_cast<bool>(mask.head_keep[l][h]));
    }
  std::remove(path.c_str());
}

TEST_CASE("ticket specs round-trip through their file format") {
  const ModelConfig mc = tiny_config();
  PruneConfig cfg;
  cfg.head_ratio = 0.25;
  cfg.neuron_ratio = 0.4;
  cfg.head_scope = HeadScope::layer_wise;
  Rng rng = make_rng(61, Stream::random_ticket);
  TicketSpec spec;
  spec.mask = random_ticket(mc, PruneConfig{}, rng);
  spec.source_checkpoint = "runs/theta0.ckpt";
  spec.search_steps_used = 42;
  spec.prune_config = cfg;

  const std::string path = "test_ticket_spec.txt";
  save_ticket_spec(path, spec);
  const TicketSpec back = load_ticket_spec(path);
  CHECK(back.mask == spec.mask);
  CHECK(back.source_checkpoint == spec.source_checkpoint);
  CHECK(back.search_steps_used == spec.search_steps_used);
  CHECK(back.prune_config.head_ratio == doctest::Approx(cfg.head_ratio));
  CHECK(back.prune_config.neuron_ratio == doctest::Approx(cfg.neuron_ratio));
  CHECK(back.prune_config.head_scope == cfg.head_scope);
  CHECK(back.prune_config.neuron_scope == cfg.neuron_scope);
  std::remove(path.c_str());
}

TEST_CASE("structural pruning removes the closed-form parameter count") {
  const ModelConfig mc = tiny_config();
  Rng rng = make_rng(71, Stream::init);
  ModelParams params = init_params(mc, rng);
  const std::int64_t before = param_count(params, true);

  Mask mask;
  mask.head_keep = {{0, 1, 1, 1}, {1, 1, 1, 1}};
  mask.neuron_keep.assign(2, std::vector<std::uint8_t>(mc.ffn_dim, 1));
  mask.neuron_keep[0][3] = 0;
  mask.neuron_keep[1][7] = 0;
  mask.neuron_keep[1][9] = 0;
  apply_mask(params, mask);

  const std::int64_t head_cost = 4LL * mc.hidden * mc.head_dim;
  const std::int64_t neuron_cost = 2LL * mc.hidden;
  CHECK(param_count(params, true) == before - head_cost - 3 * neuron_cost);
}
