#include <benchmark/benchmark.h>

#include <earlybird/model.hpp>
#include <earlybird/rng.hpp>
#include <earlybird/ticket.hpp>

using namespace earlybird;

namespace {

ModelConfig bench_config() {
  return ModelConfig::with_defaults(2, 4, 64, 200, 16, 2);
}

TokenBatch random_batch(const ModelConfig& cfg, int batch, Rng& rng) {
  Dataset ds;
  for (int i = 0; i < batch; ++i) {
    Example ex;
    ex.label = 0;
    for (int t = 0; t < cfg.max_seq_len; ++t) {
      ex.tokens.push_back(2 + static_cast<int>(rng.next_below(
                                  static_cast<std::uint64_t>(cfg.vocab_size - 2))));
    }
    ex.length = cfg.max_seq_len;
    ds.push_back(ex);
  }
  std::vector<int> order(batch);
  for (int i = 0; i < batch; ++i) order[i] = i;
  return make_batch(ds, order);
}

void bench_forward_full(benchmark::State& state) {
  ModelConfig cfg = bench_config();
  Rng rng = make_rng(1, Stream::init);
  ModelParams params = init_params(cfg, rng);
  Rng data_rng = make_rng(1, Stream::data_order);
  TokenBatch batch = random_batch(cfg, 8, data_rng);
  for (auto _ : state) {
    Tape tape(false);
    Tensor out = forward(tape, batch, params);
    benchmark::DoNotOptimize(out.at(0));
  }
}
BENCHMARK(bench_forward_full);

void bench_forward_pruned(benchmark::State& state) {
  ModelConfig cfg = bench_config();
  Rng rng = make_rng(1, Stream::init);
  ModelParams params = init_params(cfg, rng);
  // Keep half the heads and two thirds of the neurons in each layer.
  Mask mask;
  for (int l = 0; l < cfg.n_layers; ++l) {
    std::vector<std::uint8_t> heads(cfg.n_heads, 0);
    for (int h = 0; h < cfg.n_heads / 2; ++h) heads[h] = 1;
    std::vector<std::uint8_t> neurons(cfg.ffn_dim, 0);
    for (int j = 0; j < 2 * cfg.ffn_dim / 3; ++j) neurons[j] = 1;
    mask.head_keep.push_back(heads);
    mask.neuron_keep.push_back(neurons);
  }
  apply_mask(params, mask);
  Rng data_rng = make_rng(1, Stream::data_order);
  TokenBatch batch = random_batch(cfg, 8, data_rng);
  for (auto _ : state) {
    Tape tape(false);
    Tensor out = forward(tape, batch, params);
    benchmark::DoNotOptimize(out.at(0));
  }
}
BENCHMARK(bench_forward_pruned);

}  // namespace

BENCHMARK_MAIN();
