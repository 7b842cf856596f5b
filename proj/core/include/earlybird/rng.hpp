#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <random>

namespace earlybird {

// Deterministic generator. Uniform doubles are derived from raw 64-bit
// output directly (not through std::uniform_real_distribution) so streams
// are bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  std::uint64_t next_below(std::uint64_t n) {
    // modulo bias is irrelevant at the range sizes used here
    return engine_() % n;
  }

  void save(std::ostream& os) const { os << engine_; }
  void load(std::istream& is) { is >> engine_; }

 private:
  std::mt19937_64 engine_;
};

// Named substreams off one master seed, so e.g. data-order draws do not
// perturb perturbation draws between ablation runs.
enum class Stream : std::uint64_t {
  init = 1,
  data_order = 2,
  perturbation = 3,
  random_ticket = 4,
  corpus = 5,
  attack = 6,
  reinit = 7,
  finetune_order = 8,
};

inline std::uint64_t substream_seed(std::uint64_t master, Stream s) {
  // splitmix64 over (master, stream id)
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(s);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t master, Stream s) {
  return Rng(substream_seed(master, s));
}

}  // namespace earlybird
