#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "earlybird/model.hpp"
#include "earlybird/rng.hpp"

namespace earlybird {

struct RegConfig {
  // Desk-scale defaults. Published values pair with learning rates around
  // 2e-5; at our default learning rate of 1e-3 the penalties scale up
  // accordingly so the L1 pull stays comparable to the task gradient.
  double lambda_heads = 5e-3;
  double lambda_neurons = 1e-2;

  void validate() const;
};

// R(c) = lambda_H * ||c_H||_1 + lambda_F * ||c_F||_1 over all layers
Tensor regularizer(Tape& tape, const Coefficients& coeffs, const RegConfig& reg);

struct Mask {
  std::vector<std::vector<std::uint8_t>> head_keep;    // per layer, 1 = keep
  std::vector<std::vector<std::uint8_t>> neuron_keep;

  bool operator==(const Mask& other) const = default;
  int total_heads() const;
  int total_neurons() const;
  int kept_heads() const;
  int kept_neurons() const;
};

enum class HeadScope { global_with_survivor, layer_wise };
enum class NeuronScope { global, layer_wise };

struct PruneConfig {
  double head_ratio = 1.0 / 6.0;
  double neuron_ratio = 0.3;
  HeadScope head_scope = HeadScope::global_with_survivor;
  NeuronScope neuron_scope = NeuronScope::global;

  void validate() const;
};

// keep-mask over |c| at the configured ratios; the exact selection the
// pruning ops apply, so the detector tracks the mask that will be drawn.
// Ties prune the lower (layer, index) first.
Mask binarize(const Coefficients& coeffs, const PruneConfig& cfg);

// normalized Hamming distance per channel, each in [0,1]
std::pair<double, double> mask_distance(const Mask& a, const Mask& b);

struct ConvergenceDetector {
  double gamma = 0.1;
  int window = 5;
  std::optional<Mask> prev_mask;
  int consecutive_hits = 0;
  std::vector<std::pair<double, double>> history;

  enum class Decision { continue_search, terminate };

  // distance-stream core: both channels below gamma counts as a hit
  Decision observe(double head_dist, double neuron_dist);
  // binarize, compare to the previous miniepoch's mask; the first call only
  // records a baseline
  Decision update(const Coefficients& coeffs, const PruneConfig& cfg);

  void save(std::ostream& os) const;
  void load(std::istream& is);
};

struct TicketSpec {
  Mask mask;
  std::string source_checkpoint;
  int search_steps_used = 0;
  PruneConfig prune_config;
};

void save_ticket_spec(const std::string& path, const TicketSpec& spec);
TicketSpec load_ticket_spec(const std::string& path);

// mask-trace line: `miniepoch=<k> head_dist=<f> neuron_dist=<f> hits=<n>`
void append_mask_trace(std::ostream& os, int miniepoch, double head_dist,
                       double neuron_dist, int hits);

// structural pruning: drops head matrices / shrinks FFN matrices and the
// matching coefficient entries in place
std::vector<std::vector<std::uint8_t>> prune_heads(ModelParams& params,
                                                   const PruneConfig& cfg);
std::vector<std::vector<std::uint8_t>> prune_neurons(ModelParams& params,
                                                     const PruneConfig& cfg);

// apply an externally chosen mask structurally (used by extract_ticket and
// the ablations)
void apply_mask(ModelParams& params, const Mask& mask);

// load theta0, apply the mask, absorb surviving coefficients as 1.0
ModelParams extract_ticket(const std::string& theta0_path, const Mask& mask);

// uniformly random mask with the same per-structure prune counts and the
// same per-layer head survivor constraint
Mask random_ticket(const ModelConfig& config, const PruneConfig& cfg, Rng& rng);

enum class ReinitMode { reinit_ticket_weights, reinit_complement };

// reinit_ticket_weights: fresh init of the extracted sub-model.
// reinit_complement: full-size model keeping ticket-covered weights at
// theta0 and re-initializing everything the mask prunes.
ModelParams reinit_ticket(const std::string& theta0_path, const Mask& mask,
                          ReinitMode mode, Rng& rng);

}  // namespace earlybird
