#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "earlybird/adversary.hpp"
#include "earlybird/corpus.hpp"
#include "earlybird/model.hpp"
#include "earlybird/rng.hpp"
#include "earlybird/ticket.hpp"

namespace earlybird {

enum class OptimizerKind { sgd, adam_like };

struct TrainConfig {
  double learning_rate = 1e-3;  // desk-scale; full-scale runs use 2e-5
  int finetune_epochs = 10;
  int search_max_epochs = 3;
  int batch_size = 32;
  double miniepoch_fraction = 0.05;
  std::uint64_t seed = 1;
  OptimizerKind optimizer = OptimizerKind::adam_like;

  void validate() const;
};

// sgd: p -= lr * g; adam_like: bias-corrected first/second moments,
// beta1 = 0.9, beta2 = 0.999, eps = 1e-8
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr) : kind_(kind), lr_(lr) {}

  void step(std::vector<Tensor>& params);

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  OptimizerKind kind_;
  double lr_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

std::vector<Tensor> all_params(ModelParams& params);
std::vector<Tensor> weight_params(ModelParams& params);

struct SearchConfigs {
  TrainConfig train;
  AdvConfig adv;
  RegConfig reg;
  PruneConfig prune;
  double gamma = 0.1;
  int detector_window = 5;
};

struct TraceEntry {
  int miniepoch;
  double head_dist;
  double neuron_dist;
  int hits;
};

// Everything the searching stage mutates, so a run can be serialized at a
// step boundary and resumed bit-exactly.
struct SearchState {
  ModelParams params;
  Optimizer optimizer{OptimizerKind::adam_like, 1e-3};
  ConvergenceDetector detector;
  Rng data_rng{0};
  Rng adv_rng{0};
  std::vector<int> order;  // current epoch's shuffled example order
  int step = 0;
  int epoch = 0;
  int pos = 0;  // consumed examples within the current epoch
  int miniepoch = 0;
  bool terminated = false;
  std::vector<TraceEntry> trace;
  double last_loss = 0;

  void save(const std::string& path) const;
  static SearchState load(const std::string& path);
};

SearchState make_search_state(const ModelParams& theta0,
                              const SearchConfigs& cfgs);

struct SearchOutcome {
  Mask mask;
  int steps_used = 0;
  bool detector_converged = false;
};

// Algorithm: per batch, adversarial task gradients (FreeLB accumulation by
// default) plus the L1 regularizer subgradient, one combined optimizer step
// over weights and coefficients; the detector samples masks every miniepoch.
// max_steps < 0 runs to termination or the epoch budget.
SearchOutcome search_stage(const Dataset& data, SearchState& state,
                           const SearchConfigs& cfgs, int max_steps = -1);

struct FinetuneOutcome {
  std::vector<double> epoch_accuracy;  // clean accuracy per epoch
  double final_loss = 0;
  double first_loss = 0;
};

// standard cross-entropy minimization of the weights; coefficients stay 1.0
FinetuneOutcome finetune_stage(ModelParams& params, const Dataset& train,
                               const Dataset& test, const TrainConfig& cfg,
                               Rng& rng);

// Epoch-boundary serializable fine-tuning, so an interrupted run resumes
// bit-exactly. finetune_stage is a run() over a fresh state.
struct FinetuneState {
  ModelParams params;
  Optimizer optimizer{OptimizerKind::adam_like, 1e-3};
  Rng rng{0};
  int epoch = 0;
  bool started = false;  // first_loss already recorded
  FinetuneOutcome outcome;

  // runs up to max_epochs further epochs (all remaining when < 0)
  void run(const Dataset& train, const Dataset& test, const TrainConfig& cfg,
           int max_epochs = -1);

  void save(const std::string& path) const;
  static FinetuneState load(const std::string& path);
};

FinetuneState make_finetune_state(const ModelParams& ticket,
                                  const TrainConfig& cfg);

// wall-clock seconds around compute only; callers pre-materialize batches
double measure_time(const std::function<void()>& stage);

}  // namespace earlybird
