#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "earlybird/corpus.hpp"
#include "earlybird/model.hpp"
#include "earlybird/rng.hpp"

namespace earlybird {

struct AttackConfig {
  int max_candidates_per_word = 8;
  int query_budget = 500;
  std::optional<int> eval_sample_size;  // absent: whole set

  void validate() const;
};

// every call counts one model query
class QueryCountingModel {
 public:
  explicit QueryCountingModel(const ModelParams& params) : params_(&params) {}

  std::vector<double> probs(const std::vector<int>& tokens) const;
  int predict(const std::vector<int>& tokens) const;  // ties to lowest class
  int queries() const { return queries_; }
  void reset_queries() const { queries_ = 0; }

 private:
  const ModelParams* params_;
  mutable int queries_ = 0;
};

struct AttackRow {
  int index = 0;
  int label = 0;
  int clean_pred = 0;
  int final_pred = 0;
  int queries = 0;
  bool success = false;       // flipped a clean-correct prediction
  bool robust = false;        // still correct after the attack
  std::vector<int> substituted_positions;
};

struct AttackReport {
  std::vector<AttackRow> rows;
  double clean_pct = 0;
  double aua_pct = 0;
  double avg_queries = 0;          // over all attacked examples
  double avg_queries_success = 0;  // over successful attacks only
};

double clean_accuracy(const ModelParams& params, const Dataset& ds,
                      int batch_size = 64);

// importance of a position = drop in true-class probability when its token
// is replaced by the unknown token; one query per probed position. Pad
// positions are not probed. Descending importance, ties by position order.
std::vector<int> rank_word_importance(const QueryCountingModel& model,
                                      const Example& ex);

AttackRow greedy_attack(const QueryCountingModel& model, const Example& ex,
                        int index, const SynonymTable& syn,
                        const AttackConfig& cfg);

AttackReport evaluate_robustness(const ModelParams& params, const Dataset& ds,
                                 const SynonymTable& syn,
                                 const AttackConfig& cfg, Rng& rng);

// machine-readable rows: `idx label clean_pred final_pred queries success
// positions`
void save_attack_report(const std::string& path, const AttackReport& report);
std::string format_attack_summary(const AttackReport& report);

}  // namespace earlybird
