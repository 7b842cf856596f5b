#include "earlybird/attack.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace earlybird {

void AttackConfig::validate() const {
  if (max_candidates_per_word < 1)
    throw std::invalid_argument("max_candidates_per_word must be >= 1");
  if (query_budget < 1) throw std::invalid_argument("query budget must be >= 1");
  if (eval_sample_size && *eval_sample_size < 1)
    throw std::invalid_argument("eval_sample_size must be >= 1 when present");
}

std::vector<double> QueryCountingModel::probs(
    const std::vector<int>& tokens) const {
  ++queries_;
  return predict_probs(*params_, tokens);
}

int QueryCountingModel::predict(const std::vector<int>& tokens) const {
  const auto p = probs(tokens);
  int best = 0;
  for (std::size_t j = 1; j < p.size(); ++j)
    if (p[j] > p[best]) best = static_cast<int>(j);
  return best;
}

double clean_accuracy(const ModelParams& params, const Dataset& ds,
                      int batch_size) {
  if (ds.empty()) return 0.0;
  int correct = 0;
  for (std::size_t pos = 0; pos < ds.size(); pos += batch_size) {
    std::vector<int> indices;
    for (std::size_t i = pos; i < std::min(pos + batch_size, ds.size()); ++i)
      indices.push_back(static_cast<int>(i));
    TokenBatch batch = make_batch(ds, indices);
    const auto preds = predict(params, batch);
    for (std::size_t i = 0; i < preds.size(); ++i)
      correct += (preds[i] == batch.labels[i]);
  }
  return static_cast<double>(correct) / ds.size();
}

std::vector<int> rank_word_importance(const QueryCountingModel& model,
                                      const Example& ex) {
  // importance = drop in true-class probability under an unk replacement.
  // The clean base probability is a shared constant, so ranking by the
  // replaced-token probability ascending gives the same order at exactly
  // one query per probed position.
  std::vector<std::pair<double, int>> scored;
  std::vector<int> probe = ex.tokens;
  for (int pos = 0; pos < ex.length; ++pos) {
    const int orig = probe[pos];
    probe[pos] = kUnkId;
    scored.emplace_back(model.probs(probe)[ex.label], pos);
    probe[pos] = orig;
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<int> order;
  for (const auto& [drop, pos] : scored) order.push_back(pos);
  return order;
}

AttackRow greedy_attack(const QueryCountingModel& model, const Example& ex,
                        int index, const SynonymTable& syn,
                        const AttackConfig& cfg) {
  cfg.validate();
  model.reset_queries();
  AttackRow row;
  row.index = index;
  row.label = ex.label;

  const auto clean_probs = model.probs(ex.tokens);  // 1 query
  row.clean_pred = 0;
  for (std::size_t j = 1; j < clean_probs.size(); ++j)
    if (clean_probs[j] > clean_probs[row.clean_pred])
      row.clean_pred = static_cast<int>(j);
  row.final_pred = row.clean_pred;
  if (row.clean_pred != ex.label) {
    // already misclassified: not robust, no attack needed
    row.queries = model.queries();
    row.success = false;
    row.robust = false;
    return row;
  }

  std::vector<int> current = ex.tokens;
  double true_prob = clean_probs[ex.label];
  const auto order = rank_word_importance(model, ex);  // n queries

  for (int pos : order) {
    if (model.queries() >= cfg.query_budget) break;
    const int original = ex.tokens[pos];
    const auto* subs = syn.substitutes(original);
    if (!subs) continue;
    int best_sub = -1;
    double best_prob = true_prob;
    int best_pred = ex.label;
    const int limit = std::min<int>(cfg.max_candidates_per_word,
                                    static_cast<int>(subs->size()));
    for (int k = 0; k < limit; ++k) {
      if (model.queries() >= cfg.query_budget) break;
      current[pos] = (*subs)[k];
      const auto p = model.probs(current);
      if (p[ex.label] < best_prob) {
        best_prob = p[ex.label];
        best_sub = (*subs)[k];
        best_pred = 0;
        for (std::size_t j = 1; j < p.size(); ++j)
          if (p[j] > p[best_pred]) best_pred = static_cast<int>(j);
      }
    }
    if (best_sub >= 0) {
      current[pos] = best_sub;
      true_prob = best_prob;
      row.substituted_positions.push_back(pos);
      row.final_pred = best_pred;
      if (best_pred != ex.label) break;  // misclassified
    } else {
      current[pos] = original;
    }
  }

  row.queries = model.queries();
  row.success = row.final_pred != ex.label;
  row.robust = row.final_pred == ex.label;
  return row;
}

AttackReport evaluate_robustness(const ModelParams& params, const Dataset& ds,
                                 const SynonymTable& syn,
                                 const AttackConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<int> eval_indices(ds.size());
  std::iota(eval_indices.begin(), eval_indices.end(), 0);
  if (cfg.eval_sample_size &&
      *cfg.eval_sample_size < static_cast<int>(ds.size())) {
    for (int i = 0; i < *cfg.eval_sample_size; ++i) {
      const int j = i + static_cast<int>(
                            rng.next_below(eval_indices.size() - i));
      std::swap(eval_indices[i], eval_indices[j]);
    }
    eval_indices.resize(*cfg.eval_sample_size);
  }

  AttackReport report;
  QueryCountingModel model(params);
  int clean_correct = 0, robust = 0, successes = 0;
  long total_queries = 0, success_queries = 0;
  for (int idx : eval_indices) {
    AttackRow row = greedy_attack(model, ds[idx], idx, syn, cfg);
    clean_correct += (row.clean_pred == row.label);
    robust += row.robust;
    total_queries += row.queries;
    if (row.success && row.clean_pred == row.label) {
      ++successes;
      success_queries += row.queries;
    }
    report.rows.push_back(std::move(row));
  }
  const double n = static_cast<double>(eval_indices.size());
  report.clean_pct = 100.0 * clean_correct / n;
  report.aua_pct = 100.0 * robust / n;
  report.avg_queries = total_queries / n;
  report.avg_queries_success =
      successes > 0 ? static_cast<double>(success_queries) / successes : 0.0;
  return report;
}

void save_attack_report(const std::string& path, const AttackReport& report) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "# idx label clean_pred final_pred queries success positions\n";
  for (const auto& row : report.rows) {
    os << row.index << ' ' << row.label << ' ' << row.clean_pred << ' '
       << row.final_pred << ' ' << row.queries << ' ' << (row.success ? 1 : 0);
    for (int p : row.substituted_positions) os << ' ' << p;
    os << '\n';
  }
  os << "# clean_pct=" << format_double(report.clean_pct)
     << " aua_pct=" << format_double(report.aua_pct)
     << " avg_queries=" << format_double(report.avg_queries)
     << " avg_queries_success=" << format_double(report.avg_queries_success)
     << '\n';
}

std::string format_attack_summary(const AttackReport& report) {
  std::ostringstream os;
  os << "examples: " << report.rows.size() << '\n';
  os << "Clean%:   " << report.clean_pct << '\n';
  os << "Aua%:     " << report.aua_pct << '\n';
  os << "#Query:   " << report.avg_queries
     << " (successful attacks only: " << report.avg_queries_success << ")\n";
  return os.str();
}

}  // namespace earlybird
