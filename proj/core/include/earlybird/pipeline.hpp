#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "earlybird/config.hpp"

namespace earlybird {

struct RunReport {
  std::string run_name;
  double head_ratio = 0;
  double neuron_ratio = 0;
  int search_steps = 0;
  bool detector_converged = false;
  std::vector<double> search_seconds_samples;
  std::vector<double> finetune_seconds_samples;
  double search_seconds = 0;    // mean over samples
  double finetune_seconds = 0;  // mean over samples
  double total_seconds = 0;     // search + finetune
  std::vector<double> epoch_accuracy;
  double clean_pct = 0;
  double aua_pct = 0;
  double avg_queries = 0;
  double avg_queries_success = 0;
  std::int64_t params_full = 0;    // non-embedding parameters
  std::int64_t params_ticket = 0;
  std::string theta0_path;
  std::string ticket_spec_path;
  std::string mask_trace_path;
  std::string final_checkpoint_path;
  std::string report_txt_path;
  std::string report_json_path;
  std::string config_echo;
};

// theta0 snapshot -> search -> extract -> finetune -> attack eval, with
// files written under cfg.output_dir. Sweep lists produce one report per
// (head_ratio, neuron_ratio) combination.
std::vector<RunReport> run_pipeline(RunConfig cfg);

// resolve corpus either from the generator or from dataset files
Corpus resolve_corpus(const RunConfig& cfg);

void write_report_files(const RunReport& report);
std::string format_report_text(const RunReport& report);

}  // namespace earlybird
