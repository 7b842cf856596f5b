#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "earlybird/adversary.hpp"
#include "earlybird/attack.hpp"
#include "earlybird/corpus.hpp"
#include "earlybird/ticket.hpp"
#include "earlybird/trainer.hpp"

namespace earlybird {

// One flat config file: `[section]` headers, `key = value` lines, `#`
// comments. Unknown sections or keys are rejected. Every field carries the
// documented default, so an empty file is a valid full configuration.
struct RunConfig {
  // [model] — vocab size, sequence length and class count come from the
  // corpus at run time
  int n_layers = 2;
  int n_heads = 4;
  int hidden = 32;
  int ffn_dim = 0;  // 0: use 4 * hidden

  TrainConfig training;
  AdvConfig adversary;
  RegConfig regularizer;
  PruneConfig pruning;
  double gamma = 0.1;
  int detector_window = 5;
  AttackConfig attack;
  GenSpec corpus;

  // dataset file mode; when train_path is set the generator is bypassed
  std::string train_path, test_path, synonyms_path, vocab_path;

  // ablation flags
  bool no_adv = false;
  bool no_regularizer = false;
  bool random_ticket = false;
  bool reinit_ticket = false;
  bool reinit_complement = false;
  bool layer_wise_heads = false;
  bool layer_wise_neurons = false;

  std::string output_dir = "out";
  std::uint64_t seed = 1;
  int repeat = 5;  // timing samples per report

  // sweep lists; single-element lists mean no sweep
  std::vector<double> head_ratios;
  std::vector<double> neuron_ratios;

  std::string raw_text;  // config file contents, echoed into reports

  void apply_flags();  // fold ablation flags into the sub-configs
  ModelConfig model_config(int vocab_size, int max_seq_len,
                           int n_classes) const;
};

RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text);

}  // namespace earlybird
