#include "earlybird/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace earlybird {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

std::vector<double> parse_double_list(const std::string& v) {
  std::vector<double> out;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(trim(item)));
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

}  // namespace

void RunConfig::apply_flags() {
  if (no_adv) adversary.steps = 0;
  if (no_regularizer) {
    regularizer.lambda_heads = 0;
    regularizer.lambda_neurons = 0;
  }
  if (layer_wise_heads) pruning.head_scope = HeadScope::layer_wise;
  if (layer_wise_neurons) pruning.neuron_scope = NeuronScope::layer_wise;
  training.seed = seed;
  corpus.seed = seed;
  if (head_ratios.empty()) head_ratios = {pruning.head_ratio};
  if (neuron_ratios.empty()) neuron_ratios = {pruning.neuron_ratio};
}

ModelConfig RunConfig::model_config(int vocab_size, int max_seq_len,
                                    int n_classes) const {
  ModelConfig mc;
  mc.n_layers = n_layers;
  mc.n_heads = n_heads;
  mc.hidden = hidden;
  mc.head_dim = hidden / n_heads;
  mc.ffn_dim = ffn_dim > 0 ? ffn_dim : 4 * hidden;
  mc.vocab_size = vocab_size;
  mc.max_seq_len = max_seq_len;
  mc.n_classes = n_classes;
  mc.validate();
  return mc;
}

RunConfig parse_run_config_text(const std::string& text) {
  RunConfig cfg;
  using Setter = std::function<void(RunConfig&, const std::string&)>;
  static const std::map<std::string, std::map<std::string, Setter>> schema = {
      {"model",
       {{"n_layers", [](RunConfig& c, const std::string& v) { c.n_layers = std::stoi(v); }},
        {"n_heads", [](RunConfig& c, const std::string& v) { c.n_heads = std::stoi(v); }},
        {"hidden", [](RunConfig& c, const std::string& v) { c.hidden = std::stoi(v); }},
        {"ffn_dim", [](RunConfig& c, const std::string& v) { c.ffn_dim = std::stoi(v); }}}},
      {"training",
       {{"learning_rate", [](RunConfig& c, const std::string& v) { c.training.learning_rate = std::stod(v); }},
        {"finetune_epochs", [](RunConfig& c, const std::string& v) { c.training.finetune_epochs = std::stoi(v); }},
        {"search_max_epochs", [](RunConfig& c, const std::string& v) { c.training.search_max_epochs = std::stoi(v); }},
        {"batch_size", [](RunConfig& c, const std::string& v) { c.training.batch_size = std::stoi(v); }},
        {"miniepoch_fraction", [](RunConfig& c, const std::string& v) { c.training.miniepoch_fraction = std::stod(v); }},
        {"optimizer",
         [](RunConfig& c, const std::string& v) {
           if (v == "sgd") c.training.optimizer = OptimizerKind::sgd;
           else if (v == "adam_like") c.training.optimizer = OptimizerKind::adam_like;
           else throw std::invalid_argument("optimizer must be sgd or adam_like");
         }},
        {"repeat", [](RunConfig& c, const std::string& v) { c.repeat = std::stoi(v); }}}},
      {"adversary",
       {{"eps0", [](RunConfig& c, const std::string& v) { c.adversary.eps0 = std::stod(v); }},
        {"steps", [](RunConfig& c, const std::string& v) { c.adversary.steps = std::stoi(v); }},
        {"step_size", [](RunConfig& c, const std::string& v) { c.adversary.step_size = std::stod(v); }},
        {"ball_radius",
         [](RunConfig& c, const std::string& v) {
           if (v == "none") c.adversary.ball_radius.reset();
           else c.adversary.ball_radius = std::stod(v);
         }},
        {"mode",
         [](RunConfig& c, const std::string& v) {
           if (v == "pgd") c.adversary.mode = AdvMode::pgd;
           else if (v == "freelb") c.adversary.mode = AdvMode::freelb_accumulate;
           else throw std::invalid_argument("mode must be pgd or freelb");
         }}}},
      {"regularizer",
       {{"lambda_heads", [](RunConfig& c, const std::string& v) { c.regularizer.lambda_heads = std::stod(v); }},
        {"lambda_neurons", [](RunConfig& c, const std::string& v) { c.regularizer.lambda_neurons = std::stod(v); }}}},
      {"pruning",
       {{"head_ratio",
         [](RunConfig& c, const std::string& v) {
           c.head_ratios = parse_double_list(v);
           c.pruning.head_ratio = c.head_ratios.front();
         }},
        {"neuron_ratio",
         [](RunConfig& c, const std::string& v) {
           c.neuron_ratios = parse_double_list(v);
           c.pruning.neuron_ratio = c.neuron_ratios.front();
         }},
        {"head_scope",
         [](RunConfig& c, const std::string& v) {
           if (v == "global_with_survivor") c.pruning.head_scope = HeadScope::global_with_survivor;
           else if (v == "layer_wise") c.pruning.head_scope = HeadScope::layer_wise;
           else throw std::invalid_argument("bad head_scope: " + v);
         }},
        {"neuron_scope",
         [](RunConfig& c, const std::string& v) {
           if (v == "global") c.pruning.neuron_scope = NeuronScope::global;
           else if (v == "layer_wise") c.pruning.neuron_scope = NeuronScope::layer_wise;
           else throw std::invalid_argument("bad neuron_scope: " + v);
         }}}},
      {"detector",
       {{"gamma", [](RunConfig& c, const std::string& v) { c.gamma = std::stod(v); }},
        {"window", [](RunConfig& c, const std::string& v) { c.detector_window = std::stoi(v); }}}},
      {"attack",
       {{"max_candidates", [](RunConfig& c, const std::string& v) { c.attack.max_candidates_per_word = std::stoi(v); }},
        {"query_budget", [](RunConfig& c, const std::string& v) { c.attack.query_budget = std::stoi(v); }},
        {"sample_size",
         [](RunConfig& c, const std::string& v) {
           const int n = std::stoi(v);
           if (n <= 0) c.attack.eval_sample_size.reset();
           else c.attack.eval_sample_size = n;
         }}}},
      {"corpus",
       {{"n_classes", [](RunConfig& c, const std::string& v) { c.corpus.n_classes = std::stoi(v); }},
        {"vocab_size", [](RunConfig& c, const std::string& v) { c.corpus.vocab_size = std::stoi(v); }},
        {"seq_len", [](RunConfig& c, const std::string& v) { c.corpus.seq_len = std::stoi(v); }},
        {"n_train", [](RunConfig& c, const std::string& v) { c.corpus.n_train = std::stoi(v); }},
        {"n_test", [](RunConfig& c, const std::string& v) { c.corpus.n_test = std::stoi(v); }},
        {"planted_keywords_per_class", [](RunConfig& c, const std::string& v) { c.corpus.planted_keywords_per_class = std::stoi(v); }},
        {"synonym_group_size", [](RunConfig& c, const std::string& v) { c.corpus.synonym_group_size = std::stoi(v); }},
        {"bridge_groups", [](RunConfig& c, const std::string& v) { c.corpus.bridge_groups = std::stoi(v); }},
        {"noise_token_fraction", [](RunConfig& c, const std::string& v) { c.corpus.noise_token_fraction = std::stod(v); }},
        {"label_noise", [](RunConfig& c, const std::string& v) { c.corpus.label_noise = std::stod(v); }},
        {"train_path", [](RunConfig& c, const std::string& v) { c.train_path = v; }},
        {"test_path", [](RunConfig& c, const std::string& v) { c.test_path = v; }},
        {"synonyms_path", [](RunConfig& c, const std::string& v) { c.synonyms_path = v; }},
        {"vocab_path", [](RunConfig& c, const std::string& v) { c.vocab_path = v; }}}},
      {"run",
       {{"output_dir", [](RunConfig& c, const std::string& v) { c.output_dir = v; }},
        {"seed", [](RunConfig& c, const std::string& v) { c.seed = std::stoull(v); }},
        {"repeat", [](RunConfig& c, const std::string& v) { c.repeat = std::stoi(v); }},
        {"no_adv", [](RunConfig& c, const std::string& v) { c.no_adv = parse_bool(v); }},
        {"no_regularizer", [](RunConfig& c, const std::string& v) { c.no_regularizer = parse_bool(v); }},
        {"random_ticket", [](RunConfig& c, const std::string& v) { c.random_ticket = parse_bool(v); }},
        {"reinit_ticket", [](RunConfig& c, const std::string& v) { c.reinit_ticket = parse_bool(v); }},
        {"reinit_complement", [](RunConfig& c, const std::string& v) { c.reinit_complement = parse_bool(v); }},
        {"layer_wise_heads", [](RunConfig& c, const std::string& v) { c.layer_wise_heads = parse_bool(v); }},
        {"layer_wise_neurons", [](RunConfig& c, const std::string& v) { c.layer_wise_neurons = parse_bool(v); }}}},
  };

  cfg.raw_text = text;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("line " + std::to_string(lineno) +
                                    ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!schema.count(section))
        throw std::invalid_argument("line " + std::to_string(lineno) +
                                    ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("line " + std::to_string(lineno) +
                                  ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      throw std::invalid_argument("line " + std::to_string(lineno) +
                                  ": key outside any section");
    const auto& keys = schema.at(section);
    auto it = keys.find(key);
    if (it == keys.end())
      throw std::invalid_argument("line " + std::to_string(lineno) +
                                  ": unknown key '" + key + "' in [" +
                                  section + "]");
    try {
      it->second(cfg, value);
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception& e) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": " +
                                  e.what());
    }
  }
  return cfg;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_run_config_text(ss.str());
}

}  // namespace earlybird
