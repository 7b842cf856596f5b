// earlybird command line: gen / search / finetune / attack / pipeline / report

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <earlybird/config.hpp>
#include <earlybird/pipeline.hpp>

namespace fs = std::filesystem;
using namespace earlybird;

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("-c,--config", flags.config_path, "run-config file");
  cmd->add_option("--seed", flags.seed, "override the config seed");
  cmd->add_option("--output-dir", flags.output_dir, "override the output directory");
}

// precedence: flag > environment > config file > default
RunConfig load_config(const CommonFlags& flags) {
  RunConfig cfg;
  if (!flags.config_path.empty()) cfg = parse_run_config(flags.config_path);
  if (const char* env = std::getenv("OUTPUT_DIR")) cfg.output_dir = env;
  if (const char* env = std::getenv("SEED")) cfg.seed = std::stoull(env);
  if (flags.output_dir) cfg.output_dir = *flags.output_dir;
  if (flags.seed) cfg.seed = *flags.seed;
  return cfg;
}

SearchConfigs search_configs(const RunConfig& cfg) {
  SearchConfigs scfg;
  scfg.train = cfg.training;
  scfg.adv = cfg.adversary;
  scfg.reg = cfg.regularizer;
  scfg.prune = cfg.pruning;
  scfg.gamma = cfg.gamma;
  scfg.detector_window = cfg.detector_window;
  return scfg;
}

int cmd_gen(const CommonFlags& flags) {
  RunConfig cfg = load_config(flags);
  cfg.apply_flags();
  Corpus corpus = generate(cfg.corpus);
  fs::create_directories(cfg.output_dir);
  const fs::path dir(cfg.output_dir);
  corpus.vocab.save((dir / "vocab.txt").string());
  save_dataset((dir / "train.txt").string(), corpus.train, corpus.vocab);
  save_dataset((dir / "test.txt").string(), corpus.test, corpus.vocab);
  corpus.synonyms.save((dir / "synonyms.txt").string(), corpus.vocab);
  std::cout << "wrote " << (dir / "train.txt").string() << " ("
            << corpus.train.size() << " examples), "
            << (dir / "test.txt").string() << " (" << corpus.test.size()
            << " examples), " << (dir / "vocab.txt").string() << ", "
            << (dir / "synonyms.txt").string() << '\n';
  return 0;
}

// detector unit mode: one update per input line, `head_dist [neuron_dist]`
int run_scripted_distances(const RunConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  ConvergenceDetector det;
  det.gamma = cfg.gamma;
  det.window = cfg.detector_window;
  std::string line;
  int update = 0;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    double head_dist, neuron_dist;
    if (!(ls >> head_dist)) continue;  // blank line
    if (!(ls >> neuron_dist)) neuron_dist = head_dist;
    ++update;
    const auto decision = det.observe(head_dist, neuron_dist);
    append_mask_trace(std::cout, update, head_dist, neuron_dist,
                      det.consecutive_hits);
    if (decision == ConvergenceDetector::Decision::terminate) {
      std::cout << "terminated at update " << update << '\n';
      return 0;
    }
  }
  std::cout << "no termination after " << update << " updates\n";
  return 0;
}

int cmd_search(const CommonFlags& flags, int max_epochs, int max_steps,
               const std::string& distances_path,
               const std::string& resume_path,
               const std::string& save_state_path) {
  RunConfig cfg = load_config(flags);
  cfg.apply_flags();
  if (max_epochs >= 0) cfg.training.search_max_epochs = max_epochs;
  cfg.training.validate();
  if (!distances_path.empty()) return run_scripted_distances(cfg, distances_path);

  Corpus corpus = resolve_corpus(cfg);
  fs::create_directories(cfg.output_dir);
  const fs::path dir(cfg.output_dir);
  const std::string theta0_path = (dir / "theta0.ckpt").string();

  SearchConfigs scfg = search_configs(cfg);
  SearchState state;
  if (!resume_path.empty()) {
    state = SearchState::load(resume_path);
  } else {
    const ModelConfig mc = cfg.model_config(
        corpus.vocab.size(), cfg.corpus.seq_len, cfg.corpus.n_classes);
    Rng init_rng = make_rng(cfg.seed, Stream::init);
    ModelParams theta0 = init_params(mc, init_rng);
    save_checkpoint(theta0_path, theta0);
    state = make_search_state(theta0, scfg);
  }

  SearchOutcome outcome = search_stage(corpus.train, state, scfg, max_steps);

  if (!save_state_path.empty()) state.save(save_state_path);

  const std::string trace_path = (dir / "mask_trace.txt").string();
  {
    std::ofstream os(trace_path);
    for (const auto& t : state.trace)
      append_mask_trace(os, t.miniepoch, t.head_dist, t.neuron_dist, t.hits);
  }
  TicketSpec spec;
  spec.mask = outcome.mask;
  spec.source_checkpoint = theta0_path;
  spec.search_steps_used = outcome.steps_used;
  spec.prune_config = cfg.pruning;
  const std::string spec_path = (dir / "ticket.spec").string();
  save_ticket_spec(spec_path, spec);

  std::cout << "search: " << outcome.steps_used << " steps, detector "
            << (outcome.detector_converged ? "converged" : "did not converge")
            << "; kept " << outcome.mask.kept_heads() << "/"
            << outcome.mask.total_heads() << " heads, "
            << outcome.mask.kept_neurons() << "/"
            << outcome.mask.total_neurons() << " neurons\n";
  std::cout << "wrote " << spec_path << ", " << trace_path << '\n';
  return 0;
}

int cmd_finetune(const CommonFlags& flags, const std::string& ticket_path,
                 int epochs, const std::string& resume_path,
                 const std::string& save_state_path,
                 const std::string& out_path) {
  RunConfig cfg = load_config(flags);
  cfg.apply_flags();
  if (epochs >= 0) cfg.training.finetune_epochs = epochs;
  cfg.training.validate();

  Corpus corpus = resolve_corpus(cfg);
  fs::create_directories(cfg.output_dir);
  const std::string ckpt_path =
      out_path.empty() ? (fs::path(cfg.output_dir) / "finetuned.ckpt").string()
                       : out_path;

  FinetuneState state;
  if (!resume_path.empty()) {
    state = FinetuneState::load(resume_path);
  } else {
    TicketSpec spec = load_ticket_spec(ticket_path);
    ModelParams theta0 = load_checkpoint(spec.source_checkpoint);
    const ModelConfig mc = cfg.model_config(
        corpus.vocab.size(), cfg.corpus.seq_len, cfg.corpus.n_classes);
    if (static_cast<int>(spec.mask.head_keep.size()) != mc.n_layers ||
        theta0.config.n_layers != mc.n_layers ||
        theta0.config.n_heads != mc.n_heads ||
        theta0.config.hidden != mc.hidden ||
        theta0.config.ffn_dim != mc.ffn_dim)
      throw std::invalid_argument(
          "ticket configuration does not match the model configuration");
    ModelParams ticket = extract_ticket(spec.source_checkpoint, spec.mask);
    state = make_finetune_state(ticket, cfg.training);
  }

  state.run(corpus.train, corpus.test, cfg.training);
  if (!save_state_path.empty()) state.save(save_state_path);
  save_checkpoint(ckpt_path, state.params);

  std::cout << "finetune: " << state.epoch << " epochs";
  if (!state.outcome.epoch_accuracy.empty())
    std::cout << ", final clean accuracy "
              << format_double(state.outcome.epoch_accuracy.back());
  std::cout << "\nwrote " << ckpt_path << '\n';
  return 0;
}

int cmd_attack(const CommonFlags& flags, const std::string& checkpoint_path,
               int sample, int budget) {
  RunConfig cfg = load_config(flags);
  cfg.apply_flags();
  if (sample > 0) cfg.attack.eval_sample_size = sample;
  if (budget > 0) cfg.attack.query_budget = budget;
  cfg.attack.validate();

  Corpus corpus = resolve_corpus(cfg);
  ModelParams params = load_checkpoint(checkpoint_path);
  Rng attack_rng = make_rng(cfg.seed, Stream::attack);
  AttackReport report = evaluate_robustness(params, corpus.test,
                                            corpus.synonyms, cfg.attack,
                                            attack_rng);
  fs::create_directories(cfg.output_dir);
  const std::string report_path =
      (fs::path(cfg.output_dir) / "attack_report.txt").string();
  save_attack_report(report_path, report);
  std::cout << format_attack_summary(report);
  std::cout << "wrote " << report_path << '\n';
  return 0;
}

int cmd_pipeline(const CommonFlags& flags, const RunConfig& overrides,
                 int repeat, const std::string& head_ratios,
                 const std::string& neuron_ratios) {
  RunConfig cfg = load_config(flags);
  cfg.no_adv |= overrides.no_adv;
  cfg.no_regularizer |= overrides.no_regularizer;
  cfg.random_ticket |= overrides.random_ticket;
  cfg.reinit_ticket |= overrides.reinit_ticket;
  cfg.reinit_complement |= overrides.reinit_complement;
  cfg.layer_wise_heads |= overrides.layer_wise_heads;
  cfg.layer_wise_neurons |= overrides.layer_wise_neurons;
  if (repeat > 0) cfg.repeat = repeat;
  auto parse_list = [](const std::string& text) {
    std::vector<double> out;
    std::istringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
  };
  if (!head_ratios.empty()) cfg.head_ratios = parse_list(head_ratios);
  if (!neuron_ratios.empty()) cfg.neuron_ratios = parse_list(neuron_ratios);

  const auto reports = run_pipeline(cfg);
  for (const auto& r : reports) {
    std::cout << format_report_text(r);
    if (reports.size() > 1) std::cout << '\n';
  }
  return 0;
}

int cmd_report(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  is >> j;
  auto num = [&](const char* key) { return j.value(key, 0.0); };
  std::cout << "run " << j.value("run_name", std::string("?")) << '\n';
  std::cout << "  prune ratios     heads " << num("head_ratio") << ", neurons "
            << num("neuron_ratio") << '\n';
  std::cout << "  search           " << j.value("search_steps", 0)
            << " steps, detector "
            << (j.value("detector_converged", false) ? "converged"
                                                     : "did not converge")
            << '\n';
  std::cout << "  parameters       " << j.value("params_full", 0LL) << " -> "
            << j.value("params_ticket", 0LL) << " (non-embedding)\n";
  std::cout << "  time             search " << num("search_seconds")
            << "s + finetune " << num("finetune_seconds") << "s = "
            << num("total_seconds") << "s\n";
  std::cout << "  clean accuracy   " << num("clean_pct") << "%\n";
  std::cout << "  accuracy under attack  " << num("aua_pct") << "%\n";
  std::cout << "  queries per attacked example  " << num("avg_queries")
            << " (successful only: " << num("avg_queries_success") << ")\n";
  if (j.contains("epoch_accuracy")) {
    std::cout << "  per-epoch clean accuracy ";
    for (const auto& a : j["epoch_accuracy"]) std::cout << ' ' << a.get<double>();
    std::cout << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust early-bird ticket pipeline"};
  app.require_subcommand(1);

  CommonFlags gen_flags;
  auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
  add_common(gen, gen_flags);

  CommonFlags search_flags;
  int search_max_epochs = -1, search_max_steps = -1;
  std::string distances_path, search_resume, search_save_state;
  auto* search = app.add_subcommand("search", "search for a robust ticket");
  add_common(search, search_flags);
  search->add_option("--max-epochs", search_max_epochs, "search epoch budget");
  search->add_option("--max-steps", search_max_steps,
                     "stop after this many optimizer steps");
  search->add_option("--distances", distances_path,
                     "run the convergence detector on a file of distances");
  search->add_option("--resume", search_resume, "resume from a saved state");
  search->add_option("--save-state", search_save_state,
                     "write the final search state here");

  CommonFlags ft_flags;
  std::string ticket_path, ft_resume, ft_save_state, ft_out;
  int ft_epochs = -1;
  auto* finetune = app.add_subcommand("finetune", "fine-tune an extracted ticket");
  add_common(finetune, ft_flags);
  finetune->add_option("--ticket", ticket_path, "ticket spec file");
  finetune->add_option("--epochs", ft_epochs, "fine-tuning epochs");
  finetune->add_option("--resume", ft_resume, "resume from a saved state");
  finetune->add_option("--save-state", ft_save_state,
                       "write the final fine-tune state here");
  finetune->add_option("--out", ft_out, "output checkpoint path");

  CommonFlags atk_flags;
  std::string checkpoint_path;
  int atk_sample = 0, atk_budget = 0;
  auto* attack = app.add_subcommand("attack", "evaluate adversarial robustness");
  add_common(attack, atk_flags);
  attack->add_option("--checkpoint", checkpoint_path, "model checkpoint")
      ->required();
  attack->add_option("--sample", atk_sample, "evaluate a seeded subset");
  attack->add_option("--budget", atk_budget, "query budget per example");

  CommonFlags pipe_flags;
  RunConfig pipe_overrides;
  int pipe_repeat = 0;
  std::string pipe_head_ratios, pipe_neuron_ratios;
  auto* pipeline = app.add_subcommand("pipeline", "full search/finetune/attack run");
  add_common(pipeline, pipe_flags);
  pipeline->add_option("--repeat", pipe_repeat, "timing samples per report");
  pipeline->add_flag("--no-adv", pipe_overrides.no_adv, "clean-objective search");
  pipeline->add_flag("--no-regularizer", pipe_overrides.no_regularizer,
                     "drop the L1 term");
  pipeline->add_flag("--random-ticket", pipe_overrides.random_ticket,
                     "equal-sparsity random mask");
  pipeline->add_flag("--reinit-ticket", pipe_overrides.reinit_ticket,
                     "re-initialize the ticket weights");
  pipeline->add_flag("--reinit-complement", pipe_overrides.reinit_complement,
                     "re-initialize everything outside the ticket");
  pipeline->add_flag("--layer-wise-heads", pipe_overrides.layer_wise_heads,
                     "per-layer head pruning");
  pipeline->add_flag("--layer-wise-neurons", pipe_overrides.layer_wise_neurons,
                     "per-layer neuron pruning");
  pipeline->add_option("--head-ratios", pipe_head_ratios,
                       "comma list sweeping the head prune ratio");
  pipeline->add_option("--neuron-ratios", pipe_neuron_ratios,
                       "comma list sweeping the neuron prune ratio");

  std::string report_path;
  auto* report = app.add_subcommand("report", "pretty-print a report.json");
  report->add_option("path", report_path, "report.json file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_flags);
    if (search->parsed())
      return cmd_search(search_flags, search_max_epochs, search_max_steps,
                        distances_path, search_resume, search_save_state);
    if (finetune->parsed()) {
      if (ft_resume.empty() && ticket_path.empty())
        throw std::invalid_argument("finetune needs --ticket or --resume");
      return cmd_finetune(ft_flags, ticket_path, ft_epochs, ft_resume,
                          ft_save_state, ft_out);
    }
    if (attack->parsed())
      return cmd_attack(atk_flags, checkpoint_path, atk_sample, atk_budget);
    if (pipeline->parsed())
      return cmd_pipeline(pipe_flags, pipe_overrides, pipe_repeat,
                          pipe_head_ratios, pipe_neuron_ratios);
    if (report->parsed()) return cmd_report(report_path);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
