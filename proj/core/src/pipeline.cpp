#include "earlybird/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace earlybird {

namespace fs = std::filesystem;
using nlohmann::json;

Corpus resolve_corpus(const RunConfig& cfg) {
  if (cfg.train_path.empty()) return generate(cfg.corpus);
  if (cfg.test_path.empty() || cfg.synonyms_path.empty() ||
      cfg.vocab_path.empty())
    throw std::invalid_argument(
        "dataset mode needs train_path, test_path, synonyms_path and "
        "vocab_path");
  Corpus corpus;
  corpus.spec = cfg.corpus;
  corpus.vocab = Vocab::load(cfg.vocab_path);
  corpus.train = load_dataset(cfg.train_path, corpus.vocab, cfg.corpus.seq_len);
  corpus.test = load_dataset(cfg.test_path, corpus.vocab, cfg.corpus.seq_len);
  corpus.synonyms = SynonymTable::load(cfg.synonyms_path, corpus.vocab);
  return corpus;
}

namespace {

double mean(const std::vector<double>& xs) {
  return xs.empty() ? 0.0
                    : std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
}

struct StageArtifacts {
  Mask mask;
  int search_steps = 0;
  bool converged = false;
  ModelParams finetuned;
  std::vector<double> epoch_accuracy;
  std::vector<TraceEntry> trace;
};

// one full search+extract+finetune pass; bit-identical across repeats of
// the same configuration
StageArtifacts run_stages(const RunConfig& cfg, const Corpus& corpus,
                          const std::string& theta0_path,
                          double* search_sec, double* finetune_sec) {
  SearchConfigs scfg;
  scfg.train = cfg.training;
  scfg.adv = cfg.adversary;
  scfg.reg = cfg.regularizer;
  scfg.prune = cfg.pruning;
  scfg.gamma = cfg.gamma;
  scfg.detector_window = cfg.detector_window;

  ModelParams theta0 = load_checkpoint(theta0_path);

  StageArtifacts art;
  SearchState state = make_search_state(theta0, scfg);
  SearchOutcome outcome;
  *search_sec = measure_time(
      [&] { outcome = search_stage(corpus.train, state, scfg); });
  art.search_steps = outcome.steps_used;
  art.converged = outcome.detector_converged;
  art.trace = state.trace;
  art.mask = outcome.mask;

  if (cfg.random_ticket) {
    Rng ticket_rng = make_rng(cfg.seed, Stream::random_ticket);
    art.mask = random_ticket(theta0.config, cfg.pruning, ticket_rng);
  }

  ModelParams ticket;
  if (cfg.reinit_ticket || cfg.reinit_complement) {
    Rng reinit_rng = make_rng(cfg.seed, Stream::reinit);
    ticket = reinit_ticket(theta0_path, art.mask,
                           cfg.reinit_ticket
                               ? ReinitMode::reinit_ticket_weights
                               : ReinitMode::reinit_complement,
                           reinit_rng);
  } else {
    // ratio 0 yields an all-ones mask, so this covers the no-prune case too
    ticket = extract_ticket(theta0_path, art.mask);
  }

  Rng finetune_rng = make_rng(cfg.seed, Stream::finetune_order);
  FinetuneOutcome ft;
  *finetune_sec = measure_time([&] {
    ft = finetune_stage(ticket, corpus.train, corpus.test, cfg.training,
                        finetune_rng);
  });
  art.epoch_accuracy = ft.epoch_accuracy;
  art.finetuned = std::move(ticket);
  return art;
}

RunReport run_one(const RunConfig& cfg, const Corpus& corpus,
                  const std::string& run_name) {
  const fs::path outdir = fs::path(cfg.output_dir) / run_name;
  fs::create_directories(outdir);

  const ModelConfig mc = cfg.model_config(
      corpus.vocab.size(), corpus.spec.seq_len, corpus.spec.n_classes);
  Rng init_rng = make_rng(cfg.seed, Stream::init);
  ModelParams theta0 = init_params(mc, init_rng);
  const std::string theta0_path = (outdir / "theta0.ckpt").string();
  save_checkpoint(theta0_path, theta0);

  RunReport report;
  report.run_name = run_name;
  report.head_ratio = cfg.pruning.head_ratio;
  report.neuron_ratio = cfg.pruning.neuron_ratio;
  report.theta0_path = theta0_path;
  report.config_echo = cfg.raw_text;
  report.params_full = param_count(theta0, /*exclude_embeddings=*/true);

  StageArtifacts art;
  const int repeats = std::max(1, cfg.repeat);
  for (int r = 0; r < repeats; ++r) {
    double ss = 0, fts = 0;
    art = run_stages(cfg, corpus, theta0_path, &ss, &fts);
    report.search_seconds_samples.push_back(ss);
    report.finetune_seconds_samples.push_back(fts);
  }
  report.search_seconds = mean(report.search_seconds_samples);
  report.finetune_seconds = mean(report.finetune_seconds_samples);
  report.total_seconds = report.search_seconds + report.finetune_seconds;
  report.search_steps = art.search_steps;
  report.detector_converged = art.converged;
  report.epoch_accuracy = art.epoch_accuracy;
  report.params_ticket = param_count(art.finetuned, true);

  report.mask_trace_path = (outdir / "mask_trace.txt").string();
  {
    std::ofstream os(report.mask_trace_path);
    for (const auto& t : art.trace)
      append_mask_trace(os, t.miniepoch, t.head_dist, t.neuron_dist, t.hits);
  }
  report.ticket_spec_path = (outdir / "ticket.spec").string();
  TicketSpec spec;
  spec.mask = art.mask;
  spec.source_checkpoint = theta0_path;
  spec.search_steps_used = std::max(1, art.search_steps);
  spec.prune_config = cfg.pruning;
  save_ticket_spec(report.ticket_spec_path, spec);

  report.final_checkpoint_path = (outdir / "finetuned.ckpt").string();
  save_checkpoint(report.final_checkpoint_path, art.finetuned);

  Rng attack_rng = make_rng(cfg.seed, Stream::attack);
  AttackReport attack = evaluate_robustness(art.finetuned, corpus.test,
                                            corpus.synonyms, cfg.attack,
                                            attack_rng);
  report.clean_pct = attack.clean_pct;
  report.aua_pct = attack.aua_pct;
  report.avg_queries = attack.avg_queries;
  report.avg_queries_success = attack.avg_queries_success;
  save_attack_report((outdir / "attack_report.txt").string(), attack);

  report.report_txt_path = (outdir / "report.txt").string();
  report.report_json_path = (outdir / "report.json").string();
  write_report_files(report);
  return report;
}

}  // namespace

std::vector<RunReport> run_pipeline(RunConfig cfg) {
  cfg.apply_flags();
  cfg.training.validate();
  cfg.adversary.validate();
  Corpus corpus = resolve_corpus(cfg);
  std::vector<RunReport> reports;
  const bool sweep = cfg.head_ratios.size() > 1 || cfg.neuron_ratios.size() > 1;
  for (double hr : cfg.head_ratios) {
    for (double nr : cfg.neuron_ratios) {
      RunConfig one = cfg;
      one.pruning.head_ratio = hr;
      one.pruning.neuron_ratio = nr;
      std::string name = "run";
      if (sweep) {
        std::ostringstream ss;
        ss << "run_h" << hr << "_n" << nr;
        name = ss.str();
      }
      reports.push_back(run_one(one, corpus, name));
    }
  }
  return reports;
}

std::string format_report_text(const RunReport& r) {
  std::ostringstream os;
  os << "run_name=" << r.run_name << '\n';
  os << "head_ratio=" << format_double(r.head_ratio) << '\n';
  os << "neuron_ratio=" << format_double(r.neuron_ratio) << '\n';
  os << "search_steps=" << r.search_steps << '\n';
  os << "detector_converged=" << (r.detector_converged ? 1 : 0) << '\n';
  os << "search_seconds=" << format_double(r.search_seconds) << '\n';
  os << "finetune_seconds=" << format_double(r.finetune_seconds) << '\n';
  os << "total_seconds=" << format_double(r.total_seconds) << '\n';
  for (std::size_t i = 0; i < r.search_seconds_samples.size(); ++i)
    os << "search_seconds_sample_" << i << '='
       << format_double(r.search_seconds_samples[i]) << '\n';
  for (std::size_t i = 0; i < r.finetune_seconds_samples.size(); ++i)
    os << "finetune_seconds_sample_" << i << '='
       << format_double(r.finetune_seconds_samples[i]) << '\n';
  for (std::size_t i = 0; i < r.epoch_accuracy.size(); ++i)
    os << "epoch_" << i << "_clean_accuracy="
       << format_double(r.epoch_accuracy[i]) << '\n';
  os << "clean_pct=" << format_double(r.clean_pct) << '\n';
  os << "aua_pct=" << format_double(r.aua_pct) << '\n';
  os << "avg_queries=" << format_double(r.avg_queries) << '\n';
  os << "avg_queries_success=" << format_double(r.avg_queries_success) << '\n';
  os << "params_full=" << r.params_full << '\n';
  os << "params_ticket=" << r.params_ticket << '\n';
  os << "theta0=" << r.theta0_path << '\n';
  os << "ticket_spec=" << r.ticket_spec_path << '\n';
  os << "mask_trace=" << r.mask_trace_path << '\n';
  os << "final_checkpoint=" << r.final_checkpoint_path << '\n';
  return os.str();
}

void write_report_files(const RunReport& r) {
  {
    std::ofstream os(r.report_txt_path);
    if (!os) throw std::runtime_error("cannot open " + r.report_txt_path);
    os << format_report_text(r);
    os << "config_echo_begin\n" << r.config_echo << "config_echo_end\n";
  }
  json j;
  j["run_name"] = r.run_name;
  j["head_ratio"] = r.head_ratio;
  j["neuron_ratio"] = r.neuron_ratio;
  j["search_steps"] = r.search_steps;
  j["detector_converged"] = r.detector_converged;
  j["search_seconds"] = r.search_seconds;
  j["finetune_seconds"] = r.finetune_seconds;
  j["total_seconds"] = r.total_seconds;
  j["search_seconds_samples"] = r.search_seconds_samples;
  j["finetune_seconds_samples"] = r.finetune_seconds_samples;
  j["epoch_accuracy"] = r.epoch_accuracy;
  j["clean_pct"] = r.clean_pct;
  j["aua_pct"] = r.aua_pct;
  j["avg_queries"] = r.avg_queries;
  j["avg_queries_success"] = r.avg_queries_success;
  j["params_full"] = r.params_full;
  j["params_ticket"] = r.params_ticket;
  j["theta0"] = r.theta0_path;
  j["ticket_spec"] = r.ticket_spec_path;
  j["mask_trace"] = r.mask_trace_path;
  j["final_checkpoint"] = r.final_checkpoint_path;
  j["config"] = r.config_echo;
  std::ofstream os(r.report_json_path);
  if (!os) throw std::runtime_error("cannot open " + r.report_json_path);
  os << j.dump(2) << '\n';
}

}  // namespace earlybird
