#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <earlybird/pipeline.hpp>

using namespace earlybird;
namespace fs = std::filesystem;

namespace {

// scaled-down configuration so an end-to-end pipeline test stays fast
RunConfig tiny_run(const std::string& outdir, std::uint64_t seed = 1) {
  RunConfig cfg = parse_run_config_text(
      "[training]\n"
      "finetune_epochs = 2\n"
      "search_max_epochs = 2\n"
      "[corpus]\n"
      "n_train = 192\n"
      "n_test = 48\n"
      "[attack]\n"
      "sample_size = 24\n");
  cfg.repeat = 1;
  cfg.seed = seed;
  cfg.output_dir = outdir;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("the pipeline writes every artifact and a consistent report") {
  const std::string outdir = "test_pipeline_out";
  fs::remove_all(outdir);
  const std::vector<RunReport> reports = run_pipeline(tiny_run(outdir));
  REQUIRE(reports.size() == 1);
  const RunReport& r = reports.front();

  CHECK(r.run_name == "run");
  for (const std::string& path :
       {r.theta0_path, r.ticket_spec_path, r.mask_trace_path,
        r.final_checkpoint_path, r.report_txt_path, r.report_json_path})
    CHECK(fs::exists(path));

  CHECK(r.search_steps > 0);
  CHECK(r.params_full > r.params_ticket);
  CHECK(r.clean_pct >= 0.0);
  CHECK(r.aua_pct <= r.clean_pct);
  CHECK(r.avg_queries >= 1.0);
  CHECK(r.epoch_accuracy.size() == 2);
  CHECK(r.search_seconds_samples.size() == 1);

  // the ticket spec reloads to the run's pruning settings
  const TicketSpec spec = load_ticket_spec(r.ticket_spec_path);
  CHECK(spec.source_checkpoint == r.theta0_path);
  CHECK(spec.prune_config.head_ratio == doctest::Approx(r.head_ratio));

  // the pruned checkpoint reloads and matches the reported param count
  ModelParams finetuned = load_checkpoint(r.final_checkpoint_path);
  CHECK(param_count(finetuned, true) == r.params_ticket);

  // report.json parses and mirrors the scalar fields
  const nlohmann::json j = nlohmann::json::parse(slurp(r.report_json_path));
  CHECK(j.at("search_steps").get<int>() == r.search_steps);
  CHECK(j.at("clean_pct").get<double>() == r.clean_pct);
  CHECK(j.at("params_ticket").get<std::int64_t>() == r.params_ticket);

  // report.txt carries key=value lines plus the config echo
  const std::string txt = slurp(r.report_txt_path);
  CHECK(txt.find("aua_pct=") != std::string::npos);
  CHECK(txt.find("config_echo_begin") != std::string::npos);

  // one mask-trace line per completed miniepoch
  std::ifstream trace(r.mask_trace_path);
  std::string line;
  int lines = 0;
  while (std::getline(trace, line)) {
    CHECK(line.rfind("miniepoch=", 0) == 0);
    CHECK(line.find(" head_dist=") != std::string::npos);
    CHECK(line.find(" neuron_dist=") != std::string::npos);
    CHECK(line.find(" hits=") != std::string::npos);
    ++lines;
  }
  CHECK(lines > 0);
  fs::remove_all(outdir);
}

TEST_CASE("identical config and seed reproduce reports bitwise") {
  const std::string out_a = "test_pipeline_det_a";
  const std::string out_b = "test_pipeline_det_b";
  fs::remove_all(out_a);
  fs::remove_all(out_b);
  const RunReport a = run_pipeline(tiny_run(out_a, 3)).front();
  const RunReport b = run_pipeline(tiny_run(out_b, 3)).front();

  CHECK(slurp(a.theta0_path) == slurp(b.theta0_path));
  CHECK(slurp(a.final_checkpoint_path) == slurp(b.final_checkpoint_path));
  CHECK(slurp(a.ticket_spec_path) == slurp(b.ticket_spec_path));
  CHECK(slurp(a.mask_trace_path) == slurp(b.mask_trace_path));
  CHECK(a.clean_pct == b.clean_pct);
  CHECK(a.aua_pct == b.aua_pct);
  CHECK(a.avg_queries == b.avg_queries);
  fs::remove_all(out_a);
  fs::remove_all(out_b);
}

TEST_CASE("the random-ticket ablation swaps only the mask") {
  const std::string out_er = "test_pipeline_abl_a";
  const std::string out_rt = "test_pipeline_abl_b";
  fs::remove_all(out_er);
  fs::remove_all(out_rt);
  RunConfig base = tiny_run(out_er, 4);
  RunConfig ablated = tiny_run(out_rt, 4);
  ablated.random_ticket = true;
  const RunReport a = run_pipeline(base).front();
  const RunReport b = run_pipeline(ablated).front();

  // same theta0, same sparsity, different mask
  CHECK(slurp(a.theta0_path) == slurp(b.theta0_path));
  CHECK(a.params_ticket == b.params_ticket);
  const TicketSpec sa = load_ticket_spec(a.ticket_spec_path);
  const TicketSpec sb = load_ticket_spec(b.ticket_spec_path);
  CHECK(!(sa.mask == sb.mask));
  fs::remove_all(out_er);
  fs::remove_all(out_rt);
}

TEST_CASE("sweep lists produce one named report per ratio combination") {
  const std::string outdir = "test_pipeline_sweep";
  fs::remove_all(outdir);
  RunConfig cfg = tiny_run(outdir, 5);
  cfg.head_ratios = {0.0, 0.25};
  cfg.neuron_ratios = {0.3};
  const std::vector<RunReport> reports = run_pipeline(cfg);
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].run_name != reports[1].run_name);
  CHECK(reports[0].params_ticket > reports[1].params_ticket);
  for (const auto& r : reports) CHECK(fs::exists(r.report_json_path));
  fs::remove_all(outdir);
}

TEST_CASE("dataset-file mode reproduces the generated corpus") {
  const std::string outdir = "test_pipeline_files";
  fs::remove_all(outdir);
  fs::create_directories(outdir);
  RunConfig cfg = tiny_run(outdir, 6);
  cfg.apply_flags();
  const Corpus corpus = resolve_corpus(cfg);
  corpus.vocab.save(outdir + "/vocab.txt");
  save_dataset(outdir + "/train.txt", corpus.train, corpus.vocab);
  save_dataset(outdir + "/test.txt", corpus.test, corpus.vocab);
  corpus.synonyms.save(outdir + "/syn.txt", corpus.vocab);

  RunConfig file_cfg = cfg;
  file_cfg.train_path = outdir + "/train.txt";
  file_cfg.test_path = outdir + "/test.txt";
  file_cfg.synonyms_path = outdir + "/syn.txt";
  file_cfg.vocab_path = outdir + "/vocab.txt";
  const Corpus loaded = resolve_corpus(file_cfg);
  REQUIRE(loaded.train.size() == corpus.train.size());
  for (std::size_t i = 0; i < corpus.train.size(); ++i) {
    CHECK(loaded.train[i].tokens == corpus.train[i].tokens);
    CHECK(loaded.train[i].label == corpus.train[i].label);
  }
  CHECK(loaded.synonyms.groups == corpus.synonyms.groups);

  RunConfig incomplete = file_cfg;
  incomplete.vocab_path.clear();
  CHECK_THROWS_AS(resolve_corpus(incomplete), std::invalid_argument);
  fs::remove_all(outdir);
}
