#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <earlybird/corpus.hpp>

using namespace earlybird;

namespace {

bool datasets_equal(const Dataset& a, const Dataset& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].tokens != b[i].tokens || a[i].label != b[i].label ||
        a[i].length != b[i].length)
      return false;
  return true;
}

// independent oracle: multinomial naive Bayes with Laplace smoothing over
// raw token counts
struct NaiveBayes {
  std::vector<std::vector<double>> log_like;  // class x token
  std::vector<double> log_prior;

  void fit(const Dataset& ds, int n_classes, int vocab) {
    std::vector<std::vector<double>> counts(n_classes,
                                            std::vector<double>(vocab, 1.0));
    std::vector<double> class_count(n_classes, 0.0);
    for (const auto& ex : ds) {
      class_count[ex.label] += 1.0;
      for (int i = 0; i < ex.length; ++i) counts[ex.label][ex.tokens[i]] += 1.0;
    }
    log_prior.resize(n_classes);
    log_like.assign(n_classes, std::vector<double>(vocab));
    for (int c = 0; c < n_classes; ++c) {
      log_prior[c] = std::log(class_count[c] / ds.size());
      double total = 0;
      for (double v : counts[c]) total += v;
      for (int t = 0; t < vocab; ++t)
        log_like[c][t] = std::log(counts[c][t] / total);
    }
  }

  int predict(const Example& ex) const {
    int best = 0;
    double best_score = -1e300;
    for (std::size_t c = 0; c < log_like.size(); ++c) {
      double s = log_prior[c];
      for (int i = 0; i < ex.length; ++i) s += log_like[c][ex.tokens[i]];
      if (s > best_score) {
        best_score = s;
        best = static_cast<int>(c);
      }
    }
    return best;
  }
};

}  // namespace

TEST_CASE("the same seed generates bitwise-identical corpora") {
  GenSpec spec;
  spec.seed = 21;
  spec.n_train = 200;
  spec.n_test = 50;
  const Corpus a = generate(spec);
  const Corpus b = generate(spec);
  CHECK(datasets_equal(a.train, b.train));
  CHECK(datasets_equal(a.test, b.test));
  CHECK(a.vocab.id_to_token == b.vocab.id_to_token);
  CHECK(a.synonyms.groups == b.synonyms.groups);

  spec.seed = 22;
  const Corpus c = generate(spec);
  CHECK(!datasets_equal(a.train, c.train));
}

TEST_CASE("generated labels follow the keyword-vote rule when noise-free") {
  GenSpec spec;
  spec.seed = 23;
  spec.n_train = 300;
  spec.n_test = 100;
  spec.label_noise = 0.0;
  const Corpus corpus = generate(spec);
  for (const auto& ex : corpus.train)
    CHECK(ex.label == keyword_vote(ex.tokens, spec));
  for (const auto& ex : corpus.test)
    CHECK(ex.label == keyword_vote(ex.tokens, spec));
}

TEST_CASE("a linear bag-of-words oracle learns the task above 95 percent") {
  GenSpec spec;
  spec.seed = 24;
  const Corpus corpus = generate(spec);
  NaiveBayes nb;
  nb.fit(corpus.train, spec.n_classes, corpus.vocab.size());
  int correct = 0;
  for (const auto& ex : corpus.test) correct += (nb.predict(ex) == ex.label);
  CHECK(static_cast<double>(correct) / corpus.test.size() > 0.95);
}

TEST_CASE("without bridges every substitution chain preserves the label") {
  GenSpec spec;
  spec.seed = 25;
  spec.n_train = 50;
  spec.n_test = 50;
  spec.bridge_groups = 0;
  const Corpus corpus = generate(spec);
  for (const auto& ex : corpus.test) {
    const int clean_vote = keyword_vote(ex.tokens, spec);
    CHECK(clean_vote == ex.label);
    std::vector<int> probe = ex.tokens;
    for (int pos = 0; pos < ex.length; ++pos) {
      const auto* subs = corpus.synonyms.substitutes(ex.tokens[pos]);
      if (!subs) continue;
      for (int s : *subs) {
        probe[pos] = s;
        // an ideal classifier is untouched: Aua% equals Clean%
        CHECK(keyword_vote(probe, spec) == clean_vote);
      }
      probe[pos] = ex.tokens[pos];
    }
  }
}

TEST_CASE("pad and unk never appear as content tokens") {
  GenSpec spec;
  spec.seed = 26;
  spec.n_train = 200;
  spec.n_test = 50;
  const Corpus corpus = generate(spec);
  auto scan = [&](const Dataset& ds) {
    for (const auto& ex : ds) {
      REQUIRE(ex.length >= 1);
      REQUIRE(ex.length <= spec.seq_len);
      for (int i = 0; i < ex.length; ++i) {
        CHECK(ex.tokens[i] != kPadId);
        CHECK(ex.tokens[i] != kUnkId);
        CHECK(ex.tokens[i] < corpus.vocab.size());
      }
      for (std::size_t i = ex.length; i < ex.tokens.size(); ++i)
        CHECK(ex.tokens[i] == kPadId);
    }
  };
  scan(corpus.train);
  scan(corpus.test);
}

TEST_CASE("the synonym table is symmetric with no self-substitutes") {
  GenSpec spec;
  spec.seed = 27;
  spec.n_train = 10;
  spec.n_test = 10;
  const Corpus corpus = generate(spec);
  for (const auto& [token, subs] : corpus.synonyms.groups) {
    for (int s : subs) {
      CHECK(s != token);
      const auto* back = corpus.synonyms.substitutes(s);
      REQUIRE(back != nullptr);
      CHECK(std::find(back->begin(), back->end(), token) != back->end());
    }
  }
}

TEST_CASE("datasets and vocabularies round-trip through their file formats") {
  GenSpec spec;
  spec.seed = 28;
  spec.n_train = 40;
  spec.n_test = 10;
  const Corpus corpus = generate(spec);

  const std::string vpath = "test_corpus_vocab.txt";
  const std::string dpath = "test_corpus_train.txt";
  const std::string spath = "test_corpus_syn.txt";
  corpus.vocab.save(vpath);
  save_dataset(dpath, corpus.train, corpus.vocab);
  corpus.synonyms.save(spath, corpus.vocab);

  const Vocab vocab = Vocab::load(vpath);
  CHECK(vocab.id_to_token == corpus.vocab.id_to_token);
  const Dataset train = load_dataset(dpath, vocab, spec.seq_len);
  CHECK(datasets_equal(train, corpus.train));
  const SynonymTable syn = SynonymTable::load(spath, vocab);
  CHECK(syn.groups == corpus.synonyms.groups);

  std::remove(vpath.c_str());
  std::remove(dpath.c_str());
  std::remove(spath.c_str());
}

TEST_CASE("unknown tokens in a dataset file map to the unk id") {
  GenSpec spec;
  spec.seed = 29;
  spec.n_train = 5;
  spec.n_test = 5;
  const Corpus corpus = generate(spec);
  const std::string dpath = "test_corpus_unknown.txt";
  {
    std::FILE* f = std::fopen(dpath.c_str(), "w");
    std::fputs("1\tn0 mystery n1\n", f);
    std::fclose(f);
  }
  const Dataset ds = load_dataset(dpath, corpus.vocab, spec.seq_len);
  REQUIRE(ds.size() == 1);
  CHECK(ds[0].label == 1);
  CHECK(ds[0].length == 3);
  CHECK(ds[0].tokens[1] == kUnkId);
  std::remove(dpath.c_str());
}

TEST_CASE("an inconsistent generator spec is rejected") {
  GenSpec spec;
  spec.vocab_size = 20;  // 36 keywords cannot fit
  CHECK_THROWS_AS(generate(spec), std::invalid_argument);
  GenSpec bad;
  bad.synonym_group_size = 1;
  CHECK_THROWS_AS(generate(bad), std::invalid_argument);
}
