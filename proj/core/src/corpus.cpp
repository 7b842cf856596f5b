#include "earlybird/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace earlybird {

int Vocab::lookup(const std::string& tok) const {
  auto it = token_to_id.find(tok);
  return it == token_to_id.end() ? kUnkId : it->second;
}

void Vocab::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  for (const auto& tok : id_to_token) os << tok << '\n';
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  Vocab v;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    v.token_to_id[line] = v.size();
    v.id_to_token.push_back(line);
  }
  return v;
}

const std::vector<int>* SynonymTable::substitutes(int token) const {
  auto it = groups.find(token);
  return it == groups.end() ? nullptr : &it->second;
}

void SynonymTable::add_pair(int a, int b) {
  if (a == b) return;
  auto& ga = groups[a];
  if (std::find(ga.begin(), ga.end(), b) == ga.end()) ga.push_back(b);
  auto& gb = groups[b];
  if (std::find(gb.begin(), gb.end(), a) == gb.end()) gb.push_back(a);
}

void SynonymTable::save(const std::string& path, const Vocab& vocab) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  for (const auto& [tok, subs] : groups) {
    os << vocab.id_to_token[tok] << ':';
    for (int s : subs) os << ' ' << vocab.id_to_token[s];
    os << '\n';
  }
}

SynonymTable SynonymTable::load(const std::string& path, const Vocab& vocab) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  SynonymTable table;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": missing ':'");
    const int tok = vocab.lookup(line.substr(0, colon));
    std::istringstream rest(line.substr(colon + 1));
    std::string sub;
    // keep the file's substitution order; add_pair would splice reverse
    // edges ahead of a token's own line and reorder its list
    auto& subs = table.groups[tok];
    while (rest >> sub) {
      const int id = vocab.lookup(sub);
      if (id != tok && std::find(subs.begin(), subs.end(), id) == subs.end())
        subs.push_back(id);
    }
    if (subs.empty()) table.groups.erase(tok);
  }
  // symmetry holds for tables this code saved; hand-written files may list
  // an edge on one side only
  const auto snapshot = table.groups;
  for (const auto& [tok, subs] : snapshot)
    for (int s : subs) table.add_pair(tok, s);
  return table;
}

void GenSpec::validate() const {
  if (n_classes < 2) throw std::invalid_argument("need at least 2 classes");
  if (seq_len < 4) throw std::invalid_argument("seq_len too small");
  if (planted_keywords_per_class < 1 || synonym_group_size < 2)
    throw std::invalid_argument("keyword layout invalid");
  const int keywords = keyword_id_count(*this);
  const int noise = static_cast<int>(noise_token_fraction * vocab_size);
  if (noise < 1) throw std::invalid_argument("noise pool is empty");
  if (2 + keywords + noise > vocab_size)
    throw std::invalid_argument("keywords and noise pool exceed vocab_size");
  if (label_noise < 0 || label_noise >= 1)
    throw std::invalid_argument("label_noise must be in [0,1)");
  if (bridge_groups < 0) throw std::invalid_argument("bridge_groups < 0");
}

int first_keyword_id() { return 2; }

int keyword_id_count(const GenSpec& spec) {
  return spec.n_classes * spec.planted_keywords_per_class *
         spec.synonym_group_size;
}

bool is_keyword_id(int id, const GenSpec& spec) {
  return id >= first_keyword_id() &&
         id < first_keyword_id() + keyword_id_count(spec);
}

int keyword_class_of(int id, const GenSpec& spec) {
  if (!is_keyword_id(id, spec)) return -1;
  const int per_class = spec.planted_keywords_per_class * spec.synonym_group_size;
  return (id - first_keyword_id()) / per_class;
}

int keyword_vote(const std::vector<int>& tokens, const GenSpec& spec) {
  std::vector<int> counts(spec.n_classes, 0);
  for (int t : tokens) {
    const int c = keyword_class_of(t, spec);
    if (c >= 0) ++counts[c];
  }
  int best = 0;
  for (int c = 1; c < spec.n_classes; ++c)
    if (counts[c] > counts[best]) best = c;
  return best;
}

namespace {

int keyword_id(const GenSpec& spec, int cls, int group, int member) {
  return first_keyword_id() +
         (cls * spec.planted_keywords_per_class + group) *
             spec.synonym_group_size +
         member;
}

Example make_example(const GenSpec& spec, int label, Rng& rng) {
  Example ex;
  const int min_len = std::max(4, spec.seq_len / 2);
  ex.length = min_len + static_cast<int>(
                            rng.next_below(spec.seq_len - min_len + 1));
  ex.tokens.assign(spec.seq_len, kPadId);
  const int noise_base = first_keyword_id() + keyword_id_count(spec);
  const int noise_pool =
      static_cast<int>(spec.noise_token_fraction * spec.vocab_size);
  for (int i = 0; i < ex.length; ++i)
    ex.tokens[i] = noise_base + static_cast<int>(rng.next_below(noise_pool));
  // plant 1..3 keywords of this label's class at distinct positions
  const int n_kw = 1 + static_cast<int>(rng.next_below(3));
  std::vector<int> positions(ex.length);
  for (int i = 0; i < ex.length; ++i) positions[i] = i;
  for (int i = 0; i < n_kw; ++i) {
    const int j =
        i + static_cast<int>(rng.next_below(positions.size() - i));
    std::swap(positions[i], positions[j]);
    const int group = static_cast<int>(
        rng.next_below(spec.planted_keywords_per_class));
    const int member =
        static_cast<int>(rng.next_below(spec.synonym_group_size));
    ex.tokens[positions[i]] = keyword_id(spec, label, group, member);
  }
  ex.label = label;
  if (spec.label_noise > 0 && rng.uniform() < spec.label_noise) {
    ex.label = (label + 1 + static_cast<int>(
                                rng.next_below(spec.n_classes - 1))) %
               spec.n_classes;
  }
  return ex;
}

}  // namespace

Corpus generate(const GenSpec& spec) {
  spec.validate();
  Corpus corpus;
  corpus.spec = spec;

  auto& vocab = corpus.vocab;
  vocab.id_to_token = {"<pad>", "<unk>"};
  for (int c = 0; c < spec.n_classes; ++c)
    for (int g = 0; g < spec.planted_keywords_per_class; ++g)
      for (int m = 0; m < spec.synonym_group_size; ++m)
        vocab.id_to_token.push_back("k" + std::to_string(c) + "_" +
                                    std::to_string(g) + "_" +
                                    std::to_string(m));
  const int noise_pool =
      static_cast<int>(spec.noise_token_fraction * spec.vocab_size);
  for (int j = 0; j < noise_pool; ++j)
    vocab.id_to_token.push_back("n" + std::to_string(j));
  for (int i = 0; i < vocab.size(); ++i)
    vocab.token_to_id[vocab.id_to_token[i]] = i;

  // within-group substitutes are label-preserving by construction
  for (int c = 0; c < spec.n_classes; ++c)
    for (int g = 0; g < spec.planted_keywords_per_class; ++g)
      for (int a = 0; a < spec.synonym_group_size; ++a)
        for (int b = a + 1; b < spec.synonym_group_size; ++b)
          corpus.synonyms.add_pair(keyword_id(spec, c, g, a),
                                   keyword_id(spec, c, g, b));
  // bridge links connect keywords across classes so attacks can succeed
  const int bridge_cycle = spec.n_classes * spec.planted_keywords_per_class;
  for (int b = 0; b < spec.bridge_groups; ++b) {
    const int c0 = b % spec.n_classes;
    const int c1 = (c0 + 1) % spec.n_classes;
    const int g = (b / spec.n_classes) % spec.planted_keywords_per_class;
    const int m0 = (b / bridge_cycle) % spec.synonym_group_size;
    const int m1 = (m0 + 1) % spec.synonym_group_size;
    corpus.synonyms.add_pair(keyword_id(spec, c0, g, m0),
                             keyword_id(spec, c1, g, m1));
  }

  // one stream, disjoint index ranges: train first, then test
  Rng rng = make_rng(spec.seed, Stream::corpus);
  for (int i = 0; i < spec.n_train; ++i)
    corpus.train.push_back(make_example(spec, i % spec.n_classes, rng));
  for (int i = 0; i < spec.n_test; ++i)
    corpus.test.push_back(make_example(spec, i % spec.n_classes, rng));
  return corpus;
}

void save_dataset(const std::string& path, const Dataset& ds,
                  const Vocab& vocab) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  for (const auto& ex : ds) {
    os << ex.label << '\t';
    for (int i = 0; i < ex.length; ++i) {
      if (i) os << ' ';
      os << vocab.id_to_token[ex.tokens[i]];
    }
    os << '\n';
  }
}

Dataset load_dataset(const std::string& path, const Vocab& vocab, int seq_len) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  Dataset ds;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": missing label separator");
    Example ex;
    try {
      std::size_t used = 0;
      ex.label = std::stoi(line.substr(0, tab), &used);
      if (used != tab) throw std::invalid_argument("trailing junk");
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": malformed label");
    }
    ex.tokens.assign(seq_len, kPadId);
    std::istringstream rest(line.substr(tab + 1));
    std::string tok;
    int n = 0;
    while (rest >> tok && n < seq_len) ex.tokens[n++] = vocab.lookup(tok);
    ex.length = n;
    ds.push_back(std::move(ex));
  }
  return ds;
}

}  // namespace earlybird
