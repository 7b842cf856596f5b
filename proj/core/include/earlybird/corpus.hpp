#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "earlybird/rng.hpp"

namespace earlybird {

// token id 0 is padding, 1 is the unknown/mask token; neither is ever
// produced by the generator as a content token
constexpr int kPadId = 0;
constexpr int kUnkId = 1;

struct Vocab {
  std::vector<std::string> id_to_token;
  std::map<std::string, int> token_to_id;

  int size() const { return static_cast<int>(id_to_token.size()); }
  int lookup(const std::string& tok) const;  // kUnkId for unknown
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);
};

struct Example {
  std::vector<int> tokens;  // padded to fixed length, pads at the tail
  int label = 0;
  int length = 0;  // pre-pad length
};

using Dataset = std::vector<Example>;

// token id -> substitute token ids (excluding itself); symmetric
struct SynonymTable {
  std::map<int, std::vector<int>> groups;

  const std::vector<int>* substitutes(int token) const;
  void add_pair(int a, int b);
  void save(const std::string& path, const Vocab& vocab) const;
  static SynonymTable load(const std::string& path, const Vocab& vocab);
};

struct GenSpec {
  int n_classes = 2;
  int vocab_size = 200;
  int seq_len = 16;
  int n_train = 2000;
  int n_test = 400;
  int planted_keywords_per_class = 3;  // synonym groups per class
  int synonym_group_size = 6;
  int bridge_groups = 12;  // cross-class substitute links per class pair
  double noise_token_fraction = 0.5;  // fraction of vocab used as noise pool
  double label_noise = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Corpus {
  Dataset train;
  Dataset test;
  SynonymTable synonyms;
  Vocab vocab;
  GenSpec spec;
};

Corpus generate(const GenSpec& spec);

// line format: `label<TAB>token token token ...`
void save_dataset(const std::string& path, const Dataset& ds, const Vocab& vocab);
Dataset load_dataset(const std::string& path, const Vocab& vocab, int seq_len);

// true-label rule of the generator: class with the most planted keywords,
// ties toward the lower class. Used by tests as an ideal classifier.
int keyword_vote(const std::vector<int>& tokens, const GenSpec& spec);

// id layout helpers (content ids start after pad/unk)
int first_keyword_id();
int keyword_id_count(const GenSpec& spec);
bool is_keyword_id(int id, const GenSpec& spec);
int keyword_class_of(int id, const GenSpec& spec);

}  // namespace earlybird
