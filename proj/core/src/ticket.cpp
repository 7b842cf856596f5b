#include "earlybird/ticket.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace earlybird {

void RegConfig::validate() const {
  if (lambda_heads < 0 || lambda_neurons < 0)
    throw std::invalid_argument("regularization strengths must be >= 0");
}

Tensor regularizer(Tape& tape, const Coefficients& coeffs,
                   const RegConfig& reg) {
  reg.validate();
  Tensor total = Tensor::scalar(0.0);
  for (const auto& c : coeffs.heads)
    total = tape.add(total, tape.scale(tape.l1_norm(c), reg.lambda_heads));
  for (const auto& c : coeffs.neurons)
    total = tape.add(total, tape.scale(tape.l1_norm(c), reg.lambda_neurons));
  return total;
}

int Mask::total_heads() const {
  int n = 0;
  for (const auto& l : head_keep) n += static_cast<int>(l.size());
  return n;
}

int Mask::total_neurons() const {
  int n = 0;
  for (const auto& l : neuron_keep) n += static_cast<int>(l.size());
  return n;
}

int Mask::kept_heads() const {
  int n = 0;
  for (const auto& l : head_keep)
    for (auto v : l) n += v;
  return n;
}

int Mask::kept_neurons() const {
  int n = 0;
  for (const auto& l : neuron_keep)
    for (auto v : l) n += v;
  return n;
}

void PruneConfig::validate() const {
  if (head_ratio < 0 || head_ratio >= 1 || neuron_ratio < 0 || neuron_ratio >= 1)
    throw std::invalid_argument("prune ratios must be in [0,1)");
}

namespace {

struct Entry {
  double magnitude;
  int layer;
  int index;

  bool operator<(const Entry& other) const {
    return std::tie(magnitude, layer, index) <
           std::tie(other.magnitude, other.layer, other.index);
  }
};

std::vector<std::vector<std::uint8_t>> select_heads(
    const std::vector<Tensor>& c_heads, const PruneConfig& cfg) {
  const int n_layers = static_cast<int>(c_heads.size());
  std::vector<std::vector<std::uint8_t>> keep(n_layers);
  for (int l = 0; l < n_layers; ++l)
    keep[l].assign(c_heads[l].size(), 1);
  if (cfg.head_scope == HeadScope::layer_wise) {
    for (int l = 0; l < n_layers; ++l) {
      const int n = static_cast<int>(c_heads[l].size());
      const int k = static_cast<int>(std::floor(cfg.head_ratio * n));
      std::vector<Entry> entries;
      for (int i = 0; i < n; ++i)
        entries.push_back({std::abs(c_heads[l].at(i)), l, i});
      std::sort(entries.begin(), entries.end());
      for (int i = 0; i < k; ++i) keep[l][entries[i].index] = 0;
    }
    return keep;
  }
  // global with survivor: walk heads ascending by magnitude, skip any prune
  // that would empty a layer
  std::vector<Entry> entries;
  std::vector<int> surviving(n_layers);
  int total = 0;
  for (int l = 0; l < n_layers; ++l) {
    surviving[l] = static_cast<int>(c_heads[l].size());
    total += surviving[l];
    for (int i = 0; i < surviving[l]; ++i)
      entries.push_back({std::abs(c_heads[l].at(i)), l, i});
  }
  std::sort(entries.begin(), entries.end());
  int to_prune = static_cast<int>(std::floor(cfg.head_ratio * total));
  for (const auto& e : entries) {
    if (to_prune == 0) break;
    if (surviving[e.layer] <= 1) continue;
    keep[e.layer][e.index] = 0;
    --surviving[e.layer];
    --to_prune;
  }
  if (to_prune > 0)
    throw std::invalid_argument(
        "head prune ratio unreachable under the per-layer survivor constraint");
  return keep;
}

std::vector<std::vector<std::uint8_t>> select_neurons(
    const std::vector<Tensor>& c_neurons, const PruneConfig& cfg) {
  const int n_layers = static_cast<int>(c_neurons.size());
  std::vector<std::vector<std::uint8_t>> keep(n_layers);
  for (int l = 0; l < n_layers; ++l)
    keep[l].assign(c_neurons[l].size(), 1);
  if (cfg.neuron_scope == NeuronScope::layer_wise) {
    for (int l = 0; l < n_layers; ++l) {
      const int n = static_cast<int>(c_neurons[l].size());
      const int k = static_cast<int>(std::floor(cfg.neuron_ratio * n));
      std::vector<Entry> entries;
      for (int i = 0; i < n; ++i)
        entries.push_back({std::abs(c_neurons[l].at(i)), l, i});
      std::sort(entries.begin(), entries.end());
      for (int i = 0; i < k; ++i) keep[l][entries[i].index] = 0;
    }
    return keep;
  }
  std::vector<Entry> entries;
  int total = 0;
  for (int l = 0; l < n_layers; ++l) {
    const int n = static_cast<int>(c_neurons[l].size());
    total += n;
    for (int i = 0; i < n; ++i)
      entries.push_back({std::abs(c_neurons[l].at(i)), l, i});
  }
  std::sort(entries.begin(), entries.end());
  const int k = static_cast<int>(std::floor(cfg.neuron_ratio * total));
  for (int i = 0; i < k; ++i) keep[entries[i].layer][entries[i].index] = 0;
  return keep;
}

}  // namespace

Mask binarize(const Coefficients& coeffs, const PruneConfig& cfg) {
  cfg.validate();
  Mask mask;
  mask.head_keep = select_heads(coeffs.heads, cfg);
  mask.neuron_keep = select_neurons(coeffs.neurons, cfg);
  return mask;
}

std::pair<double, double> mask_distance(const Mask& a, const Mask& b) {
  auto channel = [](const std::vector<std::vector<std::uint8_t>>& x,
                    const std::vector<std::vector<std::uint8_t>>& y) {
    if (x.size() != y.size())
      throw std::invalid_argument("mask_distance: layer counts disagree");
    int diff = 0, total = 0;
    for (std::size_t l = 0; l < x.size(); ++l) {
      if (x[l].size() != y[l].size())
        throw std::invalid_argument("mask_distance: layer lengths disagree");
      for (std::size_t i = 0; i < x[l].size(); ++i) {
        diff += (x[l][i] != y[l][i]);
        ++total;
      }
    }
    return total == 0 ? 0.0 : static_cast<double>(diff) / total;
  };
  return {channel(a.head_keep, b.head_keep),
          channel(a.neuron_keep, b.neuron_keep)};
}

ConvergenceDetector::Decision ConvergenceDetector::observe(double head_dist,
                                                           double neuron_dist) {
  history.emplace_back(head_dist, neuron_dist);
  if (head_dist < gamma && neuron_dist < gamma)
    ++consecutive_hits;
  else
    consecutive_hits = 0;
  return consecutive_hits >= window ? Decision::terminate
                                    : Decision::continue_search;
}

ConvergenceDetector::Decision ConvergenceDetector::update(
    const Coefficients& coeffs, const PruneConfig& cfg) {
  Mask mask = binarize(coeffs, cfg);
  if (!prev_mask) {
    prev_mask = std::move(mask);
    return Decision::continue_search;
  }
  const auto [hd, nd] = mask_distance(*prev_mask, mask);
  prev_mask = std::move(mask);
  return observe(hd, nd);
}

namespace {

void write_keep_lines(std::ostream& os, const std::string& key,
                      const std::vector<std::vector<std::uint8_t>>& keep) {
  for (std::size_t l = 0; l < keep.size(); ++l) {
    os << key << ' ' << l << ':';
    for (std::size_t i = 0; i < keep[l].size(); ++i)
      if (keep[l][i]) os << ' ' << i;
    os << " of " << keep[l].size() << '\n';
  }
}

std::vector<std::uint8_t> parse_keep_line(const std::string& line,
                                          const std::string& path) {
  const auto colon = line.find(':');
  const auto of = line.rfind(" of ");
  if (colon == std::string::npos || of == std::string::npos || of < colon)
    throw std::runtime_error(path + ": malformed keep line: " + line);
  const int total = std::stoi(line.substr(of + 4));
  std::vector<std::uint8_t> keep(total, 0);
  std::istringstream ls(line.substr(colon + 1, of - colon - 1));
  int idx;
  while (ls >> idx) {
    if (idx < 0 || idx >= total)
      throw std::runtime_error(path + ": keep index out of range");
    keep[idx] = 1;
  }
  return keep;
}

}  // namespace

void ConvergenceDetector::save(std::ostream& os) const {
  os << "gamma " << format_double(gamma) << "\nwindow " << window
     << "\nhits " << consecutive_hits << "\nhistory " << history.size() << '\n';
  for (const auto& [hd, nd] : history)
    os << format_double(hd) << ' ' << format_double(nd) << '\n';
  os << "has_prev " << (prev_mask ? 1 : 0) << '\n';
  if (prev_mask) {
    os << "layers " << prev_mask->head_keep.size() << '\n';
    write_keep_lines(os, "heads", prev_mask->head_keep);
    write_keep_lines(os, "neurons", prev_mask->neuron_keep);
  }
}

void ConvergenceDetector::load(std::istream& is) {
  std::string key;
  std::size_t n;
  is >> key >> gamma >> key >> window >> key >> consecutive_hits >> key >> n;
  history.clear();
  for (std::size_t i = 0; i < n; ++i) {
    double hd, nd;
    is >> hd >> nd;
    history.emplace_back(hd, nd);
  }
  int has_prev;
  is >> key >> has_prev;
  prev_mask.reset();
  if (has_prev) {
    std::size_t layers;
    is >> key >> layers;
    is.ignore(1);
    Mask m;
    std::string line;
    for (std::size_t l = 0; l < layers; ++l) {
      std::getline(is, line);
      m.head_keep.push_back(parse_keep_line(line, "<detector-state>"));
    }
    for (std::size_t l = 0; l < layers; ++l) {
      std::getline(is, line);
      m.neuron_keep.push_back(parse_keep_line(line, "<detector-state>"));
    }
    prev_mask = std::move(m);
  }
}

void append_mask_trace(std::ostream& os, int miniepoch, double head_dist,
                       double neuron_dist, int hits) {
  os << "miniepoch=" << miniepoch << " head_dist=" << format_double(head_dist)
     << " neuron_dist=" << format_double(neuron_dist) << " hits=" << hits
     << '\n';
}

void save_ticket_spec(const std::string& path, const TicketSpec& spec) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "ticket-spec v1\n";
  // store the checkpoint path relative to the spec file so a run directory
  // can be moved, and so identical runs in different directories produce
  // identical spec files
  std::filesystem::path src(spec.source_checkpoint);
  const std::filesystem::path base =
      std::filesystem::path(path).parent_path();
  if (src.parent_path() == base) src = src.filename();
  os << "theta0: " << src.generic_string() << '\n';
  os << "search_steps: " << spec.search_steps_used << '\n';
  os << "head_ratio: " << format_double(spec.prune_config.head_ratio) << '\n';
  os << "neuron_ratio: " << format_double(spec.prune_config.neuron_ratio)
     << '\n';
  os << "head_scope: "
     << (spec.prune_config.head_scope == HeadScope::layer_wise
             ? "layer_wise"
             : "global_with_survivor")
     << '\n';
  os << "neuron_scope: "
     << (spec.prune_config.neuron_scope == NeuronScope::layer_wise
             ? "layer_wise"
             : "global")
     << '\n';
  os << "layers: " << spec.mask.head_keep.size() << '\n';
  write_keep_lines(os, "heads", spec.mask.head_keep);
  write_keep_lines(os, "neurons", spec.mask.neuron_keep);
}

TicketSpec load_ticket_spec(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(is, line);
  if (line != "ticket-spec v1")
    throw std::runtime_error(path + ": not a ticket-spec v1 file");
  TicketSpec spec;
  auto expect = [&](const std::string& key) {
    std::getline(is, line);
    if (line.rfind(key, 0) != 0)
      throw std::runtime_error(path + ": expected " + key);
    return line.substr(key.size());
  };
  spec.source_checkpoint = expect("theta0: ");
  {
    const std::filesystem::path src(spec.source_checkpoint);
    if (src.is_relative() && !src.has_parent_path())
      spec.source_checkpoint =
          (std::filesystem::path(path).parent_path() / src).string();
  }
  spec.search_steps_used = std::stoi(expect("search_steps: "));
  spec.prune_config.head_ratio = std::stod(expect("head_ratio: "));
  spec.prune_config.neuron_ratio = std::stod(expect("neuron_ratio: "));
  spec.prune_config.head_scope = expect("head_scope: ") == "layer_wise"
                                     ? HeadScope::layer_wise
                                     : HeadScope::global_with_survivor;
  spec.prune_config.neuron_scope = expect("neuron_scope: ") == "layer_wise"
                                       ? NeuronScope::layer_wise
                                       : NeuronScope::global;
  const int layers = std::stoi(expect("layers: "));
  for (int l = 0; l < layers; ++l) {
    std::getline(is, line);
    spec.mask.head_keep.push_back(parse_keep_line(line, path));
  }
  for (int l = 0; l < layers; ++l) {
    std::getline(is, line);
    spec.mask.neuron_keep.push_back(parse_keep_line(line, path));
  }
  return spec;
}

void apply_mask(ModelParams& params, const Mask& mask) {
  if (mask.head_keep.size() != params.layers.size() ||
      mask.neuron_keep.size() != params.layers.size())
    throw std::invalid_argument("mask layer count does not match model");
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& layer = params.layers[l];
    const auto& hk = mask.head_keep[l];
    const auto& nk = mask.neuron_keep[l];
    if (static_cast<int>(hk.size()) != layer.head_count() ||
        static_cast<int>(nk.size()) != layer.neuron_count())
      throw std::invalid_argument("mask lengths do not match model layer " +
                                  std::to_string(l));
    if (std::count(hk.begin(), hk.end(), 1) == 0)
      throw std::invalid_argument("mask empties all heads of layer " +
                                  std::to_string(l));
    if (std::count(nk.begin(), nk.end(), 1) == 0)
      throw std::invalid_argument("mask empties all neurons of layer " +
                                  std::to_string(l));

    LayerParams next;
    std::vector<int> new_kept_heads;
    const auto& old_ch = params.coeffs.heads[l];
    std::vector<double> new_ch;
    for (std::size_t h = 0; h < hk.size(); ++h) {
      if (!hk[h]) continue;
      next.w_q.push_back(layer.w_q[h]);
      next.w_k.push_back(layer.w_k[h]);
      next.w_v.push_back(layer.w_v[h]);
      next.w_o.push_back(layer.w_o[h]);
      new_kept_heads.push_back(params.kept_heads[l][h]);
      new_ch.push_back(old_ch.at(static_cast<std::int64_t>(h)));
    }

    const int d = params.config.hidden;
    const int old_f = layer.neuron_count();
    std::vector<int> keep_cols;
    for (int j = 0; j < old_f; ++j)
      if (nk[j]) keep_cols.push_back(j);
    const int new_f = static_cast<int>(keep_cols.size());
    Tensor w_up({d, new_f}, true);
    Tensor w_down({new_f, d}, true);
    std::vector<double> new_cf;
    std::vector<int> new_kept_neurons;
    for (int jj = 0; jj < new_f; ++jj) {
      const int j = keep_cols[jj];
      for (int i = 0; i < d; ++i) {
        w_up.at(static_cast<std::int64_t>(i) * new_f + jj) =
            layer.w_up.at(static_cast<std::int64_t>(i) * old_f + j);
        w_down.at(static_cast<std::int64_t>(jj) * d + i) =
            layer.w_down.at(static_cast<std::int64_t>(j) * d + i);
      }
      new_cf.push_back(params.coeffs.neurons[l].at(j));
      new_kept_neurons.push_back(params.kept_neurons[l][j]);
    }
    next.w_up = w_up;
    next.w_down = w_down;
    next.ln1_gain = layer.ln1_gain;
    next.ln1_bias = layer.ln1_bias;
    next.ln2_gain = layer.ln2_gain;
    next.ln2_bias = layer.ln2_bias;

    params.layers[l] = std::move(next);
    params.coeffs.heads[l] =
        Tensor({static_cast<int>(new_ch.size())}, new_ch, true);
    params.coeffs.neurons[l] =
        Tensor({static_cast<int>(new_cf.size())}, new_cf, true);
    params.kept_heads[l] = std::move(new_kept_heads);
    params.kept_neurons[l] = std::move(new_kept_neurons);
  }
}

std::vector<std::vector<std::uint8_t>> prune_heads(ModelParams& params,
                                                   const PruneConfig& cfg) {
  cfg.validate();
  auto keep = select_heads(params.coeffs.heads, cfg);
  Mask mask;
  mask.head_keep = keep;
  for (std::size_t l = 0; l < params.layers.size(); ++l)
    mask.neuron_keep.emplace_back(params.layers[l].neuron_count(), 1);
  apply_mask(params, mask);
  return keep;
}

std::vector<std::vector<std::uint8_t>> prune_neurons(ModelParams& params,
                                                     const PruneConfig& cfg) {
  cfg.validate();
  auto keep = select_neurons(params.coeffs.neurons, cfg);
  Mask mask;
  mask.neuron_keep = keep;
  for (std::size_t l = 0; l < params.layers.size(); ++l)
    mask.head_keep.emplace_back(params.layers[l].head_count(), 1);
  apply_mask(params, mask);
  return keep;
}

ModelParams extract_ticket(const std::string& theta0_path, const Mask& mask) {
  ModelParams params = load_checkpoint(theta0_path);
  apply_mask(params, mask);
  // coefficients are absorbed: fine-tuning trains weights only
  for (auto& c : params.coeffs.heads)
    std::fill(c.data().begin(), c.data().end(), 1.0);
  for (auto& c : params.coeffs.neurons)
    std::fill(c.data().begin(), c.data().end(), 1.0);
  return params;
}

Mask random_ticket(const ModelConfig& config, const PruneConfig& cfg,
                   Rng& rng) {
  cfg.validate();
  // random magnitudes through the exact selection procedure preserve the
  // prune counts and the survivor constraint
  Coefficients coeffs;
  for (int l = 0; l < config.n_layers; ++l) {
    Tensor ch({config.n_heads});
    for (auto& v : ch.data()) v = rng.uniform();
    Tensor cf({config.ffn_dim});
    for (auto& v : cf.data()) v = rng.uniform();
    coeffs.heads.push_back(ch);
    coeffs.neurons.push_back(cf);
  }
  return binarize(coeffs, cfg);
}

ModelParams reinit_ticket(const std::string& theta0_path, const Mask& mask,
                          ReinitMode mode, Rng& rng) {
  if (mode == ReinitMode::reinit_ticket_weights) {
    ModelParams ticket = extract_ticket(theta0_path, mask);
    ticket.for_each_weight([&](const std::string& name, Tensor& t) {
      if (name.find("ln") != std::string::npos) return;  // norms stay 1/0
      for (auto& v : t.data()) v = rng.uniform(-0.05, 0.05);
    });
    return ticket;
  }
  // reinit_complement: full-size model, fresh draws only where the mask
  // prunes; ticket-covered arrays stay bitwise at theta0
  ModelParams params = load_checkpoint(theta0_path);
  if (mask.head_keep.size() != params.layers.size())
    throw std::invalid_argument("mask layer count does not match model");
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& layer = params.layers[l];
    const auto& hk = mask.head_keep[l];
    const auto& nk = mask.neuron_keep[l];
    for (std::size_t h = 0; h < hk.size(); ++h) {
      if (hk[h]) continue;
      for (Tensor* t : {&layer.w_q[h], &layer.w_k[h], &layer.w_v[h],
                        &layer.w_o[h]})
        for (auto& v : t->data()) v = rng.uniform(-0.05, 0.05);
    }
    const int d = params.config.hidden;
    const int f = layer.neuron_count();
    for (int j = 0; j < f; ++j) {
      if (nk[j]) continue;
      for (int i = 0; i < d; ++i) {
        layer.w_up.at(static_cast<std::int64_t>(i) * f + j) =
            rng.uniform(-0.05, 0.05);
        layer.w_down.at(static_cast<std::int64_t>(j) * d + i) =
            rng.uniform(-0.05, 0.05);
      }
    }
  }
  return params;
}

}  // namespace earlybird
