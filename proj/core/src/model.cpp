#include "earlybird/model.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace earlybird {

void ModelConfig::validate() const {
  if (n_layers < 1 || n_heads < 1 || hidden < 1 || head_dim < 1 ||
      ffn_dim < 1 || vocab_size < 1 || max_seq_len < 1 || n_classes < 1)
    throw std::invalid_argument("all model dimensions must be >= 1");
  if (head_dim * n_heads != hidden)
    throw std::invalid_argument("head_dim * n_heads must equal hidden");
}

ModelConfig ModelConfig::with_defaults(int n_layers, int n_heads, int hidden,
                                       int vocab_size, int max_seq_len,
                                       int n_classes) {
  ModelConfig c;
  c.n_layers = n_layers;
  c.n_heads = n_heads;
  c.hidden = hidden;
  c.head_dim = hidden / n_heads;
  c.ffn_dim = 4 * hidden;
  c.vocab_size = vocab_size;
  c.max_seq_len = max_seq_len;
  c.n_classes = n_classes;
  c.validate();
  return c;
}

bool ModelParams::pruned() const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].head_count() != config.n_heads) return true;
    if (layers[l].neuron_count() != config.ffn_dim) return true;
  }
  return false;
}

void ModelParams::for_each_weight(
    const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("tok_emb", tok_emb);
  fn("pos_emb", pos_emb);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& layer = layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    for (int h = 0; h < layer.head_count(); ++h) {
      const std::string hp = p + "head" + std::to_string(h) + ".";
      fn(hp + "wq", layer.w_q[h]);
      fn(hp + "wk", layer.w_k[h]);
      fn(hp + "wv", layer.w_v[h]);
      fn(hp + "wo", layer.w_o[h]);
    }
    fn(p + "w_up", layer.w_up);
    fn(p + "w_down", layer.w_down);
    fn(p + "ln1_gain", layer.ln1_gain);
    fn(p + "ln1_bias", layer.ln1_bias);
    fn(p + "ln2_gain", layer.ln2_gain);
    fn(p + "ln2_bias", layer.ln2_bias);
  }
  fn("cls_w", cls_w);
  fn("cls_b", cls_b);
}

void ModelParams::for_each_param(
    const std::function<void(const std::string&, Tensor&)>& fn) {
  for_each_weight(fn);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    fn("layer" + std::to_string(l) + ".c_heads", coeffs.heads[l]);
    fn("layer" + std::to_string(l) + ".c_neurons", coeffs.neurons[l]);
  }
}

void ModelParams::set_requires_grad(bool rg) {
  for_each_param([rg](const std::string&, Tensor& t) { t.set_requires_grad(rg); });
}

void ModelParams::zero_grad() {
  for_each_param([](const std::string&, Tensor& t) { t.zero_grad(); });
}

ModelParams ModelParams::clone() const {
  ModelParams copy = *this;
  copy.layers.clear();
  auto& self = const_cast<ModelParams&>(*this);
  copy.tok_emb = tok_emb.clone();
  copy.pos_emb = pos_emb.clone();
  copy.cls_w = cls_w.clone();
  copy.cls_b = cls_b.clone();
  copy.layers.resize(layers.size());
  copy.coeffs.heads.clear();
  copy.coeffs.neurons.clear();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& src = layers[l];
    auto& dst = copy.layers[l];
    for (int h = 0; h < src.head_count(); ++h) {
      dst.w_q.push_back(src.w_q[h].clone());
      dst.w_k.push_back(src.w_k[h].clone());
      dst.w_v.push_back(src.w_v[h].clone());
      dst.w_o.push_back(src.w_o[h].clone());
    }
    dst.w_up = src.w_up.clone();
    dst.w_down = src.w_down.clone();
    dst.ln1_gain = src.ln1_gain.clone();
    dst.ln1_bias = src.ln1_bias.clone();
    dst.ln2_gain = src.ln2_gain.clone();
    dst.ln2_bias = src.ln2_bias.clone();
    copy.coeffs.heads.push_back(self.coeffs.heads[l].clone());
    copy.coeffs.neurons.push_back(self.coeffs.neurons[l].clone());
  }
  return copy;
}

namespace {

Tensor uniform_init(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape), true);
  for (auto& v : t.data()) v = rng.uniform(-0.05, 0.05);
  return t;
}

}  // namespace

ModelParams init_params(const ModelConfig& config, Rng& rng) {
  config.validate();
  ModelParams p;
  p.config = config;
  p.tok_emb = uniform_init({config.vocab_size, config.hidden}, rng);
  p.pos_emb = uniform_init({config.max_seq_len, config.hidden}, rng);
  for (int l = 0; l < config.n_layers; ++l) {
    LayerParams layer;
    for (int h = 0; h < config.n_heads; ++h) {
      layer.w_q.push_back(uniform_init({config.hidden, config.head_dim}, rng));
      layer.w_k.push_back(uniform_init({config.hidden, config.head_dim}, rng));
      layer.w_v.push_back(uniform_init({config.hidden, config.head_dim}, rng));
      layer.w_o.push_back(uniform_init({config.head_dim, config.hidden}, rng));
    }
    layer.w_up = uniform_init({config.hidden, config.ffn_dim}, rng);
    layer.w_down = uniform_init({config.ffn_dim, config.hidden}, rng);
    layer.ln1_gain = Tensor::full({config.hidden}, 1.0, true);
    layer.ln1_bias = Tensor::zeros({config.hidden}, true);
    layer.ln2_gain = Tensor::full({config.hidden}, 1.0, true);
    layer.ln2_bias = Tensor::zeros({config.hidden}, true);
    p.layers.push_back(std::move(layer));
    p.coeffs.heads.push_back(Tensor::full({config.n_heads}, 1.0, true));
    p.coeffs.neurons.push_back(Tensor::full({config.ffn_dim}, 1.0, true));
    std::vector<int> all_heads(config.n_heads);
    std::iota(all_heads.begin(), all_heads.end(), 0);
    std::vector<int> all_neurons(config.ffn_dim);
    std::iota(all_neurons.begin(), all_neurons.end(), 0);
    p.kept_heads.push_back(std::move(all_heads));
    p.kept_neurons.push_back(std::move(all_neurons));
  }
  p.cls_w = uniform_init({config.hidden, config.n_classes}, rng);
  p.cls_b = uniform_init({config.n_classes}, rng);
  return p;
}

TokenBatch make_batch(const Dataset& ds, const std::vector<int>& indices) {
  TokenBatch batch;
  for (int i : indices) {
    batch.tokens.push_back(ds[i].tokens);
    batch.labels.push_back(ds[i].label);
  }
  return batch;
}

Tensor embed(Tape& tape, const TokenBatch& batch, const ModelParams& params) {
  const int seq = batch.seq_len();
  if (seq > params.config.max_seq_len)
    throw std::invalid_argument("sequence exceeds max_seq_len");
  std::vector<int> flat_ids, pos_ids;
  for (const auto& row : batch.tokens) {
    if (static_cast<int>(row.size()) != seq)
      throw std::invalid_argument("ragged batch");
    for (int s = 0; s < seq; ++s) {
      flat_ids.push_back(row[s]);
      pos_ids.push_back(s);
    }
  }
  Tensor tok = tape.gather_rows(params.tok_emb, flat_ids);
  Tensor pos = tape.gather_rows(params.pos_emb, pos_ids);
  return tape.add(tok, pos);
}

Tensor mha_forward(Tape& tape, const Tensor& x, const LayerParams& layer,
                   const Tensor& c_heads, int batch, int seq) {
  if (c_heads.size() != layer.head_count())
    throw std::invalid_argument("mha_forward: coefficient count mismatch");
  const double scale = 1.0 / std::sqrt(static_cast<double>(layer.w_q.empty()
                                           ? 1
                                           : layer.w_q[0].shape()[1]));
  std::vector<Tensor> per_example;
  per_example.reserve(batch);
  for (int b = 0; b < batch; ++b) {
    Tensor xb = tape.slice_rows(x, b * seq, (b + 1) * seq);
    std::vector<Tensor> head_outs;
    head_outs.reserve(layer.head_count());
    for (int h = 0; h < layer.head_count(); ++h) {
      Tensor q = tape.matmul(xb, layer.w_q[h]);
      Tensor k = tape.matmul(xb, layer.w_k[h]);
      Tensor v = tape.matmul(xb, layer.w_v[h]);
      Tensor scores = tape.scale(tape.matmul_nt(q, k), scale);
      Tensor attn = tape.softmax_rows(scores);
      Tensor ctx = tape.matmul(attn, v);
      head_outs.push_back(tape.matmul(ctx, layer.w_o[h]));
    }
    per_example.push_back(tape.weighted_sum(head_outs, c_heads));
  }
  return batch == 1 ? per_example[0] : tape.concat_rows(per_example);
}

Tensor ffn_forward(Tape& tape, const Tensor& x, const LayerParams& layer,
                   const Tensor& c_neurons) {
  if (c_neurons.size() != layer.neuron_count())
    throw std::invalid_argument("ffn_forward: coefficient count mismatch");
  Tensor hidden = tape.gelu(tape.matmul(x, layer.w_up));
  return tape.matmul(tape.col_scale(hidden, c_neurons), layer.w_down);
}

Tensor forward(Tape& tape, const TokenBatch& batch, const ModelParams& params,
               const std::optional<Tensor>& delta) {
  const int bs = batch.batch_size();
  const int seq = batch.seq_len();
  Tensor x = embed(tape, batch, params);
  if (delta.has_value()) {
    if (delta->shape() != x.shape() &&
        !(delta->rows() == x.rows() && delta->cols() == x.cols()))
      throw std::invalid_argument("delta shape does not match embeddings");
    x = tape.add(x, *delta);
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Tensor a = mha_forward(tape, x, layer, params.coeffs.heads[l], bs, seq);
    x = tape.layer_norm(tape.add(x, a), layer.ln1_gain, layer.ln1_bias);
    Tensor f = ffn_forward(tape, x, layer, params.coeffs.neurons[l]);
    x = tape.layer_norm(tape.add(x, f), layer.ln2_gain, layer.ln2_bias);
  }
  Tensor pooled = tape.mean_pool_groups(x, seq);
  return tape.add_rowvec(tape.matmul(pooled, params.cls_w), params.cls_b);
}

std::int64_t param_count(const ModelParams& params, bool exclude_embeddings) {
  std::int64_t n = 0;
  auto& p = const_cast<ModelParams&>(params);
  p.for_each_weight([&](const std::string& name, Tensor& t) {
    if (exclude_embeddings && (name == "tok_emb" || name == "pos_emb")) return;
    n += t.size();
  });
  return n;
}

std::vector<int> predict(const ModelParams& params, const TokenBatch& batch) {
  Tape tape(false);
  Tensor logits = forward(tape, batch, params);
  const int c = logits.cols();
  std::vector<int> out;
  for (int i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (logits.at(i * c + j) > logits.at(i * c + best)) best = j;
    out.push_back(best);
  }
  return out;
}

std::vector<double> predict_probs(const ModelParams& params,
                                  const std::vector<int>& tokens) {
  Tape tape(false);
  TokenBatch batch;
  batch.tokens.push_back(tokens);
  batch.labels.push_back(0);
  Tensor logits = forward(tape, batch, params);
  const int c = logits.cols();
  double mx = logits.at(0);
  for (int j = 1; j < c; ++j) mx = std::max(mx, logits.at(j));
  std::vector<double> probs(c);
  double denom = 0;
  for (int j = 0; j < c; ++j) {
    probs[j] = std::exp(logits.at(j) - mx);
    denom += probs[j];
  }
  for (auto& v : probs) v /= denom;
  return probs;
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  const auto& c = params.config;
  os << "format: earlybird-ckpt v1\n";
  os << "config: n_layers=" << c.n_layers << " n_heads=" << c.n_heads
     << " hidden=" << c.hidden << " head_dim=" << c.head_dim
     << " ffn_dim=" << c.ffn_dim << " vocab_size=" << c.vocab_size
     << " max_seq_len=" << c.max_seq_len << " n_classes=" << c.n_classes
     << "\n";
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    os << "kept_heads " << l << ":";
    for (int h : params.kept_heads[l]) os << ' ' << h;
    os << "\nkept_neurons " << l << ":";
    for (int n : params.kept_neurons[l]) os << ' ' << n;
    os << '\n';
  }
  auto& p = const_cast<ModelParams&>(params);
  p.for_each_param([&](const std::string& name, Tensor& t) {
    os << "tensor: " << name << '\n';
    write_tensor(os, t);
  });
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(is, line);
  if (line != "format: earlybird-ckpt v1")
    throw std::runtime_error(path + ": not an earlybird-ckpt v1 file");
  std::getline(is, line);
  if (line.rfind("config: ", 0) != 0)
    throw std::runtime_error(path + ": missing config line");
  ModelConfig cfg;
  {
    std::istringstream ls(line.substr(8));
    std::string kv;
    std::map<std::string, int> fields;
    while (ls >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error(path + ": malformed config entry " + kv);
      fields[kv.substr(0, eq)] = std::stoi(kv.substr(eq + 1));
    }
    cfg.n_layers = fields.at("n_layers");
    cfg.n_heads = fields.at("n_heads");
    cfg.hidden = fields.at("hidden");
    cfg.head_dim = fields.at("head_dim");
    cfg.ffn_dim = fields.at("ffn_dim");
    cfg.vocab_size = fields.at("vocab_size");
    cfg.max_seq_len = fields.at("max_seq_len");
    cfg.n_classes = fields.at("n_classes");
  }
  cfg.validate();
  std::vector<std::vector<int>> kept_heads(cfg.n_layers),
      kept_neurons(cfg.n_layers);
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (int which = 0; which < 2; ++which) {
      std::getline(is, line);
      const auto colon = line.find(':');
      if (colon == std::string::npos)
        throw std::runtime_error(path + ": malformed kept-index line");
      std::istringstream ls(line.substr(colon + 1));
      auto& dst = (which == 0) ? kept_heads[l] : kept_neurons[l];
      int v;
      while (ls >> v) dst.push_back(v);
    }
  }

  // materialize a params object with the pruned sizes, then fill tensors
  ModelParams p;
  p.config = cfg;
  p.kept_heads = kept_heads;
  p.kept_neurons = kept_neurons;
  p.tok_emb = Tensor::zeros({cfg.vocab_size, cfg.hidden}, true);
  p.pos_emb = Tensor::zeros({cfg.max_seq_len, cfg.hidden}, true);
  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerParams layer;
    const int nh = static_cast<int>(kept_heads[l].size());
    const int nf = static_cast<int>(kept_neurons[l].size());
    for (int h = 0; h < nh; ++h) {
      layer.w_q.push_back(Tensor::zeros({cfg.hidden, cfg.head_dim}, true));
      layer.w_k.push_back(Tensor::zeros({cfg.hidden, cfg.head_dim}, true));
      layer.w_v.push_back(Tensor::zeros({cfg.hidden, cfg.head_dim}, true));
      layer.w_o.push_back(Tensor::zeros({cfg.head_dim, cfg.hidden}, true));
    }
    layer.w_up = Tensor::zeros({cfg.hidden, nf}, true);
    layer.w_down = Tensor::zeros({nf, cfg.hidden}, true);
    layer.ln1_gain = Tensor::zeros({cfg.hidden}, true);
    layer.ln1_bias = Tensor::zeros({cfg.hidden}, true);
    layer.ln2_gain = Tensor::zeros({cfg.hidden}, true);
    layer.ln2_bias = Tensor::zeros({cfg.hidden}, true);
    p.layers.push_back(std::move(layer));
    p.coeffs.heads.push_back(Tensor::zeros({nh}, true));
    p.coeffs.neurons.push_back(Tensor::zeros({nf}, true));
  }
  p.cls_w = Tensor::zeros({cfg.hidden, cfg.n_classes}, true);
  p.cls_b = Tensor::zeros({cfg.n_classes}, true);

  std::map<std::string, Tensor*> by_name;
  p.for_each_param([&](const std::string& name, Tensor& t) {
    by_name[name] = &t;
  });
  std::string tag, name;
  while (is >> tag) {
    if (tag != "tensor:")
      throw std::runtime_error(path + ": expected tensor section, got " + tag);
    is >> name;
    Tensor t = read_tensor(is);
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error(path + ": unknown tensor " + name);
    if (it->second->shape() != t.shape())
      throw std::runtime_error(path + ": shape mismatch for " + name);
    it->second->data() = t.data();
  }
  return p;
}

}  // namespace earlybird
