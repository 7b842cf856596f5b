#include "earlybird/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "earlybird/attack.hpp"

namespace earlybird {

void TrainConfig::validate() const {
  if (learning_rate <= 0) throw std::invalid_argument("learning_rate must be > 0");
  if (finetune_epochs < 0) throw std::invalid_argument("finetune_epochs must be >= 0");
  if (search_max_epochs < 1)
    throw std::invalid_argument("search budget must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (miniepoch_fraction <= 0 || miniepoch_fraction > 1)
    throw std::invalid_argument("miniepoch_fraction must be in (0,1]");
}

void Optimizer::step(std::vector<Tensor>& params) {
  if (kind_ == OptimizerKind::sgd) {
    for (auto& p : params) {
      const auto& g = p.grad();
      auto& d = p.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= lr_ * g[i];
    }
    return;
  }
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  if (m_.size() != params.size())
    throw std::logic_error("optimizer state does not match parameter list");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& g = params[k].grad();
    auto& d = params[k].data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < d.size(); ++i) {
      m[i] = beta1 * m[i] + (1 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1 - beta2) * g[i] * g[i];
      d[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
}

void Optimizer::save(std::ostream& os) const {
  os << "optimizer " << (kind_ == OptimizerKind::sgd ? "sgd" : "adam_like")
     << ' ' << format_double(lr_) << ' ' << t_ << ' ' << m_.size() << '\n';
  for (std::size_t k = 0; k < m_.size(); ++k) {
    os << m_[k].size() << '\n';
    for (double x : m_[k]) os << format_double(x) << ' ';
    os << '\n';
    for (double x : v_[k]) os << format_double(x) << ' ';
    os << '\n';
  }
}

void Optimizer::load(std::istream& is) {
  std::string tag, kind;
  std::size_t n;
  is >> tag >> kind >> lr_ >> t_ >> n;
  kind_ = (kind == "sgd") ? OptimizerKind::sgd : OptimizerKind::adam_like;
  m_.assign(n, {});
  v_.assign(n, {});
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t len;
    is >> len;
    m_[k].resize(len);
    v_[k].resize(len);
    for (auto& x : m_[k]) is >> x;
    for (auto& x : v_[k]) is >> x;
  }
}

std::vector<Tensor> all_params(ModelParams& params) {
  std::vector<Tensor> out;
  params.for_each_param(
      [&](const std::string&, Tensor& t) { out.push_back(t); });
  return out;
}

std::vector<Tensor> weight_params(ModelParams& params) {
  std::vector<Tensor> out;
  params.for_each_weight(
      [&](const std::string&, Tensor& t) { out.push_back(t); });
  return out;
}

namespace {

int steps_per_epoch(int n_examples, int batch_size) {
  return (n_examples + batch_size - 1) / batch_size;
}

std::vector<int> shuffled_order(int n, Rng& rng) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_below(i + 1));
    std::swap(order[i], order[j]);
  }
  return order;
}

}  // namespace

SearchState make_search_state(const ModelParams& theta0,
                              const SearchConfigs& cfgs) {
  cfgs.train.validate();
  cfgs.adv.validate();
  cfgs.reg.validate();
  cfgs.prune.validate();
  SearchState state;
  state.params = theta0.clone();
  state.params.set_requires_grad(true);
  state.optimizer = Optimizer(cfgs.train.optimizer, cfgs.train.learning_rate);
  state.detector.gamma = cfgs.gamma;
  state.detector.window = cfgs.detector_window;
  state.data_rng = make_rng(cfgs.train.seed, Stream::data_order);
  state.adv_rng = make_rng(cfgs.train.seed, Stream::perturbation);
  return state;
}

SearchOutcome search_stage(const Dataset& data, SearchState& state,
                           const SearchConfigs& cfgs, int max_steps) {
  const int n = static_cast<int>(data.size());
  if (n == 0) throw std::invalid_argument("search_stage: empty dataset");
  const int bs = cfgs.train.batch_size;
  const int spe = steps_per_epoch(n, bs);
  const int miniepoch_steps = std::max(
      1, static_cast<int>(std::floor(cfgs.train.miniepoch_fraction * spe)));

  auto params_list = all_params(state.params);
  int ran = 0;
  while (!state.terminated && state.epoch < cfgs.train.search_max_epochs) {
    if (max_steps >= 0 && ran >= max_steps) break;
    if (state.pos == 0 && state.order.empty())
      state.order = shuffled_order(n, state.data_rng);

    std::vector<int> indices;
    for (int i = state.pos; i < std::min(state.pos + bs, n); ++i)
      indices.push_back(state.order[i]);
    TokenBatch batch = make_batch(data, indices);

    state.params.zero_grad();
    double loss_value = 0;
    if (cfgs.adv.steps == 0 || cfgs.adv.mode == AdvMode::pgd) {
      Tape tape;
      Tensor loss;
      if (cfgs.adv.steps == 0) {
        Tensor logits = forward(tape, batch, state.params);
        loss = tape.cross_entropy(logits, batch.labels);
      } else {
        loss = adversarial_loss(tape, batch, state.params, cfgs.adv,
                                state.adv_rng)
                   .loss;
      }
      tape.backward(loss);
      loss_value = loss.value();
    } else {
      loss_value =
          freelb_accumulate(batch, state.params, cfgs.adv, state.adv_rng)
              .mean_loss;
    }
    {
      Tape tape;
      Tensor reg = regularizer(tape, state.params.coeffs, cfgs.reg);
      tape.backward(reg);
      loss_value += reg.value();
    }
    if (!std::isfinite(loss_value))
      throw std::runtime_error("search_stage: non-finite loss at step " +
                               std::to_string(state.step));
    state.last_loss = loss_value;
    state.optimizer.step(params_list);

    ++state.step;
    ++ran;
    state.pos += static_cast<int>(indices.size());
    if (state.pos >= n) {
      state.pos = 0;
      state.order.clear();
      ++state.epoch;
    }

    if (state.step % miniepoch_steps == 0) {
      ++state.miniepoch;
      const auto decision =
          state.detector.update(state.params.coeffs, cfgs.prune);
      if (!state.detector.history.empty()) {
        const auto& [hd, nd] = state.detector.history.back();
        state.trace.push_back({state.miniepoch, hd, nd,
                               state.detector.consecutive_hits});
      } else {
        state.trace.push_back({state.miniepoch, 1.0, 1.0, 0});
      }
      if (decision == ConvergenceDetector::Decision::terminate)
        state.terminated = true;
    }
  }

  SearchOutcome outcome;
  outcome.mask = binarize(state.params.coeffs, cfgs.prune);
  outcome.steps_used = state.step;
  outcome.detector_converged = state.terminated;
  return outcome;
}

void SearchState::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "search-state v1\n";
  os << "step " << step << " epoch " << epoch << " pos " << pos
     << " miniepoch " << miniepoch << " terminated " << (terminated ? 1 : 0)
     << " last_loss " << format_double(last_loss) << '\n';
  os << "order " << order.size();
  for (int i : order) os << ' ' << i;
  os << '\n';
  os << "data_rng ";
  data_rng.save(os);
  os << "\nadv_rng ";
  adv_rng.save(os);
  os << '\n';
  os << "trace " << trace.size() << '\n';
  for (const auto& t : trace)
    os << t.miniepoch << ' ' << format_double(t.head_dist) << ' '
       << format_double(t.neuron_dist) << ' ' << t.hits << '\n';
  detector.save(os);
  optimizer.save(os);
  os.close();
  // the model rides alongside as a regular checkpoint
  save_checkpoint(path + ".model", params);
}

SearchState SearchState::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line, tag;
  std::getline(is, line);
  if (line != "search-state v1")
    throw std::runtime_error(path + ": not a search-state v1 file");
  SearchState state;
  int term;
  is >> tag >> state.step >> tag >> state.epoch >> tag >> state.pos >> tag >>
      state.miniepoch >> tag >> term >> tag >> state.last_loss;
  state.terminated = term != 0;
  std::size_t n;
  is >> tag >> n;
  state.order.resize(n);
  for (auto& i : state.order) is >> i;
  is >> tag;
  state.data_rng.load(is);
  is >> tag;
  state.adv_rng.load(is);
  is >> tag >> n;
  state.trace.resize(n);
  for (auto& t : state.trace)
    is >> t.miniepoch >> t.head_dist >> t.neuron_dist >> t.hits;
  state.detector.load(is);
  state.optimizer.load(is);
  state.params = load_checkpoint(path + ".model");
  state.params.set_requires_grad(true);
  return state;
}

FinetuneOutcome finetune_stage(ModelParams& params, const Dataset& train,
                               const Dataset& test, const TrainConfig& cfg,
                               Rng& rng) {
  FinetuneState state;
  state.params = params;  // shared tensors: updates land in the caller's model
  state.optimizer = Optimizer(cfg.optimizer, cfg.learning_rate);
  state.rng = rng;
  state.run(train, test, cfg);
  rng = state.rng;
  return state.outcome;
}

FinetuneState make_finetune_state(const ModelParams& ticket,
                                  const TrainConfig& cfg) {
  cfg.validate();
  FinetuneState state;
  state.params = ticket.clone();
  state.params.set_requires_grad(true);
  state.optimizer = Optimizer(cfg.optimizer, cfg.learning_rate);
  state.rng = make_rng(cfg.seed, Stream::finetune_order);
  return state;
}

void FinetuneState::run(const Dataset& train, const Dataset& test,
                        const TrainConfig& cfg, int max_epochs) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("finetune: empty dataset");
  auto weights = weight_params(params);
  const int n = static_cast<int>(train.size());
  int ran = 0;
  while (epoch < cfg.finetune_epochs) {
    if (max_epochs >= 0 && ran >= max_epochs) break;
    auto order = shuffled_order(n, rng);
    for (int pos = 0; pos < n; pos += cfg.batch_size) {
      std::vector<int> indices(order.begin() + pos,
                               order.begin() + std::min(pos + cfg.batch_size, n));
      TokenBatch batch = make_batch(train, indices);
      params.zero_grad();
      Tape tape;
      Tensor logits = forward(tape, batch, params);
      Tensor loss = tape.cross_entropy(logits, batch.labels);
      tape.backward(loss);
      const double lv = loss.value();
      if (!std::isfinite(lv))
        throw std::runtime_error("finetune: non-finite loss");
      if (!started) {
        outcome.first_loss = lv;
        started = true;
      }
      outcome.final_loss = lv;
      optimizer.step(weights);
    }
    outcome.epoch_accuracy.push_back(clean_accuracy(params, test));
    ++epoch;
    ++ran;
  }
}

void FinetuneState::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "finetune-state v1\n";
  os << "epoch " << epoch << " started " << (started ? 1 : 0) << " first_loss "
     << format_double(outcome.first_loss) << " final_loss "
     << format_double(outcome.final_loss) << '\n';
  os << "accuracy " << outcome.epoch_accuracy.size();
  for (double a : outcome.epoch_accuracy) os << ' ' << format_double(a);
  os << '\n';
  os << "rng ";
  rng.save(os);
  os << '\n';
  optimizer.save(os);
  os.close();
  save_checkpoint(path + ".model", params);
}

FinetuneState FinetuneState::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line, tag;
  std::getline(is, line);
  if (line != "finetune-state v1")
    throw std::runtime_error(path + ": not a finetune-state v1 file");
  FinetuneState state;
  int started_flag;
  is >> tag >> state.epoch >> tag >> started_flag >> tag >>
      state.outcome.first_loss >> tag >> state.outcome.final_loss;
  state.started = started_flag != 0;
  std::size_t n;
  is >> tag >> n;
  state.outcome.epoch_accuracy.resize(n);
  for (auto& a : state.outcome.epoch_accuracy) is >> a;
  is >> tag;
  state.rng.load(is);
  state.optimizer.load(is);
  state.params = load_checkpoint(path + ".model");
  state.params.set_requires_grad(true);
  return state;
}

double measure_time(const std::function<void()>& stage) {
  const auto start = std::chrono::steady_clock::now();
  stage();
  const auto end = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(end - start).count();
}

}  // namespace earlybird
