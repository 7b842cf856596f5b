#include "earlybird/adversary.hpp"

#include <cmath>
#include <stdexcept>

namespace earlybird {

void AdvConfig::validate() const {
  if (eps0 <= 0) throw std::invalid_argument("eps0 must be > 0");
  if (steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (step_size <= 0) throw std::invalid_argument("step_size must be > 0");
  if (ball_radius && *ball_radius <= 0)
    throw std::invalid_argument("ball_radius must be > 0 when present");
}

double example_frobenius_norm(const Tensor& delta, int batch, int example) {
  const std::int64_t per = delta.size() / batch;
  double s = 0;
  for (std::int64_t i = example * per; i < (example + 1) * per; ++i)
    s += delta.at(i) * delta.at(i);
  return std::sqrt(s);
}

Perturbation init_perturbation(int batch, int seq, int dim,
                               const AdvConfig& cfg, Rng& rng) {
  cfg.validate();
  Perturbation p;
  p.batch = batch;
  p.seq = seq;
  p.delta = Tensor::zeros({batch * seq, dim});
  for (auto& v : p.delta.data()) v = rng.uniform(-1.0, 1.0);
  const std::int64_t per = static_cast<std::int64_t>(seq) * dim;
  for (int b = 0; b < batch; ++b) {
    const double norm = example_frobenius_norm(p.delta, batch, b);
    const double scale = norm > 0 ? cfg.eps0 / norm : 0.0;
    for (std::int64_t i = b * per; i < (b + 1) * per; ++i)
      p.delta.at(i) *= scale;
  }
  return p;
}

void project_frobenius(Tensor& delta, int batch, double eps) {
  if (eps <= 0) throw std::invalid_argument("projection radius must be > 0");
  const std::int64_t per = delta.size() / batch;
  for (int b = 0; b < batch; ++b) {
    const double norm = example_frobenius_norm(delta, batch, b);
    if (norm > eps) {
      const double scale = eps / norm;
      for (std::int64_t i = b * per; i < (b + 1) * per; ++i)
        delta.at(i) *= scale;
    }
  }
}

void pgd_step(Perturbation& p, const Tensor& grad, const AdvConfig& cfg) {
  if (grad.size() != p.delta.size())
    throw std::invalid_argument("pgd_step: gradient shape mismatch");
  const std::int64_t per = p.delta.size() / p.batch;
  for (int b = 0; b < p.batch; ++b) {
    const double norm = example_frobenius_norm(grad, p.batch, b);
    if (norm < 1e-12) continue;  // ascent direction undefined
    const double scale = cfg.step_size / norm;
    for (std::int64_t i = b * per; i < (b + 1) * per; ++i)
      p.delta.at(i) += scale * grad.at(i);
  }
  if (cfg.ball_radius) project_frobenius(p.delta, p.batch, *cfg.ball_radius);
  ++p.step_index;
}

namespace {

// one ascent pass: forward at the current delta, backward, return grad wrt
// delta. Parameter gradients are controlled by the caller via requires_grad.
Tensor delta_grad_pass(const TokenBatch& batch, ModelParams& params,
                       Perturbation& p, double* loss_out) {
  Tape tape;
  Tensor delta = p.delta.clone();
  delta.set_requires_grad(true);
  Tensor loss = forward(tape, batch, params, delta);
  loss = tape.cross_entropy(loss, batch.labels);
  tape.backward(loss);
  if (loss_out) *loss_out = loss.value();
  return Tensor(delta.shape(), delta.grad());
}

}  // namespace

AdvLossResult adversarial_loss(Tape& tape, const TokenBatch& batch,
                               ModelParams& params, const AdvConfig& cfg,
                               Rng& rng) {
  cfg.validate();
  const int bs = batch.batch_size();
  const int seq = batch.seq_len();
  Perturbation p = init_perturbation(bs, seq, params.config.hidden, cfg, rng);
  params.set_requires_grad(false);
  for (int k = 0; k < cfg.steps; ++k) {
    Tensor g = delta_grad_pass(batch, params, p, nullptr);
    pgd_step(p, g, cfg);
  }
  params.set_requires_grad(true);
  Tensor logits = forward(tape, batch, params, p.delta);
  Tensor loss = tape.cross_entropy(logits, batch.labels);
  return {loss, std::move(p)};
}

FreelbResult freelb_accumulate(const TokenBatch& batch, ModelParams& params,
                               const AdvConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.steps < 1)
    throw std::invalid_argument("freelb_accumulate requires steps >= 1");
  const int bs = batch.batch_size();
  const int seq = batch.seq_len();
  Perturbation p = init_perturbation(bs, seq, params.config.hidden, cfg, rng);

  // stash pre-existing gradients so only the pass mean is scaled
  std::vector<std::vector<double>> stash;
  params.for_each_param([&](const std::string&, Tensor& t) {
    stash.push_back(t.grad());
    t.zero_grad();
  });

  FreelbResult result;
  // parameter gradients are taken at delta_1..delta_s; the pass at delta_0
  // only seeds the ascent
  params.set_requires_grad(false);
  Tensor g0 = delta_grad_pass(batch, params, p, nullptr);
  params.set_requires_grad(true);
  pgd_step(p, g0, cfg);
  for (int k = 1; k <= cfg.steps; ++k) {
    double loss = 0;
    Tensor g = delta_grad_pass(batch, params, p, &loss);
    result.mean_loss += loss / cfg.steps;
    if (k < cfg.steps) pgd_step(p, g, cfg);
  }

  std::size_t idx = 0;
  params.for_each_param([&](const std::string&, Tensor& t) {
    auto& g = t.grad();
    const auto& prev = stash[idx++];
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] = g[i] / cfg.steps + prev[i];
  });
  result.delta_final = std::move(p);
  return result;
}

}  // namespace earlybird
