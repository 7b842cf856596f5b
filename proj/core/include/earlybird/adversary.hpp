#pragma once

#include <optional>

#include "earlybird/model.hpp"
#include "earlybird/rng.hpp"
#include "earlybird/tensor.hpp"

namespace earlybird {

enum class AdvMode { pgd, freelb_accumulate };

struct AdvConfig {
  double eps0 = 0.05;      // initial perturbation magnitude
  int steps = 5;           // ascent steps s
  double step_size = 0.01; // tau
  std::optional<double> ball_radius;  // absent: unconstrained
  AdvMode mode = AdvMode::freelb_accumulate;

  void validate() const;
};

// per-example additive embedding perturbation, shape (batch*seq) x d flat
struct Perturbation {
  Tensor delta;
  int batch = 0;
  int seq = 0;
  int step_index = 0;

  int example_size() const { return seq * delta.cols(); }
};

// elementwise uniform(-1,1), rescaled so each example's Frobenius norm is
// exactly eps0
Perturbation init_perturbation(int batch, int seq, int dim,
                               const AdvConfig& cfg, Rng& rng);

// delta += step_size * g / ||g||_F per example, then projection when a ball
// radius is configured; near-zero gradients skip the step
void pgd_step(Perturbation& p, const Tensor& grad, const AdvConfig& cfg);

// per example: rescale to norm eps when above it, identity otherwise
void project_frobenius(Tensor& delta, int batch, double eps);

double example_frobenius_norm(const Tensor& delta, int batch, int example);

struct AdvLossResult {
  Tensor loss;  // recorded on the caller's tape, at the final perturbation
  Perturbation delta_final;
};

// K-step inner ascent; the returned loss carries gradient flow into the
// parameters and coefficients. Intermediate parameter gradients from the
// ascent passes are discarded.
AdvLossResult adversarial_loss(Tape& tape, const TokenBatch& batch,
                               ModelParams& params, const AdvConfig& cfg,
                               Rng& rng);

struct FreelbResult {
  double mean_loss = 0;
  Perturbation delta_final;
};

// Accumulates parameter/coefficient gradients over the s ascent passes and
// leaves their mean in the parameter grad buffers (added to whatever was
// there before the call).
FreelbResult freelb_accumulate(const TokenBatch& batch, ModelParams& params,
                               const AdvConfig& cfg, Rng& rng);

}  // namespace earlybird
