#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "normdiff/autodiff.hpp"
#include "normdiff/rng.hpp"
#include "normdiff/tensor.hpp"

namespace normdiff::diff {

// Fixed forward-noising schedule. reverse_var is pinned to beta_t.
struct NoiseSchedule {
  std::size_t T = 100;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
  std::vector<double> reverse_var;

  double beta(std::size_t t) const { return betas[t - 1]; }          // t in 1..T
  double alpha(std::size_t t) const { return alphas[t - 1]; }
  double alpha_bar(std::size_t t) const { return alpha_bars[t - 1]; }
  double sigma(std::size_t t) const { return std::sqrt(reverse_var[t - 1]); }
};

NoiseSchedule linear_schedule(std::size_t T, double beta_start = 1e-4,
                              double beta_end = 0.02);

enum class Phase { Train, Eval };

// Everything stochastic about one forward pass, drawn up front so the pass
// itself is a pure function of (params, inputs, context).
struct StepContext {
  Phase phase = Phase::Eval;
  std::vector<Tensor> dropout_masks;  // pre-scaled inverted-dropout masks
  bool intersample = false;           // SAINT row-attention mode for this step
};

// Noise-prediction backbone: (y_t, t, c) -> eps_hat.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual std::size_t data_dim() const = 0;
  virtual std::size_t cov_dim() const = 0;
  virtual const std::vector<ad::NodePtr>& parameters() const = 0;

  // Draws the dropout masks / mode coin for one training step.
  virtual StepContext make_train_context(std::size_t batch, Rng& rng) const = 0;

  // y_t: (B,D); t_norm: (B,1) with entries t/T; c: (B,C). Returns (B,D).
  virtual ad::NodePtr forward(const ad::NodePtr& y_t, const ad::NodePtr& t_norm,
                              const ad::NodePtr& c, const StepContext& ctx) = 0;

  // Evaluation-mode forward on plain tensors (no dropout, degenerate
  // row attention); used by the sampler.
  Tensor predict(const Tensor& y_t, const Tensor& t_norm, const Tensor& c);

  std::vector<double> flat_parameters() const;
  void set_flat_parameters(const std::vector<double>& flat);
  std::size_t parameter_count() const;
};

// y_t = sqrt(abar_t) y0 + sqrt(1-abar_t) eps, elementwise over any shape.
Tensor one_shot_noise(const Tensor& y0, std::size_t t, const Tensor& eps,
                      const NoiseSchedule& schedule);

// Mean over the batch of |eps - eps_hat|^2 with t ~ U{1..T}, eps ~ N(0,I).
ad::NodePtr training_loss(Denoiser& denoiser, const Tensor& y0, const Tensor& c,
                          const NoiseSchedule& schedule, Rng& rng);

// One reverse transition for a batch sharing the same t.
// Adds sigma_t * z for t > 1 and no noise at the final step.
Tensor reverse_step(Denoiser& denoiser, const Tensor& y_t, std::size_t t,
                    const Tensor& c, const NoiseSchedule& schedule, Rng& rng);

// M ancestral samples for one covariate row, batched through the chain.
Tensor ancestral_sample(Denoiser& denoiser, const std::vector<double>& cov_row,
                        std::size_t M, const NoiseSchedule& schedule,
                        std::uint64_t seed);

struct OptimizerConfig {
  double lr = 1e-3;
  double lr_decay = 1.0;  // per-epoch multiplicative decay; 1 = constant lr
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 1.0;
  std::size_t batch_size = 256;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
};

// Decoupled-weight-decay Adam with global gradient-norm clipping.
class AdamW {
 public:
  AdamW(const std::vector<ad::NodePtr>& params, const OptimizerConfig& config);
  // Clips, steps, and zeroes gradients. Returns the pre-clip global norm.
  double step();

  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }

 private:
  std::vector<ad::NodePtr> params_;
  OptimizerConfig config_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

struct TrainResult {
  std::vector<double> epoch_loss;
  double seconds = 0.0;
};

// Full training loop over a scaled cohort (y0: N x D, c: N x C).
TrainResult train(Denoiser& denoiser, const Tensor& y0, const Tensor& c,
                  const NoiseSchedule& schedule, const OptimizerConfig& config);

}  // namespace normdiff::diff
