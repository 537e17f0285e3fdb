#pragma once

#include <cstdint>
#include <vector>

#include "normdiff/diffusion.hpp"

namespace normdiff::nets {

struct FilmMlpConfig {
  std::vector<std::size_t> hidden_widths{256, 256, 256};
  double dropout_rate = 0.1;
  bool use_batchnorm = false;
  std::vector<std::size_t> covariate_mlp_widths{64, 64};

  void validate() const;
};

// Fully connected denoiser with PReLU activations. A small covariate MLP
// maps c to per-layer affine parameters (gamma, beta) that modulate the
// hidden activations; normalised time is concatenated to the input.
class FilmMlp : public diff::Denoiser {
 public:
  FilmMlp(std::size_t data_dim, std::size_t cov_dim, FilmMlpConfig config,
          std::uint64_t init_seed);

  std::size_t data_dim() const override { return data_dim_; }
  std::size_t cov_dim() const override { return cov_dim_; }
  const std::vector<ad::NodePtr>& parameters() const override { return params_; }
  const FilmMlpConfig& config() const { return config_; }

  diff::StepContext make_train_context(std::size_t batch, Rng& rng) const override;

  ad::NodePtr forward(const ad::NodePtr& y_t, const ad::NodePtr& t_norm,
                      const ad::NodePtr& c, const diff::StepContext& ctx) override;

  // Test hook: pin every FiLM head to (gamma=1, beta=0) so the network
  // collapses to an unconditioned MLP.
  void force_identity_film();

 private:
  std::size_t data_dim_, cov_dim_;
  FilmMlpConfig config_;
  std::vector<ad::NodePtr> params_;

  // Views into params_ by role.
  std::vector<ad::NodePtr> layer_w_, layer_b_, layer_alpha_;
  std::vector<ad::NodePtr> cov_w_, cov_b_, cov_alpha_;
  std::vector<ad::NodePtr> gamma_w_, gamma_b_, beta_w_, beta_b_;
  ad::NodePtr out_w_, out_b_;

  // Batch-norm running statistics per hidden layer (used in eval mode).
  std::vector<Tensor> bn_mean_, bn_var_;
  double bn_momentum_ = 0.1;
};

}  // namespace normdiff::nets
