#pragma once

#include <cstdint>
#include <vector>

#include "normdiff/diffusion.hpp"

namespace normdiff::nets {

struct SaintConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t depth = 3;
  std::size_t ff_width = 128;
  double dropout_rate = 0.1;
  double intersample_prob = 0.5;  // training-time row-attention coin

  void validate() const;
};

// Tabular transformer denoiser: per-feature tokenization with additive
// covariate/time embeddings, pre-norm column attention + feed-forward
// blocks, and a lightweight row-attention block over per-row summary
// tokens. Row attention mixes rows only in intersample mode; evaluation
// always runs the degenerate (row-independent) mode.
class SaintDenoiser : public diff::Denoiser {
 public:
  SaintDenoiser(std::size_t data_dim, std::size_t cov_dim, SaintConfig config,
                std::uint64_t init_seed);

  std::size_t data_dim() const override { return data_dim_; }
  std::size_t cov_dim() const override { return cov_dim_; }
  const std::vector<ad::NodePtr>& parameters() const override { return params_; }
  const SaintConfig& config() const { return config_; }

  diff::StepContext make_train_context(std::size_t batch, Rng& rng) const override;

  ad::NodePtr forward(const ad::NodePtr& y_t, const ad::NodePtr& t_norm,
                      const ad::NodePtr& c, const diff::StepContext& ctx) override;

  // Token matrix (B, D, d_model) before any transformer block.
  ad::NodePtr tokenize(const ad::NodePtr& y_t, const ad::NodePtr& t_norm,
                       const ad::NodePtr& c);

 private:
  struct Block {
    ad::NodePtr ln1_g, ln1_b;                    // column-attention pre-norm
    ad::NodePtr wq, bq, wk, bk, wv, bv, wo, bo;  // column attention
    ad::NodePtr ln2_g, ln2_b;                    // feed-forward pre-norm
    ad::NodePtr w1, b1, w2, b2, ff_alpha;
    ad::NodePtr ln3_g, ln3_b;                    // row-attention pre-norm
    ad::NodePtr rq, rbq, rk, rbk, rv, rbv, ro, rbo;
  };

  ad::NodePtr affine_layernorm(const ad::NodePtr& x, const ad::NodePtr& g,
                               const ad::NodePtr& b) const;
  ad::NodePtr column_attention(const ad::NodePtr& tokens, const Block& blk) const;
  ad::NodePtr row_update(const ad::NodePtr& tokens, const Block& blk,
                         bool intersample) const;

  std::size_t data_dim_, cov_dim_;
  SaintConfig config_;
  std::vector<ad::NodePtr> params_;

  ad::NodePtr w_feat_, b_feat_, col_emb_;  // (D, d_model) each
  ad::NodePtr w_cov_, b_cov_, w_time_, b_time_;
  std::vector<Block> blocks_;
  ad::NodePtr lnf_g_, lnf_b_, w_head_, b_head_;
};

}  // namespace normdiff::nets
