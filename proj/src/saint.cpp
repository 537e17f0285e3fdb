#include "normdiff/saint.hpp"

#include <cmath>

namespace normdiff::nets {

using ad::NodePtr;

namespace {

Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor w({rows, cols});
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& v : w.values()) v = rng.uniform(-limit, limit);
  return w;
}

Tensor ones(std::size_t n) {
  Tensor t({n});
  for (double& v : t.values()) v = 1.0;
  return t;
}

Tensor dropout_mask(std::vector<std::size_t> shape, double rate, Rng& rng) {
  Tensor m(std::move(shape));
  const double keep = 1.0 - rate;
  for (double& v : m.values()) v = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  return m;
}

}  // namespace

void SaintConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ContractError("saint: d_model must be a positive multiple of n_heads");
  }
  if (depth == 0) throw ContractError("saint: depth must be positive");
  if (ff_width == 0) throw ContractError("saint: ff_width must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ContractError("saint: dropout rate must lie in [0,1)");
  }
  if (intersample_prob < 0.0 || intersample_prob > 1.0) {
    throw ContractError("saint: intersample probability must lie in [0,1]");
  }
}

SaintDenoiser::SaintDenoiser(std::size_t data_dim, std::size_t cov_dim,
                             SaintConfig config, std::uint64_t init_seed)
    : data_dim_(data_dim), cov_dim_(cov_dim), config_(config) {
  config_.validate();
  Rng rng(init_seed);
  auto param = [&](Tensor t) {
    auto p = ad::parameter(std::move(t));
    params_.push_back(p);
    return p;
  };
  const std::size_t dm = config_.d_model;

  w_feat_ = param(xavier(data_dim_, dm, rng));
  b_feat_ = param(Tensor({data_dim_, dm}));
  col_emb_ = param(xavier(data_dim_, dm, rng));
  w_cov_ = param(xavier(cov_dim_, dm, rng));
  b_cov_ = param(Tensor({dm}));
  w_time_ = param(xavier(1, dm, rng));
  b_time_ = param(Tensor({dm}));

  for (std::size_t l = 0; l < config_.depth; ++l) {
    Block blk;
    blk.ln1_g = param(ones(dm));
    blk.ln1_b = param(Tensor({dm}));
    blk.wq = param(xavier(dm, dm, rng));
    blk.bq = param(Tensor({dm}));
    blk.wk = param(xavier(dm, dm, rng));
    blk.bk = param(Tensor({dm}));
    blk.wv = param(xavier(dm, dm, rng));
    blk.bv = param(Tensor({dm}));
    blk.wo = param(xavier(dm, dm, rng));
    blk.bo = param(Tensor({dm}));
    blk.ln2_g = param(ones(dm));
    blk.ln2_b = param(Tensor({dm}));
    blk.w1 = param(xavier(dm, config_.ff_width, rng));
    blk.b1 = param(Tensor({config_.ff_width}));
    blk.w2 = param(xavier(config_.ff_width, dm, rng));
    blk.b2 = param(Tensor({dm}));
    blk.ff_alpha = param(Tensor::scalar(0.25));
    blk.ln3_g = param(ones(dm));
    blk.ln3_b = param(Tensor({dm}));
    blk.rq = param(xavier(dm, dm, rng));
    blk.rbq = param(Tensor({dm}));
    blk.rk = param(xavier(dm, dm, rng));
    blk.rbk = param(Tensor({dm}));
    blk.rv = param(xavier(dm, dm, rng));
    blk.rbv = param(Tensor({dm}));
    blk.ro = param(xavier(dm, dm, rng));
    blk.rbo = param(Tensor({dm}));
    blocks_.push_back(blk);
  }
  lnf_g_ = param(ones(dm));
  lnf_b_ = param(Tensor({dm}));
  w_head_ = param(xavier(dm, 1, rng));
  b_head_ = param(Tensor({1}));
}

diff::StepContext SaintDenoiser::make_train_context(std::size_t batch, Rng& rng) const {
  diff::StepContext ctx;
  ctx.phase = diff::Phase::Train;
  // One mode coin per training step, not per layer.
  ctx.intersample = rng.bernoulli(config_.intersample_prob);
  if (config_.dropout_rate > 0.0) {
    const std::size_t dm = config_.d_model;
    for (std::size_t l = 0; l < config_.depth; ++l) {
      ctx.dropout_masks.push_back(
          dropout_mask({batch, data_dim_, dm}, config_.dropout_rate, rng));
      ctx.dropout_masks.push_back(
          dropout_mask({batch, data_dim_, dm}, config_.dropout_rate, rng));
      ctx.dropout_masks.push_back(dropout_mask({batch, dm}, config_.dropout_rate, rng));
    }
  }
  return ctx;
}

NodePtr SaintDenoiser::affine_layernorm(const NodePtr& x, const NodePtr& g,
                                        const NodePtr& b) const {
  return ad::add(ad::mul(ad::layernorm_lastdim(x), g), b);
}

NodePtr SaintDenoiser::tokenize(const NodePtr& y_t, const NodePtr& t_norm,
                                const NodePtr& c) {
  const std::size_t D = data_dim_;
  NodePtr tokens = ad::outer_feature(y_t, w_feat_);
  tokens = ad::add(tokens, b_feat_);
  tokens = ad::add(tokens, col_emb_);
  NodePtr cov_emb = ad::add(ad::matmul(c, w_cov_), b_cov_);
  NodePtr time_emb = ad::add(ad::matmul(t_norm, w_time_), b_time_);
  tokens = ad::add(tokens, ad::expand_axis1(cov_emb, D));
  tokens = ad::add(tokens, ad::expand_axis1(time_emb, D));
  return tokens;
}

NodePtr SaintDenoiser::column_attention(const NodePtr& tokens, const Block& blk) const {
  const std::size_t B = tokens->value.dim(0), D = tokens->value.dim(1);
  const std::size_t dm = config_.d_model, h = config_.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dm / h));

  NodePtr x = affine_layernorm(tokens, blk.ln1_g, blk.ln1_b);
  NodePtr flat = ad::reshape(x, {B * D, dm});
  auto proj = [&](const NodePtr& w, const NodePtr& b) {
    return ad::split_heads(ad::reshape(ad::add(ad::matmul(flat, w), b), {B, D, dm}), h);
  };
  NodePtr q = proj(blk.wq, blk.bq);
  NodePtr k = proj(blk.wk, blk.bk);
  NodePtr v = proj(blk.wv, blk.bv);
  NodePtr att = ad::softmax_lastdim(ad::scale(ad::bmm(q, k, /*transpose_b=*/true), scale));
  NodePtr ctx = ad::merge_heads(ad::bmm(att, v), h);
  NodePtr out = ad::add(ad::matmul(ad::reshape(ctx, {B * D, dm}), blk.wo), blk.bo);
  return ad::reshape(out, {B, D, dm});
}

NodePtr SaintDenoiser::row_update(const NodePtr& tokens, const Block& blk,
                                  bool intersample) const {
  const std::size_t B = tokens->value.dim(0);
  const std::size_t dm = config_.d_model, h = config_.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dm / h));

  NodePtr s = ad::mean_axis1(affine_layernorm(tokens, blk.ln3_g, blk.ln3_b));
  NodePtr mixed;
  if (intersample) {
    // The whole mini-batch forms one attention sequence of B summaries.
    auto proj = [&](const NodePtr& w, const NodePtr& b) {
      return ad::split_heads(ad::reshape(ad::add(ad::matmul(s, w), b), {1, B, dm}), h);
    };
    NodePtr q = proj(blk.rq, blk.rbq);
    NodePtr k = proj(blk.rk, blk.rbk);
    NodePtr v = proj(blk.rv, blk.rbv);
    NodePtr att = ad::softmax_lastdim(ad::scale(ad::bmm(q, k, true), scale));
    mixed = ad::reshape(ad::merge_heads(ad::bmm(att, v), h), {B, dm});
  } else {
    // Degenerate mode: each summary attends only to itself, so the
    // attention output is that row's own value projection.
    mixed = ad::add(ad::matmul(s, blk.rv), blk.rbv);
  }
  return ad::add(ad::matmul(mixed, blk.ro), blk.rbo);
}

NodePtr SaintDenoiser::forward(const NodePtr& y_t, const NodePtr& t_norm,
                               const NodePtr& c, const diff::StepContext& ctx) {
  if (y_t->value.rank() != 2 || y_t->value.dim(1) != data_dim_ ||
      c->value.dim(1) != cov_dim_ || t_norm->value.dim(1) != 1) {
    throw DimensionError("saint: input shape mismatch");
  }
  const bool training = ctx.phase == diff::Phase::Train;
  const bool intersample = training && ctx.intersample;
  const bool use_dropout = training && !ctx.dropout_masks.empty();
  const std::size_t B = y_t->value.dim(0), D = data_dim_, dm = config_.d_model;

  NodePtr tokens = tokenize(y_t, t_norm, c);
  std::size_t mask_ix = 0;
  auto masked = [&](NodePtr x) {
    if (use_dropout) x = ad::mul(x, ad::constant(ctx.dropout_masks[mask_ix]));
    ++mask_ix;
    return x;
  };
  for (const Block& blk : blocks_) {
    tokens = ad::add(tokens, masked(column_attention(tokens, blk)));
    NodePtr f = ad::reshape(affine_layernorm(tokens, blk.ln2_g, blk.ln2_b), {B * D, dm});
    f = ad::prelu(ad::add(ad::matmul(f, blk.w1), blk.b1), blk.ff_alpha);
    f = ad::reshape(ad::add(ad::matmul(f, blk.w2), blk.b2), {B, D, dm});
    tokens = ad::add(tokens, masked(f));
    tokens = ad::add(tokens, ad::expand_axis1(masked(row_update(tokens, blk, intersample)), D));
  }
  NodePtr out = affine_layernorm(tokens, lnf_g_, lnf_b_);
  out = ad::add(ad::matmul(ad::reshape(out, {B * D, dm}), w_head_), b_head_);
  return ad::reshape(out, {B, D});
}

}  // namespace normdiff::nets
