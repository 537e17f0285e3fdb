#include "normdiff/film_mlp.hpp"

#include <cmath>

namespace normdiff::nets {

using ad::NodePtr;

namespace {

Tensor xavier(std::size_t rows, std::size_t cols, double gain, Rng& rng) {
  Tensor w({rows, cols});
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& v : w.values()) v = rng.uniform(-limit, limit);
  return w;
}

Tensor fill(std::size_t n, double value) {
  Tensor t({n});
  for (double& v : t.values()) v = value;
  return t;
}

Tensor dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  Tensor m({rows, cols});
  const double keep = 1.0 - rate;
  for (double& v : m.values()) v = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  return m;
}

}  // namespace

void FilmMlpConfig::validate() const {
  if (hidden_widths.empty()) throw ContractError("film: need at least one hidden layer");
  for (std::size_t w : hidden_widths) {
    if (w == 0) throw ContractError("film: hidden widths must be positive");
  }
  if (covariate_mlp_widths.empty()) {
    throw ContractError("film: need at least one covariate MLP layer");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ContractError("film: dropout rate must lie in [0,1)");
  }
}

FilmMlp::FilmMlp(std::size_t data_dim, std::size_t cov_dim, FilmMlpConfig config,
                 std::uint64_t init_seed)
    : data_dim_(data_dim), cov_dim_(cov_dim), config_(std::move(config)) {
  config_.validate();
  Rng rng(init_seed);
  auto param = [&](Tensor t) {
    auto p = ad::parameter(std::move(t));
    params_.push_back(p);
    return p;
  };

  // Covariate trunk.
  std::size_t cin = cov_dim_;
  for (std::size_t w : config_.covariate_mlp_widths) {
    cov_w_.push_back(param(xavier(cin, w, 1.0, rng)));
    cov_b_.push_back(param(Tensor({w})));
    cov_alpha_.push_back(param(Tensor::scalar(0.25)));
    cin = w;
  }
  const std::size_t cov_out = cin;

  // Main trunk with one FiLM head pair per hidden layer. Gamma heads start
  // near the identity (small weights, unit bias).
  std::size_t in = data_dim_ + 1;  // + normalised time
  for (std::size_t w : config_.hidden_widths) {
    layer_w_.push_back(param(xavier(in, w, 1.0, rng)));
    layer_b_.push_back(param(Tensor({w})));
    layer_alpha_.push_back(param(Tensor::scalar(0.25)));
    gamma_w_.push_back(param(xavier(cov_out, w, 0.1, rng)));
    gamma_b_.push_back(param(fill(w, 1.0)));
    beta_w_.push_back(param(xavier(cov_out, w, 0.1, rng)));
    beta_b_.push_back(param(Tensor({w})));
    bn_mean_.push_back(Tensor({w}));
    bn_var_.push_back(fill(w, 1.0));
    in = w;
  }
  out_w_ = param(xavier(in, data_dim_, 1.0, rng));
  out_b_ = param(Tensor({data_dim_}));
}

diff::StepContext FilmMlp::make_train_context(std::size_t batch, Rng& rng) const {
  diff::StepContext ctx;
  ctx.phase = diff::Phase::Train;
  if (config_.dropout_rate > 0.0) {
    for (std::size_t w : config_.hidden_widths) {
      ctx.dropout_masks.push_back(dropout_mask(batch, w, config_.dropout_rate, rng));
    }
  }
  return ctx;
}

void FilmMlp::force_identity_film() {
  for (std::size_t k = 0; k < gamma_w_.size(); ++k) {
    std::fill(gamma_w_[k]->value.values().begin(), gamma_w_[k]->value.values().end(), 0.0);
    std::fill(gamma_b_[k]->value.values().begin(), gamma_b_[k]->value.values().end(), 1.0);
    std::fill(beta_w_[k]->value.values().begin(), beta_w_[k]->value.values().end(), 0.0);
    std::fill(beta_b_[k]->value.values().begin(), beta_b_[k]->value.values().end(), 0.0);
  }
}

NodePtr FilmMlp::forward(const NodePtr& y_t, const NodePtr& t_norm, const NodePtr& c,
                         const diff::StepContext& ctx) {
  if (y_t->value.rank() != 2 || y_t->value.dim(1) != data_dim_ ||
      c->value.dim(1) != cov_dim_ || t_norm->value.dim(1) != 1) {
    throw DimensionError("film: input shape mismatch");
  }
  const bool training = ctx.phase == diff::Phase::Train;
  const std::size_t B = y_t->value.dim(0);

  // Covariate trunk.
  NodePtr h_c = c;
  for (std::size_t k = 0; k < cov_w_.size(); ++k) {
    h_c = ad::prelu(ad::add(ad::matmul(h_c, cov_w_[k]), cov_b_[k]), cov_alpha_[k]);
  }

  NodePtr x = ad::concat_lastdim(y_t, t_norm);
  for (std::size_t k = 0; k < layer_w_.size(); ++k) {
    NodePtr z = ad::add(ad::matmul(x, layer_w_[k]), layer_b_[k]);
    if (config_.use_batchnorm) {
      if (training) {
        // Track running statistics for evaluation mode.
        const std::size_t w = z->value.dim(1);
        for (std::size_t j = 0; j < w; ++j) {
          double mean = 0.0;
          for (std::size_t b = 0; b < B; ++b) mean += z->value[b * w + j];
          mean /= static_cast<double>(B);
          double var = 0.0;
          for (std::size_t b = 0; b < B; ++b) {
            const double d = z->value[b * w + j] - mean;
            var += d * d;
          }
          var /= static_cast<double>(B);
          bn_mean_[k][j] = (1.0 - bn_momentum_) * bn_mean_[k][j] + bn_momentum_ * mean;
          bn_var_[k][j] = (1.0 - bn_momentum_) * bn_var_[k][j] + bn_momentum_ * var;
        }
        z = ad::batchnorm_train(z);
      } else {
        z = ad::batchnorm_eval(z, bn_mean_[k], bn_var_[k]);
      }
    }
    NodePtr gamma = ad::add(ad::matmul(h_c, gamma_w_[k]), gamma_b_[k]);
    NodePtr beta = ad::add(ad::matmul(h_c, beta_w_[k]), beta_b_[k]);
    z = ad::prelu(ad::add(ad::mul(gamma, z), beta), layer_alpha_[k]);
    if (training && !ctx.dropout_masks.empty()) {
      z = ad::mul(z, ad::constant(ctx.dropout_masks[k]));
    }
    x = z;
  }
  return ad::add(ad::matmul(x, out_w_), out_b_);
}

}  // namespace normdiff::nets
