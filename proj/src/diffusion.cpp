#include "normdiff/diffusion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

namespace normdiff::diff {

NoiseSchedule linear_schedule(std::size_t T, double beta_start, double beta_end) {
  if (T < 1) throw ContractError("schedule: T must be >= 1");
  if (!(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0)) {
    throw ContractError("schedule: need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.T = T;
  s.betas.resize(T);
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  s.reverse_var.resize(T);
  double abar = 1.0;
  for (std::size_t i = 0; i < T; ++i) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
    s.betas[i] = beta_start + (beta_end - beta_start) * frac;
    s.alphas[i] = 1.0 - s.betas[i];
    abar *= s.alphas[i];
    s.alpha_bars[i] = abar;
    s.reverse_var[i] = s.betas[i];
  }
  return s;
}

Tensor Denoiser::predict(const Tensor& y_t, const Tensor& t_norm, const Tensor& c) {
  StepContext ctx;  // Phase::Eval, no dropout, degenerate row attention
  ad::DeterministicKernelGuard det;  // batch-invariant matmul results
  auto out = forward(ad::constant(y_t), ad::constant(t_norm), ad::constant(c), ctx);
  return out->value;
}

std::vector<double> Denoiser::flat_parameters() const {
  std::vector<double> flat;
  for (const auto& p : parameters()) {
    flat.insert(flat.end(), p->value.values().begin(), p->value.values().end());
  }
  return flat;
}

void Denoiser::set_flat_parameters(const std::vector<double>& flat) {
  std::size_t off = 0;
  for (const auto& p : parameters()) {
    const std::size_t n = p->value.size();
    if (off + n > flat.size()) {
      throw DimensionError("denoiser: flat parameter vector too short");
    }
    std::copy_n(flat.begin() + off, n, p->value.values().begin());
    off += n;
  }
  if (off != flat.size()) {
    throw DimensionError("denoiser: flat parameter vector has " +
                         std::to_string(flat.size()) + " entries, expected " +
                         std::to_string(off));
  }
}

std::size_t Denoiser::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p->value.size();
  return n;
}

Tensor one_shot_noise(const Tensor& y0, std::size_t t, const Tensor& eps,
                      const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.T) throw ContractError("one_shot_noise: t out of range");
  if (!y0.same_shape(eps)) throw DimensionError("one_shot_noise: shape mismatch");
  const double a = std::sqrt(schedule.alpha_bar(t));
  const double b = std::sqrt(1.0 - schedule.alpha_bar(t));
  Tensor out = y0;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * out[i] + b * eps[i];
  return out;
}

ad::NodePtr training_loss(Denoiser& denoiser, const Tensor& y0, const Tensor& c,
                          const NoiseSchedule& schedule, Rng& rng) {
  if (y0.rank() != 2 || c.rank() != 2 || y0.dim(0) != c.dim(0) || y0.dim(0) == 0) {
    throw DimensionError("training_loss: expects non-empty (B,D) and (B,C) batches");
  }
  const std::size_t B = y0.dim(0), D = y0.dim(1);
  Tensor eps({B, D});
  Tensor y_t({B, D});
  Tensor t_norm({B, 1});
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t t = static_cast<std::size_t>(rng.uniform_int(1, schedule.T));
    const double a = std::sqrt(schedule.alpha_bar(t));
    const double s = std::sqrt(1.0 - schedule.alpha_bar(t));
    t_norm[b] = static_cast<double>(t) / static_cast<double>(schedule.T);
    for (std::size_t j = 0; j < D; ++j) {
      const double e = rng.normal();
      eps[b * D + j] = e;
      y_t[b * D + j] = a * y0[b * D + j] + s * e;
    }
  }
  StepContext ctx = denoiser.make_train_context(B, rng);
  auto eps_hat = denoiser.forward(ad::constant(y_t), ad::constant(t_norm),
                                  ad::constant(c), ctx);
  auto diff = ad::sub(eps_hat, ad::constant(eps));
  return ad::scale(ad::sum(ad::mul(diff, diff)), 1.0 / static_cast<double>(B));
}

Tensor reverse_step(Denoiser& denoiser, const Tensor& y_t, std::size_t t,
                    const Tensor& c, const NoiseSchedule& schedule, Rng& rng) {
  if (t < 1 || t > schedule.T) throw ContractError("reverse_step: t out of range");
  const std::size_t B = y_t.dim(0), D = y_t.dim(1);
  Tensor t_norm({B, 1});
  const double tn = static_cast<double>(t) / static_cast<double>(schedule.T);
  for (std::size_t b = 0; b < B; ++b) t_norm[b] = tn;
  const Tensor eps_hat = denoiser.predict(y_t, t_norm, c);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
  const double coef = schedule.beta(t) / std::sqrt(1.0 - schedule.alpha_bar(t));
  const double sigma = schedule.sigma(t);
  Tensor out({B, D});
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = inv_sqrt_alpha * (y_t[i] - coef * eps_hat[i]);
    if (t > 1) v += sigma * rng.normal();
    out[i] = v;
  }
  out.check_finite("reverse_step");
  return out;
}

Tensor ancestral_sample(Denoiser& denoiser, const std::vector<double>& cov_row,
                        std::size_t M, const NoiseSchedule& schedule,
                        std::uint64_t seed) {
  if (M < 1) throw ContractError("ancestral_sample: M must be >= 1");
  const std::size_t D = denoiser.data_dim();
  const std::size_t C = denoiser.cov_dim();
  if (cov_row.size() != C) {
    throw DimensionError("ancestral_sample: covariate row has wrong width");
  }
  Rng rng(seed);
  Tensor y({M, D});
  for (double& v : y.values()) v = rng.normal();
  Tensor c({M, C});
  for (std::size_t m = 0; m < M; ++m) {
    std::copy(cov_row.begin(), cov_row.end(), c.data() + m * C);
  }
  for (std::size_t t = schedule.T; t >= 1; --t) {
    y = reverse_step(denoiser, y, t, c, schedule, rng);
  }
  return y;
}

AdamW::AdamW(const std::vector<ad::NodePtr>& params, const OptimizerConfig& config)
    : params_(params), config_(config) {
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros_like(p->value));
    v_.push_back(Tensor::zeros_like(p->value));
  }
}

double AdamW::step() {
  double norm_sq = 0.0;
  for (const auto& p : params_) {
    for (double g : p->grad.values()) norm_sq += g * g;
  }
  const double norm = std::sqrt(norm_sq);
  const double clip_scale =
      (config_.grad_clip > 0.0 && norm > config_.grad_clip) ? config_.grad_clip / norm
                                                            : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    double* w = p->value.data();
    double* g = p->grad.data();
    double* m = m_[k].data();
    double* v = v_[k].data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double gi = g[i] * clip_scale;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= config_.lr * (mhat / (std::sqrt(vhat) + config_.eps) +
                            config_.weight_decay * w[i]);
      g[i] = 0.0;
    }
  }
  return norm;
}

TrainResult train(Denoiser& denoiser, const Tensor& y0, const Tensor& c,
                  const NoiseSchedule& schedule, const OptimizerConfig& config) {
  if (y0.rank() != 2 || c.rank() != 2 || y0.dim(0) != c.dim(0)) {
    throw DimensionError("train: expects (N,D) data and (N,C) covariates");
  }
  const auto start = std::chrono::steady_clock::now();
  const std::size_t N = y0.dim(0), D = y0.dim(1), C = c.dim(1);
  Rng rng(config.seed);
  AdamW opt(denoiser.parameters(), config);
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t off = 0; off < N; off += config.batch_size) {
      const std::size_t B = std::min(config.batch_size, N - off);
      Tensor yb({B, D}), cb({B, C});
      for (std::size_t b = 0; b < B; ++b) {
        std::copy_n(y0.data() + order[off + b] * D, D, yb.data() + b * D);
        std::copy_n(c.data() + order[off + b] * C, C, cb.data() + b * C);
      }
      auto loss = training_loss(denoiser, yb, cb, schedule, rng);
      const double loss_val = loss->value[0];
      if (!std::isfinite(loss_val)) {
        throw ContractError("train: loss diverged (non-finite) at epoch " +
                            std::to_string(epoch));
      }
      if (opt.lr() != 0.0) {
        ad::backward(loss);
        opt.step();
      }
      epoch_loss += loss_val;
      ++n_batches;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(n_batches));
    opt.set_lr(opt.lr() * config.lr_decay);
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace normdiff::diff
