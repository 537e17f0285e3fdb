#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "normdiff/dataset.hpp"
#include "normdiff/diffusion.hpp"
#include "normdiff/film_mlp.hpp"
#include "normdiff/saint.hpp"

namespace normdiff::pipe {

inline constexpr int kCheckpointFormatVersion = 1;

// Everything needed to reload a trained model and score/sample with it.
// Covariates are normalised inside the model input (age especially is
// poorly scaled raw), so the normaliser travels with the weights.
struct Checkpoint {
  std::string backbone;  // "mlp" | "saint"
  std::size_t data_dim = 0;
  std::size_t cov_dim = 0;

  std::size_t T = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  nets::FilmMlpConfig mlp;
  nets::SaintConfig saint;
  diff::OptimizerConfig optim;

  std::vector<std::string> idp_names;
  data::Standardizer idp_scaler;
  std::vector<double> cov_means, cov_sds;

  std::vector<double> params;
  std::vector<double> epoch_loss;
  double train_seconds = 0.0;
  std::uint64_t seed = 0;

  diff::NoiseSchedule schedule() const;
  std::vector<double> normalize_covariates(double age, int sex) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Fresh denoiser matching the checkpoint's architecture; loads the stored
// weights when `load_params` is set.
std::unique_ptr<diff::Denoiser> make_denoiser(const Checkpoint& ckpt,
                                              bool load_params = true);

}  // namespace normdiff::pipe
