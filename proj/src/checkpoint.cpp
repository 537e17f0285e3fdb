#include "normdiff/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace normdiff::pipe {

using nlohmann::json;

diff::NoiseSchedule Checkpoint::schedule() const {
  return diff::linear_schedule(T, beta_start, beta_end);
}

std::vector<double> Checkpoint::normalize_covariates(double age, int sex) const {
  std::vector<double> c{age, static_cast<double>(sex)};
  for (std::size_t i = 0; i < c.size(); ++i)
    c[i] = (c[i] - cov_means[i]) / cov_sds[i];
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["backbone"] = ckpt.backbone;
  j["data_dim"] = ckpt.data_dim;
  j["cov_dim"] = ckpt.cov_dim;
  j["schedule"] = {{"T", ckpt.T},
                   {"beta_start", ckpt.beta_start},
                   {"beta_end", ckpt.beta_end}};
  j["mlp"] = {{"hidden_widths", ckpt.mlp.hidden_widths},
              {"dropout_rate", ckpt.mlp.dropout_rate},
              {"use_batchnorm", ckpt.mlp.use_batchnorm},
              {"covariate_mlp_widths", ckpt.mlp.covariate_mlp_widths}};
  j["saint"] = {{"d_model", ckpt.saint.d_model},
                {"n_heads", ckpt.saint.n_heads},
                {"depth", ckpt.saint.depth},
                {"ff_width", ckpt.saint.ff_width},
                {"dropout_rate", ckpt.saint.dropout_rate},
                {"intersample_prob", ckpt.saint.intersample_prob}};
  j["optim"] = {{"lr", ckpt.optim.lr},
                {"lr_decay", ckpt.optim.lr_decay},
                {"weight_decay", ckpt.optim.weight_decay},
                {"beta1", ckpt.optim.beta1},
                {"beta2", ckpt.optim.beta2},
                {"eps", ckpt.optim.eps},
                {"grad_clip", ckpt.optim.grad_clip},
                {"batch_size", ckpt.optim.batch_size},
                {"epochs", ckpt.optim.epochs},
                {"seed", ckpt.optim.seed}};
  j["idp_names"] = ckpt.idp_names;
  j["idp_scaler"] = {{"means", ckpt.idp_scaler.means}, {"sds", ckpt.idp_scaler.sds}};
  j["cov_scaler"] = {{"means", ckpt.cov_means}, {"sds", ckpt.cov_sds}};
  j["params"] = ckpt.params;
  j["epoch_loss"] = ckpt.epoch_loss;
  j["train_seconds"] = ckpt.train_seconds;
  j["seed"] = ckpt.seed;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump();
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  json j;
  in >> j;
  if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
    throw std::runtime_error("unsupported checkpoint format in " + path);

  Checkpoint c;
  c.backbone = j.at("backbone").get<std::string>();
  c.data_dim = j.at("data_dim").get<std::size_t>();
  c.cov_dim = j.at("cov_dim").get<std::size_t>();
  const auto& s = j.at("schedule");
  c.T = s.at("T").get<std::size_t>();
  c.beta_start = s.at("beta_start").get<double>();
  c.beta_end = s.at("beta_end").get<double>();
  const auto& m = j.at("mlp");
  c.mlp.hidden_widths = m.at("hidden_widths").get<std::vector<std::size_t>>();
  c.mlp.dropout_rate = m.at("dropout_rate").get<double>();
  c.mlp.use_batchnorm = m.at("use_batchnorm").get<bool>();
  c.mlp.covariate_mlp_widths =
      m.at("covariate_mlp_widths").get<std::vector<std::size_t>>();
  const auto& sa = j.at("saint");
  c.saint.d_model = sa.at("d_model").get<std::size_t>();
  c.saint.n_heads = sa.at("n_heads").get<std::size_t>();
  c.saint.depth = sa.at("depth").get<std::size_t>();
  c.saint.ff_width = sa.at("ff_width").get<std::size_t>();
  c.saint.dropout_rate = sa.at("dropout_rate").get<double>();
  c.saint.intersample_prob = sa.at("intersample_prob").get<double>();
  const auto& o = j.at("optim");
  c.optim.lr = o.at("lr").get<double>();
  c.optim.lr_decay = o.value("lr_decay", 1.0);
  c.optim.weight_decay = o.at("weight_decay").get<double>();
  c.optim.beta1 = o.at("beta1").get<double>();
  c.optim.beta2 = o.at("beta2").get<double>();
  c.optim.eps = o.at("eps").get<double>();
  c.optim.grad_clip = o.at("grad_clip").get<double>();
  c.optim.batch_size = o.at("batch_size").get<std::size_t>();
  c.optim.epochs = o.at("epochs").get<std::size_t>();
  c.optim.seed = o.at("seed").get<std::uint64_t>();
  c.idp_names = j.at("idp_names").get<std::vector<std::string>>();
  c.idp_scaler.means = j.at("idp_scaler").at("means").get<std::vector<double>>();
  c.idp_scaler.sds = j.at("idp_scaler").at("sds").get<std::vector<double>>();
  c.cov_means = j.at("cov_scaler").at("means").get<std::vector<double>>();
  c.cov_sds = j.at("cov_scaler").at("sds").get<std::vector<double>>();
  c.params = j.at("params").get<std::vector<double>>();
  c.epoch_loss = j.at("epoch_loss").get<std::vector<double>>();
  c.train_seconds = j.at("train_seconds").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::unique_ptr<diff::Denoiser> make_denoiser(const Checkpoint& ckpt,
                                              bool load_params) {
  std::unique_ptr<diff::Denoiser> net;
  if (ckpt.backbone == "mlp")
    net = std::make_unique<nets::FilmMlp>(ckpt.data_dim, ckpt.cov_dim, ckpt.mlp,
                                          ckpt.seed);
  else if (ckpt.backbone == "saint")
    net = std::make_unique<nets::SaintDenoiser>(ckpt.data_dim, ckpt.cov_dim,
                                                ckpt.saint, ckpt.seed);
  else
    throw std::runtime_error("unknown backbone: " + ckpt.backbone);
  if (load_params) {
    if (ckpt.params.size() != net->parameter_count())
      throw std::runtime_error("checkpoint parameter count mismatch");
    net->set_flat_parameters(ckpt.params);
  }
  return net;
}

}  // namespace normdiff::pipe
