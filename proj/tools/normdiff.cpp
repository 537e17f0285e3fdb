// Command-line front end: synth | train | sample | eval | report.
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "normdiff/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace normdiff;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// One lock file per run directory; a stale lock must be removed by hand.
struct DirLock {
  std::string path;
  explicit DirLock(const std::string& dir) : path(dir + "/.lock") {
    fs::create_directories(dir);
    if (fs::exists(path))
      throw std::invalid_argument("run directory is locked: " + path);
    std::ofstream(path) << "locked\n";
  }
  ~DirLock() { std::error_code ec; fs::remove(path, ec); }
};

json config_snapshot(const pipe::RunConfig& c) {
  json j;
  j["dataset_csv"] = c.dataset_csv;
  j["backbone"] = c.backbone;
  j["T"] = c.T;
  j["beta_start"] = c.beta_start;
  j["beta_end"] = c.beta_end;
  j["split_fraction"] = c.split_fraction;
  j["samples_per_cell"] = c.samples_per_cell;
  j["seed"] = c.seed;
  j["synth"] = {{"n_samples", c.synth.n_samples},
                {"age_min", c.synth.age_min},
                {"age_max", c.synth.age_max},
                {"seed", c.synth.seed}};
  j["optim"] = {{"lr", c.optim.lr},
                {"lr_decay", c.optim.lr_decay},
                {"weight_decay", c.optim.weight_decay},
                {"grad_clip", c.optim.grad_clip},
                {"batch_size", c.optim.batch_size},
                {"epochs", c.optim.epochs},
                {"seed", c.optim.seed}};
  j["mlp"] = {{"hidden_widths", c.mlp.hidden_widths},
              {"dropout_rate", c.mlp.dropout_rate},
              {"use_batchnorm", c.mlp.use_batchnorm}};
  j["saint"] = {{"d_model", c.saint.d_model},
                {"n_heads", c.saint.n_heads},
                {"depth", c.saint.depth},
                {"ff_width", c.saint.ff_width},
                {"dropout_rate", c.saint.dropout_rate},
                {"intersample_prob", c.saint.intersample_prob}};
  return j;
}

// Manifest survives partial failures: updated before and after each stage.
void update_manifest(const std::string& dir, const std::string& stage,
                     const std::string& status, double seconds,
                     const json* config) {
  const std::string path = dir + "/manifest.json";
  json m;
  if (fs::exists(path)) {
    std::ifstream in(path);
    in >> m;
  }
  m["library_version"] = "0.1.0";
  if (config) m["config"] = *config;
  m["stages"][stage] = {{"status", status}, {"seconds", seconds}};
  std::ofstream out(path);
  out << m.dump(2);
}

struct StageGuard {
  std::string dir, stage;
  double t0;
  bool done = false;
  StageGuard(std::string d, std::string s, const json* config)
      : dir(std::move(d)), stage(std::move(s)), t0(now_seconds()) {
    update_manifest(dir, stage, "running", 0.0, config);
  }
  void finish() {
    update_manifest(dir, stage, "ok", now_seconds() - t0, nullptr);
    done = true;
  }
  ~StageGuard() {
    if (!done) update_manifest(dir, stage, "failed", now_seconds() - t0, nullptr);
  }
};

data::Cohort load_or_synth(const pipe::RunConfig& cfg) {
  if (!cfg.dataset_csv.empty()) return data::load_csv(cfg.dataset_csv);
  return data::cohort_from_synth(synth::sample_cohort(cfg.synth));
}

int cmd_synth(const pipe::RunConfig& cfg, const std::string& out_path) {
  const auto cohort = data::cohort_from_synth(synth::sample_cohort(cfg.synth));
  data::write_csv(cohort, out_path);
  std::cout << "wrote " << cohort.n << " rows to " << out_path << "\n";
  return kExitOk;
}

int cmd_train(const pipe::RunConfig& cfg) {
  DirLock lock(cfg.out_dir);
  const json snap = config_snapshot(cfg);
  StageGuard guard(cfg.out_dir, "train", &snap);

  data::Cohort cohort = load_or_synth(cfg);
  auto [train_set, holdout] =
      data::stratified_split(cohort, cfg.split_fraction, cfg.seed);
  data::write_csv(train_set, cfg.out_dir + "/train.csv");
  data::write_csv(holdout, cfg.out_dir + "/holdout.csv");

  const auto ckpt = pipe::train_model(train_set, cfg);
  pipe::save_checkpoint(ckpt, cfg.out_dir + "/checkpoint.json");

  std::ofstream loss(cfg.out_dir + "/loss.csv");
  loss << "epoch,loss\n";
  for (std::size_t e = 0; e < ckpt.epoch_loss.size(); ++e)
    loss << e + 1 << ',' << ckpt.epoch_loss[e] << '\n';

  guard.finish();
  update_manifest(cfg.out_dir, "train_seconds_wall", "ok", ckpt.train_seconds,
                  nullptr);
  std::cout << "trained " << cfg.backbone << " in " << ckpt.train_seconds
            << " s; final loss "
            << (ckpt.epoch_loss.empty() ? 0.0 : ckpt.epoch_loss.back()) << "\n";
  return kExitOk;
}

int cmd_sample(const pipe::RunConfig& cfg, const std::string& ckpt_path,
               double age_min, double age_max) {
  DirLock lock(cfg.out_dir);
  StageGuard guard(cfg.out_dir, "sample", nullptr);

  const auto ckpt = pipe::load_checkpoint(ckpt_path);
  data::CovariateGrid grid;
  if (age_min < age_max) {
    grid = data::CovariateGrid::from_age_range(age_min, age_max);
  } else {
    const auto cohort = load_or_synth(cfg);
    grid = data::CovariateGrid::from_cohort(cohort);
  }
  const double t0 = now_seconds();
  pipe::sample_grid(ckpt, grid, cfg.samples_per_cell, cfg.seed,
                    cfg.out_dir + "/samples");
  guard.finish();
  std::cout << "sampled " << grid.cells.size() * cfg.samples_per_cell
            << " rows over " << grid.cells.size() << " cells in "
            << now_seconds() - t0 << " s\n";
  return kExitOk;
}

int cmd_eval(pipe::RunConfig cfg, const std::string& ckpt_path,
             const std::string& samples_base, const std::string& holdout_csv,
             const std::string& train_csv, const std::string& which) {
  if (which != "all") {
    cfg.eval_calibration = which == "calibration";
    cfg.eval_ks = which == "ks";
    cfg.eval_dependence = which == "dependence";
    cfg.eval_memorisation = which == "memorisation";
  }
  DirLock lock(cfg.out_dir);
  StageGuard guard(cfg.out_dir, "eval", nullptr);

  const auto ckpt = pipe::load_checkpoint(ckpt_path);
  const pipe::SampleStore store(samples_base);
  const auto holdout = data::load_csv(holdout_csv);
  data::Cohort train_set;
  if (cfg.eval_memorisation) {
    if (train_csv.empty())
      throw std::invalid_argument("memorisation eval needs --train");
    train_set = data::load_csv(train_csv);
  }
  const auto rep = pipe::evaluate(ckpt, store, holdout, train_set, cfg, cfg.out_dir);
  guard.finish();
  for (const auto& [q, v] : rep.mean_ace)
    std::cout << "mean ACE q=" << q << ": " << v << "\n";
  for (const auto& [a, v] : rep.median_coverage_delta)
    std::cout << "median coverage delta a=" << a << ": " << v << "\n";
  if (rep.ks_rejection_fraction >= 0.0)
    std::cout << "KS rejection fraction: " << rep.ks_rejection_fraction << "\n";
  if (cfg.eval_dependence) std::cout << "Mantel r: " << rep.mantel_r << "\n";
  if (rep.prob_lt_1 >= 0.0) std::cout << "P(r<1): " << rep.prob_lt_1 << "\n";
  return kExitOk;
}

int cmd_report(const std::string& dir) {
  std::ifstream in(dir + "/report.json");
  if (!in) throw std::invalid_argument("no report.json in " + dir);
  json r;
  in >> r;
  std::cout << r.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional diffusion normative modelling pipeline"};
  app.require_subcommand(1);

  pipe::RunConfig cfg;
  std::string config_path, out_path = "cohort.csv", ckpt_path, samples_base;
  std::string holdout_csv, train_csv, which = "all", report_dir = "run";
  double grid_age_min = 1.0, grid_age_max = 0.0;  // unset unless min < max

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config; overrides flags");
    sub->add_option("--seed", cfg.seed, "master seed");
    sub->add_option("--out-dir", cfg.out_dir, "run directory");
  };

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic cohort CSV");
  synth_cmd->add_option("--n", cfg.synth.n_samples, "cohort size");
  synth_cmd->add_option("--synth-seed", cfg.synth.seed, "cohort seed");
  synth_cmd->add_option("--age-min", cfg.synth.age_min);
  synth_cmd->add_option("--age-max", cfg.synth.age_max);
  synth_cmd->add_option("--out", out_path, "output CSV path");
  add_common(synth_cmd);

  auto* train_cmd = app.add_subcommand("train", "train a denoiser");
  train_cmd->add_option("--data", cfg.dataset_csv, "cohort CSV (default: SYNTH)");
  train_cmd->add_option("--backbone", cfg.backbone, "mlp | saint");
  train_cmd->add_option("--epochs", cfg.optim.epochs);
  train_cmd->add_option("--batch-size", cfg.optim.batch_size);
  train_cmd->add_option("--lr", cfg.optim.lr);
  train_cmd->add_option("--lr-decay", cfg.optim.lr_decay, "per-epoch lr multiplier");
  train_cmd->add_option("--split", cfg.split_fraction, "train fraction");
  add_common(train_cmd);

  auto* sample_cmd = app.add_subcommand("sample", "sample the covariate grid");
  sample_cmd->add_option("--checkpoint", ckpt_path)->required();
  sample_cmd->add_option("--m", cfg.samples_per_cell, "samples per cell");
  sample_cmd->add_option("--data", cfg.dataset_csv, "cohort CSV defining the grid");
  sample_cmd->add_option("--age-min", grid_age_min, "explicit grid lower edge");
  sample_cmd->add_option("--age-max", grid_age_max, "explicit grid upper edge");
  add_common(sample_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "run the evaluation suites");
  eval_cmd->add_option("--checkpoint", ckpt_path)->required();
  eval_cmd->add_option("--samples", samples_base, "sample store base path")->required();
  eval_cmd->add_option("--holdout", holdout_csv)->required();
  eval_cmd->add_option("--train", train_csv, "train CSV (memorisation)");
  eval_cmd->add_option("--which", which,
                       "all | calibration | ks | dependence | memorisation");
  eval_cmd->add_option("--dependence-age-min", cfg.dependence_age_min);
  eval_cmd->add_option("--dependence-age-max", cfg.dependence_age_max);
  add_common(eval_cmd);

  auto* report_cmd = app.add_subcommand("report", "print headline numbers");
  report_cmd->add_option("--dir", report_dir, "run directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (!config_path.empty()) cfg = pipe::run_config_from_json_file(config_path, cfg);
    cfg.validate();
    if (synth_cmd->parsed()) return cmd_synth(cfg, out_path);
    if (train_cmd->parsed()) return cmd_train(cfg);
    if (sample_cmd->parsed())
      return cmd_sample(cfg, ckpt_path, grid_age_min, grid_age_max);
    if (eval_cmd->parsed())
      return cmd_eval(cfg, ckpt_path, samples_base, holdout_csv, train_csv, which);
    if (report_cmd->parsed()) return cmd_report(report_dir);
  } catch (const ContractError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
