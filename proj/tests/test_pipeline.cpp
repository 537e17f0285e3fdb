#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "normdiff/checkpoint.hpp"
#include "normdiff/dataset.hpp"
#include "normdiff/pipeline.hpp"
#include "normdiff/samplestore.hpp"
#include "normdiff/synthgen.hpp"

using namespace normdiff;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("normdiff_test_" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& name) const { return (path / name).string(); }
};

data::Cohort tiny_cohort(std::size_t n, std::uint64_t seed) {
  synth::SynthConfig cfg;
  cfg.n_samples = n;
  cfg.seed = seed;
  return data::cohort_from_synth(synth::sample_cohort(cfg));
}

pipe::RunConfig tiny_config() {
  pipe::RunConfig cfg;
  cfg.T = 10;
  cfg.mlp.hidden_widths = {16, 16};
  cfg.mlp.covariate_mlp_widths = {8};
  cfg.optim.epochs = 1;
  cfg.optim.batch_size = 64;
  cfg.samples_per_cell = 8;
  return cfg;
}

}  // namespace

TEST_CASE("checkpoint save/load round trip is bit-exact") {
  TempDir tmp;
  auto train = tiny_cohort(400, 1);
  auto cfg = tiny_config();
  const auto ckpt = pipe::train_model(train, cfg);
  CHECK(ckpt.backbone == "mlp");
  CHECK(ckpt.data_dim == 4);
  CHECK(ckpt.cov_dim == 2);
  CHECK(ckpt.epoch_loss.size() == 1);

  const std::string path = tmp.str("ckpt.json");
  pipe::save_checkpoint(ckpt, path);
  const auto back = pipe::load_checkpoint(path);
  CHECK(back.backbone == ckpt.backbone);
  CHECK(back.T == ckpt.T);
  CHECK(back.idp_names == ckpt.idp_names);
  REQUIRE(back.params.size() == ckpt.params.size());
  for (std::size_t i = 0; i < ckpt.params.size(); ++i)
    CHECK(back.params[i] == ckpt.params[i]);  // exact: lossless f64 text
  REQUIRE(back.idp_scaler.means.size() == ckpt.idp_scaler.means.size());
  for (std::size_t i = 0; i < ckpt.idp_scaler.means.size(); ++i) {
    CHECK(back.idp_scaler.means[i] == ckpt.idp_scaler.means[i]);
    CHECK(back.idp_scaler.sds[i] == ckpt.idp_scaler.sds[i]);
  }
  CHECK(back.cov_means == ckpt.cov_means);
  CHECK(back.cov_sds == ckpt.cov_sds);

  // the reloaded model must give identical predictions
  auto d1 = pipe::make_denoiser(ckpt);
  auto d2 = pipe::make_denoiser(back);
  Tensor y({2, 4}, {0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8});
  Tensor t({2, 1}, {0.5, 0.5});
  Tensor c({2, 2}, {0.0, 1.0, 0.5, -1.0});
  const Tensor p1 = d1->predict(y, t, c);
  const Tensor p2 = d2->predict(y, t, c);
  for (std::size_t i = 0; i < p1.size(); ++i)
    CHECK(p1.data()[i] == p2.data()[i]);
}

TEST_CASE("make_denoiser validates its inputs") {
  pipe::Checkpoint ckpt;
  ckpt.backbone = "perceptron";
  ckpt.data_dim = 2;
  ckpt.cov_dim = 2;
  CHECK_THROWS(pipe::make_denoiser(ckpt));
  ckpt.backbone = "mlp";
  ckpt.params = {1.0, 2.0};  // wrong count
  CHECK_THROWS(pipe::make_denoiser(ckpt, true));
  CHECK_NOTHROW(pipe::make_denoiser(ckpt, false));
}

TEST_CASE("standardizer scale round trip") {
  auto cohort = tiny_cohort(500, 2);
  const auto original = cohort.idps;
  const auto scaler = data::fit_apply_zscale(cohort);
  data::Cohort back = cohort;
  scaler.inverse_transform(back);
  for (std::size_t i = 0; i < original.size(); ++i)
    CHECK(back.idps[i] ==
          doctest::Approx(original[i]).epsilon(1e-10).scale(std::abs(original[i])));
}

TEST_CASE("sample store round trip") {
  TempDir tmp;
  const std::string base = tmp.str("samples");
  {
    pipe::SampleStoreWriter writer(base);
    writer.append(65.0, 0, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0}, 3, 2);
    writer.append(66.0, 1, {-1.5, 2.5}, 1, 2);
    writer.finalize(42);
  }
  pipe::SampleStore store(base);
  CHECK(store.seed() == 42);
  REQUIRE(store.cells().size() == 2);
  CHECK(store.cells()[0].age == 65.0);
  CHECK(store.cells()[0].sex == 0);
  CHECK(store.cells()[0].m == 3);
  CHECK(store.cells()[0].d == 2);
  CHECK(store.read_cell(0) ==
        std::vector<double>{1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
  CHECK(store.read_column(0, 1) == std::vector<double>{2.0, 4.0, 6.0});
  CHECK(store.read_cell(1) == std::vector<double>{-1.5, 2.5});
  CHECK(store.find_cell(66.0, 1) == 1);
  CHECK_THROWS(store.find_cell(70.0, 0));
  CHECK_THROWS(store.find_cell(66.0, 0));
}

TEST_CASE("ks_uniform oracle values") {
  // u = {0.5}: ecdf jumps 0 -> 1 at 0.5, sup gap is 0.5
  CHECK(pipe::ks_uniform({0.5}) == doctest::Approx(0.5).epsilon(1e-12));
  // evenly spread mid-bin points have gap 1/(2n)
  CHECK(pipe::ks_uniform({0.125, 0.375, 0.625, 0.875}) ==
        doctest::Approx(0.125).epsilon(1e-12));
  // all mass at one end
  CHECK(pipe::ks_uniform({0.0, 0.0, 0.0}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("run config validation and JSON overrides") {
  pipe::RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.split_fraction = 1.5;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.backbone = "cnn";
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.samples_per_cell = 0;
  CHECK_THROWS(cfg.validate());

  TempDir tmp;
  const std::string path = tmp.str("config.json");
  {
    std::ofstream out(path);
    out << R"({"backbone": "saint", "T": 50, "samples_per_cell": 17,
               "optim": {"epochs": 3, "lr": 0.01},
               "dependence_age_min": 65.0})";
  }
  pipe::RunConfig base;
  base.seed = 99;
  const auto loaded = pipe::run_config_from_json_file(path, base);
  CHECK(loaded.backbone == "saint");
  CHECK(loaded.T == 50);
  CHECK(loaded.samples_per_cell == 17);
  CHECK(loaded.optim.epochs == 3);
  CHECK(loaded.optim.lr == doctest::Approx(0.01));
  CHECK(loaded.dependence_age_min == 65.0);
  CHECK(loaded.seed == 99);  // untouched base fields survive
  CHECK(loaded.split_fraction == doctest::Approx(0.8));
}

TEST_CASE("tiny end-to-end run is deterministic and writes artifacts") {
  TempDir tmp;
  auto cohort = tiny_cohort(3000, 7);
  auto [train, holdout] = data::stratified_split(cohort, 0.8, 7);

  auto cfg = tiny_config();
  cfg.seed = 7;
  cfg.eval_calibration = false;  // tiny holdout bins fall under the count floor
  cfg.eval_ks = false;
  cfg.ks_permutations = 50;
  cfg.mantel_permutations = 99;
  cfg.samples_per_cell = 40;

  const auto ckpt = pipe::train_model(train, cfg);
  const auto grid = data::CovariateGrid::from_cohort(train);
  const std::string base = tmp.str("samples");
  pipe::sample_grid(ckpt, grid, cfg.samples_per_cell, cfg.seed, base);
  pipe::SampleStore store(base);
  CHECK(store.cells().size() == grid.cells.size());

  const auto report =
      pipe::evaluate(ckpt, store, holdout, train, cfg, tmp.str("out"));
  CHECK(std::isfinite(report.mantel_r));
  CHECK(report.prob_lt_1 >= 0.0);
  CHECK(report.prob_lt_1 <= 1.0);
  CHECK(fs::exists(tmp.path / "out" / "report.json"));
  CHECK(fs::exists(tmp.path / "out" / "nn_ratios.csv"));
  CHECK(fs::exists(tmp.path / "out" / "mantel.json"));

  // identical seeds reproduce the samples bit-for-bit
  const std::string base2 = tmp.str("samples2");
  pipe::sample_grid(ckpt, grid, cfg.samples_per_cell, cfg.seed, base2);
  pipe::SampleStore store2(base2);
  const auto a = store.read_cell(0);
  const auto b = store2.read_cell(0);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

  // a different seed does not
  const std::string base3 = tmp.str("samples3");
  pipe::sample_grid(ckpt, grid, cfg.samples_per_cell, cfg.seed + 1, base3);
  const auto c3 = pipe::SampleStore(base3).read_cell(0);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) any_diff |= (a[i] != c3[i]);
  CHECK(any_diff);
}
