#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "normdiff/checkpoint.hpp"
#include "normdiff/dataset.hpp"
#include "normdiff/samplestore.hpp"
#include "normdiff/synthgen.hpp"

namespace normdiff::pipe {

struct RunConfig {
  std::string dataset_csv;        // empty -> generate SYNTH
  synth::SynthConfig synth;
  std::string backbone = "mlp";   // "mlp" | "saint"

  std::size_t T = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  nets::FilmMlpConfig mlp;
  nets::SaintConfig saint;
  diff::OptimizerConfig optim;

  double split_fraction = 0.8;
  std::size_t samples_per_cell = 1000;
  std::uint64_t seed = 0;
  std::string out_dir = "run";

  bool eval_calibration = true;
  bool eval_ks = true;
  bool eval_dependence = true;
  bool eval_memorisation = true;

  std::size_t ks_permutations = 500;
  std::size_t mantel_permutations = 999;
  std::size_t dependence_cap = 2000;
  double dependence_age_min = 0.0;    // pooling band; defaults cover everything
  double dependence_age_max = 200.0;
  std::size_t ranked_pairs_k = 1;

  void validate() const;
};

RunConfig run_config_from_json_file(const std::string& path, RunConfig base = {});

// Fits the scalers on `train`, trains the configured backbone, and returns
// a self-contained checkpoint. `train` is taken in native units.
Checkpoint train_model(const data::Cohort& train, const RunConfig& config);

// Ancestral samples for every grid cell, written to base_path.{bin,json}.
void sample_grid(const Checkpoint& ckpt, const data::CovariateGrid& grid,
                 std::size_t samples_per_cell, std::uint64_t seed,
                 const std::string& base_path);

struct EvalReport {
  std::map<double, double> mean_ace;              // q -> mean over idps/bins
  std::map<double, double> median_coverage_delta; // a -> median over idps/bins
  std::vector<double> pit_ks_per_idp;             // sup |ecdf(u) - u|
  double ks_rejection_fraction = -1.0;
  double mantel_r = 0.0;
  double mantel_p = 1.0;
  double median_e2_gen_real = 0.0;
  double median_e2_prod_real = 0.0;
  double prob_lt_1 = -1.0;
  std::size_t skipped_rows = 0;  // holdout rows outside the sampled grid
};

// Runs the enabled evaluation suites against a sample store. Holdout and
// train cohorts are in native units; scaling uses the checkpoint scalers.
// Writes per-suite CSV/JSON artifacts plus report.json when out_dir is
// non-empty.
EvalReport evaluate(const Checkpoint& ckpt, const SampleStore& store,
                    const data::Cohort& holdout, const data::Cohort& train,
                    const RunConfig& config, const std::string& out_dir);

// One-sample KS distance against U[0,1].
double ks_uniform(std::vector<double> u);

inline const std::vector<double> kAceQuantiles{0.02, 0.25, 0.5, 0.75, 0.98};
inline const std::vector<double> kCoverageLevels{0.5, 0.8, 0.9};

}  // namespace normdiff::pipe
