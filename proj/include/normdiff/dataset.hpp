#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "normdiff/synthgen.hpp"
#include "normdiff/tensor.hpp"

namespace normdiff::data {

// In-memory cohort: covariates (age, sex) plus D numeric IDP columns.
// No missing values by construction; loading rejects incomplete rows.
struct Cohort {
  std::size_t n = 0;
  std::vector<std::string> covariate_names;  // {"age", "sex"}
  std::vector<std::string> idp_names;
  std::vector<double> covariates;  // n x c, row-major
  std::vector<double> idps;        // n x d, row-major

  std::size_t cov_dim() const { return covariate_names.size(); }
  std::size_t idp_dim() const { return idp_names.size(); }
  double age(std::size_t row) const { return covariates[row * cov_dim()]; }
  int sex(std::size_t row) const {
    return static_cast<int>(covariates[row * cov_dim() + 1]);
  }
  const double* idp_row(std::size_t row) const { return idps.data() + row * idp_dim(); }
  Cohort select_rows(const std::vector<std::size_t>& rows) const;
};

// Per-IDP z-scaling fitted on training data (sample sd, denominator n-1).
struct Standardizer {
  std::vector<double> means;
  std::vector<double> sds;

  void transform(Cohort& cohort) const;
  void inverse_transform(Cohort& cohort) const;
  double scale_value(std::size_t idp, double v) const {
    return (v - means[idp]) / sds[idp];
  }
  double unscale_value(std::size_t idp, double v) const {
    return v * sds[idp] + means[idp];
  }
};

struct GridCell {
  double age_center = 0.0;
  int sex = 0;
};

// One-year (by default) age bins crossed with sex. Bins are half-open
// [center - w/2, center + w/2); an age on the upper boundary promotes to
// the next bin.
struct CovariateGrid {
  std::vector<GridCell> cells;
  double bin_width = 1.0;

  static CovariateGrid from_age_range(double age_min, double age_max,
                                      double bin_width = 1.0);
  static CovariateGrid from_cohort(const Cohort& cohort, double bin_width = 1.0);
  // Index of the cell containing (age, sex); throws if outside the grid.
  std::size_t cell_index(double age, int sex) const;
};

Cohort load_csv(const std::string& path);
void write_csv(const Cohort& cohort, const std::string& path);

Cohort cohort_from_synth(const std::vector<synth::SynthRecord>& records);

// Fits on `train` in place, then applies the training statistics to every
// cohort in `others`.
Standardizer fit_apply_zscale(Cohort& train, std::vector<Cohort*> others = {});

std::pair<Cohort, Cohort> stratified_split(const Cohort& cohort, double fraction,
                                           std::uint64_t seed);

// Stratified subsample of `fraction` of the rows (used for learning-curve
// style experiments on the training split).
Cohort stratified_subsample(const Cohort& cohort, double fraction,
                            std::uint64_t seed);

std::vector<std::vector<std::size_t>> bin_membership(const Cohort& cohort,
                                                     const CovariateGrid& grid);

}  // namespace normdiff::data
