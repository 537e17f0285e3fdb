#pragma once

#include <cstddef>
#include <vector>

namespace normdiff::evalcal {

inline constexpr std::size_t kMinBinCount = 20;  // holdout rows per eligible bin
inline constexpr std::size_t kPitHistBins = 20;

// Fraction of samples not exceeding the threshold.
double ecdf(const std::vector<double>& samples, double threshold);

// Generalised inverse of the eCDF: the ceil(q*M)-th order statistic.
double centile(const std::vector<double>& samples, double q);

struct AceResult {
  double ace = 0.0;                      // mean |model - empirical| over bins
  std::vector<double> per_bin;           // abs error per eligible bin
  std::vector<std::size_t> skipped_bins; // bins below the count floor
};

// model_samples_per_bin / holdout_per_bin: one value vector per covariate
// bin, for a single IDP.
AceResult ace(const std::vector<std::vector<double>>& model_samples_per_bin,
              const std::vector<std::vector<double>>& holdout_per_bin, double q,
              std::size_t min_bin_count = kMinBinCount);

struct CoverageResult {
  std::vector<double> per_bin_delta;      // ECP - a for eligible bins
  std::vector<std::size_t> eligible_bins; // bin ids in the same order
};

// Central interval ((1-a)/2, (1+a)/2) built from model centiles per bin.
CoverageResult coverage_delta(
    const std::vector<std::vector<double>>& model_samples_per_bin,
    const std::vector<std::vector<double>>& holdout_per_bin, double nominal_a,
    std::size_t min_bin_count = kMinBinCount);

// PIT values, pooled across bins: u = eCDF_bin(y) per holdout row.
std::vector<double> pit(const std::vector<std::vector<double>>& model_samples_per_bin,
                        const std::vector<std::vector<double>>& holdout_per_bin,
                        std::size_t min_bin_count = kMinBinCount);

// Equal-width histogram masses over [0,1], summing to 1.
std::vector<double> pit_histogram(const std::vector<double>& pit_values,
                                  std::size_t bins = kPitHistBins);

// Gaussian kernel smoothing along the age axis with reflection at the
// ends; sigma is in units of bins and 0 is the identity.
std::vector<double> smooth_centile_curves(const std::vector<double>& curve,
                                          double sigma_bins);

}  // namespace normdiff::evalcal
