#pragma once

#include <cstdint>
#include <vector>

namespace normdiff::evalks {

struct KsResult {
  std::size_t bin = 0;
  std::size_t idp = 0;
  double d_stat = 0.0;
  double p_value = 1.0;
  std::size_t n_real = 0;
  std::size_t n_gen = 0;
};

// Exact sup over the pooled support of |eCDF_a - eCDF_b| (tie-aware).
double ks_statistic(const std::vector<double>& a, const std::vector<double>& b);

// Label-permutation two-sample p-value with the add-one rule, so
// p in [1/(n_perm+1), 1].
double permutation_pvalue(const std::vector<double>& a, const std::vector<double>& b,
                          std::size_t n_perm, std::uint64_t seed);

double rejection_fraction(const std::vector<KsResult>& results, double alpha = 0.05);

}  // namespace normdiff::evalks
