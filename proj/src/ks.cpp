#include "normdiff/ks.hpp"

#include <algorithm>
#include <cmath>

#include "normdiff/rng.hpp"
#include "normdiff/tensor.hpp"

namespace normdiff::evalks {

namespace {

// KS distance over values sorted ascending with boolean group labels
// (true = group a). Evaluates the eCDF gap after each run of ties.
double ks_from_sorted(const std::vector<double>& values,
                      const std::vector<char>& is_a, std::size_t n_a,
                      std::size_t n_b) {
  const double inv_a = 1.0 / static_cast<double>(n_a);
  const double inv_b = 1.0 / static_cast<double>(n_b);
  double cdf_a = 0.0, cdf_b = 0.0, d = 0.0;
  const std::size_t n = values.size();
  std::size_t i = 0;
  while (i < n) {
    const double v = values[i];
    while (i < n && values[i] == v) {
      if (is_a[i]) {
        cdf_a += inv_a;
      } else {
        cdf_b += inv_b;
      }
      ++i;
    }
    d = std::max(d, std::abs(cdf_a - cdf_b));
  }
  return d;
}

}  // namespace

double ks_statistic(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw ContractError("ks: empty sample vector");
  std::vector<std::pair<double, char>> pooled;
  pooled.reserve(a.size() + b.size());
  for (double v : a) pooled.emplace_back(v, 1);
  for (double v : b) pooled.emplace_back(v, 0);
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> values(pooled.size());
  std::vector<char> labels(pooled.size());
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    values[i] = pooled[i].first;
    labels[i] = pooled[i].second;
  }
  return ks_from_sorted(values, labels, a.size(), b.size());
}

double permutation_pvalue(const std::vector<double>& a, const std::vector<double>& b,
                          std::size_t n_perm, std::uint64_t seed) {
  if (n_perm < 1) throw ContractError("ks: need at least one permutation");
  if (a.empty() || b.empty()) throw ContractError("ks: empty sample vector");
  std::vector<std::pair<double, char>> pooled;
  pooled.reserve(a.size() + b.size());
  for (double v : a) pooled.emplace_back(v, 1);
  for (double v : b) pooled.emplace_back(v, 0);
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> values(pooled.size());
  std::vector<char> labels(pooled.size());
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    values[i] = pooled[i].first;
    labels[i] = pooled[i].second;
  }
  const double observed = ks_from_sorted(values, labels, a.size(), b.size());

  Rng rng(seed);
  std::size_t n_ge = 0;
  for (std::size_t p = 0; p < n_perm; ++p) {
    rng.shuffle(labels);  // reshuffles labels over sorted positions
    if (ks_from_sorted(values, labels, a.size(), b.size()) >= observed - 1e-15) {
      ++n_ge;
    }
  }
  return static_cast<double>(1 + n_ge) / static_cast<double>(n_perm + 1);
}

double rejection_fraction(const std::vector<KsResult>& results, double alpha) {
  if (results.empty()) throw ContractError("ks: no results to summarise");
  std::size_t rejected = 0;
  for (const auto& r : results) {
    if (r.p_value <= alpha) ++rejected;
  }
  return static_cast<double>(rejected) / static_cast<double>(results.size());
}

}  // namespace normdiff::evalks
