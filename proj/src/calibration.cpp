#include "normdiff/calibration.hpp"

#include <algorithm>
#include <cmath>

#include "normdiff/tensor.hpp"

namespace normdiff::evalcal {

double ecdf(const std::vector<double>& samples, double threshold) {
  if (samples.empty()) throw ContractError("ecdf: empty sample set");
  std::size_t count = 0;
  for (double v : samples) {
    if (v <= threshold) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(samples.size());
}

double centile(const std::vector<double>& samples, double q) {
  if (samples.empty()) throw ContractError("centile: empty sample set");
  if (q <= 0.0 || q >= 1.0) throw ContractError("centile: q must lie in (0,1)");
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  std::size_t k = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(m)));  // 1-based order statistic
  if (k < 1) k = 1;
  if (k > m) k = m;
  return sorted[k - 1];
}

AceResult ace(const std::vector<std::vector<double>>& model_samples_per_bin,
              const std::vector<std::vector<double>>& holdout_per_bin, double q,
              std::size_t min_bin_count) {
  if (model_samples_per_bin.size() != holdout_per_bin.size()) {
    throw DimensionError("ace: bin count mismatch");
  }
  AceResult result;
  double total = 0.0;
  for (std::size_t l = 0; l < holdout_per_bin.size(); ++l) {
    if (holdout_per_bin[l].size() < min_bin_count) {
      result.skipped_bins.push_back(l);
      continue;
    }
    const double err =
        std::abs(centile(model_samples_per_bin[l], q) - centile(holdout_per_bin[l], q));
    result.per_bin.push_back(err);
    total += err;
  }
  if (result.per_bin.empty()) throw ContractError("ace: no eligible bins");
  result.ace = total / static_cast<double>(result.per_bin.size());
  return result;
}

CoverageResult coverage_delta(
    const std::vector<std::vector<double>>& model_samples_per_bin,
    const std::vector<std::vector<double>>& holdout_per_bin, double nominal_a,
    std::size_t min_bin_count) {
  if (model_samples_per_bin.size() != holdout_per_bin.size()) {
    throw DimensionError("coverage_delta: bin count mismatch");
  }
  if (nominal_a <= 0.0 || nominal_a >= 1.0) {
    throw ContractError("coverage_delta: nominal level must lie in (0,1)");
  }
  const double q1 = (1.0 - nominal_a) / 2.0;
  const double q2 = (1.0 + nominal_a) / 2.0;
  CoverageResult result;
  for (std::size_t l = 0; l < holdout_per_bin.size(); ++l) {
    if (holdout_per_bin[l].size() < min_bin_count) continue;
    const double lo = centile(model_samples_per_bin[l], q1);
    const double hi = centile(model_samples_per_bin[l], q2);
    std::size_t inside = 0;
    for (double y : holdout_per_bin[l]) {
      if (y > lo && y < hi) ++inside;
    }
    const double ecp =
        static_cast<double>(inside) / static_cast<double>(holdout_per_bin[l].size());
    result.per_bin_delta.push_back(ecp - nominal_a);
    result.eligible_bins.push_back(l);
  }
  return result;
}

std::vector<double> pit(const std::vector<std::vector<double>>& model_samples_per_bin,
                        const std::vector<std::vector<double>>& holdout_per_bin,
                        std::size_t min_bin_count) {
  if (model_samples_per_bin.size() != holdout_per_bin.size()) {
    throw DimensionError("pit: bin count mismatch");
  }
  std::vector<double> out;
  for (std::size_t l = 0; l < holdout_per_bin.size(); ++l) {
    if (holdout_per_bin[l].size() < min_bin_count) continue;
    // Sorted copy so each evaluation is a binary search.
    std::vector<double> sorted = model_samples_per_bin[l];
    std::sort(sorted.begin(), sorted.end());
    const double m = static_cast<double>(sorted.size());
    for (double y : holdout_per_bin[l]) {
      const auto it = std::upper_bound(sorted.begin(), sorted.end(), y);
      out.push_back(static_cast<double>(it - sorted.begin()) / m);
    }
  }
  return out;
}

std::vector<double> pit_histogram(const std::vector<double>& pit_values,
                                  std::size_t bins) {
  std::vector<double> hist(bins, 0.0);
  if (pit_values.empty()) return hist;
  for (double u : pit_values) {
    std::size_t b = static_cast<std::size_t>(u * static_cast<double>(bins));
    if (b >= bins) b = bins - 1;  // u == 1 lands in the top bin
    hist[b] += 1.0;
  }
  for (double& h : hist) h /= static_cast<double>(pit_values.size());
  return hist;
}

std::vector<double> smooth_centile_curves(const std::vector<double>& curve,
                                          double sigma_bins) {
  if (sigma_bins < 0.0) throw ContractError("smooth: sigma must be >= 0");
  if (sigma_bins == 0.0 || curve.size() < 2) return curve;
  const long radius = std::max(1L, static_cast<long>(std::ceil(4.0 * sigma_bins)));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (long k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * (k * k) / (sigma_bins * sigma_bins));
    norm += kernel[k + radius];
  }
  for (double& w : kernel) w /= norm;
  const long n = static_cast<long>(curve.size());
  auto reflect = [n](long i) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - i - 1;
    }
    return i;
  };
  std::vector<double> out(curve.size(), 0.0);
  for (long i = 0; i < n; ++i) {
    double acc = 0.0;
    for (long k = -radius; k <= radius; ++k) {
      acc += kernel[k + radius] * curve[reflect(i + k)];
    }
    out[i] = acc;
  }
  return out;
}

}  // namespace normdiff::evalcal
