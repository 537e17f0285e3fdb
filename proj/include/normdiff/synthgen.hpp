#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "normdiff/rng.hpp"

namespace normdiff::synth {

// The four generated structures. A and B blend polynomial trends through a
// sigmoid; C and D follow single-exponential trends across the age range.
enum class Structure { A, B, C, D };

inline constexpr int kNumStructures = 4;

struct SynthConfig {
  std::size_t n_samples = 47000;
  double age_min = 45.0;
  double age_max = 82.0;
  std::uint64_t seed = 0;
  double mixture_onset_age = 65.0;
  double skew_shape = 7.0;  // skew-normal shape for structure D

  void validate() const;
};

struct SynthRecord {
  double age = 0.0;
  int sex = 0;       // {0,1}
  int subgroup = 0;  // -1/+1 for age >= onset, 0 otherwise
  double y[kNumStructures] = {0, 0, 0, 0};
};

// Closed-form mean and spread for one structure at one age.
// subgroup_sign must be 0 below the mixture onset and +/-1 at or above it.
std::pair<double, double> mean_sd(Structure s, double age, int subgroup_sign);

// Location-scale skew-normal draw via the two-Gaussian representation.
double sample_skew_normal(double loc, double scale, double shape, Rng& rng);

std::vector<SynthRecord> sample_cohort(const SynthConfig& config);

}  // namespace normdiff::synth
