#include "normdiff/synthgen.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "normdiff/tensor.hpp"

namespace normdiff::synth {

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// H(0) = 1: the boundary age belongs to the mixture regime.
double heaviside(double x) { return x >= 0.0 ? 1.0 : 0.0; }

}  // namespace

void SynthConfig::validate() const {
  if (n_samples == 0) throw std::invalid_argument("synth: n_samples must be positive");
  if (age_min >= age_max) throw std::invalid_argument("synth: age_min must be < age_max");
  if (mixture_onset_age < age_min || mixture_onset_age > age_max) {
    throw std::invalid_argument("synth: mixture onset age outside the age range");
  }
  // Spread formulas must stay strictly positive over the configured range.
  for (double age = age_min; age <= age_max + 1e-9; age += 0.1) {
    for (Structure s : {Structure::A, Structure::B, Structure::C, Structure::D}) {
      const int sign = age >= mixture_onset_age ? 1 : 0;
      if (mean_sd(s, age, sign).second <= 0.0) {
        throw std::invalid_argument("synth: non-positive sigma at age " + std::to_string(age));
      }
    }
  }
}

std::pair<double, double> mean_sd(Structure s, double age, int subgroup_sign) {
  const double X = age - 65.0;
  if ((X < 0.0 && subgroup_sign != 0) || (X >= 0.0 && subgroup_sign == 0)) {
    throw ContractError("mean_sd: subgroup sign must be 0 iff age < 65");
  }
  const double sg = static_cast<double>(subgroup_sign);
  switch (s) {
    case Structure::A: {
      const double mu = -70.0 * X * logistic(X / 10.0) + 20.0 * X + 7000.0 +
                        sg * heaviside(X) * age * X / 5.0;
      const double sd = 5.0 * X * logistic(X / 10.0) + X + 300.0;
      return {mu, sd};
    }
    case Structure::B: {
      const double blend = logistic((age - 73.0) / 8.0);
      const double mu = -200.0 * (age - 15.0) * blend + 45000.0 +
                        sg * heaviside(X) * age * X;
      const double sd = 25.0 * (age - 15.0) * blend + 4500.0;
      return {mu, sd};
    }
    case Structure::C: {
      const double mu = 7000.0 * std::exp(-0.04 * (age - 73.0)) + 25000.0 +
                        sg * heaviside(X) * age * X;
      const double sd = 25.0 * (age - 15.0) * logistic((age - 73.0) / 8.0) + 4500.0;
      return {mu, sd};
    }
    case Structure::D: {
      const double mu = 7000.0 * std::exp(0.02 * (age - 50.0)) + 15000.0 +
                        sg * heaviside(X) * age * X;
      const double sd = 7000.0 * std::exp(0.03 * (age - 75.0)) + 5000.0;
      return {mu, sd};
    }
  }
  throw ContractError("mean_sd: unknown structure");
}

double sample_skew_normal(double loc, double scale, double shape, Rng& rng) {
  if (scale <= 0.0) throw ContractError("sample_skew_normal: scale must be > 0");
  const double delta = shape / std::sqrt(1.0 + shape * shape);
  const double u0 = rng.normal();
  const double u1 = rng.normal();
  const double z = delta * std::abs(u0) + std::sqrt(1.0 - delta * delta) * u1;
  return loc + scale * z;
}

std::vector<SynthRecord> sample_cohort(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  std::vector<SynthRecord> out;
  out.reserve(config.n_samples);
  for (std::size_t i = 0; i < config.n_samples; ++i) {
    SynthRecord r;
    r.age = rng.uniform(config.age_min, config.age_max);
    r.sex = rng.bernoulli(0.5) ? 1 : 0;
    // One shared subgroup draw per record, applied to all four structures.
    r.subgroup = r.age >= config.mixture_onset_age ? (rng.bernoulli(0.5) ? 1 : -1) : 0;
    for (int s = 0; s < kNumStructures; ++s) {
      const auto [mu, sd] = mean_sd(static_cast<Structure>(s), r.age, r.subgroup);
      if (static_cast<Structure>(s) == Structure::D) {
        r.y[s] = sample_skew_normal(mu, sd, config.skew_shape, rng);
      } else {
        r.y[s] = rng.normal(mu, sd);
      }
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace normdiff::synth
