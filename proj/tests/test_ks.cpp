#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "normdiff/ks.hpp"
#include "normdiff/rng.hpp"

using namespace normdiff;

namespace {

// quadratic reference: evaluate both eCDFs at every pooled value
double naive_ks(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  double d = 0.0;
  for (double x : pooled) {
    double fa = 0.0, fb = 0.0;
    for (double v : a) fa += v <= x ? 1.0 : 0.0;
    for (double v : b) fb += v <= x ? 1.0 : 0.0;
    d = std::max(d, std::abs(fa / static_cast<double>(a.size()) -
                             fb / static_cast<double>(b.size())));
  }
  return d;
}

}  // namespace

TEST_CASE("ks statistic hand values") {
  CHECK(evalks::ks_statistic({1, 2, 3}, {2, 3, 4}) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(evalks::ks_statistic({1, 2, 3}, {1, 2, 3}) == doctest::Approx(0.0));
  CHECK(evalks::ks_statistic({0, 0}, {1, 1}) == doctest::Approx(1.0));
  // ties across samples
  CHECK(evalks::ks_statistic({1, 1, 2}, {1, 2, 2}) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("ks statistic matches the quadratic reference on random data") {
  Rng rng(17);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<double> a(5 + rng.uniform_int(0, 60));
    std::vector<double> b(5 + rng.uniform_int(0, 60));
    for (auto& x : a) x = std::round(rng.normal() * 4.0) / 4.0;  // force ties
    for (auto& x : b) x = std::round(rng.normal() * 4.0) / 4.0;
    CHECK(evalks::ks_statistic(a, b) ==
          doctest::Approx(naive_ks(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("permutation p-value uses the add-one rule") {
  // identical samples: every permutation has D >= D_obs = 0 -> p = 1
  const std::vector<double> a{1, 2, 3, 4};
  CHECK(evalks::permutation_pvalue(a, a, 99, 3) == doctest::Approx(1.0));
  // wildly separated samples: p at the floor 1/(n_perm+1)
  std::vector<double> lo(20), hi(20);
  for (std::size_t i = 0; i < 20; ++i) {
    lo[i] = static_cast<double>(i);
    hi[i] = 1000.0 + static_cast<double>(i);
  }
  CHECK(evalks::permutation_pvalue(lo, hi, 199, 3) ==
        doctest::Approx(1.0 / 200.0).epsilon(1e-12));
}

TEST_CASE("permutation test is calibrated under the null") {
  Rng rng(23);
  const int trials = 200;
  int rejections = 0;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> a(40), b(40);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    const double p = evalks::permutation_pvalue(a, b, 99, 1000 + t);
    if (p <= 0.05) ++rejections;
  }
  // binomial 99% envelope around 0.05 (the add-one rule makes the test
  // slightly conservative)
  const double se = std::sqrt(0.05 * 0.95 / trials);
  CHECK(rejections <= static_cast<int>((0.05 + 2.576 * se) * trials) + 1);
}

TEST_CASE("p-values are seed deterministic") {
  std::vector<double> a(30), b(30);
  Rng rng(4);
  for (auto& x : a) x = rng.normal();
  for (auto& x : b) x = rng.normal() + 0.3;
  CHECK(evalks::permutation_pvalue(a, b, 200, 77) ==
        evalks::permutation_pvalue(a, b, 200, 77));
}

TEST_CASE("rejection fraction counts p <= alpha") {
  std::vector<evalks::KsResult> rs(4);
  rs[0].p_value = 0.01;
  rs[1].p_value = 0.05;
  rs[2].p_value = 0.2;
  rs[3].p_value = 0.8;
  CHECK(evalks::rejection_fraction(rs, 0.05) == doctest::Approx(0.5));
  CHECK_THROWS(evalks::rejection_fraction({}, 0.05));
}
