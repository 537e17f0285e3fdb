#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "normdiff/calibration.hpp"
#include "normdiff/rng.hpp"

using namespace normdiff;

namespace {

std::vector<double> iota_vals(std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i + 1);
  return v;
}

}  // namespace

TEST_CASE("ecdf basics and ties") {
  const std::vector<double> s{1.0, 2.0, 2.0, 3.0};
  CHECK(evalcal::ecdf(s, 0.5) == doctest::Approx(0.0));
  CHECK(evalcal::ecdf(s, 2.0) == doctest::Approx(0.75));
  CHECK(evalcal::ecdf(s, 10.0) == doctest::Approx(1.0));
}

TEST_CASE("centile is the ceil(qM) order statistic") {
  const auto v = iota_vals(10);
  CHECK(evalcal::centile(v, 0.25) == doctest::Approx(3.0));  // ceil(2.5) = 3
  CHECK(evalcal::centile(v, 0.5) == doctest::Approx(5.0));
  CHECK(evalcal::centile(v, 0.02) == doctest::Approx(1.0));
  CHECK(evalcal::centile(v, 0.999) == doctest::Approx(10.0));  // ceil(9.99)
  CHECK_THROWS(evalcal::centile(v, 1.0));
  CHECK_THROWS(evalcal::centile(v, 0.0));
  // unsorted input is handled
  std::vector<double> shuffled{7, 1, 9, 3, 5, 2, 8, 10, 4, 6};
  CHECK(evalcal::centile(shuffled, 0.5) == doctest::Approx(5.0));
}

TEST_CASE("centile matches a naive sort-based reference") {
  Rng rng(31);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> v(1 + static_cast<std::size_t>(rng.uniform_int(1, 200)));
    for (auto& x : v) x = rng.normal();
    const double q = rng.uniform(0.01, 1.0);
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    const auto k = static_cast<std::size_t>(
        std::ceil(q * static_cast<double>(v.size())));
    const double want = sorted[std::min(v.size(), std::max<std::size_t>(k, 1)) - 1];
    CHECK(evalcal::centile(v, q) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("ace on a hand-checkable configuration") {
  // one eligible bin: model samples 1..100, holdout 1..20 (+80 shift on a
  // second bin below the floor, which must be skipped)
  std::vector<std::vector<double>> model{iota_vals(100), iota_vals(100)};
  std::vector<std::vector<double>> hold{iota_vals(20), {1.0, 2.0}};
  const auto res = evalcal::ace(model, hold, 0.5);
  REQUIRE(res.per_bin.size() == 1);
  REQUIRE(res.skipped_bins == std::vector<std::size_t>{1});
  // model q50 = 50, empirical q50 of 1..20 = 10 -> |50 - 10| = 40
  CHECK(res.per_bin[0] == doctest::Approx(40.0).epsilon(1e-12));
  CHECK(res.ace == doctest::Approx(40.0).epsilon(1e-12));
}

TEST_CASE("ace is zero when model matches the empirical distribution") {
  std::vector<std::vector<double>> model{iota_vals(50)};
  std::vector<std::vector<double>> hold{iota_vals(50)};
  for (double q : {0.02, 0.25, 0.5, 0.75, 0.98})
    CHECK(evalcal::ace(model, hold, q).ace == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("ace throws when no bin is eligible") {
  std::vector<std::vector<double>> model{iota_vals(10)};
  std::vector<std::vector<double>> hold{{1.0}};
  CHECK_THROWS(evalcal::ace(model, hold, 0.5));
}

TEST_CASE("coverage delta for a perfectly calibrated bin") {
  // holdout = model samples: empirical coverage of the central 50% interval
  // of 1..100: interval (25, 75) strictly inside -> 49/100
  std::vector<std::vector<double>> model{iota_vals(100)};
  std::vector<std::vector<double>> hold{iota_vals(100)};
  const auto res = evalcal::coverage_delta(model, hold, 0.5);
  REQUIRE(res.per_bin_delta.size() == 1);
  CHECK(res.per_bin_delta[0] == doctest::Approx(0.49 - 0.5).epsilon(1e-12));
}

TEST_CASE("coverage delta detects over- and under-dispersion") {
  Rng rng(5);
  std::vector<double> model(5000), narrow(500), wide(500);
  for (auto& x : model) x = rng.normal();
  for (auto& x : narrow) x = 0.3 * rng.normal();
  for (auto& x : wide) x = 3.0 * rng.normal();
  const auto over = evalcal::coverage_delta({model}, {narrow}, 0.8);
  CHECK(over.per_bin_delta[0] > 0.1);  // too-wide model covers too much
  const auto under = evalcal::coverage_delta({model}, {wide}, 0.8);
  CHECK(under.per_bin_delta[0] < -0.1);
}

TEST_CASE("pit is uniform when the model equals the data distribution") {
  Rng rng(6);
  std::vector<std::vector<double>> model(3), hold(3);
  for (int b = 0; b < 3; ++b) {
    model[b].resize(4000);
    hold[b].resize(400);
    for (auto& x : model[b]) x = rng.normal();
    for (auto& x : hold[b]) x = rng.normal();
  }
  const auto u = evalcal::pit(model, hold);
  REQUIRE(u.size() == 1200);
  double mean = 0.0;
  for (double x : u) mean += x;
  mean /= static_cast<double>(u.size());
  CHECK(mean == doctest::Approx(0.5).epsilon(0.03));
  const auto hist = evalcal::pit_histogram(u);
  for (double m : hist) CHECK(m == doctest::Approx(0.05).epsilon(0.5));
}

TEST_CASE("pit skips bins under the count floor") {
  std::vector<std::vector<double>> model{iota_vals(100), iota_vals(100)};
  std::vector<std::vector<double>> hold{iota_vals(30), {5.0}};
  const auto u = evalcal::pit(model, hold);
  CHECK(u.size() == 30);
}

TEST_CASE("pit histogram masses sum to one and u=1 lands in the top bin") {
  std::vector<double> u{0.0, 0.999, 1.0, 0.5};
  const auto hist = evalcal::pit_histogram(u, 10);
  double total = 0.0;
  for (double m : hist) total += m;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(hist[9] == doctest::Approx(0.5).epsilon(1e-12));  // 0.999 and 1.0
  CHECK(hist[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("smoothing with sigma 0 is the identity") {
  const std::vector<double> curve{1, 5, 2, 8, 3};
  CHECK(evalcal::smooth_centile_curves(curve, 0.0) == curve);
}

TEST_CASE("smoothing preserves a constant curve (reflection at the edges)") {
  const std::vector<double> curve(9, 4.2);
  const auto out = evalcal::smooth_centile_curves(curve, 1.5);
  for (double v : out) CHECK(v == doctest::Approx(4.2).epsilon(1e-12));
}

TEST_CASE("smoothing damps oscillation but keeps the mean roughly") {
  std::vector<double> curve(20);
  for (std::size_t i = 0; i < curve.size(); ++i) curve[i] = (i % 2) ? 1.0 : -1.0;
  const auto out = evalcal::smooth_centile_curves(curve, 2.0);
  for (double v : out) CHECK(std::abs(v) < 0.5);
}
