#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "normdiff/dependence.hpp"
#include "normdiff/rng.hpp"

using namespace normdiff;
using evaldep::Matrix;

namespace {

Matrix random_matrix(std::size_t n, std::size_t d, Rng& rng, double shift = 0.0) {
  Matrix m;
  m.rows = n;
  m.cols = d;
  m.v.resize(n * d);
  for (auto& x : m.v) x = rng.normal() + shift;
  return m;
}

double naive_energy(const Matrix& x, const Matrix& y) {
  auto dist = [&](const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols; ++c) {
      const double d = a.at(i, c) - b.at(j, c);
      s += d * d;
    }
    return std::sqrt(s);
  };
  double cross = 0.0, wx = 0.0, wy = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < y.rows; ++j) cross += dist(x, i, y, j);
  cross /= static_cast<double>(x.rows * y.rows);
  if (x.rows > 1) {
    for (std::size_t i = 0; i < x.rows; ++i)
      for (std::size_t j = 0; j < x.rows; ++j)
        if (i != j) wx += dist(x, i, x, j);
    wx /= static_cast<double>(x.rows * (x.rows - 1));
  }
  if (y.rows > 1) {
    for (std::size_t i = 0; i < y.rows; ++i)
      for (std::size_t j = 0; j < y.rows; ++j)
        if (i != j) wy += dist(y, i, y, j);
    wy /= static_cast<double>(y.rows * (y.rows - 1));
  }
  return 2.0 * cross - wx - wy;
}

double naive_mmd2(const Matrix& x, const Matrix& y, double h) {
  auto k = [&](const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols; ++c) {
      const double d = a.at(i, c) - b.at(j, c);
      s += d * d;
    }
    return std::exp(-s / (2.0 * h * h));
  };
  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  const double n = static_cast<double>(x.rows), m = static_cast<double>(y.rows);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.rows; ++j)
      if (i != j) kxx += k(x, i, x, j);
  for (std::size_t i = 0; i < y.rows; ++i)
    for (std::size_t j = 0; j < y.rows; ++j)
      if (i != j) kyy += k(y, i, y, j);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < y.rows; ++j) kxy += k(x, i, y, j);
  return kxx / (n * (n - 1)) + kyy / (m * (m - 1)) - 2.0 * kxy / (n * m);
}

// textbook UPGMA: merge the closest pair under average linkage, ordering
// the merged leaves by each side's lowest original leaf index
std::vector<std::size_t> naive_upgma(const std::vector<double>& corr,
                                     std::size_t p) {
  struct C {
    std::vector<std::size_t> leaves;
    bool alive = true;
    std::size_t lowest() const {
      return *std::min_element(leaves.begin(), leaves.end());
    }
  };
  std::vector<C> cs(p);
  for (std::size_t i = 0; i < p; ++i) cs[i].leaves = {i};
  auto avg = [&](const C& a, const C& b) {
    double s = 0.0;
    for (const std::size_t u : a.leaves)
      for (const std::size_t v : b.leaves) s += 1.0 - corr[u * p + v];
    return s / static_cast<double>(a.leaves.size() * b.leaves.size());
  };
  for (std::size_t step = 0; step + 1 < p; ++step) {
    double best = 1e300;
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      if (!cs[i].alive) continue;
      for (std::size_t j = i + 1; j < cs.size(); ++j) {
        if (!cs[j].alive) continue;
        const double d = avg(cs[i], cs[j]);
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    }
    // the side holding the lowest original index keeps its leaves first
    const bool bi_first = cs[bi].lowest() < cs[bj].lowest();
    const C& first = bi_first ? cs[bi] : cs[bj];
    const C& second = bi_first ? cs[bj] : cs[bi];
    C merged;
    merged.leaves = first.leaves;
    merged.leaves.insert(merged.leaves.end(), second.leaves.begin(),
                         second.leaves.end());
    cs[bi].alive = false;
    cs[bj].alive = false;
    cs.push_back(std::move(merged));
  }
  return cs.back().leaves;
}

}  // namespace

TEST_CASE("product of marginals preserves column multisets") {
  Rng rng(1);
  const Matrix m = random_matrix(50, 3, rng);
  const Matrix p = evaldep::product_of_marginals(m, 7);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> a, b;
    for (std::size_t r = 0; r < m.rows; ++r) {
      a.push_back(m.at(r, c));
      b.push_back(p.at(r, c));
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
}

TEST_CASE("product of marginals destroys correlation") {
  Rng rng(2);
  const std::size_t n = 4000;
  Matrix m;
  m.rows = n;
  m.cols = 2;
  m.v.resize(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.normal();
    m.v[2 * i] = x;
    m.v[2 * i + 1] = x;  // perfectly correlated
  }
  const Matrix p = evaldep::product_of_marginals(m, 3);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += p.v[2 * i] * p.v[2 * i + 1];
    sxx += p.v[2 * i] * p.v[2 * i];
    syy += p.v[2 * i + 1] * p.v[2 * i + 1];
  }
  CHECK(std::abs(sxy / std::sqrt(sxx * syy)) < 3.0 / std::sqrt(n));
}

TEST_CASE("energy distance hand values") {
  Matrix x, y;
  x.rows = y.rows = 1;
  x.cols = y.cols = 1;
  x.v = {0.0};
  y.v = {1.0};
  CHECK(evaldep::energy_distance(x, y) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(evaldep::energy_distance(x, x) == doctest::Approx(0.0));
}

TEST_CASE("energy distance matches the naive reference") {
  Rng rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix x = random_matrix(5 + rng.uniform_int(0, 30), 3, rng);
    const Matrix y = random_matrix(5 + rng.uniform_int(0, 30), 3, rng, 0.4);
    CHECK(evaldep::energy_distance(x, y) ==
          doctest::Approx(naive_energy(x, y)).epsilon(1e-12));
  }
}

TEST_CASE("mmd hand value") {
  Matrix x, y;
  x.rows = y.rows = 2;
  x.cols = y.cols = 1;
  x.v = {0.0, 0.0};
  y.v = {1.0, 1.0};
  // within-kernels 1, cross e^{-1/2}
  CHECK(evaldep::mmd2_rbf(x, y, 1.0) ==
        doctest::Approx(2.0 - 2.0 * std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("mmd of identical sets is small-negative; matches the naive reference") {
  Rng rng(4);
  const Matrix x = random_matrix(25, 2, rng);
  // the unbiased estimator on a sample paired with itself lands in
  // [-2/n, 0): the cross term keeps its diagonal, the within terms do not
  const double self = evaldep::mmd2_rbf(x, x);
  CHECK(self < 0.0);
  CHECK(self >= -2.0 / 25.0);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix a = random_matrix(8 + rng.uniform_int(0, 25), 2, rng);
    const Matrix b = random_matrix(8 + rng.uniform_int(0, 25), 2, rng, 0.5);
    const double h = evaldep::median_heuristic_bandwidth(a, b);
    CHECK(evaldep::mmd2_rbf(a, b, h) ==
          doctest::Approx(naive_mmd2(a, b, h)).epsilon(1e-12));
  }
}

TEST_CASE("median heuristic rejects a degenerate pooled set") {
  Matrix x;
  x.rows = 3;
  x.cols = 1;
  x.v = {2.0, 2.0, 2.0};
  CHECK_THROWS(evaldep::mmd2_rbf(x, x));
}

TEST_CASE("shape matrix invariants on correlated gaussian data") {
  Rng rng(5);
  Matrix m;
  m.rows = 5000;
  m.cols = 3;
  m.v.resize(3 * m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double a = rng.normal(), b = rng.normal(), c = rng.normal();
    m.v[3 * i] = a;
    m.v[3 * i + 1] = 0.8 * a + 0.6 * b;
    m.v[3 * i + 2] = c;
  }
  const auto shape = evaldep::shape_matrix(m);
  const std::size_t p = shape.size();
  REQUIRE(p == 3);  // pairs (0,1), (0,2), (1,2)
  for (std::size_t i = 0; i < p; ++i) {
    CHECK(shape.corr[i * p + i] == doctest::Approx(1.0));
    for (std::size_t j = 0; j < p; ++j) {
      CHECK(shape.corr[i * p + j] == doctest::Approx(shape.corr[j * p + i]));
      CHECK(shape.corr[i * p + j] <= 1.0 + 1e-12);
      CHECK(shape.corr[i * p + j] >= -1.0 - 1e-12);
    }
  }
  CHECK(shape.dropped_fraction < 0.02);
  std::vector<std::size_t> order = shape.leaf_order;
  std::sort(order.begin(), order.end());
  std::vector<std::size_t> want(p);
  std::iota(want.begin(), want.end(), std::size_t{0});
  CHECK(order == want);
}

TEST_CASE("shape matrix is stable across independent resamples") {
  auto draw = [](std::uint64_t seed) {
    Rng rng(seed);
    Matrix m;
    m.rows = 100000;
    m.cols = 3;
    m.v.resize(3 * m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
      const double a = rng.normal(), b = rng.normal(), c = rng.normal();
      m.v[3 * i] = a;
      m.v[3 * i + 1] = 0.6 * a + 0.8 * b;
      m.v[3 * i + 2] = 0.3 * a + std::sqrt(1.0 - 0.09) * c;
    }
    return evaldep::shape_matrix(m);
  };
  const auto s1 = draw(11), s2 = draw(12);
  for (std::size_t t = 0; t < s1.corr.size(); ++t)
    CHECK(std::abs(s1.corr[t] - s2.corr[t]) < 0.05);
}

TEST_CASE("shape matrix rejects zero-variance columns") {
  Matrix m;
  m.rows = 10;
  m.cols = 2;
  m.v.assign(20, 0.0);
  for (std::size_t i = 0; i < 10; ++i) m.v[2 * i] = static_cast<double>(i);
  CHECK_THROWS(evaldep::shape_matrix(m));
}

TEST_CASE("upgma hand example") {
  // d(0,1) = 0.1, d(0,2) = 0.9, d(1,2) = 0.8 -> merge {0,1} first; the
  // cluster-to-2 average-linkage distance is 0.85
  std::vector<double> corr{1.0, 0.9, 0.1, 0.9, 1.0, 0.2, 0.1, 0.2, 1.0};
  const auto order = evaldep::upgma_order(corr, 3);
  CHECK(order == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("upgma tie-break yields identity on an all-ties matrix") {
  std::vector<double> corr(25, 0.5);
  for (std::size_t i = 0; i < 5; ++i) corr[i * 5 + i] = 1.0;
  CHECK(evaldep::upgma_order(corr, 5) ==
        std::vector<std::size_t>{0, 1, 2, 3, 4});
}

TEST_CASE("upgma agrees with a naive reference on random matrices") {
  Rng rng(6);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t p = 4 + rng.uniform_int(0, 5);
    std::vector<double> corr(p * p, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
      corr[i * p + i] = 1.0;
      for (std::size_t j = i + 1; j < p; ++j) {
        const double r = rng.uniform(-0.9, 0.9);
        corr[i * p + j] = r;
        corr[j * p + i] = r;
      }
    }
    CHECK(evaldep::upgma_order(corr, p) == naive_upgma(corr, p));
  }
}

TEST_CASE("mantel r on identical and negated matrices") {
  Rng rng(7);
  const std::size_t p = 6;
  std::vector<double> a(p * p, 0.0), b(p * p, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    a[i * p + i] = 1.0;
    b[i * p + i] = 1.0;
    for (std::size_t j = i + 1; j < p; ++j) {
      const double r = rng.uniform(-0.5, 0.5);
      a[i * p + j] = a[j * p + i] = r;
      b[i * p + j] = b[j * p + i] = -r;
    }
  }
  CHECK(evaldep::mantel(a, a, p, 99, 1).r == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(evaldep::mantel(a, b, p, 99, 1).r == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("mantel p-value is high for unrelated matrices") {
  Rng rng(8);
  const std::size_t p = 10;
  auto rand_sym = [&] {
    std::vector<double> m(p * p, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
      m[i * p + i] = 1.0;
      for (std::size_t j = i + 1; j < p; ++j) {
        const double r = rng.uniform(-1.0, 1.0);
        m[i * p + j] = m[j * p + i] = r;
      }
    }
    return m;
  };
  int high_p = 0, small_r = 0;
  for (int t = 0; t < 20; ++t) {
    const auto res = evaldep::mantel(rand_sym(), rand_sym(), p, 199, 100 + t);
    if (res.p_value > 0.05) ++high_p;
    if (std::abs(res.r) < 0.4) ++small_r;
  }
  CHECK(high_p >= 17);
  CHECK(small_r >= 18);
}

TEST_CASE("mantel rejects size mismatches") {
  CHECK_THROWS(evaldep::mantel(std::vector<double>(9, 0.0),
                               std::vector<double>(16, 0.0), 3, 10, 1));
}

TEST_CASE("ranked pair report bands and ordering") {
  Rng rng(9);
  const Matrix gen = random_matrix(200, 4, rng);
  const Matrix real = random_matrix(200, 4, rng);
  std::vector<evaldep::PairDistanceRecord> records;
  std::size_t idx = 0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) {
      evaldep::PairDistanceRecord r;
      r.i = i;
      r.j = j;
      r.mmd2_prod_vs_gen = static_cast<double>(idx++) * 0.1;
      records.push_back(r);
    }
  const auto rep = evaldep::ranked_pair_report(records, 2, gen, real, 5);
  REQUIRE(rep.top.size() == 2);
  REQUIRE(rep.middle.size() == 2);
  REQUIRE(rep.bottom.size() == 2);
  CHECK(rep.top[0].record.mmd2_prod_vs_gen >= rep.top[1].record.mmd2_prod_vs_gen);
  CHECK(rep.top[1].record.mmd2_prod_vs_gen >=
        rep.middle[0].record.mmd2_prod_vs_gen);
  CHECK(rep.middle[1].record.mmd2_prod_vs_gen >=
        rep.bottom[0].record.mmd2_prod_vs_gen);
  const std::size_t cells = evaldep::kShapeGridBins * evaldep::kShapeGridBins;
  CHECK(rep.top[0].gen_hist.size() == cells);
  CHECK(rep.top[0].prod_gen_diff.size() == cells);
  CHECK_THROWS(evaldep::ranked_pair_report(records, 3, gen, real, 5));
}
