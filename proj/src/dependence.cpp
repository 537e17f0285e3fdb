#include "normdiff/dependence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "normdiff/rng.hpp"

namespace normdiff::evaldep {

namespace {

double row_dist(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.cols; ++c) {
    const double d = a.at(i, c) - b.at(j, c);
    s += d * d;
  }
  return std::sqrt(s);
}

double mean_cross_dist(const Matrix& x, const Matrix& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < y.rows; ++j) s += row_dist(x, i, y, j);
  return s / (static_cast<double>(x.rows) * static_cast<double>(y.rows));
}

// mean over ordered pairs i != i'; zero for singleton sets
double mean_within_dist(const Matrix& x) {
  if (x.rows < 2) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = i + 1; j < x.rows; ++j) s += row_dist(x, i, x, j);
  const double n = static_cast<double>(x.rows);
  return 2.0 * s / (n * (n - 1.0));
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return saa == sbb ? 1.0 : 0.0;
  return sab / std::sqrt(saa * sbb);
}

struct ZScored {
  std::vector<double> mean, sd;
};

ZScored column_moments(const Matrix& m) {
  ZScored z;
  z.mean.assign(m.cols, 0.0);
  z.sd.assign(m.cols, 0.0);
  for (std::size_t c = 0; c < m.cols; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < m.rows; ++r) s += m.at(r, c);
    z.mean[c] = s / static_cast<double>(m.rows);
    double ss = 0.0;
    for (std::size_t r = 0; r < m.rows; ++r) {
      const double d = m.at(r, c) - z.mean[c];
      ss += d * d;
    }
    z.sd[c] = std::sqrt(ss / static_cast<double>(m.rows - 1));
    if (z.sd[c] == 0.0)
      throw std::invalid_argument("shape_matrix: zero-variance column " +
                                  std::to_string(c));
  }
  return z;
}

// 15x15 histogram of a z-scored pair on [-3,3]^2; out-of-range mass dropped.
// Returns the count of dropped points through `dropped`.
std::vector<double> hist2d(const Matrix& m, const ZScored& z, std::size_t i,
                           std::size_t j, std::size_t* dropped) {
  const std::size_t b = kShapeGridBins;
  std::vector<double> h(b * b, 0.0);
  const double lo = -kShapeRange, width = 2.0 * kShapeRange / static_cast<double>(b);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double zi = (m.at(r, i) - z.mean[i]) / z.sd[i];
    const double zj = (m.at(r, j) - z.mean[j]) / z.sd[j];
    if (zi < lo || zi > kShapeRange || zj < lo || zj > kShapeRange) {
      if (dropped) ++*dropped;
      continue;
    }
    auto bin = [&](double v) {
      auto k = static_cast<std::size_t>((v - lo) / width);
      return std::min(k, b - 1);  // z == 3 lands in the top bin
    };
    h[bin(zi) * b + bin(zj)] += 1.0;
  }
  return h;
}

std::vector<double> upper_triangle(const std::vector<double>& m, std::size_t p) {
  std::vector<double> out;
  out.reserve(p * (p - 1) / 2);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j) out.push_back(m[i * p + j]);
  return out;
}

}  // namespace

Matrix product_of_marginals(const Matrix& gen, std::uint64_t seed) {
  if (gen.rows < 2) throw std::invalid_argument("product_of_marginals: need >= 2 rows");
  Matrix out = gen;
  Rng rng(seed);
  std::vector<std::size_t> perm(gen.rows);
  for (std::size_t c = 0; c < gen.cols; ++c) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    for (std::size_t r = 0; r < gen.rows; ++r) out.at(r, c) = gen.at(perm[r], c);
  }
  return out;
}

double energy_distance(const Matrix& x, const Matrix& y) {
  if (x.rows == 0 || y.rows == 0)
    throw std::invalid_argument("energy_distance: empty input");
  if (x.cols != y.cols)
    throw std::invalid_argument("energy_distance: dimension mismatch");
  return 2.0 * mean_cross_dist(x, y) - mean_within_dist(x) - mean_within_dist(y);
}

double median_heuristic_bandwidth(const Matrix& x, const Matrix& y) {
  std::vector<double> d;
  d.reserve((x.rows + y.rows) * (x.rows + y.rows) / 2);
  auto collect = [&](const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
    const double v = row_dist(a, i, b, j);
    if (v > 0.0) d.push_back(v);
  };
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = i + 1; j < x.rows; ++j) collect(x, i, x, j);
    for (std::size_t j = 0; j < y.rows; ++j) collect(x, i, y, j);
  }
  for (std::size_t i = 0; i < y.rows; ++i)
    for (std::size_t j = i + 1; j < y.rows; ++j) collect(y, i, y, j);
  if (d.empty())
    throw std::invalid_argument("mmd2_rbf: all pooled points identical");
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double med = d[mid];
  if (d.size() % 2 == 0) {
    const double lo = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (lo + med);
  }
  return med;
}

double mmd2_rbf(const Matrix& x, const Matrix& y, double bandwidth) {
  if (x.rows < 2 || y.rows < 2)
    throw std::invalid_argument("mmd2_rbf: need >= 2 points per set");
  if (x.cols != y.cols)
    throw std::invalid_argument("mmd2_rbf: dimension mismatch");
  const double h = bandwidth > 0.0 ? bandwidth : median_heuristic_bandwidth(x, y);
  const double inv = 1.0 / (2.0 * h * h);
  auto k = [&](const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
    const double d = row_dist(a, i, b, j);
    return std::exp(-d * d * inv);
  };
  const double n = static_cast<double>(x.rows), m = static_cast<double>(y.rows);
  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = i + 1; j < x.rows; ++j) kxx += k(x, i, x, j);
  for (std::size_t i = 0; i < y.rows; ++i)
    for (std::size_t j = i + 1; j < y.rows; ++j) kyy += k(y, i, y, j);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < y.rows; ++j) kxy += k(x, i, y, j);
  return 2.0 * kxx / (n * (n - 1.0)) + 2.0 * kyy / (m * (m - 1.0)) -
         2.0 * kxy / (n * m);
}

ShapeMatrix shape_matrix(const Matrix& dataset) {
  if (dataset.rows < 2)
    throw std::invalid_argument("shape_matrix: need >= 2 rows");
  const ZScored z = column_moments(dataset);

  ShapeMatrix out;
  for (std::size_t i = 0; i < dataset.cols; ++i)
    for (std::size_t j = i + 1; j < dataset.cols; ++j) out.pairs.emplace_back(i, j);

  std::size_t dropped = 0;
  std::vector<std::vector<double>> hists;
  hists.reserve(out.pairs.size());
  for (const auto& [i, j] : out.pairs) hists.push_back(hist2d(dataset, z, i, j, &dropped));
  const std::size_t p = out.pairs.size();
  out.corr.assign(p * p, 0.0);
  for (std::size_t a = 0; a < p; ++a) {
    out.corr[a * p + a] = 1.0;
    for (std::size_t b = a + 1; b < p; ++b) {
      const double r = pearson(hists[a], hists[b]);
      out.corr[a * p + b] = r;
      out.corr[b * p + a] = r;
    }
  }
  out.leaf_order = upgma_order(out.corr, p);
  // each pair histogram sees every row, so normalise per-pair
  out.dropped_fraction =
      static_cast<double>(dropped) / static_cast<double>(dataset.rows * p);
  return out;
}

std::vector<double> pair_histogram(const Matrix& dataset, std::size_t i,
                                   std::size_t j) {
  const ZScored z = column_moments(dataset);
  return hist2d(dataset, z, i, j, nullptr);
}

std::vector<std::size_t> upgma_order(const std::vector<double>& corr,
                                     std::size_t p) {
  if (p == 0) return {};
  if (p == 1) return {0};

  struct Cluster {
    std::vector<std::size_t> leaves;  // in tree order
    std::size_t lowest;               // original-index tie-break key
    bool alive = true;
  };
  std::vector<Cluster> clusters(p);
  for (std::size_t i = 0; i < p; ++i) {
    clusters[i].leaves = {i};
    clusters[i].lowest = i;
  }
  // average-linkage distance between clusters on D = 1 - rho
  auto dist = [&](const Cluster& a, const Cluster& b) {
    double s = 0.0;
    for (std::size_t u : a.leaves)
      for (std::size_t v : b.leaves) s += 1.0 - corr[u * p + v];
    return s / static_cast<double>(a.leaves.size() * b.leaves.size());
  };

  for (std::size_t step = 0; step + 1 < p; ++step) {
    std::size_t bi = 0, bj = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      if (!clusters[i].alive) continue;
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        if (!clusters[j].alive) continue;
        const double d = dist(clusters[i], clusters[j]);
        const bool better =
            d < best ||
            (d == best &&
             std::min(clusters[i].lowest, clusters[j].lowest) <
                 std::min(clusters[bi].lowest, clusters[bj].lowest)) ||
            (d == best &&
             std::min(clusters[i].lowest, clusters[j].lowest) ==
                 std::min(clusters[bi].lowest, clusters[bj].lowest) &&
             std::max(clusters[i].lowest, clusters[j].lowest) <
                 std::max(clusters[bi].lowest, clusters[bj].lowest));
        if (better) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    }
    // lower-index cluster keeps its leaves first
    Cluster merged;
    Cluster &a = clusters[bi], &b = clusters[bj];
    Cluster &first = a.lowest < b.lowest ? a : b;
    Cluster &second = a.lowest < b.lowest ? b : a;
    merged.leaves = first.leaves;
    merged.leaves.insert(merged.leaves.end(), second.leaves.begin(),
                         second.leaves.end());
    merged.lowest = first.lowest;
    a.alive = false;
    b.alive = false;
    clusters.push_back(std::move(merged));
  }
  return clusters.back().leaves;
}

MantelResult mantel(const std::vector<double>& a, const std::vector<double>& b,
                    std::size_t p, std::size_t n_perm, std::uint64_t seed) {
  if (a.size() != p * p || b.size() != p * p)
    throw std::invalid_argument("mantel: size mismatch");
  MantelResult res;
  res.r = pearson(upper_triangle(a, p), upper_triangle(b, p));

  Rng rng(seed);
  std::vector<std::size_t> perm(p);
  const auto ta = upper_triangle(a, p);
  std::size_t n_ge = 0;
  std::vector<double> tb;
  tb.reserve(p * (p - 1) / 2);
  for (std::size_t it = 0; it < n_perm; ++it) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    tb.clear();
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = i + 1; j < p; ++j)
        tb.push_back(b[perm[i] * p + perm[j]]);
    if (pearson(ta, tb) >= res.r - 1e-15) ++n_ge;
  }
  res.p_value = static_cast<double>(1 + n_ge) / static_cast<double>(n_perm + 1);
  return res;
}

RankedPairReport ranked_pair_report(const std::vector<PairDistanceRecord>& records,
                                    std::size_t k, const Matrix& gen,
                                    const Matrix& real, std::uint64_t seed) {
  if (records.size() < 3 * k)
    throw std::invalid_argument("ranked_pair_report: need >= 3k pairs");
  std::vector<PairDistanceRecord> sorted = records;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const PairDistanceRecord& a, const PairDistanceRecord& b) {
                     return a.mmd2_prod_vs_gen > b.mmd2_prod_vs_gen;
                   });

  const Matrix prod = product_of_marginals(gen, seed);
  auto make_panels = [&](const PairDistanceRecord& rec) {
    RankedPair rp;
    rp.record = rec;
    rp.prod_hist = pair_histogram(prod, rec.i, rec.j);
    rp.gen_hist = pair_histogram(gen, rec.i, rec.j);
    rp.real_hist = pair_histogram(real, rec.i, rec.j);
    rp.prod_gen_diff.resize(rp.gen_hist.size());
    rp.gen_real_diff.resize(rp.gen_hist.size());
    // compare densities, not counts: sets may differ in size
    const double np = static_cast<double>(prod.rows), ng = static_cast<double>(gen.rows),
                 nr = static_cast<double>(real.rows);
    for (std::size_t t = 0; t < rp.gen_hist.size(); ++t) {
      rp.prod_gen_diff[t] = rp.prod_hist[t] / np - rp.gen_hist[t] / ng;
      rp.gen_real_diff[t] = rp.gen_hist[t] / ng - rp.real_hist[t] / nr;
    }
    return rp;
  };

  RankedPairReport rep;
  const std::size_t mid0 = (sorted.size() - k) / 2;
  for (std::size_t t = 0; t < k; ++t) {
    rep.top.push_back(make_panels(sorted[t]));
    rep.middle.push_back(make_panels(sorted[mid0 + t]));
    rep.bottom.push_back(make_panels(sorted[sorted.size() - k + t]));
  }
  return rep;
}

}  // namespace normdiff::evaldep
