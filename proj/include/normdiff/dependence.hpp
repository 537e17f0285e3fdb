#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace normdiff::evaldep {

inline constexpr std::size_t kShapeGridBins = 15;  // B x B histogram
inline constexpr double kShapeRange = 3.0;         // z in [-3, 3]
inline constexpr std::size_t kDistanceSubsampleCap = 2000;

// Column-major convenience: a paired sample is n rows by d columns,
// row-major in one flat vector.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;  // rows x cols, row-major

  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
};

// Independently permutes each column: breaks dependence while preserving
// every marginal exactly.
Matrix product_of_marginals(const Matrix& gen, std::uint64_t seed);

// Energy distance over ordered within-set pairs; singleton sets
// contribute a zero within-term.
double energy_distance(const Matrix& x, const Matrix& y);

// Unbiased RBF-kernel MMD^2. bandwidth <= 0 selects the median heuristic
// over pooled pairwise distances (zeros excluded).
double mmd2_rbf(const Matrix& x, const Matrix& y, double bandwidth = 0.0);

double median_heuristic_bandwidth(const Matrix& x, const Matrix& y);

struct PairDistanceRecord {
  std::size_t i = 0, j = 0;
  double e2_prod_vs_gen = 0.0;
  double e2_gen_vs_real = 0.0;
  double mmd2_prod_vs_gen = 0.0;
  double mmd2_gen_vs_real = 0.0;
};

struct ShapeMatrix {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<double> corr;        // P x P, row-major
  std::vector<std::size_t> leaf_order;
  double dropped_fraction = 0.0;   // z-values outside [-3,3]

  std::size_t size() const { return pairs.size(); }
};

// Vectorised 15x15 joint histograms per variable pair, correlated across
// pairs (Pearson). Variables are z-scored with the dataset's own moments.
ShapeMatrix shape_matrix(const Matrix& dataset);

// 2-D histogram of one pair on the fixed [-3,3]^2 grid after z-scoring
// with the dataset's own moments; used for the ranked-pair panels.
std::vector<double> pair_histogram(const Matrix& dataset, std::size_t i,
                                   std::size_t j);

// UPGMA on correlation distance 1 - rho with deterministic tie-breaks;
// returns the in-order leaf permutation.
std::vector<std::size_t> upgma_order(const std::vector<double>& corr,
                                     std::size_t p);

struct MantelResult {
  double r = 0.0;
  double p_value = 1.0;
};

// Pearson r over strict upper triangles; p by simultaneous row/column
// permutations (one-sided, add-one rule).
MantelResult mantel(const std::vector<double>& a, const std::vector<double>& b,
                    std::size_t p, std::size_t n_perm, std::uint64_t seed);

struct RankedPair {
  PairDistanceRecord record;
  // Five per-pair panels as numeric grids (B x B each):
  // product-of-marginals, generated, prod-gen difference, real,
  // gen-real difference.
  std::vector<double> prod_hist, gen_hist, prod_gen_diff, real_hist, gen_real_diff;
};

struct RankedPairReport {
  std::vector<RankedPair> top, middle, bottom;  // by mmd2_prod_vs_gen, descending
};

RankedPairReport ranked_pair_report(const std::vector<PairDistanceRecord>& records,
                                    std::size_t k, const Matrix& gen,
                                    const Matrix& real, std::uint64_t seed);

}  // namespace normdiff::evaldep
