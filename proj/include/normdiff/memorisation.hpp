#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

namespace normdiff::evalmem {

// Exact 1-NN index over n x d points (axis-aligned median splits).
class KdTree {
 public:
  // points: n*d row-major; copied into the index
  KdTree(const std::vector<double>& points, std::size_t n, std::size_t d);

  struct Hit {
    std::size_t index = 0;
    double distance = 0.0;
  };
  Hit nearest(const double* query) const;

  std::size_t size() const { return n_; }

 private:
  struct Node {
    std::size_t begin, end;  // range into order_
    std::size_t axis = 0;
    double split = 0.0;
    int left = -1, right = -1;
  };
  void build(std::size_t begin, std::size_t end, std::size_t depth, int& slot);
  void search(int node, const double* query, double* best, std::size_t* best_idx) const;

  std::vector<double> pts_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::size_t n_, d_;
  int root_ = -1;
};

struct BalancedSets {
  std::vector<std::size_t> train_rows, holdout_rows;
  // (stratum key, balanced count); empty strata are dropped and counted
  std::vector<std::pair<std::pair<long, int>, std::size_t>> stratum_sizes;
  std::size_t dropped_strata = 0;
};

// Per-stratum subsample without replacement to the smaller side's count.
// Strata are (1-year age bin, sex) pairs supplied per row.
BalancedSets balance_by_strata(const std::vector<std::pair<long, int>>& train_strata,
                               const std::vector<std::pair<long, int>>& holdout_strata,
                               std::uint64_t seed);

struct NnReport {
  std::vector<double> ratios;  // per generated row; +inf when d_hold == 0
  double prob_lt_1 = 0.0;
  std::size_t n_train = 0, n_holdout = 0;
};

// generated: m x d row-major; references are row-major matrices too.
NnReport nn_ratio(const std::vector<double>& generated, std::size_t m,
                  const std::vector<double>& train, std::size_t n_train,
                  const std::vector<double>& holdout, std::size_t n_holdout,
                  std::size_t d);

}  // namespace normdiff::evalmem
