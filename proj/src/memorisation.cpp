#include "normdiff/memorisation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "normdiff/rng.hpp"

namespace normdiff::evalmem {

KdTree::KdTree(const std::vector<double>& points, std::size_t n, std::size_t d)
    : pts_(points), n_(n), d_(d) {
  if (n == 0) throw std::invalid_argument("KdTree: empty point set");
  if (points.size() != n * d) throw std::invalid_argument("KdTree: size mismatch");
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  nodes_.reserve(2 * n);
  int slot = -1;
  build(0, n, 0, slot);
  root_ = slot;
}

void KdTree::build(std::size_t begin, std::size_t end, std::size_t depth, int& slot) {
  Node node;
  node.begin = begin;
  node.end = end;
  if (end - begin > 1) {
    node.axis = depth % d_;
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                       return pts_[a * d_ + node.axis] < pts_[b * d_ + node.axis];
                     });
    node.split = pts_[order_[mid] * d_ + node.axis];
    int left = -1, right = -1;
    build(begin, mid, depth + 1, left);
    build(mid, end, depth + 1, right);
    node.left = left;
    node.right = right;
  }
  nodes_.push_back(node);
  slot = static_cast<int>(nodes_.size()) - 1;
}

void KdTree::search(int ni, const double* query, double* best,
                    std::size_t* best_idx) const {
  const Node& node = nodes_[static_cast<std::size_t>(ni)];
  if (node.left < 0) {  // leaf: single point
    for (std::size_t k = node.begin; k < node.end; ++k) {
      const std::size_t p = order_[k];
      double s = 0.0;
      for (std::size_t c = 0; c < d_; ++c) {
        const double df = query[c] - pts_[p * d_ + c];
        s += df * df;
      }
      // prefer the lowest index on exact distance ties
      if (s < *best || (s == *best && p < *best_idx)) {
        *best = s;
        *best_idx = p;
      }
    }
    return;
  }
  const double diff = query[node.axis] - node.split;
  const int near = diff < 0.0 ? node.left : node.right;
  const int far = near == node.left ? node.right : node.left;
  search(near, query, best, best_idx);
  if (diff * diff <= *best) search(far, query, best, best_idx);
}

KdTree::Hit KdTree::nearest(const double* query) const {
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_idx = 0;
  search(root_, query, &best, &best_idx);
  return {best_idx, std::sqrt(best)};
}

BalancedSets balance_by_strata(const std::vector<std::pair<long, int>>& train_strata,
                               const std::vector<std::pair<long, int>>& holdout_strata,
                               std::uint64_t seed) {
  std::map<std::pair<long, int>, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>>
      groups;
  for (std::size_t i = 0; i < train_strata.size(); ++i)
    groups[train_strata[i]].first.push_back(i);
  for (std::size_t i = 0; i < holdout_strata.size(); ++i)
    groups[holdout_strata[i]].second.push_back(i);

  BalancedSets out;
  Rng rng(seed);
  for (auto& [key, sides] : groups) {
    auto& [tr, ho] = sides;
    const std::size_t k = std::min(tr.size(), ho.size());
    if (k == 0) {
      ++out.dropped_strata;
      continue;
    }
    rng.shuffle(tr);
    rng.shuffle(ho);
    tr.resize(k);
    ho.resize(k);
    std::sort(tr.begin(), tr.end());
    std::sort(ho.begin(), ho.end());
    out.train_rows.insert(out.train_rows.end(), tr.begin(), tr.end());
    out.holdout_rows.insert(out.holdout_rows.end(), ho.begin(), ho.end());
    out.stratum_sizes.emplace_back(key, k);
  }
  std::sort(out.train_rows.begin(), out.train_rows.end());
  std::sort(out.holdout_rows.begin(), out.holdout_rows.end());
  return out;
}

NnReport nn_ratio(const std::vector<double>& generated, std::size_t m,
                  const std::vector<double>& train, std::size_t n_train,
                  const std::vector<double>& holdout, std::size_t n_holdout,
                  std::size_t d) {
  if (n_train == 0 || n_holdout == 0)
    throw std::invalid_argument("nn_ratio: empty reference set");
  KdTree tree_train(train, n_train, d);
  KdTree tree_hold(holdout, n_holdout, d);

  NnReport rep;
  rep.n_train = n_train;
  rep.n_holdout = n_holdout;
  rep.ratios.reserve(m);
  std::size_t lt = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double dt = tree_train.nearest(&generated[i * d]).distance;
    const double dh = tree_hold.nearest(&generated[i * d]).distance;
    double r;
    if (dt == 0.0 && dh == 0.0)
      r = 1.0;
    else if (dh == 0.0)
      r = std::numeric_limits<double>::infinity();
    else
      r = dt / dh;
    rep.ratios.push_back(r);
    if (r < 1.0) ++lt;
  }
  rep.prob_lt_1 = static_cast<double>(lt) / static_cast<double>(m);
  return rep;
}

}  // namespace normdiff::evalmem
