#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "normdiff/tensor.hpp"

namespace normdiff::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the reverse-mode graph. `grad` always has the shape of
// `value` and accumulates across backward() calls until reset.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backprop;  // accumulates this->grad into parents

  Node(Tensor v, bool req)
      : value(std::move(v)), grad(Tensor::zeros_like(value)), requires_grad(req) {}
};

NodePtr constant(Tensor v);
NodePtr parameter(Tensor v);

// While alive, matrix products use fixed-order kernels whose per-row
// results do not depend on the batch height (BLAS blocking does), making
// evaluation outputs bit-identical across batch sizes. Slower; training
// paths leave it off.
class DeterministicKernelGuard {
 public:
  DeterministicKernelGuard();
  ~DeterministicKernelGuard();
  DeterministicKernelGuard(const DeterministicKernelGuard&) = delete;
  DeterministicKernelGuard& operator=(const DeterministicKernelGuard&) = delete;

 private:
  bool prev_;
};

// Reverse pass from a scalar loss; visits each node exactly once.
void backward(const NodePtr& loss);

void zero_grad(const std::vector<NodePtr>& params);

// ---- linear algebra ----
NodePtr matmul(const NodePtr& a, const NodePtr& b);           // (m,k)x(k,n)
// Batched product over matching leading dim: (G,m,k)x(G,k,n),
// or (G,m,k)x(G,n,k) when transpose_b.
NodePtr bmm(const NodePtr& a, const NodePtr& b, bool transpose_b = false);

// ---- elementwise / shape ----
// add/mul broadcast b over leading dims when b's shape is a trailing
// suffix of a's shape (the only broadcasting supported).
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr scale(const NodePtr& a, double s);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr prelu(const NodePtr& x, const NodePtr& alpha);  // alpha: scalar node
NodePtr sigmoid(const NodePtr& x);
NodePtr softmax_lastdim(const NodePtr& x);
NodePtr layernorm_lastdim(const NodePtr& x, double eps = 1e-5);
// Batch normalisation over axis 0 of a 2-D tensor using the batch's own
// statistics (training mode). Evaluation mode applies fixed statistics.
NodePtr batchnorm_train(const NodePtr& x, double eps = 1e-5);
NodePtr batchnorm_eval(const NodePtr& x, const Tensor& mean, const Tensor& var,
                       double eps = 1e-5);

NodePtr sum(const NodePtr& x);                       // -> scalar
NodePtr mean_axis1(const NodePtr& x);                // (B,D,E)->(B,E)
NodePtr expand_axis1(const NodePtr& x, std::size_t d1);  // (B,E)->(B,d1,E)
NodePtr concat_lastdim(const NodePtr& a, const NodePtr& b);  // 2-D
NodePtr reshape(const NodePtr& x, std::vector<std::size_t> shape);
NodePtr split_heads(const NodePtr& x, std::size_t heads);  // (B,S,dm)->(B*h,S,dm/h)
NodePtr merge_heads(const NodePtr& x, std::size_t heads);  // inverse
// out[b,d,:] = y[b,d] * w[d,:] : per-feature scaling used by tokenizers.
NodePtr outer_feature(const NodePtr& y, const NodePtr& w);  // (B,D)x(D,E)->(B,D,E)

}  // namespace normdiff::ad
