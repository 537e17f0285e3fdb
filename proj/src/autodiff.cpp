#include "normdiff/autodiff.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace normdiff::ad {

namespace {

thread_local bool g_deterministic_kernels = false;

// Fixed-order fallback kernels. BLAS row results depend on the matrix
// height (blocking changes the accumulation order), so evaluation paths
// that must be batch-invariant bit for bit use these instead: each output
// row is computed by a loop whose order depends only on k and n.
void det_gemm_nn(int m, int n, int k, double alpha, const double* A,
                 const double* B, double beta, double* C) {
  for (int i = 0; i < m; ++i) {
    double* crow = C + static_cast<std::ptrdiff_t>(i) * n;
    if (beta == 0.0)
      std::fill(crow, crow + n, 0.0);
    else
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    const double* arow = A + static_cast<std::ptrdiff_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double a = alpha * arow[p];
      const double* brow = B + static_cast<std::ptrdiff_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

void det_gemm_nt(int m, int n, int k, double alpha, const double* A,
                 const double* B, double beta, double* C) {
  for (int i = 0; i < m; ++i) {
    const double* arow = A + static_cast<std::ptrdiff_t>(i) * k;
    double* crow = C + static_cast<std::ptrdiff_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = B + static_cast<std::ptrdiff_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = alpha * acc + (beta == 0.0 ? 0.0 : beta * crow[j]);
    }
  }
}

// Row-major dgemm: C = alpha * op(A) * op(B) + beta * C.
void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* A,
          const double* B, double beta, double* C) {
  if (g_deterministic_kernels && !ta) {
    if (!tb)
      det_gemm_nn(m, n, k, alpha, A, B, beta, C);
    else
      det_gemm_nt(m, n, k, alpha, A, B, beta, C);
    return;
  }
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, A,
              ta ? m : k, B, tb ? k : n, beta, C, n);
}

NodePtr make_node(Tensor value, std::vector<NodePtr> parents,
                  std::function<void(Node&)> backprop) {
  bool req = false;
  for (const auto& p : parents) req = req || p->requires_grad;
  auto n = std::make_shared<Node>(std::move(value), req);
  if (req) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

void check_suffix_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sb.size() > sa.size() ||
      !std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
    throw DimensionError(std::string(op) + ": shape " + b.shape_str() +
                         " is not a trailing suffix of " + a.shape_str());
  }
}

}  // namespace

DeterministicKernelGuard::DeterministicKernelGuard()
    : prev_(g_deterministic_kernels) {
  g_deterministic_kernels = true;
}

DeterministicKernelGuard::~DeterministicKernelGuard() {
  g_deterministic_kernels = prev_;
}

NodePtr constant(Tensor v) { return std::make_shared<Node>(std::move(v), false); }

NodePtr parameter(Tensor v) { return std::make_shared<Node>(std::move(v), true); }

void backward(const NodePtr& loss) {
  if (loss->value.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        loss->value.shape_str());
  }
  // Iterative post-order DFS for the reverse topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

void zero_grad(const std::vector<NodePtr>& params) {
  for (const auto& p : params) std::fill(p->grad.values().begin(), p->grad.values().end(), 0.0);
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  const Tensor& A = a->value;
  const Tensor& B = b->value;
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + A.shape_str() + " x " +
                         B.shape_str());
  }
  const int m = static_cast<int>(A.dim(0));
  const int k = static_cast<int>(A.dim(1));
  const int n = static_cast<int>(B.dim(1));
  Tensor out({A.dim(0), B.dim(1)});
  gemm(false, false, m, n, k, 1.0, A.data(), B.data(), 0.0, out.data());
  return make_node(std::move(out), {a, b}, [a, b, m, n, k](Node& self) {
    // dA = G * B^T ; dB = A^T * G
    if (a->requires_grad) {
      gemm(false, true, m, k, n, 1.0, self.grad.data(), b->value.data(), 1.0,
           a->grad.data());
    }
    if (b->requires_grad) {
      gemm(true, false, k, n, m, 1.0, a->value.data(), self.grad.data(), 1.0,
           b->grad.data());
    }
  });
}

NodePtr bmm(const NodePtr& a, const NodePtr& b, bool transpose_b) {
  const Tensor& A = a->value;
  const Tensor& B = b->value;
  if (A.rank() != 3 || B.rank() != 3 || A.dim(0) != B.dim(0)) {
    throw DimensionError("bmm: incompatible shapes " + A.shape_str() + " x " +
                         B.shape_str());
  }
  const std::size_t G = A.dim(0);
  const int m = static_cast<int>(A.dim(1));
  const int k = static_cast<int>(A.dim(2));
  const int n = static_cast<int>(transpose_b ? B.dim(1) : B.dim(2));
  if ((transpose_b ? B.dim(2) : B.dim(1)) != A.dim(2)) {
    throw DimensionError("bmm: inner dimensions disagree, " + A.shape_str() +
                         " x " + B.shape_str());
  }
  Tensor out({G, A.dim(1), static_cast<std::size_t>(n)});
  const std::size_t sa = static_cast<std::size_t>(m) * k;
  const std::size_t sb = B.dim(1) * B.dim(2);
  const std::size_t so = static_cast<std::size_t>(m) * n;
  for (std::size_t g = 0; g < G; ++g) {
    gemm(false, transpose_b, m, n, k, 1.0, A.data() + g * sa, B.data() + g * sb,
         0.0, out.data() + g * so);
  }
  return make_node(std::move(out), {a, b},
                   [a, b, G, m, n, k, sa, sb, so, transpose_b](Node& self) {
    for (std::size_t g = 0; g < G; ++g) {
      const double* Gp = self.grad.data() + g * so;
      if (a->requires_grad) {
        // dA = G * op(B)^T
        gemm(false, !transpose_b, m, k, n, 1.0, Gp, b->value.data() + g * sb, 1.0,
             a->grad.data() + g * sa);
      }
      if (b->requires_grad) {
        if (transpose_b) {
          // B is (n,k); dB = G^T * A
          gemm(true, false, n, k, m, 1.0, Gp, a->value.data() + g * sa, 1.0,
               b->grad.data() + g * sb);
        } else {
          gemm(true, false, k, n, m, 1.0, a->value.data() + g * sa, Gp, 1.0,
               b->grad.data() + g * sb);
        }
      }
    }
  });
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
  check_suffix_broadcast(a->value, b->value, "add");
  const std::size_t nb = b->value.size();
  Tensor out = a->value;
  double* o = out.data();
  const double* bv = b->value.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] += bv[i % nb];
  return make_node(std::move(out), {a, b}, [a, b, nb](Node& self) {
    const double* g = self.grad.data();
    const std::size_t n = self.grad.size();
    if (a->requires_grad) {
      double* ga = a->grad.data();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    }
    if (b->requires_grad) {
      double* gb = b->grad.data();
      for (std::size_t i = 0; i < n; ++i) gb[i % nb] += g[i];
    }
  });
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
  check_suffix_broadcast(a->value, b->value, "mul");
  const std::size_t nb = b->value.size();
  Tensor out = a->value;
  double* o = out.data();
  const double* bv = b->value.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] *= bv[i % nb];
  return make_node(std::move(out), {a, b}, [a, b, nb](Node& self) {
    const double* g = self.grad.data();
    const std::size_t n = self.grad.size();
    if (a->requires_grad) {
      double* ga = a->grad.data();
      const double* bv = b->value.data();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i % nb];
    }
    if (b->requires_grad) {
      double* gb = b->grad.data();
      const double* av = a->value.data();
      for (std::size_t i = 0; i < n; ++i) gb[i % nb] += g[i] * av[i];
    }
  });
}

NodePtr scale(const NodePtr& a, double s) {
  Tensor out = a->value;
  for (double& v : out.values()) v *= s;
  return make_node(std::move(out), {a}, [a, s](Node& self) {
    double* ga = a->grad.data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += s * g[i];
  });
}

NodePtr sub(const NodePtr& a, const NodePtr& b) { return add(a, scale(b, -1.0)); }

NodePtr prelu(const NodePtr& x, const NodePtr& alpha) {
  if (alpha->value.size() != 1) {
    throw DimensionError("prelu: alpha must be a scalar node");
  }
  const double a = alpha->value[0];
  Tensor out = x->value;
  for (double& v : out.values()) {
    if (v < 0.0) v *= a;
  }
  return make_node(std::move(out), {x, alpha}, [x, alpha, a](Node& self) {
    const double* g = self.grad.data();
    const double* xv = x->value.data();
    double* gx = x->grad.data();
    double ga = 0.0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (xv[i] >= 0.0) {
        gx[i] += g[i];
      } else {
        gx[i] += a * g[i];
        ga += g[i] * xv[i];
      }
    }
    alpha->grad[0] += ga;
  });
}

NodePtr sigmoid(const NodePtr& x) {
  Tensor out = x->value;
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  auto n = make_node(std::move(out), {x}, nullptr);
  if (n->requires_grad) {
    n->backprop = [x, np = n.get()](Node& self) {
      const double* y = np->value.data();
      const double* g = self.grad.data();
      double* gx = x->grad.data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        gx[i] += g[i] * y[i] * (1.0 - y[i]);
      }
    };
  }
  return n;
}

NodePtr softmax_lastdim(const NodePtr& x) {
  const std::size_t L = x->value.shape().back();
  const std::size_t rows = x->value.size() / L;
  Tensor out = x->value;
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data() + r * L;
    double mx = row[0];
    for (std::size_t i = 1; i < L; ++i) mx = std::max(mx, row[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < L; ++i) {
      row[i] = std::exp(row[i] - mx);
      s += row[i];
    }
    for (std::size_t i = 0; i < L; ++i) row[i] /= s;
  }
  auto n = make_node(std::move(out), {x}, nullptr);
  if (n->requires_grad) {
    n->backprop = [x, L, rows, np = n.get()](Node& self) {
      const double* y = np->value.data();
      const double* g = self.grad.data();
      double* gx = x->grad.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* yr = y + r * L;
        const double* gr = g + r * L;
        double dot = 0.0;
        for (std::size_t i = 0; i < L; ++i) dot += yr[i] * gr[i];
        for (std::size_t i = 0; i < L; ++i) gx[r * L + i] += yr[i] * (gr[i] - dot);
      }
    };
  }
  return n;
}

NodePtr layernorm_lastdim(const NodePtr& x, double eps) {
  const std::size_t L = x->value.shape().back();
  const std::size_t rows = x->value.size() / L;
  Tensor out = x->value;
  std::vector<double> inv_sd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data() + r * L;
    double mean = 0.0;
    for (std::size_t i = 0; i < L; ++i) mean += row[i];
    mean /= static_cast<double>(L);
    double var = 0.0;
    for (std::size_t i = 0; i < L; ++i) {
      row[i] -= mean;
      var += row[i] * row[i];
    }
    var /= static_cast<double>(L);
    inv_sd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < L; ++i) row[i] *= inv_sd[r];
  }
  auto n = make_node(std::move(out), {x}, nullptr);
  if (n->requires_grad) {
    n->backprop = [x, L, rows, inv_sd = std::move(inv_sd), np = n.get()](Node& self) {
      const double* y = np->value.data();
      const double* g = self.grad.data();
      double* gx = x->grad.data();
      const double invL = 1.0 / static_cast<double>(L);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* yr = y + r * L;
        const double* gr = g + r * L;
        double gmean = 0.0, gy = 0.0;
        for (std::size_t i = 0; i < L; ++i) {
          gmean += gr[i];
          gy += gr[i] * yr[i];
        }
        gmean *= invL;
        gy *= invL;
        for (std::size_t i = 0; i < L; ++i) {
          gx[r * L + i] += inv_sd[r] * (gr[i] - gmean - yr[i] * gy);
        }
      }
    };
  }
  return n;
}

NodePtr batchnorm_train(const NodePtr& x, double eps) {
  if (x->value.rank() != 2) throw DimensionError("batchnorm: expects 2-D input");
  const std::size_t B = x->value.dim(0);
  const std::size_t C = x->value.dim(1);
  Tensor out = x->value;
  std::vector<double> inv_sd(C);
  for (std::size_t c = 0; c < C; ++c) {
    double mean = 0.0;
    for (std::size_t b = 0; b < B; ++b) mean += out[b * C + c];
    mean /= static_cast<double>(B);
    double var = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      double& v = out.values()[b * C + c];
      v -= mean;
      var += v * v;
    }
    var /= static_cast<double>(B);
    inv_sd[c] = 1.0 / std::sqrt(var + eps);
    for (std::size_t b = 0; b < B; ++b) out.values()[b * C + c] *= inv_sd[c];
  }
  auto n = make_node(std::move(out), {x}, nullptr);
  if (n->requires_grad) {
    n->backprop = [x, B, C, inv_sd = std::move(inv_sd), np = n.get()](Node& self) {
      const double* y = np->value.data();
      const double* g = self.grad.data();
      double* gx = x->grad.data();
      const double invB = 1.0 / static_cast<double>(B);
      for (std::size_t c = 0; c < C; ++c) {
        double gmean = 0.0, gy = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
          gmean += g[b * C + c];
          gy += g[b * C + c] * y[b * C + c];
        }
        gmean *= invB;
        gy *= invB;
        for (std::size_t b = 0; b < B; ++b) {
          gx[b * C + c] += inv_sd[c] * (g[b * C + c] - gmean - y[b * C + c] * gy);
        }
      }
    };
  }
  return n;
}

NodePtr batchnorm_eval(const NodePtr& x, const Tensor& mean, const Tensor& var,
                       double eps) {
  if (x->value.rank() != 2 || mean.size() != x->value.dim(1) ||
      var.size() != x->value.dim(1)) {
    throw DimensionError("batchnorm_eval: statistics do not match input width");
  }
  const std::size_t B = x->value.dim(0);
  const std::size_t C = x->value.dim(1);
  Tensor out = x->value;
  std::vector<double> inv_sd(C);
  for (std::size_t c = 0; c < C; ++c) inv_sd[c] = 1.0 / std::sqrt(var[c] + eps);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      out.values()[b * C + c] = (out[b * C + c] - mean[c]) * inv_sd[c];
    }
  }
  return make_node(std::move(out), {x}, [x, B, C, inv_sd](Node& self) {
    const double* g = self.grad.data();
    double* gx = x->grad.data();
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t c = 0; c < C; ++c) gx[b * C + c] += g[b * C + c] * inv_sd[c];
    }
  });
}

NodePtr sum(const NodePtr& x) {
  double s = 0.0;
  for (double v : x->value.values()) s += v;
  return make_node(Tensor::scalar(s), {x}, [x](Node& self) {
    const double g = self.grad[0];
    for (double& gv : x->grad.values()) gv += g;
  });
}

NodePtr mean_axis1(const NodePtr& x) {
  if (x->value.rank() != 3) throw DimensionError("mean_axis1: expects 3-D input");
  const std::size_t B = x->value.dim(0), D = x->value.dim(1), E = x->value.dim(2);
  Tensor out({B, E});
  const double invD = 1.0 / static_cast<double>(D);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t d = 0; d < D; ++d) {
      const double* row = x->value.data() + (b * D + d) * E;
      double* o = out.data() + b * E;
      for (std::size_t e = 0; e < E; ++e) o[e] += row[e];
    }
    for (std::size_t e = 0; e < E; ++e) out.values()[b * E + e] *= invD;
  }
  return make_node(std::move(out), {x}, [x, B, D, E, invD](Node& self) {
    for (std::size_t b = 0; b < B; ++b) {
      const double* g = self.grad.data() + b * E;
      for (std::size_t d = 0; d < D; ++d) {
        double* gx = x->grad.data() + (b * D + d) * E;
        for (std::size_t e = 0; e < E; ++e) gx[e] += g[e] * invD;
      }
    }
  });
}

NodePtr expand_axis1(const NodePtr& x, std::size_t d1) {
  if (x->value.rank() != 2) throw DimensionError("expand_axis1: expects 2-D input");
  const std::size_t B = x->value.dim(0), E = x->value.dim(1);
  Tensor out({B, d1, E});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t d = 0; d < d1; ++d) {
      std::copy_n(x->value.data() + b * E, E, out.data() + (b * d1 + d) * E);
    }
  }
  return make_node(std::move(out), {x}, [x, B, d1, E](Node& self) {
    for (std::size_t b = 0; b < B; ++b) {
      double* gx = x->grad.data() + b * E;
      for (std::size_t d = 0; d < d1; ++d) {
        const double* g = self.grad.data() + (b * d1 + d) * E;
        for (std::size_t e = 0; e < E; ++e) gx[e] += g[e];
      }
    }
  });
}

NodePtr concat_lastdim(const NodePtr& a, const NodePtr& b) {
  if (a->value.rank() != 2 || b->value.rank() != 2 ||
      a->value.dim(0) != b->value.dim(0)) {
    throw DimensionError("concat_lastdim: expects 2-D inputs with equal rows");
  }
  const std::size_t B = a->value.dim(0), p = a->value.dim(1), q = b->value.dim(1);
  Tensor out({B, p + q});
  for (std::size_t r = 0; r < B; ++r) {
    std::copy_n(a->value.data() + r * p, p, out.data() + r * (p + q));
    std::copy_n(b->value.data() + r * q, q, out.data() + r * (p + q) + p);
  }
  return make_node(std::move(out), {a, b}, [a, b, B, p, q](Node& self) {
    for (std::size_t r = 0; r < B; ++r) {
      const double* g = self.grad.data() + r * (p + q);
      if (a->requires_grad) {
        double* ga = a->grad.data() + r * p;
        for (std::size_t i = 0; i < p; ++i) ga[i] += g[i];
      }
      if (b->requires_grad) {
        double* gb = b->grad.data() + r * q;
        for (std::size_t i = 0; i < q; ++i) gb[i] += g[p + i];
      }
    }
  });
}

NodePtr reshape(const NodePtr& x, std::vector<std::size_t> shape) {
  if (shape_product(shape) != x->value.size()) {
    throw DimensionError("reshape: size mismatch for " + x->value.shape_str());
  }
  Tensor out(std::move(shape), x->value.values());
  return make_node(std::move(out), {x}, [x](Node& self) {
    double* gx = x->grad.data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += g[i];
  });
}

NodePtr split_heads(const NodePtr& x, std::size_t heads) {
  if (x->value.rank() != 3 || x->value.dim(2) % heads != 0) {
    throw DimensionError("split_heads: model dim not divisible by head count");
  }
  const std::size_t B = x->value.dim(0), S = x->value.dim(1), dm = x->value.dim(2);
  const std::size_t dh = dm / heads;
  Tensor out({B * heads, S, dh});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t h = 0; h < heads; ++h) {
        std::copy_n(x->value.data() + (b * S + s) * dm + h * dh, dh,
                    out.data() + ((b * heads + h) * S + s) * dh);
      }
    }
  }
  return make_node(std::move(out), {x}, [x, B, S, dm, dh, heads](Node& self) {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t h = 0; h < heads; ++h) {
          const double* g = self.grad.data() + ((b * heads + h) * S + s) * dh;
          double* gx = x->grad.data() + (b * S + s) * dm + h * dh;
          for (std::size_t i = 0; i < dh; ++i) gx[i] += g[i];
        }
      }
    }
  });
}

NodePtr merge_heads(const NodePtr& x, std::size_t heads) {
  if (x->value.rank() != 3 || x->value.dim(0) % heads != 0) {
    throw DimensionError("merge_heads: batch dim not divisible by head count");
  }
  const std::size_t B = x->value.dim(0) / heads, S = x->value.dim(1),
                    dh = x->value.dim(2);
  const std::size_t dm = dh * heads;
  Tensor out({B, S, dm});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t h = 0; h < heads; ++h) {
        std::copy_n(x->value.data() + ((b * heads + h) * S + s) * dh, dh,
                    out.data() + (b * S + s) * dm + h * dh);
      }
    }
  }
  return make_node(std::move(out), {x}, [x, B, S, dm, dh, heads](Node& self) {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t h = 0; h < heads; ++h) {
          const double* g = self.grad.data() + (b * S + s) * dm + h * dh;
          double* gx = x->grad.data() + ((b * heads + h) * S + s) * dh;
          for (std::size_t i = 0; i < dh; ++i) gx[i] += g[i];
        }
      }
    }
  });
}

NodePtr outer_feature(const NodePtr& y, const NodePtr& w) {
  if (y->value.rank() != 2 || w->value.rank() != 2 ||
      y->value.dim(1) != w->value.dim(0)) {
    throw DimensionError("outer_feature: incompatible shapes " +
                         y->value.shape_str() + " x " + w->value.shape_str());
  }
  const std::size_t B = y->value.dim(0), D = y->value.dim(1), E = w->value.dim(1);
  Tensor out({B, D, E});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t d = 0; d < D; ++d) {
      const double yv = y->value[b * D + d];
      const double* wr = w->value.data() + d * E;
      double* o = out.data() + (b * D + d) * E;
      for (std::size_t e = 0; e < E; ++e) o[e] = yv * wr[e];
    }
  }
  return make_node(std::move(out), {y, w}, [y, w, B, D, E](Node& self) {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t d = 0; d < D; ++d) {
        const double* g = self.grad.data() + (b * D + d) * E;
        if (y->requires_grad) {
          const double* wr = w->value.data() + d * E;
          double dot = 0.0;
          for (std::size_t e = 0; e < E; ++e) dot += g[e] * wr[e];
          y->grad.values()[b * D + d] += dot;
        }
        if (w->requires_grad) {
          const double yv = y->value[b * D + d];
          double* gw = w->grad.data() + d * E;
          for (std::size_t e = 0; e < E; ++e) gw[e] += yv * g[e];
        }
      }
    }
  });
}

}  // namespace normdiff::ad
