#include "matxfer/learning/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "matxfer/common/errors.hpp"

namespace matxfer::ad {
namespace {

Var make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  const bool rg = std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v->requires_grad; });
  node->requires_grad = rg;
  if (rg) {
    node->inputs = std::move(inputs);
    node->backward_fn = std::move(fn);
  }
  return node;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require(a->shape() == b->shape(), std::string(op) + ": shape mismatch " + shape_string(a->shape()) + " vs " +
                                        shape_string(b->shape()));
}

void require_rank(const Var& a, std::size_t rank, const char* op) {
  require(a->value.rank() == rank, std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                       shape_string(a->shape()));
}

// Elementwise unary op; `deriv(x, y)` is dy/dx at input x with output y.
template <typename F, typename D>
Var unary(const Var& a, F f, D deriv) {
  Tensor out(a->shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a->value[i]);
  return make(std::move(out), {a}, [deriv](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(in.value[i], self.value[i]);
  });
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (!has_grad) {
    grad = Tensor(value.shape(), 0.0);
    has_grad = true;
  }
  return grad;
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return node;
}

Var leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

void backward(const Var& loss) {
  require(loss->value.size() == 1, "backward() needs a single-element loss, got " + shape_string(loss->shape()));
  if (!loss->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->has_grad && node->backward_fn) node->backward_fn(*node);
  }
}

Tensor grad_of(const Var& v) { return v->has_grad ? v->grad : Tensor(v->shape(), 0.0); }

// -- elementwise -------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a->shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return make(std::move(out), {a, b}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      Tensor& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a->shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  return make(std::move(out), {a, b}, [](Node& self) {
    const double sign[2] = {1.0, -1.0};
    for (int k = 0; k < 2; ++k) {
      Node& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      Tensor& g = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[k] * self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a->shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return make(std::move(out), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) {
      Tensor& g = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      Tensor& g = y.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
    }
  });
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a, b, "div");
  Tensor out(a->shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] / b->value[i];
  return make(std::move(out), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) {
      Tensor& g = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / y.value[i];
    }
    if (y.requires_grad) {
      Tensor& g = y.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i] * self.value[i] / y.value[i];
    }
  });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var mul_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var log_clamped(const Var& a, double eps) {
  return unary(
      a, [eps](double x) { return std::log(std::max(x, eps)); },
      [eps](double x, double) { return x > eps ? 1.0 / x : 0.0; });
}

Var sqrt(const Var& a) {
  return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(const Var& a) {
  return unary(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, [](double, double y) { return y * (1.0 - y); });
}

Var sin(const Var& a) {
  return unary(a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var cos(const Var& a) {
  return unary(a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var reciprocal(const Var& a) {
  return unary(a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

// -- reductions ----------------------------------------------------------------

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a->value.values()) s += v;
  return make(Tensor::scalar(s), {a}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    const double up = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up;
  });
}

Var mean(const Var& a) {
  require(a->value.size() > 0, "mean of empty tensor");
  return mul_scalar(sum(a), 1.0 / static_cast<double>(a->value.size()));
}

Var add_all(const std::vector<Var>& terms) {
  require(!terms.empty(), "add_all needs at least one term");
  double s = 0.0;
  for (const auto& t : terms) {
    require(t->value.size() == 1, "add_all expects scalars");
    s += t->value[0];
  }
  return make(Tensor::scalar(s), terms, [](Node& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad) in->grad_buffer()[0] += self.grad[0];
  });
}

// -- shape ---------------------------------------------------------------------

Var reshape(const Var& a, Shape shape) {
  Tensor out = a->value.reshaped(std::move(shape));
  return make(std::move(out), {a}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var transpose(const Var& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a->value.dim(0), n = a->value.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a->value.at(i, j);
  return make(std::move(out), {a}, [m, n](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g.at(i, j) += self.grad.at(j, i);
  });
}

Var select(const Var& a, std::size_t flat_index) {
  require(flat_index < a->value.size(), "select: index out of range");
  return make(Tensor::scalar(a->value[flat_index]), {a},
              [flat_index](Node& self) { self.inputs[0]->grad_buffer()[flat_index] += self.grad[0]; });
}

Var stack(const std::vector<Var>& scalars, Shape shape) {
  require(shape_size(shape) == scalars.size(), "stack: element count does not match shape");
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    require(scalars[i]->value.size() == 1, "stack expects scalars");
    out[i] = scalars[i]->value[0];
  }
  return make(std::move(out), scalars, [](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i)
      if (self.inputs[i]->requires_grad) self.inputs[i]->grad_buffer()[0] += self.grad[i];
  });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, "slice_rows");
  require(begin <= end && end <= a->value.dim(0), "slice_rows: bad range");
  const std::size_t cols = a->value.dim(1);
  Tensor out({end - begin, cols});
  std::copy(a->value.vec().begin() + static_cast<std::ptrdiff_t>(begin * cols),
            a->value.vec().begin() + static_cast<std::ptrdiff_t>(end * cols), out.values().begin());
  return make(std::move(out), {a}, [begin, cols](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * cols + i] += self.grad[i];
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: no parts");
  const std::size_t cols = parts[0]->value.dim(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    require(p->value.dim(1) == cols, "concat_rows: column mismatch");
    rows += p->value.dim(0);
  }
  Tensor out({rows, cols});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->value.vec().begin(), p->value.vec().end(), out.values().begin() + static_cast<std::ptrdiff_t>(off));
    off += p->value.size();
  }
  return make(std::move(out), parts, [](Node& self) {
    std::size_t o = 0;
    for (auto& in : self.inputs) {
      if (in->requires_grad) {
        Tensor& g = in->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[o + i];
      }
      o += in->value.size();
    }
  });
}

// -- linear algebra ------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
  require(b->value.dim(0) == k, "matmul: inner dimensions differ " + shape_string(a->shape()) + " x " +
                                    shape_string(b->shape()));
  Tensor out({m, n});
  const double* A = a->value.vec().data();
  const double* B = b->value.vec().data();
  double* C = out.values().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + p * n;
      double* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  return make(std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    const double* G = self.grad.vec().data();
    if (x.requires_grad) {
      double* gA = x.grad_buffer().values().data();
      // gA += G B^T as row updates over a transposed copy of B (vectorizable).
      const double* B = y.value.vec().data();
      std::vector<double> bt(k * n);
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = B[p * n + j];
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = G[i * n + j];
          if (g == 0.0) continue;
          const double* brow = bt.data() + j * k;
          double* grow = gA + i * k;
          for (std::size_t p = 0; p < k; ++p) grow[p] += g * brow[p];
        }
    }
    if (y.requires_grad) {
      double* gB = y.grad_buffer().values().data();
      const double* A = x.value.vec().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gB[p * n + j] += av * G[i * n + j];
        }
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const std::size_t n = x->value.dim(0), in = x->value.dim(1), out_dim = weight->value.dim(0);
  require(weight->value.dim(1) == in, "linear: input width " + std::to_string(in) + " does not match weight " +
                                          shape_string(weight->shape()));
  require(bias->value.size() == out_dim, "linear: bias size mismatch");
  Tensor out({n, out_dim});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t o = 0; o < out_dim; ++o) {
      double s = bias->value[o];
      for (std::size_t i = 0; i < in; ++i) s += x->value.at(r, i) * weight->value.at(o, i);
      out.at(r, o) = s;
    }
  return make(std::move(out), {x, weight, bias}, [n, in, out_dim](Node& self) {
    Node& X = *self.inputs[0];
    Node& W = *self.inputs[1];
    Node& B = *self.inputs[2];
    const Tensor& G = self.grad;
    if (X.requires_grad) {
      Tensor& gx = X.grad_buffer();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double gv = G.at(r, o);
          if (gv == 0.0) continue;
          for (std::size_t i = 0; i < in; ++i) gx.at(r, i) += gv * W.value.at(o, i);
        }
    }
    if (W.requires_grad) {
      Tensor& gw = W.grad_buffer();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double gv = G.at(r, o);
          if (gv == 0.0) continue;
          for (std::size_t i = 0; i < in; ++i) gw.at(o, i) += gv * X.value.at(r, i);
        }
    }
    if (B.requires_grad) {
      Tensor& gb = B.grad_buffer();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < out_dim; ++o) gb[o] += G.at(r, o);
    }
  });
}

// -- images --------------------------------------------------------------------

Var conv2d(const Var& x, const Var& weight, const Var& bias) {
  require_rank(x, 4, "conv2d");
  require_rank(weight, 4, "conv2d");
  const std::size_t N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  const std::size_t O = weight->value.dim(0), K = weight->value.dim(2);
  require(weight->value.dim(1) == C, "conv2d: input has " + std::to_string(C) + " channels, weight expects " +
                                         std::to_string(weight->value.dim(1)));
  require(K % 2 == 1 && weight->value.dim(3) == K, "conv2d: kernel must be square and odd");
  require(bias->value.size() == O, "conv2d: bias size mismatch");
  const long pad = static_cast<long>(K / 2);
  const long h = static_cast<long>(H), w = static_cast<long>(W);

  Tensor out({N, O, H, W});
  const double* X = x->value.vec().data();
  const double* Wt = weight->value.vec().data();
  double* Y = out.values().data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o) {
      double* yplane = Y + (n * O + o) * H * W;
      std::fill(yplane, yplane + H * W, bias->value[o]);
      for (std::size_t c = 0; c < C; ++c) {
        const double* xplane = X + (n * C + c) * H * W;
        for (std::size_t ky = 0; ky < K; ++ky)
          for (std::size_t kx = 0; kx < K; ++kx) {
            const double wv = Wt[((o * C + c) * K + ky) * K + kx];
            const long dy = static_cast<long>(ky) - pad, dx = static_cast<long>(kx) - pad;
            const long y0 = std::max(0L, -dy), y1 = std::min(h, h - dy);
            const long x0 = std::max(0L, -dx), x1 = std::min(w, w - dx);
            for (long yy = y0; yy < y1; ++yy) {
              double* yrow = yplane + yy * w;
              const double* xrow = xplane + (yy + dy) * w + dx;
              for (long xx = x0; xx < x1; ++xx) yrow[xx] += wv * xrow[xx];
            }
          }
      }
    }

  return make(std::move(out), {x, weight, bias}, [N, C, H, W, O, K, pad, h, w](Node& self) {
    Node& Xn = *self.inputs[0];
    Node& Wn = *self.inputs[1];
    Node& Bn = *self.inputs[2];
    const double* G = self.grad.vec().data();
    const double* X = Xn.value.vec().data();
    const double* Wt = Wn.value.vec().data();
    double* gX = Xn.requires_grad ? Xn.grad_buffer().values().data() : nullptr;
    double* gW = Wn.requires_grad ? Wn.grad_buffer().values().data() : nullptr;
    double* gB = Bn.requires_grad ? Bn.grad_buffer().values().data() : nullptr;
    std::vector<double> partial(W);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t o = 0; o < O; ++o) {
        const double* gplane = G + (n * O + o) * H * W;
        if (gB) {
          double s = 0.0;
          for (std::size_t i = 0; i < H * W; ++i) s += gplane[i];
          gB[o] += s;
        }
        for (std::size_t c = 0; c < C; ++c) {
          const double* xplane = X + (n * C + c) * H * W;
          double* gxplane = gX ? gX + (n * C + c) * H * W : nullptr;
          for (std::size_t ky = 0; ky < K; ++ky)
            for (std::size_t kx = 0; kx < K; ++kx) {
              const std::size_t widx = ((o * C + c) * K + ky) * K + kx;
              const double wv = Wt[widx];
              const long dy = static_cast<long>(ky) - pad, dx = static_cast<long>(kx) - pad;
              const long y0 = std::max(0L, -dy), y1 = std::min(h, h - dy);
              const long x0 = std::max(0L, -dx), x1 = std::min(w, w - dx);
              // Column-wise partial sums keep the weight-gradient loop vectorizable.
              std::fill(partial.begin(), partial.end(), 0.0);
              for (long yy = y0; yy < y1; ++yy) {
                const double* grow = gplane + yy * w;
                const double* xrow = xplane + (yy + dy) * w + dx;
                if (gW)
                  for (long xx = x0; xx < x1; ++xx) partial[xx] += grow[xx] * xrow[xx];
                if (gxplane) {
                  double* gxrow = gxplane + (yy + dy) * w + dx;
                  for (long xx = x0; xx < x1; ++xx) gxrow[xx] += wv * grow[xx];
                }
              }
              if (gW) {
                double acc = 0.0;
                for (long xx = x0; xx < x1; ++xx) acc += partial[xx];
                gW[widx] += acc;
              }
            }
        }
      }
  });
}

Var avg_pool2(const Var& x) {
  require_rank(x, 4, "avg_pool2");
  const std::size_t N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  require(H % 2 == 0 && W % 2 == 0, "avg_pool2: spatial size must be even, got " + shape_string(x->shape()));
  const std::size_t h = H / 2, w = W / 2;
  Tensor out({N, C, h, w});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx)
          out.at(n, c, y, xx) = 0.25 * (x->value.at(n, c, 2 * y, 2 * xx) + x->value.at(n, c, 2 * y, 2 * xx + 1) +
                                        x->value.at(n, c, 2 * y + 1, 2 * xx) + x->value.at(n, c, 2 * y + 1, 2 * xx + 1));
  return make(std::move(out), {x}, [N, C, h, w](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t xx = 0; xx < w; ++xx) {
            const double v = 0.25 * self.grad.at(n, c, y, xx);
            g.at(n, c, 2 * y, 2 * xx) += v;
            g.at(n, c, 2 * y, 2 * xx + 1) += v;
            g.at(n, c, 2 * y + 1, 2 * xx) += v;
            g.at(n, c, 2 * y + 1, 2 * xx + 1) += v;
          }
  });
}

Var upsample_nearest(const Var& x, std::size_t factor) {
  require_rank(x, 4, "upsample_nearest");
  require(factor >= 1, "upsample factor must be >= 1");
  const std::size_t N = x->value.dim(0), C = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  const std::size_t H = h * factor, W = w * factor;
  Tensor out({N, C, H, W});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx) out.at(n, c, y, xx) = x->value.at(n, c, y / factor, xx / factor);
  return make(std::move(out), {x}, [N, C, H, W, factor](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t xx = 0; xx < W; ++xx) g.at(n, c, y / factor, xx / factor) += self.grad.at(n, c, y, xx);
  });
}

Var concat_channels(const Var& a, const Var& b) {
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  const std::size_t N = a->value.dim(0), Ca = a->value.dim(1), Cb = b->value.dim(1);
  const std::size_t H = a->value.dim(2), W = a->value.dim(3);
  require(b->value.dim(0) == N && b->value.dim(2) == H && b->value.dim(3) == W,
          "concat_channels: shape mismatch " + shape_string(a->shape()) + " vs " + shape_string(b->shape()));
  const std::size_t plane = H * W;
  Tensor out({N, Ca + Cb, H, W});
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(a->value.vec().begin() + static_cast<std::ptrdiff_t>(n * Ca * plane), Ca * plane,
                out.values().begin() + static_cast<std::ptrdiff_t>(n * (Ca + Cb) * plane));
    std::copy_n(b->value.vec().begin() + static_cast<std::ptrdiff_t>(n * Cb * plane), Cb * plane,
                out.values().begin() + static_cast<std::ptrdiff_t>((n * (Ca + Cb) + Ca) * plane));
  }
  return make(std::move(out), {a, b}, [N, Ca, Cb, plane](Node& self) {
    Node& A = *self.inputs[0];
    Node& B = *self.inputs[1];
    for (std::size_t n = 0; n < N; ++n) {
      if (A.requires_grad) {
        Tensor& g = A.grad_buffer();
        for (std::size_t i = 0; i < Ca * plane; ++i) g[n * Ca * plane + i] += self.grad[n * (Ca + Cb) * plane + i];
      }
      if (B.requires_grad) {
        Tensor& g = B.grad_buffer();
        for (std::size_t i = 0; i < Cb * plane; ++i)
          g[n * Cb * plane + i] += self.grad[(n * (Ca + Cb) + Ca) * plane + i];
      }
    }
  });
}

Var masked_mean_pool(const Var& x, const Tensor& mask) {
  require_rank(x, 4, "masked_mean_pool");
  const std::size_t N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  require(mask.shape() == Shape({N, 1, H, W}), "masked_mean_pool: mask shape " + shape_string(mask.shape()) +
                                                   " does not match " + shape_string(x->shape()));
  std::vector<double> area(N, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t i = 0; i < H * W; ++i) area[n] += mask[n * H * W + i];
    require(area[n] > 0.0, "masked_mean_pool: empty mask");
  }
  Tensor out({N, C});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < H * W; ++i) {
        const double m = mask[n * H * W + i];
        if (m != 0.0) s += m * x->value[(n * C + c) * H * W + i];
      }
      out.at(n, c) = s / area[n];
    }
  return make(std::move(out), {x}, [N, C, H, W, mask, area](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const double up = self.grad.at(n, c) / area[n];
        for (std::size_t i = 0; i < H * W; ++i) {
          const double m = mask[n * H * W + i];
          if (m != 0.0) g[(n * C + c) * H * W + i] += up * m;
        }
      }
  });
}

Var to_positions(const Var& x) {
  require_rank(x, 4, "to_positions");
  require(x->value.dim(0) == 1, "to_positions expects a single image");
  const std::size_t C = x->value.dim(1), P = x->value.dim(2) * x->value.dim(3);
  Tensor out({P, C});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < P; ++p) out.at(p, c) = x->value[c * P + p];
  return make(std::move(out), {x}, [C, P](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) g[c * P + p] += self.grad.at(p, c);
  });
}

Var from_positions(const Var& m, std::size_t height, std::size_t width) {
  require_rank(m, 2, "from_positions");
  const std::size_t P = m->value.dim(0), C = m->value.dim(1);
  require(P == height * width, "from_positions: position count does not match spatial size");
  Tensor out({1, C, height, width});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < P; ++p) out[c * P + p] = m->value.at(p, c);
  return make(std::move(out), {m}, [C, P](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) g.at(p, c) += self.grad[c * P + p];
  });
}

// -- row-wise --------------------------------------------------------------------

Var normalize_rows(const Var& m, double eps) {
  require_rank(m, 2, "normalize_rows");
  const std::size_t R = m->value.dim(0), C = m->value.dim(1);
  Tensor out(m->shape());
  std::vector<double> norms(R);
  for (std::size_t r = 0; r < R; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += m->value.at(r, c) * m->value.at(r, c);
    norms[r] = std::max(std::sqrt(s), eps);
    for (std::size_t c = 0; c < C; ++c) out.at(r, c) = m->value.at(r, c) / norms[r];
  }
  return make(std::move(out), {m}, [R, C, norms](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < R; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += self.value.at(r, c) * self.grad.at(r, c);
      for (std::size_t c = 0; c < C; ++c) g.at(r, c) += (self.grad.at(r, c) - self.value.at(r, c) * dot) / norms[r];
    }
  });
}

Var normalize_rows_l1(const Var& m) {
  require_rank(m, 2, "normalize_rows_l1");
  const std::size_t R = m->value.dim(0), C = m->value.dim(1);
  Tensor out(m->shape());
  std::vector<double> sums(R);
  for (std::size_t r = 0; r < R; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += m->value.at(r, c);
    require(s > 0.0, "normalize_rows_l1: row sum must be positive");
    sums[r] = s;
    for (std::size_t c = 0; c < C; ++c) out.at(r, c) = m->value.at(r, c) / s;
  }
  return make(std::move(out), {m}, [R, C, sums](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < R; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += self.value.at(r, c) * self.grad.at(r, c);
      for (std::size_t c = 0; c < C; ++c) g.at(r, c) += (self.grad.at(r, c) - dot) / sums[r];
    }
  });
}

Var softmax_rows(const Var& m) {
  require_rank(m, 2, "softmax_rows");
  const std::size_t R = m->value.dim(0), C = m->value.dim(1);
  Tensor out(m->shape());
  for (std::size_t r = 0; r < R; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, m->value.at(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += out.at(r, c) = std::exp(m->value.at(r, c) - mx);
    for (std::size_t c = 0; c < C; ++c) out.at(r, c) /= s;
  }
  return make(std::move(out), {m}, [R, C](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < R; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += self.value.at(r, c) * self.grad.at(r, c);
      for (std::size_t c = 0; c < C; ++c) g.at(r, c) += self.value.at(r, c) * (self.grad.at(r, c) - dot);
    }
  });
}

Var log_softmax_rows(const Var& m) {
  require_rank(m, 2, "log_softmax_rows");
  const std::size_t R = m->value.dim(0), C = m->value.dim(1);
  Tensor out(m->shape());
  for (std::size_t r = 0; r < R; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, m->value.at(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(m->value.at(r, c) - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < C; ++c) out.at(r, c) = m->value.at(r, c) - lse;
  }
  return make(std::move(out), {m}, [R, C](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < R; ++r) {
      double gs = 0.0;
      for (std::size_t c = 0; c < C; ++c) gs += self.grad.at(r, c);
      for (std::size_t c = 0; c < C; ++c) g.at(r, c) += self.grad.at(r, c) - std::exp(self.value.at(r, c)) * gs;
    }
  });
}

Var row_max(const Var& m) {
  require_rank(m, 2, "row_max");
  const std::size_t R = m->value.dim(0), C = m->value.dim(1);
  require(C > 0, "row_max: empty rows");
  Tensor out({R});
  std::vector<std::size_t> arg(R, 0);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 1; c < C; ++c)
      if (m->value.at(r, c) > m->value.at(r, arg[r])) arg[r] = c;
    out[r] = m->value.at(r, arg[r]);
  }
  return make(std::move(out), {m}, [arg](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < arg.size(); ++r) g.at(r, arg[r]) += self.grad[r];
  });
}

Var pick(const Var& m, const std::vector<std::size_t>& index) {
  require_rank(m, 2, "pick");
  const std::size_t R = m->value.dim(0), C = m->value.dim(1);
  require(index.size() == R, "pick: one index per row required");
  Tensor out({R});
  for (std::size_t r = 0; r < R; ++r) {
    require(index[r] < C, "pick: index out of range");
    out[r] = m->value.at(r, index[r]);
  }
  return make(std::move(out), {m}, [index](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < index.size(); ++r) g.at(r, index[r]) += self.grad[r];
  });
}

Var pair_sq_dists(const Var& features, const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  require_rank(features, 2, "pair_sq_dists");
  const std::size_t N = features->value.dim(0), D = features->value.dim(1);
  Tensor out({pairs.size()});
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    require(i < N && j < N, "pair_sq_dists: row index out of range");
    double s = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
      const double diff = features->value.at(i, d) - features->value.at(j, d);
      s += diff * diff;
    }
    out[p] = s;
  }
  return make(std::move(out), {features}, [pairs, D](Node& self) {
    Node& F = *self.inputs[0];
    Tensor& g = F.grad_buffer();
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto [i, j] = pairs[p];
      const double up = 2.0 * self.grad[p];
      for (std::size_t d = 0; d < D; ++d) {
        const double diff = F.value.at(i, d) - F.value.at(j, d);
        g.at(i, d) += up * diff;
        g.at(j, d) -= up * diff;
      }
    }
  });
}

}  // namespace matxfer::ad
