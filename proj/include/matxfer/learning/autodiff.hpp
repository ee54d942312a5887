#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "matxfer/learning/tensor.hpp"

namespace matxfer::ad {

struct Node;
using Var = std::shared_ptr<Node>;

/// One value in a reverse-mode graph. Graphs are built eagerly by the op
/// functions below and released when the last Var goes out of scope.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool has_grad = false;
  std::vector<Var> inputs;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer();
  const Shape& shape() const { return value.shape(); }
};

Var constant(Tensor value);
Var leaf(Tensor value, bool requires_grad = true);

/// Seeds d(loss)/d(loss) = 1 and propagates into every reachable node that
/// requires a gradient. `loss` must hold a single element.
void backward(const Var& loss);

/// Gradient of a leaf after backward(); zeros when nothing reached it.
Tensor grad_of(const Var& v);

inline double value_of(const Var& v) { return v->value.item(); }

// -- elementwise (operands must have identical shapes) --------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var neg(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
/// log(max(a, eps)); gradient is zero where the clamp is active.
Var log_clamped(const Var& a, double eps);
Var sqrt(const Var& a);
Var square(const Var& a);
Var abs(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var reciprocal(const Var& a);

// -- reductions ------------------------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
Var add_all(const std::vector<Var>& terms);  // all scalars

// -- shape -----------------------------------------------------------------
Var reshape(const Var& a, Shape shape);
Var transpose(const Var& a);  // rank 2
Var select(const Var& a, std::size_t flat_index);
Var stack(const std::vector<Var>& scalars, Shape shape);
/// Rows [begin, end) of a rank-2 tensor.
Var slice_rows(const Var& a, std::size_t begin, std::size_t end);
Var concat_rows(const std::vector<Var>& parts);

// -- linear algebra --------------------------------------------------------
Var matmul(const Var& a, const Var& b);  // [M,K] x [K,N]
/// x[N,in] * W[out,in]^T + b[out]
Var linear(const Var& x, const Var& weight, const Var& bias);

// -- images: [N, C, H, W] ----------------------------------------------------
/// Stride-1 convolution with zero padding k/2 (k odd) so H, W are preserved.
Var conv2d(const Var& x, const Var& weight, const Var& bias);
Var avg_pool2(const Var& x);
Var upsample_nearest(const Var& x, std::size_t factor);
Var concat_channels(const Var& a, const Var& b);
/// Per-image channel means over pixels where mask (shape [N,1,H,W], 0/1) is set.
Var masked_mean_pool(const Var& x, const Tensor& mask);
/// [1,C,H,W] -> [H*W, C]
Var to_positions(const Var& x);
/// [H*W, C] -> [1,C,H,W]
Var from_positions(const Var& m, std::size_t height, std::size_t width);

// -- row-wise ops on rank 2 --------------------------------------------------
Var normalize_rows(const Var& m, double eps = 1e-12);
Var normalize_rows_l1(const Var& m);
Var softmax_rows(const Var& m);
Var log_softmax_rows(const Var& m);
Var row_max(const Var& m);
/// out[i] = m[i][index[i]]
Var pick(const Var& m, const std::vector<std::size_t>& index);
/// out[p] = ||F[i_p] - F[j_p]||^2 for the given row pairs.
Var pair_sq_dists(const Var& features, const std::vector<std::pair<std::size_t, std::size_t>>& pairs);

}  // namespace matxfer::ad
