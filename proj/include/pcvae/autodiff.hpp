#pragma once

// Tape-based reverse-mode differentiation over Tensor values, covering the
// primitives the decoders and the training loss need and nothing more.

#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "pcvae/numerics.hpp"

namespace pcvae::ad {

struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
  bool valid() const { return id != std::numeric_limits<std::size_t>::max(); }
};

/// Records operations in creation order, which is a topological order; the
/// backward sweep walks it in reverse and visits each node once.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  /// Accumulated gradient; zeros if nothing flowed into `v`.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(out)/d(out) = 1 for a single-element output and propagates.
  void backward(Var out);

  // For op implementations.
  Var record(Tensor value, std::vector<Var> parents, BackwardFn fn);
  void accumulate(Var v, const Tensor& g);
  /// Mutable gradient buffer of `v`, allocated as zeros on first use.
  Tensor& grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

struct ConvGeometry {
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t output_padding = 0;
};

/// (in - 1) * stride + kernel - 2 * padding + output_padding; throws
/// ConfigError on non-positive results or output_padding >= stride.
std::size_t conv_transpose_extent(std::size_t in, const ConvGeometry& geom);

Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double factor);
Var square(Graph& g, Var a);
Var relu(Graph& g, Var a);
/// Sum of all elements into a shape-{1} tensor.
Var reduce_sum(Graph& g, Var a);
Var reshape(Graph& g, Var a, Shape shape);

// Rank-2 primitives.
Var matmul(Graph& g, Var a, Var b);
Var transpose(Graph& g, Var a);
/// x [batch, in] -> x W^T + b, with W [out, in] and b [out].
Var linear(Graph& g, Var x, Var weight, Var bias);
/// Horizontal concatenation of matrices with equal row counts.
Var concat_cols(Graph& g, const std::vector<Var>& parts);
/// Subtracts each column's mean.
Var center_cols(Graph& g, Var a);
Var add_diag(Graph& g, Var a, double value);
Var principal_submatrix(Graph& g, Var a, const std::vector<std::size_t>& indices);
/// ln det of a symmetric positive-definite matrix via Cholesky.
Var logdet_spd(Graph& g, Var a);

/// x [batch, in_ch, h, w], weight [in_ch, out_ch, k, k], bias [out_ch].
Var conv_transpose2d(Graph& g, Var x, Var weight, Var bias, const ConvGeometry& geom);

// Dense helpers shared with the non-differentiable code paths.
namespace linalg {
/// Lower Cholesky factor; NumericError if not positive definite.
Tensor cholesky(const Tensor& a);
double logdet_spd(const Tensor& a);
Tensor spd_inverse(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);
}  // namespace linalg

using ScalarFunction = std::function<Var(Graph&, Var)>;

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
double grad_check(const ScalarFunction& f, const Tensor& point, double step);

}  // namespace pcvae::ad
