#include "pcvae/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pcvae/kernels.hpp"

namespace pcvae::ad {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(a.shape()));
  }
}

// Gradient contribution only for parents that need one.
void flow(Graph& g, Var v, const Tensor& contribution) {
  if (g.requires_grad(v)) g.accumulate(v, contribution);
}

Tensor gemm_tensor(const kernels::GemmArgs& args, const Tensor& a, const Tensor& b) {
  Tensor c({args.m, args.n});
  kernels::gemm(args, a.data(), b.data(), c.data());
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Graph

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, false, nullptr});
  return Var{nodes_.size() - 1};
}

Var Graph::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, true, nullptr});
  return Var{nodes_.size() - 1};
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.grad.empty() ? Tensor::zeros_like(n.value) : n.grad;
}

Var Graph::record(Tensor value, std::vector<Var> parents, BackwardFn fn) {
  bool needs = false;
  for (Var p : parents) needs = needs || nodes_.at(p.id).requires_grad;
  nodes_.push_back(Node{std::move(value), Tensor{}, needs, needs ? std::move(fn) : nullptr});
  return Var{nodes_.size() - 1};
}

Tensor& Graph::grad_buffer(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
  return n.grad;
}

void Graph::accumulate(Var v, const Tensor& g) {
  Node& n = nodes_.at(v.id);
  if (g.size() != n.value.size()) {
    throw DimensionError("gradient of size " + std::to_string(g.size()) + " for value " + shape_str(n.value.shape()));
  }
  if (n.grad.empty()) {
    n.grad = g.reshaped(n.value.shape());
    return;
  }
  auto dst = n.grad.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Graph::backward(Var out) {
  Node& root = nodes_.at(out.id);
  if (root.value.size() != 1) throw DimensionError("backward needs a single-element output");
  for (auto& n : nodes_) n.grad = Tensor{};
  root.grad = Tensor(root.value.shape(), 1.0);
  for (std::size_t i = out.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
  }
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_same_shape(av, bv, "add");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, const Tensor& og) {
    flow(gr, a, og);
    flow(gr, b, og);
  });
}

Var sub(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_same_shape(av, bv, "sub");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, const Tensor& og) {
    flow(gr, a, og);
    if (gr.requires_grad(b)) {
      Tensor neg = og;
      for (auto& v : neg.data()) v = -v;
      gr.accumulate(b, neg);
    }
  });
}

Var mul(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_same_shape(av, bv, "mul");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, const Tensor& og) {
    const Tensor& av2 = gr.value(a);
    const Tensor& bv2 = gr.value(b);
    if (gr.requires_grad(a)) {
      Tensor da = og;
      for (std::size_t i = 0; i < da.size(); ++i) da[i] *= bv2[i];
      gr.accumulate(a, da);
    }
    if (gr.requires_grad(b)) {
      Tensor db = og;
      for (std::size_t i = 0; i < db.size(); ++i) db[i] *= av2[i];
      gr.accumulate(b, db);
    }
  });
}

Var scale(Graph& g, Var a, double factor) {
  Tensor out = g.value(a);
  for (auto& v : out.data()) v *= factor;
  return g.record(std::move(out), {a}, [a, factor](Graph& gr, const Tensor& og) {
    Tensor da = og;
    for (auto& v : da.data()) v *= factor;
    gr.accumulate(a, da);
  });
}

Var square(Graph& g, Var a) {
  Tensor out = g.value(a);
  for (auto& v : out.data()) v *= v;
  return g.record(std::move(out), {a}, [a](Graph& gr, const Tensor& og) {
    const Tensor& av = gr.value(a);
    Tensor da = og;
    for (std::size_t i = 0; i < da.size(); ++i) da[i] *= 2.0 * av[i];
    gr.accumulate(a, da);
  });
}

Var relu(Graph& g, Var a) {
  Tensor out = g.value(a);
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return g.record(std::move(out), {a}, [a](Graph& gr, const Tensor& og) {
    const Tensor& av = gr.value(a);
    Tensor da = og;
    for (std::size_t i = 0; i < da.size(); ++i) {
      if (!(av[i] > 0.0)) da[i] = 0.0;
    }
    gr.accumulate(a, da);
  });
}

Var reduce_sum(Graph& g, Var a) {
  Tensor out({1}, ordered_sum(g.value(a).data()));
  return g.record(std::move(out), {a}, [a](Graph& gr, const Tensor& og) {
    gr.accumulate(a, Tensor(gr.value(a).shape(), og[0]));
  });
}

Var reshape(Graph& g, Var a, Shape shape) {
  Tensor out = g.value(a).reshaped(std::move(shape));
  return g.record(std::move(out), {a}, [a](Graph& gr, const Tensor& og) { gr.accumulate(a, og); });
}

// ---------------------------------------------------------------------------
// Matrix primitives

Var matmul(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_rank(av, 2, "matmul");
  require_rank(bv, 2, "matmul");
  if (av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out = gemm_tensor({m, n, k}, av, bv);
  return g.record(std::move(out), {a, b}, [a, b, m, n, k](Graph& gr, const Tensor& og) {
    if (gr.requires_grad(a)) {
      // dA = dC B^T
      gr.accumulate(a, gemm_tensor({m, k, n, false, true}, og, gr.value(b)));
    }
    if (gr.requires_grad(b)) {
      // dB = A^T dC
      gr.accumulate(b, gemm_tensor({k, n, m, true, false}, gr.value(a), og));
    }
  });
}

Var transpose(Graph& g, Var a) {
  const Tensor& av = g.value(a);
  require_rank(av, 2, "transpose");
  const std::size_t r = av.dim(0), c = av.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);
  return g.record(std::move(out), {a}, [a, r, c](Graph& gr, const Tensor& og) {
    Tensor da({r, c});
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) da.at(i, j) = og.at(j, i);
    gr.accumulate(a, da);
  });
}

Var linear(Graph& g, Var x, Var weight, Var bias) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(weight);
  const Tensor& bv = g.value(bias);
  require_rank(xv, 2, "linear");
  require_rank(wv, 2, "linear");
  const std::size_t batch = xv.dim(0), in = xv.dim(1), out_dim = wv.dim(0);
  if (wv.dim(1) != in || bv.size() != out_dim) {
    throw DimensionError("linear: input " + shape_str(xv.shape()) + ", weight " + shape_str(wv.shape()) +
                         ", bias " + shape_str(bv.shape()));
  }
  Tensor out = gemm_tensor({batch, out_dim, in, false, true}, xv, wv);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < out_dim; ++o) out.at(b, o) += bv[o];
  return g.record(std::move(out), {x, weight, bias}, [x, weight, bias, batch, in, out_dim](Graph& gr, const Tensor& og) {
    if (gr.requires_grad(x)) gr.accumulate(x, gemm_tensor({batch, in, out_dim}, og, gr.value(weight)));
    if (gr.requires_grad(weight)) {
      gr.accumulate(weight, gemm_tensor({out_dim, in, batch, true, false}, og, gr.value(x)));
    }
    if (gr.requires_grad(bias)) {
      Tensor db({out_dim});
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out_dim; ++o) db[o] += og.at(b, o);
      gr.accumulate(bias, db.reshaped(gr.value(bias).shape()));
    }
  });
}

Var concat_cols(Graph& g, const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols needs at least one part");
  const std::size_t rows = g.value(parts.front()).dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (Var p : parts) {
    const Tensor& pv = g.value(p);
    require_rank(pv, 2, "concat_cols");
    if (pv.dim(0) != rows) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(pv.dim(1));
    total += pv.dim(1);
  }
  Tensor out({rows, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = g.value(parts[k]);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < widths[k]; ++c) out.at(r, offset + c) = pv.at(r, c);
    offset += widths[k];
  }
  return g.record(std::move(out), parts, [parts, widths, rows](Graph& gr, const Tensor& og) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (gr.requires_grad(parts[k])) {
        Tensor d({rows, widths[k]});
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) d.at(r, c) = og.at(r, off + c);
        gr.accumulate(parts[k], d);
      }
      off += widths[k];
    }
  });
}

namespace {

Tensor column_means(const Tensor& a) {
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  Tensor mean({cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) mean[c] += a.at(r, c);
  for (auto& v : mean.data()) v /= static_cast<double>(rows);
  return mean;
}

}  // namespace

Var center_cols(Graph& g, Var a) {
  const Tensor& av = g.value(a);
  require_rank(av, 2, "center_cols");
  const Tensor mean = column_means(av);
  Tensor out = av;
  for (std::size_t r = 0; r < av.dim(0); ++r)
    for (std::size_t c = 0; c < av.dim(1); ++c) out.at(r, c) -= mean[c];
  return g.record(std::move(out), {a}, [a](Graph& gr, const Tensor& og) {
    const Tensor gm = column_means(og);
    Tensor da = og;
    for (std::size_t r = 0; r < og.dim(0); ++r)
      for (std::size_t c = 0; c < og.dim(1); ++c) da.at(r, c) -= gm[c];
    gr.accumulate(a, da);
  });
}

Var add_diag(Graph& g, Var a, double value) {
  const Tensor& av = g.value(a);
  require_rank(av, 2, "add_diag");
  if (av.dim(0) != av.dim(1)) throw DimensionError("add_diag needs a square matrix");
  Tensor out = av;
  for (std::size_t i = 0; i < av.dim(0); ++i) out.at(i, i) += value;
  return g.record(std::move(out), {a}, [a](Graph& gr, const Tensor& og) { gr.accumulate(a, og); });
}

Var principal_submatrix(Graph& g, Var a, const std::vector<std::size_t>& indices) {
  const Tensor& av = g.value(a);
  require_rank(av, 2, "principal_submatrix");
  const std::size_t n = av.dim(0);
  if (indices.empty()) throw DimensionError("principal_submatrix needs indices");
  for (auto i : indices) {
    if (i >= n) throw DimensionError("principal_submatrix index out of range");
  }
  const std::size_t k = indices.size();
  Tensor out({k, k});
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) out.at(i, j) = av.at(indices[i], indices[j]);
  return g.record(std::move(out), {a}, [a, indices, n, k](Graph& gr, const Tensor& og) {
    Tensor da({n, n});
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) da.at(indices[i], indices[j]) += og.at(i, j);
    gr.accumulate(a, da);
  });
}

Var logdet_spd(Graph& g, Var a) {
  const Tensor& av = g.value(a);
  const Tensor l = linalg::cholesky(av);
  double ld = 0.0;
  for (std::size_t i = 0; i < l.dim(0); ++i) ld += 2.0 * std::log(l.at(i, i));
  return g.record(Tensor({1}, ld), {a}, [a](Graph& gr, const Tensor& og) {
    Tensor inv = linalg::spd_inverse(gr.value(a));
    for (auto& v : inv.data()) v *= og[0];
    gr.accumulate(a, inv);
  });
}

// ---------------------------------------------------------------------------
// Transposed convolution

std::size_t conv_transpose_extent(std::size_t in, const ConvGeometry& geom) {
  if (geom.kernel == 0 || geom.stride == 0) throw ConfigError("transposed conv needs kernel >= 1 and stride >= 1");
  if (geom.output_padding >= geom.stride) {
    throw ConfigError("output_padding " + std::to_string(geom.output_padding) + " must be smaller than stride " +
                      std::to_string(geom.stride));
  }
  const long out = (static_cast<long>(in) - 1) * static_cast<long>(geom.stride) + static_cast<long>(geom.kernel) -
                   2 * static_cast<long>(geom.padding) + static_cast<long>(geom.output_padding);
  if (out <= 0) throw ConfigError("transposed conv produces a non-positive extent");
  return static_cast<std::size_t>(out);
}

Var conv_transpose2d(Graph& g, Var x, Var weight, Var bias, const ConvGeometry& geom) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(weight);
  const Tensor& bv = g.value(bias);
  require_rank(xv, 4, "conv_transpose2d");
  require_rank(wv, 4, "conv_transpose2d");
  kernels::ConvTransposeShape s{};
  s.batch = xv.dim(0);
  s.in_channels = xv.dim(1);
  s.in_h = xv.dim(2);
  s.in_w = xv.dim(3);
  s.out_channels = wv.dim(1);
  s.kernel = geom.kernel;
  s.stride = geom.stride;
  s.padding = geom.padding;
  if (wv.dim(0) != s.in_channels || wv.dim(2) != geom.kernel || wv.dim(3) != geom.kernel ||
      bv.size() != s.out_channels) {
    throw DimensionError("conv_transpose2d: input " + shape_str(xv.shape()) + ", weight " + shape_str(wv.shape()) +
                         ", bias " + shape_str(bv.shape()));
  }
  s.out_h = conv_transpose_extent(s.in_h, geom);
  s.out_w = conv_transpose_extent(s.in_w, geom);
  Tensor out({s.batch, s.out_channels, s.out_h, s.out_w});
  kernels::conv_transpose2d_forward(s, xv.data(), wv.data(), bv.data(), out.data());
  return g.record(std::move(out), {x, weight, bias}, [x, weight, bias, s](Graph& gr, const Tensor& og) {
    if (gr.requires_grad(x)) {
      Tensor dx = Tensor::zeros_like(gr.value(x));
      kernels::conv_transpose2d_backward_input(s, og.data(), gr.value(weight).data(), dx.data());
      gr.accumulate(x, dx);
    }
    if (gr.requires_grad(weight)) {
      Tensor dw = Tensor::zeros_like(gr.value(weight));
      kernels::conv_transpose2d_backward_weight(s, gr.value(x).data(), og.data(), dw.data());
      gr.accumulate(weight, dw);
    }
    if (gr.requires_grad(bias)) {
      Tensor db = Tensor::zeros_like(gr.value(bias));
      kernels::conv_transpose2d_backward_bias(s, og.data(), db.data());
      gr.accumulate(bias, db);
    }
  });
}

// ---------------------------------------------------------------------------
// Dense linear algebra

namespace linalg {

Tensor cholesky(const Tensor& a) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) throw DimensionError("cholesky needs a square matrix");
  const std::size_t n = a.dim(0);
  Tensor l({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    double d = a.at(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l.at(j, k) * l.at(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) throw NumericError("matrix is not symmetric positive definite");
    const double ljj = std::sqrt(d);
    l.at(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a.at(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
      l.at(i, j) = s / ljj;
    }
  }
  return l;
}

double logdet_spd(const Tensor& a) {
  const Tensor l = cholesky(a);
  double ld = 0.0;
  for (std::size_t i = 0; i < l.dim(0); ++i) ld += 2.0 * std::log(l.at(i, i));
  return ld;
}

Tensor spd_inverse(const Tensor& a) {
  const Tensor l = cholesky(a);
  const std::size_t n = l.dim(0);
  // Solve L L^T X = I column by column.
  Tensor inv({n, n});
  std::vector<double> y(n);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = (i == c) ? 1.0 : 0.0;
      for (std::size_t k = 0; k < i; ++k) s -= l.at(i, k) * y[k];
      y[i] = s / l.at(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = y[i];
      for (std::size_t k = i + 1; k < n; ++k) s -= l.at(k, i) * inv.at(k, c);
      inv.at(i, c) = s / l.at(i, i);
    }
  }
  // Symmetrize against rounding.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = 0.5 * (inv.at(i, j) + inv.at(j, i));
      inv.at(i, j) = v;
      inv.at(j, i) = v;
    }
  return inv;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  return gemm_tensor({a.dim(0), b.dim(1), a.dim(1)}, a, b);
}

}  // namespace linalg

// ---------------------------------------------------------------------------

double grad_check(const ScalarFunction& f, const Tensor& point, double step) {
  if (!(step > 0.0)) throw UsageError("grad_check step must be positive");
  auto evaluate = [&f](const Tensor& at) {
    Graph g;
    Var x = g.parameter(at);
    Var y = f(g, x);
    const Tensor& yv = g.value(y);
    if (yv.size() != 1) throw DimensionError("grad_check needs a scalar-valued function");
    if (!std::isfinite(yv[0])) throw NumericError("grad_check: non-finite function value");
    return yv[0];
  };

  Graph g;
  Var x = g.parameter(point);
  Var y = f(g, x);
  if (g.value(y).size() != 1) throw DimensionError("grad_check needs a scalar-valued function");
  if (!std::isfinite(g.value(y)[0])) throw NumericError("grad_check: non-finite function value");
  g.backward(y);
  const Tensor analytic = g.grad(x);
  require_finite(analytic, "analytic gradient");

  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = evaluate(probe);
    probe[i] = orig - step;
    const double down = evaluate(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace pcvae::ad
