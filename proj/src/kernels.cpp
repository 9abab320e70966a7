#include "pcvae/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <vector>

#include "pcvae/errors.hpp"

namespace pcvae::kernels {

namespace {

std::atomic<Execution> g_execution{Execution::parallel};

inline double a_at(const GemmArgs& g, std::span<const double> a, std::size_t i, std::size_t p) {
  return g.trans_a ? a[p * g.m + i] : a[i * g.k + p];
}

// One output row of C; accumulation over p ascending for every element.
inline void gemm_row(const GemmArgs& g, std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t i) {
  double* crow = c.data() + i * g.n;
  if (g.trans_b) {
    // Rows of B are contiguous here, so each element is a plain dot product.
    // Four run side by side to overlap their add chains.
    std::size_t j = 0;
    for (; j + 4 <= g.n; j += 4) {
      const double* b0 = b.data() + j * g.k;
      const double *b1 = b0 + g.k, *b2 = b1 + g.k, *b3 = b2 + g.k;
      double c0 = 0.0, c1 = 0.0, c2 = 0.0, c3 = 0.0;
      for (std::size_t p = 0; p < g.k; ++p) {
        const double av = a_at(g, a, i, p);
        c0 += av * b0[p];
        c1 += av * b1[p];
        c2 += av * b2[p];
        c3 += av * b3[p];
      }
      crow[j] = c0;
      crow[j + 1] = c1;
      crow[j + 2] = c2;
      crow[j + 3] = c3;
    }
    for (; j < g.n; ++j) {
      const double* brow = b.data() + j * g.k;
      double acc = 0.0;
      for (std::size_t p = 0; p < g.k; ++p) acc += a_at(g, a, i, p) * brow[p];
      crow[j] = acc;
    }
    return;
  }
  for (std::size_t j = 0; j < g.n; ++j) crow[j] = 0.0;
  for (std::size_t p = 0; p < g.k; ++p) {
    const double av = a_at(g, a, i, p);
    const double* brow = b.data() + p * g.n;
    for (std::size_t j = 0; j < g.n; ++j) crow[j] += av * brow[j];
  }
}

// Kernel taps k with 0 <= i * stride + k - padding < extent; `base` is the
// output coordinate of tap 0, possibly negative.
struct Taps {
  long lo, hi, base;
};

inline Taps taps(const ConvTransposeShape& s, std::size_t i, std::size_t extent) {
  const long base = static_cast<long>(i * s.stride) - static_cast<long>(s.padding);
  const long lo = std::max(0L, -base);
  const long hi = std::min(static_cast<long>(s.kernel), static_cast<long>(extent) - base);
  return {lo, std::max(lo, hi), base};
}

std::vector<Taps> tap_table(const ConvTransposeShape& s, std::size_t in_extent, std::size_t out_extent) {
  std::vector<Taps> t(in_extent);
  for (std::size_t i = 0; i < in_extent; ++i) t[i] = taps(s, i, out_extent);
  return t;
}

// Scatter of one sample: every input position adds into its kernel footprint.
// Per output element the contributions arrive ordered by (ci, ih, iw); one
// input position reaches an output element through at most one tap, so the
// tap and channel loops inside it may run in any order.
inline void conv_forward_sample(const ConvTransposeShape& s, std::span<const double> x, std::span<const double> wt,
                                std::span<const double> bias, std::span<double> y, std::size_t b) {
  const std::size_t out_plane = s.out_h * s.out_w;
  const std::size_t in_plane = s.in_h * s.in_w;
  const std::size_t nco = s.out_channels;
  const auto k = static_cast<long>(s.kernel);
  const auto ow_n = static_cast<long>(s.out_w);
  // Accumulate channel-last so the innermost loop is contiguous.
  std::vector<double> acc(out_plane * nco);
  for (std::size_t o = 0; o < out_plane; ++o)
    for (std::size_t co = 0; co < nco; ++co) acc[o * nco + co] = bias.empty() ? 0.0 : bias[co];
  const auto th = tap_table(s, s.in_h, s.out_h), tw = tap_table(s, s.in_w, s.out_w);
  const double* xs = x.data() + b * s.in_channels * in_plane;
  for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
    const double* wc = wt.data() + ci * s.kernel * s.kernel * nco;
    for (std::size_t ih = 0; ih < s.in_h; ++ih) {
      const Taps& h = th[ih];
      for (std::size_t iw = 0; iw < s.in_w; ++iw) {
        const Taps& c = tw[iw];
        const double xv = xs[ci * in_plane + ih * s.in_w + iw];
        for (long kh = h.lo; kh < h.hi; ++kh) {
          const long row = (h.base + kh) * ow_n + c.base;
          for (long kw = c.lo; kw < c.hi; ++kw) {
            const double* wv = wc + static_cast<std::size_t>(kh * k + kw) * nco;
            double* ao = acc.data() + static_cast<std::size_t>(row + kw) * nco;
            for (std::size_t co = 0; co < nco; ++co) ao[co] += xv * wv[co];
          }
        }
      }
    }
  }
  double* ys = y.data() + b * nco * out_plane;
  for (std::size_t co = 0; co < nco; ++co)
    for (std::size_t o = 0; o < out_plane; ++o) ys[co * out_plane + o] = acc[o * nco + co];
}

// Weights [ci, co, kh, kw] reordered to [ci, kh, kw, co].
std::vector<double> taps_major(const ConvTransposeShape& s, std::span<const double> w) {
  const std::size_t kk = s.kernel * s.kernel;
  std::vector<double> t(w.size());
  for (std::size_t ci = 0; ci < s.in_channels; ++ci)
    for (std::size_t co = 0; co < s.out_channels; ++co)
      for (std::size_t q = 0; q < kk; ++q)
        t[(ci * kk + q) * s.out_channels + co] = w[(ci * s.out_channels + co) * kk + q];
  return t;
}

// dx[b, ci, ih, iw] = sum over (co, kh, kw) of dy * w, in that order.
inline void conv_backward_input_sample(const ConvTransposeShape& s, std::span<const double> dy,
                                       std::span<const double> w, std::span<double> dx, std::size_t b) {
  const std::size_t out_plane = s.out_h * s.out_w;
  const std::size_t in_plane = s.in_h * s.in_w;
  const auto k = static_cast<long>(s.kernel);
  const auto ow_n = static_cast<long>(s.out_w);
  const auto th = tap_table(s, s.in_h, s.out_h), tw = tap_table(s, s.in_w, s.out_w);
  const double* dys = dy.data() + b * s.out_channels * out_plane;
  double* dxs = dx.data() + b * s.in_channels * in_plane;
  for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
    for (std::size_t ih = 0; ih < s.in_h; ++ih) {
      const Taps& h = th[ih];
      for (std::size_t iw = 0; iw < s.in_w; ++iw) {
        const Taps& c = tw[iw];
        double acc = 0.0;
        for (std::size_t co = 0; co < s.out_channels; ++co) {
          const double* wk = w.data() + (ci * s.out_channels + co) * s.kernel * s.kernel;
          const double* dyc = dys + co * out_plane;
          for (long kh = h.lo; kh < h.hi; ++kh) {
            const long row = (h.base + kh) * ow_n + c.base;
            for (long kw = c.lo; kw < c.hi; ++kw) acc += dyc[row + kw] * wk[kh * k + kw];
          }
        }
        dxs[ci * in_plane + ih * s.in_w + iw] = acc;
      }
    }
  }
}

// dw[ci, co, :, :] accumulated over (b, ih, iw) ascending.
inline void conv_backward_weight_channel(const ConvTransposeShape& s, std::span<const double> x,
                                         std::span<const double> dy, std::span<double> dw, std::size_t ci) {
  const std::size_t out_plane = s.out_h * s.out_w;
  const std::size_t in_plane = s.in_h * s.in_w;
  const std::size_t kk = s.kernel * s.kernel;
  const auto k = static_cast<long>(s.kernel);
  const auto ow_n = static_cast<long>(s.out_w);
  const auto th = tap_table(s, s.in_h, s.out_h), tw = tap_table(s, s.in_w, s.out_w);
  double* dwc = dw.data() + ci * s.out_channels * kk;
  for (std::size_t i = 0; i < s.out_channels * kk; ++i) dwc[i] = 0.0;
  for (std::size_t b = 0; b < s.batch; ++b) {
    const double* xs = x.data() + (b * s.in_channels + ci) * in_plane;
    const double* dys = dy.data() + b * s.out_channels * out_plane;
    for (std::size_t ih = 0; ih < s.in_h; ++ih) {
      const Taps& h = th[ih];
      for (std::size_t iw = 0; iw < s.in_w; ++iw) {
        const Taps& c = tw[iw];
        const double xv = xs[ih * s.in_w + iw];
        for (std::size_t co = 0; co < s.out_channels; ++co) {
          double* dwk = dwc + co * kk;
          const double* dyc = dys + co * out_plane;
          for (long kh = h.lo; kh < h.hi; ++kh) {
            const long row = (h.base + kh) * ow_n + c.base;
            for (long kw = c.lo; kw < c.hi; ++kw) dwk[kh * k + kw] += xv * dyc[row + kw];
          }
        }
      }
    }
  }
}

inline void conv_backward_bias_channel(const ConvTransposeShape& s, std::span<const double> dy,
                                       std::span<double> dbias, std::size_t co) {
  const std::size_t out_plane = s.out_h * s.out_w;
  double acc = 0.0;
  for (std::size_t b = 0; b < s.batch; ++b) {
    const double* dyc = dy.data() + (b * s.out_channels + co) * out_plane;
    for (std::size_t o = 0; o < out_plane; ++o) acc += dyc[o];
  }
  dbias[co] = acc;
}

inline void stripe_product(std::size_t rows, std::size_t cols, std::span<const double> matrices,
                           std::span<const double> tokens, double* partial, std::size_t i) {
  const double* m = matrices.data() + i * rows * cols;
  const double* t = tokens.data() + i * cols;
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += m[r * cols + c] * t[c];
    partial[r] = acc;
  }
}

void check_gemm(const GemmArgs& g, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  if (a.size() != g.m * g.k || b.size() != g.k * g.n || c.size() != g.m * g.n) {
    throw DimensionError("gemm operand sizes do not match m=" + std::to_string(g.m) + " n=" + std::to_string(g.n) +
                         " k=" + std::to_string(g.k));
  }
}

void check_bank(std::size_t count, std::size_t rows, std::size_t cols, std::span<const double> matrices,
                std::span<const double> tokens, std::span<double> out) {
  if (matrices.size() != count * rows * cols || tokens.size() != count * cols || out.size() != rows) {
    throw DimensionError("bank_compress operand sizes do not match");
  }
}

}  // namespace

void set_execution(Execution mode) { g_execution.store(mode); }
Execution execution() { return g_execution.load(); }

void configure_threads_from_env() {
  const char* env = std::getenv("PCVAE_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || n < 0) throw ConfigError(std::string("PCVAE_THREADS must be >= 0, got ") + env);
  if (n > 0) omp_set_num_threads(static_cast<int>(n));
}

namespace serial {

void gemm(const GemmArgs& g, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  check_gemm(g, a, b, c);
  for (std::size_t i = 0; i < g.m; ++i) gemm_row(g, a, b, c, i);
}

void conv_transpose2d_forward(const ConvTransposeShape& s, std::span<const double> x, std::span<const double> w,
                              std::span<const double> bias, std::span<double> y) {
  const auto wt = taps_major(s, w);
  for (std::size_t b = 0; b < s.batch; ++b) conv_forward_sample(s, x, wt, bias, y, b);
}

void conv_transpose2d_backward_input(const ConvTransposeShape& s, std::span<const double> dy,
                                     std::span<const double> w, std::span<double> dx) {
  for (std::size_t b = 0; b < s.batch; ++b) conv_backward_input_sample(s, dy, w, dx, b);
}

void conv_transpose2d_backward_weight(const ConvTransposeShape& s, std::span<const double> x,
                                      std::span<const double> dy, std::span<double> dw) {
  for (std::size_t ci = 0; ci < s.in_channels; ++ci) conv_backward_weight_channel(s, x, dy, dw, ci);
}

void conv_transpose2d_backward_bias(const ConvTransposeShape& s, std::span<const double> dy,
                                    std::span<double> dbias) {
  for (std::size_t co = 0; co < s.out_channels; ++co) conv_backward_bias_channel(s, dy, dbias, co);
}

void bank_compress(std::size_t count, std::size_t rows, std::size_t cols, std::span<const double> matrices,
                   std::span<const double> tokens, std::span<double> out) {
  check_bank(count, rows, cols, matrices, tokens, out);
  std::vector<double> partial(count * rows);
  for (std::size_t i = 0; i < count; ++i) stripe_product(rows, cols, matrices, tokens, partial.data() + i * rows, i);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) acc += partial[i * rows + r];
    out[r] = acc;
  }
}

}  // namespace serial

namespace parallel {

void gemm(const GemmArgs& g, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  check_gemm(g, a, b, c);
  const auto m = static_cast<long>(g.m);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < m; ++i) gemm_row(g, a, b, c, static_cast<std::size_t>(i));
}

void conv_transpose2d_forward(const ConvTransposeShape& s, std::span<const double> x, std::span<const double> w,
                              std::span<const double> bias, std::span<double> y) {
  const auto batch = static_cast<long>(s.batch);
  const auto wt = taps_major(s, w);
#pragma omp parallel for schedule(static)
  for (long b = 0; b < batch; ++b) conv_forward_sample(s, x, wt, bias, y, static_cast<std::size_t>(b));
}

void conv_transpose2d_backward_input(const ConvTransposeShape& s, std::span<const double> dy,
                                     std::span<const double> w, std::span<double> dx) {
  const auto batch = static_cast<long>(s.batch);
#pragma omp parallel for schedule(static)
  for (long b = 0; b < batch; ++b) conv_backward_input_sample(s, dy, w, dx, static_cast<std::size_t>(b));
}

void conv_transpose2d_backward_weight(const ConvTransposeShape& s, std::span<const double> x,
                                      std::span<const double> dy, std::span<double> dw) {
  const auto channels = static_cast<long>(s.in_channels);
#pragma omp parallel for schedule(dynamic)
  for (long ci = 0; ci < channels; ++ci) conv_backward_weight_channel(s, x, dy, dw, static_cast<std::size_t>(ci));
}

void conv_transpose2d_backward_bias(const ConvTransposeShape& s, std::span<const double> dy,
                                    std::span<double> dbias) {
  const auto channels = static_cast<long>(s.out_channels);
#pragma omp parallel for schedule(static)
  for (long co = 0; co < channels; ++co) conv_backward_bias_channel(s, dy, dbias, static_cast<std::size_t>(co));
}

void bank_compress(std::size_t count, std::size_t rows, std::size_t cols, std::span<const double> matrices,
                   std::span<const double> tokens, std::span<double> out) {
  check_bank(count, rows, cols, matrices, tokens, out);
  std::vector<double> partial(count * rows);
  const auto n = static_cast<long>(count);
  // One task per stripe, then the same fixed-order reduction as serial.
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    stripe_product(rows, cols, matrices, tokens, partial.data() + si * rows, si);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) acc += partial[i * rows + r];
    out[r] = acc;
  }
}

}  // namespace parallel

void gemm(const GemmArgs& g, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  execution() == Execution::serial ? serial::gemm(g, a, b, c) : parallel::gemm(g, a, b, c);
}

void conv_transpose2d_forward(const ConvTransposeShape& s, std::span<const double> x, std::span<const double> w,
                              std::span<const double> bias, std::span<double> y) {
  execution() == Execution::serial ? serial::conv_transpose2d_forward(s, x, w, bias, y)
                                   : parallel::conv_transpose2d_forward(s, x, w, bias, y);
}

void conv_transpose2d_backward_input(const ConvTransposeShape& s, std::span<const double> dy,
                                     std::span<const double> w, std::span<double> dx) {
  execution() == Execution::serial ? serial::conv_transpose2d_backward_input(s, dy, w, dx)
                                   : parallel::conv_transpose2d_backward_input(s, dy, w, dx);
}

void conv_transpose2d_backward_weight(const ConvTransposeShape& s, std::span<const double> x,
                                      std::span<const double> dy, std::span<double> dw) {
  execution() == Execution::serial ? serial::conv_transpose2d_backward_weight(s, x, dy, dw)
                                   : parallel::conv_transpose2d_backward_weight(s, x, dy, dw);
}

void conv_transpose2d_backward_bias(const ConvTransposeShape& s, std::span<const double> dy,
                                    std::span<double> dbias) {
  execution() == Execution::serial ? serial::conv_transpose2d_backward_bias(s, dy, dbias)
                                   : parallel::conv_transpose2d_backward_bias(s, dy, dbias);
}

void bank_compress(std::size_t count, std::size_t rows, std::size_t cols, std::span<const double> matrices,
                   std::span<const double> tokens, std::span<double> out) {
  execution() == Execution::serial ? serial::bank_compress(count, rows, cols, matrices, tokens, out)
                                   : parallel::bank_compress(count, rows, cols, matrices, tokens, out);
}

}  // namespace pcvae::kernels
