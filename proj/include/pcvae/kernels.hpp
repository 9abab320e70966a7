#pragma once

// Hot loops of the encoder and decoders, in two flavours:
//
//   serial::   plain reference loops, kept for testing
//   parallel:: OpenMP versions
//
// Every parallel kernel partitions work over *output* elements and keeps the
// per-element accumulation order of its serial twin, so the two agree
// bitwise for any thread count. The dispatching wrappers at the bottom pick
// one according to the process-wide execution mode.

#include <cstddef>
#include <span>

namespace pcvae::kernels {

enum class Execution { serial, parallel };

void set_execution(Execution mode);
Execution execution();

/// Applies PCVAE_THREADS (0 or unset = OpenMP default).
void configure_threads_from_env();

// C[m,n] = op(A)[m,k] * op(B)[k,n]; C is overwritten.
// op(A) = A (m x k, row-major) or A^T when trans_a (A stored k x m).
// op(B) = B (k x n) or B^T when trans_b (B stored n x k).
struct GemmArgs {
  std::size_t m, n, k;
  bool trans_a = false;
  bool trans_b = false;
};

struct ConvTransposeShape {
  std::size_t batch;
  std::size_t in_channels, out_channels;
  std::size_t in_h, in_w;
  std::size_t out_h, out_w;
  std::size_t kernel;
  std::size_t stride;
  std::size_t padding;
};

// Weight layout [in_channels, out_channels, kernel, kernel]; activations
// [batch, channels, h, w].
namespace serial {
void gemm(const GemmArgs& g, std::span<const double> a, std::span<const double> b, std::span<double> c);
void conv_transpose2d_forward(const ConvTransposeShape& s, std::span<const double> x, std::span<const double> w,
                              std::span<const double> bias, std::span<double> y);
void conv_transpose2d_backward_input(const ConvTransposeShape& s, std::span<const double> dy,
                                     std::span<const double> w, std::span<double> dx);
void conv_transpose2d_backward_weight(const ConvTransposeShape& s, std::span<const double> x,
                                      std::span<const double> dy, std::span<double> dw);
void conv_transpose2d_backward_bias(const ConvTransposeShape& s, std::span<const double> dy,
                                    std::span<double> dbias);
// out = sum_i matrices[i] * tokens[i], partial products summed in index order.
// matrices: count blocks of rows x cols; tokens: count blocks of cols.
void bank_compress(std::size_t count, std::size_t rows, std::size_t cols, std::span<const double> matrices,
                   std::span<const double> tokens, std::span<double> out);
}  // namespace serial

namespace parallel {
void gemm(const GemmArgs& g, std::span<const double> a, std::span<const double> b, std::span<double> c);
void conv_transpose2d_forward(const ConvTransposeShape& s, std::span<const double> x, std::span<const double> w,
                              std::span<const double> bias, std::span<double> y);
void conv_transpose2d_backward_input(const ConvTransposeShape& s, std::span<const double> dy,
                                     std::span<const double> w, std::span<double> dx);
void conv_transpose2d_backward_weight(const ConvTransposeShape& s, std::span<const double> x,
                                      std::span<const double> dy, std::span<double> dw);
void conv_transpose2d_backward_bias(const ConvTransposeShape& s, std::span<const double> dy,
                                    std::span<double> dbias);
void bank_compress(std::size_t count, std::size_t rows, std::size_t cols, std::span<const double> matrices,
                   std::span<const double> tokens, std::span<double> out);
}  // namespace parallel

void gemm(const GemmArgs& g, std::span<const double> a, std::span<const double> b, std::span<double> c);
void conv_transpose2d_forward(const ConvTransposeShape& s, std::span<const double> x, std::span<const double> w,
                              std::span<const double> bias, std::span<double> y);
void conv_transpose2d_backward_input(const ConvTransposeShape& s, std::span<const double> dy,
                                     std::span<const double> w, std::span<double> dx);
void conv_transpose2d_backward_weight(const ConvTransposeShape& s, std::span<const double> x,
                                      std::span<const double> dy, std::span<double> dw);
void conv_transpose2d_backward_bias(const ConvTransposeShape& s, std::span<const double> dy,
                                    std::span<double> dbias);
void bank_compress(std::size_t count, std::size_t rows, std::size_t cols, std::span<const double> matrices,
                   std::span<const double> tokens, std::span<double> out);

}  // namespace pcvae::kernels
