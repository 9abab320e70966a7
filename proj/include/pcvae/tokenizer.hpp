#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pcvae/numerics.hpp"

namespace pcvae {

enum class Modality { visual, audio };

const char* modality_name(Modality m);

/// RGB image, channel-major: pixel (h, w, c) lives at c*H*W + h*W + w.
/// Loaded and synthesized images hold values in [0, 1]; decoder outputs are
/// unclamped and only clipped when written out.
struct ImageTensor {
  static constexpr std::size_t channels = 3;

  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  static ImageTensor zeros(std::size_t height, std::size_t width);

  double& at(std::size_t h, std::size_t w, std::size_t c) { return pixels[(c * height + h) * width + w]; }
  double at(std::size_t h, std::size_t w, std::size_t c) const { return pixels[(c * height + h) * width + w]; }

  std::size_t size() const { return pixels.size(); }
  bool in_unit_range() const;
  bool operator==(const ImageTensor&) const = default;
};

struct AudioClip {
  std::vector<double> samples;
  std::uint32_t sample_rate = 0;  // Hz, metadata only

  bool in_unit_range() const;
  bool operator==(const AudioClip&) const = default;
};

/// Equal-length token vectors stored row-wise in a [count, token_len] tensor.
struct TokenBundle {
  Modality modality = Modality::visual;
  Tensor tokens;

  std::size_t count() const { return tokens.dim(0); }
  std::size_t token_len() const { return tokens.dim(1); }
  std::span<const double> token(std::size_t i) const {
    return tokens.data().subspan(i * token_len(), token_len());
  }
};

/// Column-major vectorization of an H x W matrix: entry h + H*w is (h, w).
Tensor vectorize_columns(const Tensor& channel);

/// Splits each channel into L/3 blocks of contiguous columns. Token order is
/// the R blocks left to right, then G, then B.
TokenBundle image_to_stripes(const ImageTensor& img, std::size_t stripes);

/// M contiguous equal-length segments in temporal order.
TokenBundle audio_to_segments(const AudioClip& clip, std::size_t segments);

/// Inverse of image_to_stripes.
ImageTensor reassemble_image(const TokenBundle& tokens, std::size_t height, std::size_t width);

}  // namespace pcvae
