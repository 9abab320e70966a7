#include "pcvae/tokenizer.hpp"

#include <string>

namespace pcvae {

const char* modality_name(Modality m) { return m == Modality::visual ? "visual" : "audio"; }

ImageTensor ImageTensor::zeros(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw DimensionError("image extents must be positive");
  ImageTensor img;
  img.height = height;
  img.width = width;
  img.pixels.assign(channels * height * width, 0.0);
  return img;
}

bool ImageTensor::in_unit_range() const {
  for (double v : pixels) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
  }
  return true;
}

bool AudioClip::in_unit_range() const {
  for (double v : samples) {
    if (!(v >= -1.0 && v <= 1.0)) return false;
  }
  return true;
}

Tensor vectorize_columns(const Tensor& channel) {
  if (channel.rank() != 2) throw DimensionError("vectorize_columns needs an H x W matrix");
  const std::size_t h = channel.dim(0), w = channel.dim(1);
  Tensor out({h * w});
  for (std::size_t c = 0; c < w; ++c)
    for (std::size_t r = 0; r < h; ++r) out[r + h * c] = channel.at(r, c);
  return out;
}

namespace {

struct StripeLayout {
  std::size_t per_channel;
  std::size_t block_width;
};

StripeLayout stripe_layout(std::size_t width, std::size_t stripes) {
  if (stripes == 0 || stripes % ImageTensor::channels != 0) {
    throw TokenizationError("stripe count L=" + std::to_string(stripes) + " must be a positive multiple of 3");
  }
  const std::size_t per_channel = stripes / ImageTensor::channels;
  if (width % per_channel != 0) {
    throw TokenizationError("image width W=" + std::to_string(width) + " is not divisible by L/3=" +
                            std::to_string(per_channel));
  }
  return {per_channel, width / per_channel};
}

}  // namespace

TokenBundle image_to_stripes(const ImageTensor& img, std::size_t stripes) {
  if (img.pixels.size() != ImageTensor::channels * img.height * img.width || img.height == 0 || img.width == 0) {
    throw TokenizationError("image pixel buffer does not match its declared height/width");
  }
  const auto layout = stripe_layout(img.width, stripes);
  const std::size_t token_len = img.height * layout.block_width;
  Tensor tokens({stripes, token_len});
  std::size_t t = 0;
  for (std::size_t c = 0; c < ImageTensor::channels; ++c) {
    for (std::size_t blk = 0; blk < layout.per_channel; ++blk, ++t) {
      double* dst = tokens.data().data() + t * token_len;
      const std::size_t col0 = blk * layout.block_width;
      for (std::size_t wl = 0; wl < layout.block_width; ++wl)
        for (std::size_t h = 0; h < img.height; ++h) dst[h + img.height * wl] = img.at(h, col0 + wl, c);
    }
  }
  return TokenBundle{Modality::visual, std::move(tokens)};
}

TokenBundle audio_to_segments(const AudioClip& clip, std::size_t segments) {
  const std::size_t n = clip.samples.size();
  if (segments == 0 || n == 0 || n % segments != 0) {
    throw TokenizationError("audio length " + std::to_string(n) + " is not divisible by M=" +
                            std::to_string(segments));
  }
  return TokenBundle{Modality::audio, Tensor({segments, n / segments}, clip.samples)};
}

ImageTensor reassemble_image(const TokenBundle& tokens, std::size_t height, std::size_t width) {
  if (tokens.modality != Modality::visual) throw TokenizationError("reassemble_image needs visual tokens");
  if (height == 0 || width == 0) throw TokenizationError("image extents must be positive");
  const std::size_t stripes = tokens.count();
  const auto layout = stripe_layout(width, stripes);
  if (tokens.token_len() != height * layout.block_width) {
    throw TokenizationError("token length " + std::to_string(tokens.token_len()) + " does not match height H=" +
                            std::to_string(height) + " and width W=" + std::to_string(width));
  }
  ImageTensor img = ImageTensor::zeros(height, width);
  std::size_t t = 0;
  for (std::size_t c = 0; c < ImageTensor::channels; ++c) {
    for (std::size_t blk = 0; blk < layout.per_channel; ++blk, ++t) {
      auto src = tokens.token(t);
      const std::size_t col0 = blk * layout.block_width;
      for (std::size_t wl = 0; wl < layout.block_width; ++wl)
        for (std::size_t h = 0; h < height; ++h) img.at(h, col0 + wl, c) = src[h + height * wl];
    }
  }
  return img;
}

}  // namespace pcvae
