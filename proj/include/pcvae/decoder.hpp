#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pcvae/autodiff.hpp"
#include "pcvae/encoder.hpp"
#include "pcvae/numerics.hpp"
#include "pcvae/tokenizer.hpp"

namespace pcvae {

enum class LayerKind { transposed_conv2d, fully_connected, relu };

const char* layer_kind_name(LayerKind kind);

/// One decoder layer. For fully-connected layers in/out_channels are the
/// input and output feature counts; kernel/stride/padding are unused.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t output_padding = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;

  bool has_params() const { return kind != LayerKind::relu; }
  bool operator==(const LayerSpec&) const = default;
};

/// The latent enters as a [latent_len, 1, 1] feature map. Visual decoders
/// declare output {3, H, W}; audio decoders declare {length}.
struct DecoderConfig {
  std::string preset;
  Modality output = Modality::visual;
  std::size_t latent_len = 0;
  std::vector<LayerSpec> layers;
  Shape output_shape;

  /// Runs the shape arithmetic from 1x1 input; ConfigError on any break in
  /// the chain or a mismatch with output_shape.
  Shape infer_output_shape() const;
  void validate() const { (void)infer_output_shape(); }
  std::size_t output_numel() const { return shape_numel(output_shape); }
  /// Weight and bias shapes per parametric layer, in order.
  std::vector<std::pair<Shape, Shape>> param_shapes() const;
  std::size_t param_count() const;
};

/// "paper-visual", "paper-audio", "desk-visual", "desk-audio".
DecoderConfig decoder_preset(const std::string& name, std::size_t latent_len);
std::vector<std::string> decoder_preset_names();

struct LayerParams {
  Tensor weight;
  Tensor bias;
};

struct DecoderParams {
  std::vector<LayerParams> layers;  // one entry per parametric layer
};

/// Weights ~ N(0, 1/fan_in). For transposed convolutions fan_in =
/// in_channels * ceil(kernel/stride)^2, the number of input taps reaching an
/// output position; for fully-connected layers the input width. Biases are
/// zero.
DecoderParams init_decoder(const DecoderConfig& config, Rng& rng);

/// Differentiable forward pass: latent rows [batch, latent_len] to output
/// rows [batch, output_numel]. `params` alternates weight, bias per layer.
ad::Var decoder_forward(ad::Graph& g, const DecoderConfig& config, const std::vector<ad::Var>& params,
                        ad::Var latent_rows);

/// Runs layers [first, last) on `input`, the activation layer `first`
/// receives: [batch, latent_len, 1, 1] for layer 0. Returns the raw
/// activation of layer last - 1; parameters outside the range are unused.
ad::Var decoder_forward_layers(ad::Graph& g, const DecoderConfig& config, const std::vector<ad::Var>& params,
                               ad::Var input, std::size_t first, std::size_t last);

/// Registers every weight and bias as a graph parameter, in layer order.
std::vector<ad::Var> bind_params(ad::Graph& g, const DecoderParams& params);

/// Non-differentiable batched forward pass.
Tensor decode_rows(const DecoderConfig& config, const DecoderParams& params, const Tensor& latent_rows);

ImageTensor decode_visual(const LatentVector& latent, const DecoderConfig& config, const DecoderParams& params);
AudioClip decode_audio(const LatentVector& latent, const DecoderConfig& config, const DecoderParams& params);

}  // namespace pcvae
