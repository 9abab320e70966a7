#include "pcvae/decoder.hpp"

#include <cmath>
#include <string>

namespace pcvae {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::transposed_conv2d:
      return "transposed_conv2d";
    case LayerKind::fully_connected:
      return "fully_connected";
    case LayerKind::relu:
      return "relu";
  }
  return "?";
}

namespace {

ad::ConvGeometry geometry(const LayerSpec& l) { return {l.kernel, l.stride, l.padding, l.output_padding}; }

LayerSpec tconv(std::size_t kernel, std::size_t stride, std::size_t padding, std::size_t output_padding,
                std::size_t in, std::size_t out) {
  return {LayerKind::transposed_conv2d, kernel, stride, padding, output_padding, in, out};
}

LayerSpec fc(std::size_t in, std::size_t out) { return {LayerKind::fully_connected, 0, 1, 0, 0, in, out}; }

LayerSpec relu_layer() { return {}; }

std::string layer_label(std::size_t i, const LayerSpec& l) {
  return "layer " + std::to_string(i) + " (" + layer_kind_name(l.kind) + ")";
}

}  // namespace

Shape DecoderConfig::infer_output_shape() const {
  if (latent_len == 0) throw ConfigError("decoder latent length must be positive");
  if (layers.empty()) throw ConfigError("decoder has no layers");
  std::size_t c = latent_len, h = 1, w = 1;
  bool flat = false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    switch (l.kind) {
      case LayerKind::relu:
        break;
      case LayerKind::transposed_conv2d: {
        if (flat) throw ConfigError(layer_label(i, l) + " follows a fully-connected layer");
        if (l.in_channels != c) {
          throw ConfigError(layer_label(i, l) + " expects " + std::to_string(l.in_channels) +
                            " input channels, chain provides " + std::to_string(c));
        }
        if (l.out_channels == 0) throw ConfigError(layer_label(i, l) + " has zero output channels");
        try {
          h = ad::conv_transpose_extent(h, geometry(l));
          w = ad::conv_transpose_extent(w, geometry(l));
        } catch (const ConfigError& e) {
          throw ConfigError(layer_label(i, l) + ": " + e.what());
        }
        c = l.out_channels;
        break;
      }
      case LayerKind::fully_connected: {
        const std::size_t in = flat ? c : c * h * w;
        if (l.in_channels != in) {
          throw ConfigError(layer_label(i, l) + " expects " + std::to_string(l.in_channels) +
                            " input features, chain provides " + std::to_string(in));
        }
        if (l.out_channels == 0) throw ConfigError(layer_label(i, l) + " has zero outputs");
        c = l.out_channels;
        h = w = 1;
        flat = true;
        break;
      }
    }
  }
  const Shape produced = flat ? Shape{c} : Shape{c, h, w};
  if (produced != output_shape) {
    throw ConfigError("decoder '" + preset + "' produces " + shape_str(produced) + " but declares " +
                      shape_str(output_shape));
  }
  if (output == Modality::visual && (produced.size() != 3 || produced[0] != ImageTensor::channels)) {
    throw ConfigError("visual decoder must produce a 3-channel image");
  }
  if (output == Modality::audio && produced.size() != 1) throw ConfigError("audio decoder must produce a 1-D signal");
  return produced;
}

std::vector<std::pair<Shape, Shape>> DecoderConfig::param_shapes() const {
  validate();
  std::vector<std::pair<Shape, Shape>> shapes;
  for (const auto& l : layers) {
    if (l.kind == LayerKind::transposed_conv2d) {
      shapes.push_back({{l.in_channels, l.out_channels, l.kernel, l.kernel}, {l.out_channels}});
    } else if (l.kind == LayerKind::fully_connected) {
      shapes.push_back({{l.out_channels, l.in_channels}, {l.out_channels}});
    }
  }
  return shapes;
}

std::size_t DecoderConfig::param_count() const {
  std::size_t n = 0;
  for (const auto& [w, b] : param_shapes()) n += shape_numel(w) + shape_numel(b);
  return n;
}

DecoderConfig decoder_preset(const std::string& name, std::size_t latent_len) {
  DecoderConfig cfg;
  cfg.preset = name;
  cfg.latent_len = latent_len;
  if (name == "paper-visual" || name == "paper-audio") {
    // 1 -> 8 -> 16 -> 32 spatially.
    cfg.layers = {tconv(7, 8, 0, 1, latent_len, 64), relu_layer(), tconv(3, 2, 1, 1, 64, 64), relu_layer(),
                  tconv(3, 2, 1, 1, 64, 32),         relu_layer()};
    if (name == "paper-visual") {
      cfg.output = Modality::visual;
      cfg.layers.push_back(tconv(3, 1, 1, 0, 32, 3));
      cfg.output_shape = {3, 32, 32};
    } else {
      cfg.output = Modality::audio;
      cfg.layers.push_back(fc(32 * 32 * 32, 2205));
      cfg.output_shape = {2205};
    }
  } else if (name == "desk-visual" || name == "desk-audio") {
    // 1 -> 2 -> 4 -> 8 spatially.
    cfg.layers = {tconv(2, 2, 0, 0, latent_len, 16), relu_layer(), tconv(3, 2, 1, 1, 16, 16), relu_layer(),
                  tconv(3, 2, 1, 1, 16, 8),          relu_layer()};
    if (name == "desk-visual") {
      cfg.output = Modality::visual;
      cfg.layers.push_back(tconv(3, 1, 1, 0, 8, 3));
      cfg.output_shape = {3, 8, 8};
    } else {
      cfg.output = Modality::audio;
      cfg.layers.push_back(fc(8 * 8 * 8, 64));
      cfg.output_shape = {64};
    }
  } else {
    throw ConfigError("unknown decoder preset '" + name + "'");
  }
  cfg.validate();
  return cfg;
}

std::vector<std::string> decoder_preset_names() { return {"paper-visual", "paper-audio", "desk-visual", "desk-audio"}; }

DecoderParams init_decoder(const DecoderConfig& config, Rng& rng) {
  const auto shapes = config.param_shapes();
  DecoderParams params;
  std::size_t k = 0;
  for (const auto& l : config.layers) {
    if (!l.has_params()) continue;
    double fan_in;
    if (l.kind == LayerKind::transposed_conv2d) {
      const std::size_t taps = (l.kernel + l.stride - 1) / l.stride;
      fan_in = static_cast<double>(l.in_channels * taps * taps);
    } else {
      fan_in = static_cast<double>(l.in_channels);
    }
    const double scale = 1.0 / std::sqrt(fan_in);
    LayerParams lp{Tensor(shapes[k].first), Tensor(shapes[k].second)};
    for (auto& v : lp.weight.data()) v = scale * rng.gaussian();
    params.layers.push_back(std::move(lp));
    ++k;
  }
  return params;
}

std::vector<ad::Var> bind_params(ad::Graph& g, const DecoderParams& params) {
  std::vector<ad::Var> vars;
  vars.reserve(2 * params.layers.size());
  for (const auto& lp : params.layers) {
    vars.push_back(g.parameter(lp.weight));
    vars.push_back(g.parameter(lp.bias));
  }
  return vars;
}

ad::Var decoder_forward(ad::Graph& g, const DecoderConfig& config, const std::vector<ad::Var>& params,
                        ad::Var latent_rows) {
  const Tensor& lv = g.value(latent_rows);
  if (lv.rank() != 2 || lv.dim(1) != config.latent_len) {
    throw DimensionError("decoder '" + config.preset + "' expects latent rows of length " +
                         std::to_string(config.latent_len) + ", got " + shape_str(lv.shape()));
  }
  std::size_t n_param_layers = 0;
  for (const auto& l : config.layers) n_param_layers += l.has_params() ? 1 : 0;
  if (params.size() != 2 * n_param_layers) throw DimensionError("decoder parameter count does not match its config");

  const std::size_t batch = lv.dim(0);
  const ad::Var x = ad::reshape(g, latent_rows, {batch, config.latent_len, 1, 1});
  return ad::reshape(g, decoder_forward_layers(g, config, params, x, 0, config.layers.size()),
                     {batch, config.output_numel()});
}

ad::Var decoder_forward_layers(ad::Graph& g, const DecoderConfig& config, const std::vector<ad::Var>& params,
                               ad::Var input, std::size_t first, std::size_t last) {
  if (first > last || last > config.layers.size()) throw UsageError("decoder layer range out of bounds");
  std::size_t p = 0, needed = 0;
  for (std::size_t i = 0; i < last; ++i) {
    const std::size_t n = config.layers[i].has_params() ? 2 : 0;
    if (i < first) p += n;
    needed += n;
  }
  if (params.size() < needed) throw DimensionError("decoder parameter count does not match its config");
  const std::size_t batch = g.value(input).dim(0);
  ad::Var x = input;
  for (std::size_t i = first; i < last; ++i) {
    const auto& l = config.layers[i];
    switch (l.kind) {
      case LayerKind::relu:
        x = ad::relu(g, x);
        break;
      case LayerKind::transposed_conv2d:
        x = ad::conv_transpose2d(g, x, params[p], params[p + 1], geometry(l));
        p += 2;
        break;
      case LayerKind::fully_connected: {
        const std::size_t features = g.value(x).size() / batch;
        if (g.value(x).rank() != 2) x = ad::reshape(g, x, {batch, features});
        x = ad::linear(g, x, params[p], params[p + 1]);
        p += 2;
        break;
      }
    }
  }
  return x;
}

Tensor decode_rows(const DecoderConfig& config, const DecoderParams& params, const Tensor& latent_rows) {
  ad::Graph g;
  const auto vars = [&] {
    std::vector<ad::Var> v;
    for (const auto& lp : params.layers) {
      v.push_back(g.constant(lp.weight));
      v.push_back(g.constant(lp.bias));
    }
    return v;
  }();
  ad::Var out = decoder_forward(g, config, vars, g.constant(latent_rows));
  return g.value(out);
}

namespace {

Tensor single_row(const LatentVector& latent, const DecoderConfig& config) {
  const Tensor flat = latent.flat();
  if (flat.size() != config.latent_len) {
    throw DimensionError("latent length " + std::to_string(flat.size()) + " does not match decoder input " +
                         std::to_string(config.latent_len));
  }
  return flat.reshaped({1, flat.size()});
}

}  // namespace

ImageTensor decode_visual(const LatentVector& latent, const DecoderConfig& config, const DecoderParams& params) {
  if (config.output != Modality::visual) throw ConfigError("decode_visual needs a visual decoder");
  const Tensor out = decode_rows(config, params, single_row(latent, config));
  ImageTensor img;
  img.height = config.output_shape[1];
  img.width = config.output_shape[2];
  img.pixels = out.vec();
  return img;
}

AudioClip decode_audio(const LatentVector& latent, const DecoderConfig& config, const DecoderParams& params) {
  if (config.output != Modality::audio) throw ConfigError("decode_audio needs an audio decoder");
  const Tensor out = decode_rows(config, params, single_row(latent, config));
  AudioClip clip;
  clip.samples = out.vec();
  return clip;
}

}  // namespace pcvae
