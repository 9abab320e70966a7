#pragma once

// Central-difference check of the summed visual and audio loss of a desk
// model against reverse-mode gradients, over every decoder weight and bias.
//
// Each probe evaluates the same full loss as training, computed cheaply: the
// activation entering the perturbed layer and the other decoder's loss do not
// depend on the perturbed tensor, so they are computed once and reused.

#include <cstdint>
#include <string>
#include <vector>

#include "pcvae/decoder.hpp"
#include "pcvae/training.hpp"

namespace gradsuite {

struct Report {
  double worst = 0.0;
  std::string where;
  std::size_t tensors = 0;
  std::size_t coordinates = 0;
  // The reused pieces reproduce the direct full loss bit for bit.
  bool consistent = true;
};

inline Report check_full_loss(std::uint64_t model_seed, std::uint64_t data_seed, std::uint64_t noise_seed,
                              double step = 1e-5) {
  using namespace pcvae;
  const ModelConfig model = resolve_model_preset("desk", std::nullopt, InputMode::joint);
  TrainConfig train;
  train.seed = model_seed;
  LossConfig loss_cfg;
  loss_cfg.projection_dim = 3;
  const ModelState st = init_model(model, train, loss_cfg);
  const auto data = synth_dataset(24, 8, 8, 64, data_seed);
  std::vector<const PairedSample*> ptrs;
  for (const auto& s : data) ptrs.push_back(&s);
  const Tensor z = encode_rows(st, ptrs, Rng(noise_seed));
  const Tensor img = target_rows(ptrs, Modality::visual), aud = target_rows(ptrs, Modality::audio);

  const DecoderState* decs[2] = {&*st.visual, &*st.audio};
  const Tensor* own[2] = {&img, &aud};
  const Tensor* other[2] = {&aud, &img};
  auto term = [&](ad::Graph& g, int d, ad::Var y) {
    return pcvae::loss(g, *own[d], *other[d], y, st.loss, decs[d]->projections).total;
  };

  Tensor fixed[2];
  for (int d = 0; d < 2; ++d) {
    ad::Graph g;
    const auto pv = bind_params(g, decs[d]->params);
    fixed[d] = g.value(term(g, d, decoder_forward(g, decs[d]->config, pv, g.constant(z))));
  }
  double direct;
  {
    ad::Graph g;
    direct = g.value(ad::add(g, g.constant(fixed[0]), g.constant(fixed[1])))[0];
  }

  Report report;
  for (int d = 0; d < 2; ++d) {
    const DecoderConfig& cfg = decs[d]->config;
    const DecoderParams& params = decs[d]->params;
    std::size_t k = 0;
    for (std::size_t layer = 0; layer < cfg.layers.size(); ++layer) {
      if (!cfg.layers[layer].has_params()) continue;
      Tensor prefix;
      {
        ad::Graph g;
        const auto pv = bind_params(g, params);
        const ad::Var x = ad::reshape(g, g.constant(z), {z.dim(0), cfg.latent_len, 1, 1});
        prefix = g.value(decoder_forward_layers(g, cfg, pv, x, 0, layer));
      }
      const std::size_t first_param = k;
      for (int part = 0; part < 2; ++part, ++k) {
        const Tensor& point = part == 0 ? params.layers[k / 2].weight : params.layers[k / 2].bias;
        auto f = [&](ad::Graph& g, ad::Var v) {
          // Layers below `layer` are already folded into `prefix`.
          std::vector<ad::Var> pv;
          const ad::Var unused = g.constant(Tensor({1}));
          for (std::size_t i = 0; i < 2 * params.layers.size(); ++i) {
            const auto& pl = params.layers[i / 2];
            pv.push_back(i == k ? v : i < first_param ? unused : g.constant(i % 2 ? pl.bias : pl.weight));
          }
          const ad::Var out = decoder_forward_layers(g, cfg, pv, g.constant(prefix), layer, cfg.layers.size());
          const ad::Var y = ad::reshape(g, out, {z.dim(0), cfg.output_numel()});
          const ad::Var mine = term(g, d, y), rest = g.constant(fixed[1 - d]);
          return d == 0 ? ad::add(g, mine, rest) : ad::add(g, rest, mine);
        };
        {
          ad::Graph g;
          report.consistent = report.consistent && g.value(f(g, g.parameter(point)))[0] == direct;
        }
        const double err = ad::grad_check(f, point, step);
        if (err > report.worst) {
          report.worst = err;
          report.where = cfg.preset + (part == 0 ? " weight " : " bias ") + std::to_string(k / 2);
        }
        ++report.tensors;
        report.coordinates += point.size();
      }
    }
  }
  return report;
}

}  // namespace gradsuite
