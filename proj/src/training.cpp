#include "pcvae/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pcvae/errors.hpp"

namespace pcvae {

namespace {

// Keys for derived seeds; each names one independent random stream.
constexpr std::uint64_t kVisualBankKey = 101;
constexpr std::uint64_t kAudioBankKey = 102;
constexpr std::uint64_t kVisualDecoderKey = 201;
constexpr std::uint64_t kAudioDecoderKey = 202;
constexpr std::uint64_t kVisualProjectionKey = 301;
constexpr std::uint64_t kAudioProjectionKey = 302;
constexpr std::uint64_t kPluginKey = 401;
constexpr std::uint64_t kEpochStreamKey = 501;
constexpr std::uint64_t kRecordNoiseKey = 502;
constexpr std::uint64_t kInitScaleKey = 503;
constexpr std::size_t kRecordDraws = 8;

std::uint64_t modality_index(Modality m) { return m == Modality::visual ? 0 : 1; }

Tensor projection(std::size_t d, std::size_t dim, Rng rng) {
  Tensor p = gaussian_matrix(d, dim, rng);
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  for (double& v : p.data()) v *= s;
  return p;
}

std::vector<const PairedSample*> split_of(const std::vector<PairedSample>& dataset, const std::string& split) {
  std::vector<const PairedSample*> out;
  for (const auto& s : dataset)
    if (s.split == split) out.push_back(&s);
  return out;
}

void check_sample_shapes(const ModelConfig& m, const std::vector<const PairedSample*>& samples) {
  for (const auto* s : samples) {
    if (s->image.height != m.image_h || s->image.width != m.image_w || s->image.size() != m.image_numel())
      throw DimensionError("sample " + s->id + ": image is " + std::to_string(s->image.height) + "x" +
                           std::to_string(s->image.width) + ", model expects " + std::to_string(m.image_h) + "x" +
                           std::to_string(m.image_w));
    if (s->audio.samples.size() != m.audio_len)
      throw DimensionError("sample " + s->id + ": audio has " + std::to_string(s->audio.samples.size()) +
                           " samples, model expects " + std::to_string(m.audio_len));
  }
}

// Mean codes [n, code] of one modality. Encoders are frozen, so these are
// computed once per call and reused across epochs.
Tensor mean_rows(const EncoderBank& bank, const std::vector<const PairedSample*>& samples) {
  Tensor out({samples.size(), bank.out_dim});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Tensor mu = bank.modality == Modality::visual ? encode_mean(bank, samples[i]->image)
                                                        : encode_mean(bank, samples[i]->audio);
    std::copy(mu.data().begin(), mu.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * bank.out_dim));
  }
  return out;
}

Tensor gather_rows(const Tensor& rows, const std::vector<std::size_t>& idx) {
  const std::size_t w = rows.dim(1);
  Tensor out({idx.size(), w});
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(rows.data().begin() + static_cast<std::ptrdiff_t>(idx[i] * w), w,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * w));
  return out;
}

Tensor hconcat(const std::vector<const Tensor*>& parts) {
  const std::size_t n = parts.front()->dim(0);
  std::size_t w = 0;
  for (const auto* p : parts) w += p->dim(1);
  Tensor out({n, w});
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t c0 = 0;
    for (const auto* p : parts) {
      for (std::size_t c = 0; c < p->dim(1); ++c) out.at(r, c0 + c) = p->at(r, c);
      c0 += p->dim(1);
    }
  }
  return out;
}

// Latent rows from precomputed mean codes: visual part first.
Tensor latent_from_means(const ModelState& st, const Tensor* mu_v, const Tensor* mu_a, const Rng& noise) {
  std::vector<Tensor> z;
  if (mu_v) {
    const double sigma =
        st.train.sigma_scope == SigmaScope::dataset ? st.dataset_sigma_visual : batch_sigma(*mu_v);
    z.push_back(reparameterize_rows(*mu_v, sigma, noise.child(modality_index(Modality::visual))));
  }
  if (mu_a) {
    const double sigma = st.train.sigma_scope == SigmaScope::dataset ? st.dataset_sigma_audio : batch_sigma(*mu_a);
    z.push_back(reparameterize_rows(*mu_a, sigma, noise.child(modality_index(Modality::audio))));
  }
  std::vector<const Tensor*> parts;
  for (const auto& t : z) parts.push_back(&t);
  return hconcat(parts);
}

double row_sq_error_mean(const Tensor& y, const Tensor& x) {
  std::vector<double> per_row(y.dim(0));
  const std::size_t w = y.dim(1);
  for (std::size_t r = 0; r < y.dim(0); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < w; ++c) {
      const double d = y.at(r, c) - x.at(r, c);
      s += d * d;
    }
    per_row[r] = s;
  }
  return ordered_sum(per_row) / static_cast<double>(y.dim(0));
}

double plugin_ii_bits(const Tensor& x1, const Tensor& x2, const Tensor& y, const LossConfig& cfg, Modality m) {
  info::SampleBatch batch{x1, x2, y};
  const auto summarizer = info::projection_summarizer(x1.dim(1), x2.dim(1), y.dim(1),
                                                      Rng::derive_seed(cfg.seed, kPluginKey + modality_index(m)));
  return info::interaction_info(info::quantize(batch, cfg.plugin_bins, summarizer));
}

DecoderState make_decoder(const ModelConfig& m, Modality out, std::uint64_t train_seed, const LossConfig& loss) {
  DecoderState d;
  d.config = decoder_preset(m.family + (out == Modality::visual ? "-visual" : "-audio"), m.latent_len());
  const auto expected = out == Modality::visual ? Shape{3, m.image_h, m.image_w} : Shape{m.audio_len};
  if (d.config.output_shape != expected)
    throw ConfigError("decoder preset " + d.config.preset + " produces " + shape_str(d.config.output_shape) +
                      " but the data is " + shape_str(expected));
  Rng init(Rng::derive_seed(train_seed, out == Modality::visual ? kVisualDecoderKey : kAudioDecoderKey));
  d.params = init_decoder(d.config, init);
  for (const auto& layer : d.params.layers) {
    d.adam_m.push_back(Tensor::zeros_like(layer.weight));
    d.adam_m.push_back(Tensor::zeros_like(layer.bias));
  }
  d.adam_v = d.adam_m;
  const std::size_t dim1 = out == Modality::visual ? m.image_numel() : m.audio_len;
  const std::size_t dim2 = out == Modality::visual ? m.audio_len : m.image_numel();
  const std::uint64_t seed = Rng::derive_seed(loss.seed, out == Modality::visual ? kVisualProjectionKey
                                                                                  : kAudioProjectionKey);
  Rng prng(seed);
  d.projections.x1 = projection(loss.projection_dim, dim1, prng.child(0));
  d.projections.x2 = projection(loss.projection_dim, dim2, prng.child(1));
  d.projections.y = d.projections.x1;
  return d;
}

void adam_update(DecoderState& d, const std::vector<Tensor>& grads, const TrainConfig& cfg, std::uint64_t step) {
  const double c1 = 1.0 - std::pow(TrainConfig::beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(TrainConfig::beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    Tensor& p = i % 2 == 0 ? d.params.layers[i / 2].weight : d.params.layers[i / 2].bias;
    auto m = d.adam_m[i].data();
    auto v = d.adam_v[i].data();
    auto g = grads[i].data();
    auto w = p.data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = TrainConfig::beta1 * m[k] + (1.0 - TrainConfig::beta1) * g[k];
      v[k] = TrainConfig::beta2 * v[k] + (1.0 - TrainConfig::beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] -= cfg.step_size * mhat / (std::sqrt(vhat) + TrainConfig::epsilon);
    }
  }
}

std::string opt_field(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

const char* to_string(IiBackend b) { return b == IiBackend::gaussian ? "gaussian" : "off"; }

const char* to_string(InputMode m) {
  switch (m) {
    case InputMode::joint: return "joint";
    case InputMode::visual_only: return "visual-only";
    case InputMode::audio_only: return "audio-only";
  }
  return "?";
}

const char* to_string(SigmaScope s) { return s == SigmaScope::batch ? "batch" : "dataset"; }

IiBackend parse_ii_backend(const std::string& s) {
  if (s == "gaussian") return IiBackend::gaussian;
  if (s == "off") return IiBackend::off;
  throw ConfigError("unknown II backend '" + s + "' (expected gaussian or off)");
}

InputMode parse_input_mode(const std::string& s) {
  if (s == "joint") return InputMode::joint;
  if (s == "visual-only") return InputMode::visual_only;
  if (s == "audio-only") return InputMode::audio_only;
  throw ConfigError("unknown mode '" + s + "' (expected joint, audio-only or visual-only)");
}

SigmaScope parse_sigma_scope(const std::string& s) {
  if (s == "batch") return SigmaScope::batch;
  if (s == "dataset") return SigmaScope::dataset;
  throw ConfigError("unknown sigma scope '" + s + "' (expected batch or dataset)");
}

void LossConfig::validate() const {
  if (!std::isfinite(ii_weight) || !std::isfinite(recon_weight) || ii_weight < 0 || recon_weight < 0)
    throw ConfigError("loss weights must be finite and non-negative");
  if (projection_dim == 0) throw ConfigError("projection dimension must be positive");
  if (!(ridge > 0) || !std::isfinite(ridge)) throw ConfigError("ridge must be positive");
  if (plugin_bins < 2) throw ConfigError("plug-in estimator needs at least 2 bins");
}

void TrainConfig::validate(const LossConfig& loss) const {
  loss.validate();
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(step_size > 0) || !std::isfinite(step_size)) throw ConfigError("step size must be positive");
  if (loss.ii_backend == IiBackend::gaussian && batch_size <= 3 * loss.projection_dim + 2)
    throw ConfigError("batch size " + std::to_string(batch_size) + " is too small for the Gaussian II estimate (needs > " +
                      std::to_string(3 * loss.projection_dim + 2) + ")");
}

std::size_t ModelConfig::latent_len() const {
  return (uses_visual_input() ? visual_code : 0) + (uses_audio_input() ? audio_code : 0);
}

ModelConfig resolve_model_preset(const std::string& preset, std::optional<std::size_t> latent, InputMode mode) {
  ModelConfig m;
  m.mode = mode;
  if (preset == "desk") {
    m.family = "desk";
    m.image_h = m.image_w = 8;
    m.audio_len = 64;
    m.stripes = 6;
    m.segments = 2;
  } else if (preset == "paper" || preset == "paper-visual" || preset == "paper-audio") {
    m.family = "paper";
    m.image_h = m.image_w = 32;
    m.audio_len = 2205;
    m.stripes = 6;
    m.segments = 5;
  } else {
    throw ConfigError("unknown preset '" + preset + "' (expected desk, paper, paper-visual or paper-audio)");
  }
  const std::size_t def = m.family == "desk" ? 16 : (mode == InputMode::joint ? 300 : 200);
  const std::size_t len = latent.value_or(def);
  if (len == 0) throw ConfigError("latent length must be positive");
  if (mode == InputMode::joint) {
    if (len % 2 != 0)
      throw ConfigError("joint latent length " + std::to_string(len) + " must split evenly between modalities");
    m.visual_code = m.audio_code = len / 2;
  } else {
    m.visual_code = m.audio_code = len;
  }
  if (m.uses_visual_input() && m.visual_code >= m.stripe_len())
    throw ConfigError("visual code length " + std::to_string(m.visual_code) + " does not compress stripes of length " +
                      std::to_string(m.stripe_len()));
  if (m.uses_audio_input() && m.audio_code >= m.segment_len())
    throw ConfigError("audio code length " + std::to_string(m.audio_code) + " does not compress segments of length " +
                      std::to_string(m.segment_len()));
  return m;
}

ModelState init_model(const ModelConfig& model, const TrainConfig& train, const LossConfig& loss) {
  train.validate(loss);
  if ((model.image_numel() % model.stripes) != 0 || model.stripes % 3 != 0 || model.image_w % (model.stripes / 3) != 0)
    throw TokenizationError("image " + std::to_string(model.image_h) + "x" + std::to_string(model.image_w) +
                            " cannot be cut into " + std::to_string(model.stripes) + " stripes");
  if (model.audio_len % model.segments != 0)
    throw TokenizationError("audio length " + std::to_string(model.audio_len) + " is not divisible into " +
                            std::to_string(model.segments) + " segments");
  ModelState st;
  st.model = model;
  st.train = train;
  st.loss = loss;
  if (model.uses_visual_input())
    st.banks.visual = build_bank(Modality::visual, model.stripe_len(), model.visual_code, model.stripes,
                                 Rng::derive_seed(train.seed, kVisualBankKey));
  if (model.uses_audio_input())
    st.banks.audio = build_bank(Modality::audio, model.segment_len(), model.audio_code, model.segments,
                                Rng::derive_seed(train.seed, kAudioBankKey));
  if (model.has_visual_decoder()) st.visual = make_decoder(model, Modality::visual, train.seed, loss);
  if (model.has_audio_decoder()) st.audio = make_decoder(model, Modality::audio, train.seed, loss);
  return st;
}

LossTerms loss(ad::Graph& g, const Tensor& x1, const Tensor& x2, ad::Var y, const LossConfig& cfg,
               const info::GaussianProjections& proj) {
  const Tensor& yv = g.value(y);
  if (yv.rank() != 2 || yv.shape() != x1.shape())
    throw DimensionError("decoder output " + shape_str(yv.shape()) + " does not match targets " + shape_str(x1.shape()));
  if (x2.rank() != 2 || x2.dim(0) != x1.dim(0)) throw DimensionError("x2 rows do not match x1 rows");
  const auto batch = static_cast<double>(x1.dim(0));
  LossTerms t;
  t.mse = scale(g, reduce_sum(g, square(g, sub(g, y, g.constant(x1)))), 1.0 / batch);
  t.ii = cfg.ii_backend == IiBackend::gaussian ? info::interaction_info_gaussian(g, x1, x2, y, proj, cfg.ridge)
                                               : g.constant(Tensor({1}, 0.0));
  t.total = add(g, scale(g, t.ii, cfg.ii_weight), scale(g, t.mse, cfg.recon_weight));
  return t;
}

std::string TrainHistory::to_csv() const {
  std::ostringstream os;
  os << "epoch,total_loss,ii_nats,ii_plugin_bits,mse_visual,mse_audio\n";
  for (const auto& e : epochs)
    os << e.epoch << ',' << format_double(e.total_loss) << ',' << opt_field(e.ii_nats) << ','
       << opt_field(e.ii_plugin_bits) << ',' << opt_field(e.mse_visual) << ',' << opt_field(e.mse_audio) << '\n';
  return os.str();
}

Tensor target_rows(const std::vector<const PairedSample*>& samples, Modality modality) {
  if (samples.empty()) throw DimensionError("no samples");
  const std::size_t w =
      modality == Modality::visual ? samples.front()->image.size() : samples.front()->audio.samples.size();
  Tensor out({samples.size(), w});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& src = modality == Modality::visual ? samples[i]->image.pixels : samples[i]->audio.samples;
    if (src.size() != w) throw DimensionError("sample " + samples[i]->id + " differs in size from the first sample");
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * w));
  }
  return out;
}

Tensor encode_rows(const ModelState& state, const std::vector<const PairedSample*>& samples, const Rng& noise) {
  check_sample_shapes(state.model, samples);
  std::optional<Tensor> mu_v, mu_a;
  if (state.banks.visual) mu_v = mean_rows(*state.banks.visual, samples);
  if (state.banks.audio) mu_a = mean_rows(*state.banks.audio, samples);
  return latent_from_means(state, mu_v ? &*mu_v : nullptr, mu_a ? &*mu_a : nullptr, noise);
}

Tensor mean_latent_rows(const ModelState& state, const std::vector<const PairedSample*>& samples) {
  check_sample_shapes(state.model, samples);
  std::vector<Tensor> mu;
  if (state.banks.visual) mu.push_back(mean_rows(*state.banks.visual, samples));
  if (state.banks.audio) mu.push_back(mean_rows(*state.banks.audio, samples));
  std::vector<const Tensor*> parts;
  for (const auto& t : mu) parts.push_back(&t);
  return hconcat(parts);
}

TrainHistory train_epochs(ModelState& st, const std::vector<PairedSample>& dataset, std::size_t epochs,
                          const EpochCallback& on_epoch) {
  const auto samples = split_of(dataset, "train");
  if (samples.empty()) throw UsageError("dataset has no training samples");
  check_sample_shapes(st.model, samples);
  st.train.validate(st.loss);
  const std::size_t n = samples.size();
  const std::size_t batch = std::min(st.train.batch_size, n);
  if (st.loss.ii_backend == IiBackend::gaussian && batch <= 3 * st.loss.projection_dim + 2)
    throw ConfigError("only " + std::to_string(n) + " training samples; the Gaussian II estimate needs more than " +
                      std::to_string(3 * st.loss.projection_dim + 2) + " per batch");

  std::optional<Tensor> mu_v, mu_a;
  if (st.banks.visual) mu_v = mean_rows(*st.banks.visual, samples);
  if (st.banks.audio) mu_a = mean_rows(*st.banks.audio, samples);
  if (mu_v) st.dataset_sigma_visual = batch_sigma(*mu_v);
  if (mu_a) st.dataset_sigma_audio = batch_sigma(*mu_a);
  const Tensor img = target_rows(samples, Modality::visual);
  const Tensor aud = target_rows(samples, Modality::audio);

  struct Head {
    DecoderState* dec;
    Modality modality;
  };
  std::vector<Head> heads;
  if (st.visual) heads.push_back({&*st.visual, Modality::visual});
  if (st.audio) heads.push_back({&*st.audio, Modality::audio});

  const std::size_t n_batches = std::max<std::size_t>(1, n / batch);
  const auto batch_range = [&](std::size_t b) {
    const std::size_t lo = b * batch;
    return std::pair{lo, b + 1 == n_batches ? n : lo + batch};
  };

  struct BatchResult {
    double total = 0.0;
    double ii = 0.0;
    std::vector<double> mse;
    std::vector<Tensor> outputs;
  };
  // Forward (and optionally backward + Adam step) over the samples `idx`.
  const auto run_batch = [&](const std::vector<std::size_t>& idx, const Rng& noise, bool update,
                             const std::string& where) {
    std::optional<Tensor> bv, ba;
    if (mu_v) bv = gather_rows(*mu_v, idx);
    if (mu_a) ba = gather_rows(*mu_a, idx);
    const Tensor z = latent_from_means(st, bv ? &*bv : nullptr, ba ? &*ba : nullptr, noise);
    const Tensor bimg = gather_rows(img, idx);
    const Tensor baud = gather_rows(aud, idx);

    ad::Graph g;
    const ad::Var latent = g.constant(z);
    std::vector<std::vector<ad::Var>> params;
    std::vector<ad::Var> ys;
    ad::Var total, ii_sum;
    BatchResult r;
    for (const auto& h : heads) {
      params.push_back(bind_params(g, h.dec->params));
      const ad::Var y = decoder_forward(g, h.dec->config, params.back(), latent);
      ys.push_back(y);
      const Tensor& x1 = h.modality == Modality::visual ? bimg : baud;
      const Tensor& x2 = h.modality == Modality::visual ? baud : bimg;
      const LossTerms t = loss(g, x1, x2, y, st.loss, h.dec->projections);
      total = total.valid() ? add(g, total, t.total) : t.total;
      ii_sum = ii_sum.valid() ? add(g, ii_sum, t.ii) : t.ii;
      r.mse.push_back(g.value(t.mse)[0]);
      r.outputs.push_back(g.value(y));
    }
    r.total = g.value(total)[0];
    r.ii = g.value(ii_sum)[0];
    if (!std::isfinite(r.total)) throw TrainingError("loss became non-finite in " + where);
    if (update) {
      g.backward(total);
      ++st.adam_step;
      for (std::size_t k = 0; k < heads.size(); ++k) {
        std::vector<Tensor> grads;
        for (const auto& p : params[k]) grads.push_back(g.grad(p));
        for (const auto& gr : grads)
          if (!gr.all_finite()) throw TrainingError("non-finite gradient in " + where);
        adam_update(*heads[k].dec, grads, st.train, st.adam_step);
      }
    }
    return r;
  };

  // The recorded epoch loss is the objective after the epoch's updates,
  // averaged over fixed unshuffled batches and kRecordDraws noise draws that
  // repeat every epoch, so consecutive records differ only through the
  // parameters.
  const Rng record_noise(Rng::derive_seed(st.train.seed, kRecordNoiseKey));
  const auto record = [&](std::size_t epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    std::vector<double> totals, iis;
    std::vector<std::vector<double>> mses(heads.size());
    std::vector<Tensor> outputs;
    for (const auto& h : heads) outputs.emplace_back(Shape{n, h.dec->config.output_numel()});
    for (std::size_t b = 0; b < n_batches; ++b) {
      const auto [lo, hi] = batch_range(b);
      std::vector<std::size_t> idx(hi - lo);
      std::iota(idx.begin(), idx.end(), lo);
      BatchResult r;
      for (std::size_t q = 0; q < kRecordDraws; ++q) {
        r = run_batch(idx, record_noise.child(b).child(q), false,
                      "the loss record after epoch " + std::to_string(epoch));
        totals.push_back(r.total);
        iis.push_back(r.ii);
        for (std::size_t k = 0; k < heads.size(); ++k) mses[k].push_back(r.mse[k]);
      }
      for (std::size_t k = 0; k < heads.size(); ++k) {
        const std::size_t w = r.outputs[k].dim(1);
        std::copy(r.outputs[k].data().begin(), r.outputs[k].data().end(),
                  outputs[k].data().begin() + static_cast<std::ptrdiff_t>(lo * w));
      }
    }
    const auto nb = static_cast<double>(totals.size());
    rec.total_loss = ordered_sum(totals) / nb;
    if (st.loss.ii_backend == IiBackend::gaussian) {
      rec.ii_nats = ordered_sum(iis) / nb;
      double bits = 0.0;
      for (std::size_t k = 0; k < heads.size(); ++k) {
        const bool vis = heads[k].modality == Modality::visual;
        bits += plugin_ii_bits(vis ? img : aud, vis ? aud : img, outputs[k], st.loss, heads[k].modality);
      }
      rec.ii_plugin_bits = bits;
    }
    for (std::size_t k = 0; k < heads.size(); ++k)
      (heads[k].modality == Modality::visual ? rec.mse_visual : rec.mse_audio) = ordered_sum(mses[k]) / nb;
    return rec;
  };

  // The frozen encoders emit codes far from unit scale, so before the first
  // update the first decoder layer is divided by the RMS of the training
  // latents; its pre-activations then start at the scale the fan-in
  // initialization assumes.
  if (st.adam_step == 0 && epochs > 0) {
    const Tensor z = latent_from_means(st, mu_v ? &*mu_v : nullptr, mu_a ? &*mu_a : nullptr,
                                       Rng(Rng::derive_seed(st.train.seed, kInitScaleKey)));
    std::vector<double> sq(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) sq[i] = z[i] * z[i];
    const double rms = std::sqrt(ordered_sum(sq) / static_cast<double>(z.size()));
    if (rms > 0.0)
      for (const auto& h : heads)
        for (double& w : h.dec->params.layers.front().weight.data()) w /= rms;
  }

  TrainHistory history;
  const std::uint64_t stream = Rng::derive_seed(st.train.seed, kEpochStreamKey);
  for (std::size_t run = 0; run < epochs; ++run) {
    const std::size_t epoch = st.epochs_completed + 1;
    Rng erng(Rng::derive_seed(stream, epoch));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[erng.below(i)]);
    for (std::size_t b = 0; b < n_batches; ++b) {
      const auto [lo, hi] = batch_range(b);
      const std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(lo),
                                         perm.begin() + static_cast<std::ptrdiff_t>(hi));
      run_batch(idx, erng.child(b), true, "epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1));
    }
    st.epochs_completed = epoch;
    history.epochs.push_back(record(epoch));
    if (on_epoch) on_epoch(st, history.epochs.back());
  }
  return history;
}

TrainResult train(const std::vector<PairedSample>& dataset, const ModelConfig& model, const TrainConfig& train_cfg,
                  const LossConfig& loss_cfg, const EpochCallback& on_epoch) {
  TrainResult r{init_model(model, train_cfg, loss_cfg), {}};
  r.history = train_epochs(r.state, dataset, train_cfg.epochs, on_epoch);
  return r;
}

EvalMetrics evaluate(const ModelState& st, const std::vector<PairedSample>& dataset, const std::string& split,
                     bool with_ii, std::uint64_t seed) {
  const auto samples = split_of(dataset, split);
  if (samples.empty()) throw UsageError("split '" + split + "' has no samples");
  check_sample_shapes(st.model, samples);
  const auto train_samples = split_of(dataset, "train");

  EvalMetrics m;
  m.split = split;
  m.count = samples.size();
  const Tensor z = encode_rows(st, samples, Rng(seed));
  const Tensor img = target_rows(samples, Modality::visual);
  const Tensor aud = target_rows(samples, Modality::audio);

  double plugin = 0.0, gauss = 0.0;
  bool gauss_ok = samples.size() > 3 * st.loss.projection_dim + 2;
  for (const auto* dec : {st.visual ? &*st.visual : nullptr, st.audio ? &*st.audio : nullptr}) {
    if (!dec) continue;
    const bool vis = dec->config.output == Modality::visual;
    const Tensor& x1 = vis ? img : aud;
    const Tensor& x2 = vis ? aud : img;
    const Tensor y = decode_rows(dec->config, dec->params, z);
    (vis ? m.mse_visual : m.mse_audio) = row_sq_error_mean(y, x1);
    if (!train_samples.empty()) {
      const Tensor tr = target_rows(train_samples, dec->config.output);
      Tensor base(x1.shape());
      for (std::size_t c = 0; c < tr.dim(1); ++c) {
        std::vector<double> col(tr.dim(0));
        for (std::size_t r = 0; r < tr.dim(0); ++r) col[r] = tr.at(r, c);
        const double mean = ordered_sum(col) / static_cast<double>(col.size());
        for (std::size_t r = 0; r < base.dim(0); ++r) base.at(r, c) = mean;
      }
      (vis ? m.baseline_mse_visual : m.baseline_mse_audio) = row_sq_error_mean(base, x1);
    }
    if (with_ii) {
      plugin += plugin_ii_bits(x1, x2, y, st.loss, dec->config.output);
      if (gauss_ok) gauss += info::interaction_info_gaussian(info::SampleBatch{x1, x2, y}, dec->projections,
                                                             st.loss.ridge);
    }
  }
  if (with_ii) {
    m.ii_plugin_bits = plugin;
    if (gauss_ok) m.ii_gaussian_nats = gauss;
  }
  return m;
}

std::string eval_csv_header() {
  return "split,count,mse_visual,mse_audio,baseline_mse_visual,baseline_mse_audio,ii_plugin_bits,ii_gauss_nats";
}

std::string eval_csv_row(const EvalMetrics& m) {
  std::ostringstream os;
  os << m.split << ',' << m.count << ',' << opt_field(m.mse_visual) << ',' << opt_field(m.mse_audio) << ','
     << opt_field(m.baseline_mse_visual) << ',' << opt_field(m.baseline_mse_audio) << ','
     << opt_field(m.ii_plugin_bits) << ',' << opt_field(m.ii_gaussian_nats);
  return os.str();
}

}  // namespace pcvae
