#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pcvae/autodiff.hpp"
#include "pcvae/data_io.hpp"
#include "pcvae/decoder.hpp"
#include "pcvae/encoder.hpp"
#include "pcvae/infotheory.hpp"

namespace pcvae {

enum class IiBackend { gaussian, off };
enum class InputMode { joint, visual_only, audio_only };
enum class SigmaScope { batch, dataset };

const char* to_string(IiBackend b);
const char* to_string(InputMode m);
const char* to_string(SigmaScope s);
IiBackend parse_ii_backend(const std::string& s);
InputMode parse_input_mode(const std::string& s);
SigmaScope parse_sigma_scope(const std::string& s);

struct LossConfig {
  IiBackend ii_backend = IiBackend::gaussian;
  double ii_weight = 1.0;
  double recon_weight = 1.0;
  std::size_t projection_dim = 8;
  double ridge = 1e-6;
  std::uint64_t seed = 1;  // projections and plug-in summarizers
  std::size_t plugin_bins = 16;

  void validate() const;
};

/// Adam with beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8 and bias correction.
struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double step_size = 1e-3;
  std::uint64_t seed = 1;
  InputMode mode = InputMode::joint;
  SigmaScope sigma_scope = SigmaScope::batch;

  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double epsilon = 1e-8;

  void validate(const LossConfig& loss) const;
};

/// Data shapes, tokenization, and code lengths of one model.
struct ModelConfig {
  std::string family = "desk";  // decoder presets are "<family>-visual" / "<family>-audio"
  InputMode mode = InputMode::joint;
  std::size_t image_h = 8;
  std::size_t image_w = 8;
  std::size_t audio_len = 64;
  std::size_t stripes = 6;   // L
  std::size_t segments = 2;  // M
  std::size_t visual_code = 8;
  std::size_t audio_code = 8;

  bool uses_visual_input() const { return mode != InputMode::audio_only; }
  bool uses_audio_input() const { return mode != InputMode::visual_only; }
  // Joint training trains both decoders; single-modality input trains only
  // the cross-modal decoder.
  bool has_visual_decoder() const { return mode != InputMode::visual_only; }
  bool has_audio_decoder() const { return mode != InputMode::audio_only; }
  std::size_t latent_len() const;
  std::size_t stripe_len() const { return image_h * image_w * 3 / stripes; }
  std::size_t segment_len() const { return audio_len / segments; }
  std::size_t image_numel() const { return image_h * image_w * 3; }
};

/// "desk" (8x8x3 images, 64-sample audio) or "paper" (32x32x3, 2205
/// samples); "paper-visual" and "paper-audio" are accepted aliases of
/// "paper". Joint latents split evenly between modalities; single-modality
/// latents go entirely to the present modality. Defaults: desk 16, paper
/// 300 (joint) or 200 (single modality).
ModelConfig resolve_model_preset(const std::string& preset, std::optional<std::size_t> latent, InputMode mode);

struct DecoderState {
  DecoderConfig config;
  DecoderParams params;
  /// y is projected with the same matrix as x1 (same modality).
  info::GaussianProjections projections;
  std::vector<Tensor> adam_m;
  std::vector<Tensor> adam_v;
};

struct ModelState {
  ModelConfig model;
  TrainConfig train;
  LossConfig loss;
  EncoderBanks banks;
  std::optional<DecoderState> visual;
  std::optional<DecoderState> audio;
  std::size_t epochs_completed = 0;
  std::uint64_t adam_step = 0;
  double dataset_sigma_visual = 0.0;
  double dataset_sigma_audio = 0.0;
};

/// Banks, decoders, and projections drawn from seeds derived from
/// train.seed (banks, decoders) and loss.seed (projections).
ModelState init_model(const ModelConfig& model, const TrainConfig& train, const LossConfig& loss);

struct LossTerms {
  ad::Var total;
  ad::Var ii;   // nats; constant 0 when the backend is off
  ad::Var mse;  // mean over the batch of the squared error norm
};

/// ii_weight * II(x1, x2; y) + recon_weight * mean_b ||y_b - x1_b||^2.
/// x1 are targets of y's modality, x2 the other modality; rows are samples.
LossTerms loss(ad::Graph& g, const Tensor& x1, const Tensor& x2, ad::Var y, const LossConfig& cfg,
               const info::GaussianProjections& proj);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double total_loss = 0.0;
  std::optional<double> ii_nats;
  std::optional<double> ii_plugin_bits;
  std::optional<double> mse_visual;
  std::optional<double> mse_audio;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  /// Header `epoch,total_loss,ii_nats,ii_plugin_bits,mse_visual,mse_audio`;
  /// absent values are empty fields.
  std::string to_csv() const;
};

using EpochCallback = std::function<void(const ModelState&, const EpochRecord&)>;

/// Runs `epochs` further epochs starting at state.epochs_completed. Only the
/// "train" split is used. Epoch e shuffles and draws noise from a generator
/// keyed by (train.seed, e) alone, so resuming from a checkpoint replays
/// exactly what an uninterrupted run would do. The last batch absorbs the
/// remainder when the batch size does not divide the sample count.
TrainHistory train_epochs(ModelState& state, const std::vector<PairedSample>& dataset, std::size_t epochs,
                          const EpochCallback& on_epoch = {});

struct TrainResult {
  ModelState state;
  TrainHistory history;
};

TrainResult train(const std::vector<PairedSample>& dataset, const ModelConfig& model, const TrainConfig& train_cfg,
                  const LossConfig& loss_cfg, const EpochCallback& on_epoch = {});

/// Encodes samples into [n, latent_len] latent rows: mean codes, sigma per
/// the state's scope (batch = these samples), noise rows from `noise`.
Tensor encode_rows(const ModelState& state, const std::vector<const PairedSample*>& samples, const Rng& noise);

/// Noise-free latent rows: the mean codes alone, visual first.
Tensor mean_latent_rows(const ModelState& state, const std::vector<const PairedSample*>& samples);

/// Sample rows of one modality: images channel-major, audio as is.
Tensor target_rows(const std::vector<const PairedSample*>& samples, Modality modality);

struct EvalMetrics {
  std::string split;
  std::size_t count = 0;
  std::optional<double> mse_visual;
  std::optional<double> mse_audio;
  // MSE of always predicting the mean training image / clip.
  std::optional<double> baseline_mse_visual;
  std::optional<double> baseline_mse_audio;
  std::optional<double> ii_plugin_bits;
  std::optional<double> ii_gaussian_nats;
};

EvalMetrics evaluate(const ModelState& state, const std::vector<PairedSample>& dataset, const std::string& split,
                     bool with_ii, std::uint64_t seed);

std::string eval_csv_header();
std::string eval_csv_row(const EvalMetrics& m);

/// Ordered key=value description of a configuration, including the decoder
/// presets and their output shapes; allocates no parameters.
std::map<std::string, std::string> describe_config(const ModelConfig& model, const TrainConfig& train,
                                                   const LossConfig& loss);
/// describe_config plus training progress and bank identities.
std::map<std::string, std::string> describe(const ModelState& state);

/// Magic "PCVAECKP", u32 version, u32 section count, a section table of
/// (u16 name length, name, u64 offset, u64 length), then the payloads. All
/// integers and doubles little-endian. Tensor payloads are u32 rank, u64
/// extents, f64 data; the "config" section is key=value text.
void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

/// Exact text form of a double (shortest round-trip representation).
std::string format_double(double v);
double parse_double(const std::string& s);

}  // namespace pcvae
