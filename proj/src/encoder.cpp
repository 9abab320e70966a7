#include "pcvae/encoder.hpp"

#include <cmath>
#include <string>

#include "pcvae/kernels.hpp"

namespace pcvae {

Tensor EncoderBank::matrix(std::size_t i) const {
  if (i >= count()) throw DimensionError("bank matrix index out of range");
  const std::size_t n = out_dim * in_dim;
  auto src = matrices.data().subspan(i * n, n);
  return Tensor({out_dim, in_dim}, std::vector<double>(src.begin(), src.end()));
}

EncoderBank build_bank(Modality modality, std::size_t in_dim, std::size_t out_dim, std::size_t count,
                       std::uint64_t seed) {
  if (count == 0) throw ConfigError("encoder bank needs at least one matrix");
  if (out_dim == 0 || in_dim == 0) throw ConfigError("encoder bank dimensions must be positive");
  if (out_dim >= in_dim) {
    throw ConfigError("compression needs out_dim < in_dim, got " + std::to_string(out_dim) + " >= " +
                      std::to_string(in_dim));
  }
  EncoderBank bank;
  bank.modality = modality;
  bank.in_dim = in_dim;
  bank.out_dim = out_dim;
  bank.seed = seed;
  bank.matrices = Tensor({count, out_dim, in_dim});
  const std::size_t n = out_dim * in_dim;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(Rng::derive_seed(seed, i));
    const Tensor m = gaussian_matrix(out_dim, in_dim, rng);
    std::copy(m.data().begin(), m.data().end(), bank.matrices.data().begin() + static_cast<long>(i * n));
  }
  return bank;
}

Tensor compress(const EncoderBank& bank, const TokenBundle& tokens) {
  if (tokens.modality != bank.modality) {
    throw DimensionError(std::string("compress: ") + modality_name(tokens.modality) + " tokens fed to a " +
                         modality_name(bank.modality) + " bank");
  }
  if (tokens.count() != bank.count() || tokens.token_len() != bank.in_dim) {
    throw DimensionError("compress: got " + std::to_string(tokens.count()) + " tokens of length " +
                         std::to_string(tokens.token_len()) + ", bank expects " + std::to_string(bank.count()) +
                         " of length " + std::to_string(bank.in_dim));
  }
  Tensor mu({bank.out_dim});
  kernels::bank_compress(bank.count(), bank.out_dim, bank.in_dim, bank.matrices.data(), tokens.tokens.data(),
                         mu.data());
  return mu;
}

namespace {

double squared_deviation(std::span<const double> values, std::size_t count, double sum) {
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return ss;
}

}  // namespace

double batch_sigma(std::span<const Tensor> mus) {
  std::size_t count = 0;
  double sum = 0.0;
  for (const auto& mu : mus) {
    count += mu.size();
    sum += ordered_sum(mu.data());
  }
  if (mus.empty() || count < 2) throw NumericError("batch_sigma needs at least 2 scalar elements");
  double ss = 0.0;
  for (const auto& mu : mus) ss += squared_deviation(mu.data(), count, sum);
  return std::sqrt(ss / static_cast<double>(count));
}

double batch_sigma(const Tensor& mu_rows) {
  if (mu_rows.size() < 2) throw NumericError("batch_sigma needs at least 2 scalar elements");
  const double sum = ordered_sum(mu_rows.data());
  const double ss = squared_deviation(mu_rows.data(), mu_rows.size(), sum);
  return std::sqrt(ss / static_cast<double>(mu_rows.size()));
}

Tensor reparameterize(const Tensor& mu, double sigma, Rng& rng) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw NumericError("reparameterize needs a finite sigma >= 0");
  Tensor z = mu;
  for (auto& v : z.data()) v += sigma * rng.gaussian();
  return z;
}

Tensor reparameterize_rows(const Tensor& mu_rows, double sigma, const Rng& rng) {
  if (mu_rows.rank() != 2) throw DimensionError("reparameterize_rows needs a [batch, dim] matrix");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw NumericError("reparameterize needs a finite sigma >= 0");
  Tensor z = mu_rows;
  const std::size_t dim = mu_rows.dim(1);
  for (std::size_t b = 0; b < mu_rows.dim(0); ++b) {
    Rng child = rng.child(b);
    for (std::size_t j = 0; j < dim; ++j) z.at(b, j) += sigma * child.gaussian();
  }
  return z;
}

std::size_t LatentVector::total_len() const {
  std::size_t n = 0;
  for (const auto& p : parts) n += p.values.size();
  return n;
}

Tensor LatentVector::flat() const {
  if (parts.empty()) throw ConfigError("latent vector has no parts");
  std::vector<double> out;
  out.reserve(total_len());
  for (const auto& p : parts) out.insert(out.end(), p.values.data().begin(), p.values.data().end());
  const std::size_t n = out.size();
  return Tensor({n}, std::move(out));
}

LatentVector build_latent(const std::optional<ModalityCode>& visual, const std::optional<ModalityCode>& audio) {
  if (!visual && !audio) throw ConfigError("latent needs at least one modality");
  LatentVector latent;
  for (const auto* code : {visual ? &*visual : nullptr, audio ? &*audio : nullptr}) {
    if (code == nullptr) continue;
    if (code->z.size() != code->mu.size()) throw DimensionError("modality code z and mu lengths differ");
    if (code->sigma < 0.0) throw NumericError("modality code sigma is negative");
  }
  if (visual) latent.parts.push_back({Modality::visual, visual->z});
  if (audio) latent.parts.push_back({Modality::audio, audio->z});
  return latent;
}

Tensor encode_mean(const EncoderBank& bank, const ImageTensor& img) {
  return compress(bank, image_to_stripes(img, bank.count()));
}

Tensor encode_mean(const EncoderBank& bank, const AudioClip& clip) {
  return compress(bank, audio_to_segments(clip, bank.count()));
}

LatentVector encode_pair(const ImageTensor* img, const AudioClip* clip, const EncoderBanks& banks, Rng& rng,
                         const EncodeOptions& options) {
  if (img == nullptr && clip == nullptr) throw ConfigError("encode_pair needs at least one modality");
  std::optional<ModalityCode> visual, audio;
  if (img != nullptr) {
    if (!banks.visual) throw ConfigError("image supplied but no visual encoder bank is configured");
    ModalityCode code;
    code.mu = encode_mean(*banks.visual, *img);
    code.sigma = options.sigma_visual ? *options.sigma_visual : batch_sigma(std::span<const Tensor>(&code.mu, 1));
    code.z = reparameterize(code.mu, code.sigma, rng);
    visual = std::move(code);
  }
  if (clip != nullptr) {
    if (!banks.audio) throw ConfigError("audio supplied but no audio encoder bank is configured");
    ModalityCode code;
    code.mu = encode_mean(*banks.audio, *clip);
    code.sigma = options.sigma_audio ? *options.sigma_audio : batch_sigma(std::span<const Tensor>(&code.mu, 1));
    code.z = reparameterize(code.mu, code.sigma, rng);
    audio = std::move(code);
  }
  return build_latent(visual, audio);
}

}  // namespace pcvae
