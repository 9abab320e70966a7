#pragma once

// Frozen random-projection encoder: each stripe (or audio segment) is
// multiplied by its own Gaussian compression matrix, the products are summed
// into a per-modality mean code, and the latent is the serial concatenation
// of the reparameterized codes.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pcvae/numerics.hpp"
#include "pcvae/tokenizer.hpp"

namespace pcvae {

/// Frozen compression matrices for one modality, stored as one
/// [count, out_dim, in_dim] tensor. Matrix i is drawn from
/// Rng(Rng::derive_seed(seed, i)) row by row.
struct EncoderBank {
  Modality modality = Modality::visual;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::uint64_t seed = 0;
  Tensor matrices;

  std::size_t count() const { return matrices.dim(0); }
  Tensor matrix(std::size_t i) const;
  std::uint64_t hash() const { return content_hash(matrices); }
};

EncoderBank build_bank(Modality modality, std::size_t in_dim, std::size_t out_dim, std::size_t count,
                       std::uint64_t seed);

/// mu = sum_i matrix_i * token_i, partial products summed in index order.
Tensor compress(const EncoderBank& bank, const TokenBundle& tokens);

/// Population standard deviation over every element of every vector.
double batch_sigma(std::span<const Tensor> mus);
/// Same, over all elements of a [batch, dim] matrix.
double batch_sigma(const Tensor& mu_rows);

/// z = mu + sigma * eps, eps drawn fresh from `rng`.
Tensor reparameterize(const Tensor& mu, double sigma, Rng& rng);

struct ModalityCode {
  Tensor mu;
  double sigma = 0.0;
  Tensor z;
};

struct LatentPart {
  Modality modality;
  Tensor values;
};

struct LatentVector {
  std::vector<LatentPart> parts;

  std::size_t total_len() const;
  /// Concatenated values, visual first.
  Tensor flat() const;
};

/// Concatenates the z of present modalities, visual first.
LatentVector build_latent(const std::optional<ModalityCode>& visual, const std::optional<ModalityCode>& audio);

struct EncoderBanks {
  std::optional<EncoderBank> visual;
  std::optional<EncoderBank> audio;
};

struct EncodeOptions {
  // Overrides of the batch-computed sigma, e.g. 0 for noise-free codes.
  std::optional<double> sigma_visual;
  std::optional<double> sigma_audio;
};

/// Mean code of one sample for one modality (tokenize + compress).
Tensor encode_mean(const EncoderBank& bank, const ImageTensor& img);
Tensor encode_mean(const EncoderBank& bank, const AudioClip& clip);

/// Full single-sample pipeline: tokenize, compress, sigma over this
/// sample's mean code, reparameterize (visual noise drawn before audio), and
/// concatenate.
LatentVector encode_pair(const ImageTensor* img, const AudioClip* clip, const EncoderBanks& banks, Rng& rng,
                         const EncodeOptions& options = {});

/// Row-wise reparameterization of a [batch, dim] matrix of mean codes. Row b
/// draws its noise from rng.child(b), so rows can be produced in any order.
Tensor reparameterize_rows(const Tensor& mu_rows, double sigma, const Rng& rng);

}  // namespace pcvae
