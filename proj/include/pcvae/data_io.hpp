#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pcvae/tokenizer.hpp"

namespace pcvae {

struct PairedSample {
  std::string id;
  ImageTensor image;
  AudioClip audio;
  std::string split = "train";
};

struct ManifestEntry {
  std::string id;
  std::filesystem::path image;
  std::filesystem::path audio;
  std::string split;
};

/// `manifest.txt` grammar: one record per line, "id image_path audio_path
/// split" separated by whitespace; '#' starts a comment; paths are relative
/// to the manifest's directory; split is "train" or "val".
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
};

DatasetManifest load_manifest(const std::filesystem::path& manifest_path);

/// Loads every listed pair, resizing images to target_h x target_w (area
/// average) and decimating audio whose length is an integer multiple of
/// target_audio_len. Any other shape disagreement is a FormatError.
std::vector<PairedSample> load_dataset(const std::filesystem::path& manifest_path, std::size_t target_h,
                                       std::size_t target_w, std::size_t target_audio_len);

/// Writes PPM/WAV files plus manifest.txt into `dir`.
void write_dataset(const std::filesystem::path& dir, const std::vector<PairedSample>& samples);

/// Binary P6 with maxval 255; pixels scaled to [0, 1].
ImageTensor load_ppm(const std::filesystem::path& path);
/// Clamps to [0, 1] and rounds to 8 bits.
void write_ppm(const ImageTensor& img, const std::filesystem::path& path);

/// 16-bit PCM RIFF/WAVE, mono or stereo (stereo keeps channel 0); samples
/// scaled by 1/32768.
AudioClip load_wav(const std::filesystem::path& path);
/// Mono 16-bit PCM; clamps to [-1, 1].
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

/// Area-average resize; the target must not exceed the source.
ImageTensor downsample_image(const ImageTensor& img, std::size_t target_h, std::size_t target_w);
/// Keeps every `factor`-th sample, starting with the first.
AudioClip downsample_audio(const AudioClip& clip, std::size_t factor);

/// Paired samples whose image and audio are both driven by one shared
/// four-factor vector: the image mixes colored gradients, a diagonal wave and
/// a brightness offset; the audio sums four sinusoids whose amplitudes and
/// frequencies follow the factors. Both carry small independent noise.
/// Sample i depends only on (seed, first_index + i).
std::vector<PairedSample> synth_dataset(std::size_t n, std::size_t height, std::size_t width, std::size_t audio_len,
                                        std::uint64_t seed, const std::string& split = "train",
                                        std::size_t first_index = 0);

}  // namespace pcvae
