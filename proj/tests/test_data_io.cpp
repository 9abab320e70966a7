#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "pcvae/data_io.hpp"
#include "pcvae/infotheory.hpp"

using namespace pcvae;
namespace fs = std::filesystem;

namespace {

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void le(std::string& s, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

// Minimal RIFF/WAVE writer independent of the library.
std::string wav_bytes(std::uint16_t channels, std::uint16_t bits, std::uint16_t format,
                      const std::vector<std::int32_t>& frames_interleaved) {
  const std::uint32_t bps = bits / 8;
  const auto data_len = static_cast<std::uint32_t>(frames_interleaved.size() * bps);
  std::string s = "RIFF";
  le(s, 36 + data_len, 4);
  s += "WAVEfmt ";
  le(s, 16, 4);
  le(s, format, 2);
  le(s, channels, 2);
  le(s, 22050, 4);
  le(s, 22050 * channels * bps, 4);
  le(s, channels * bps, 2);
  le(s, bits, 2);
  s += "data";
  le(s, data_len, 4);
  for (std::int32_t v : frames_interleaved) le(s, static_cast<std::uint32_t>(v), static_cast<int>(bps));
  return s;
}

ImageTensor quantized_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  ImageTensor img = ImageTensor::zeros(h, w);
  for (auto& p : img.pixels) p = static_cast<double>(rng.below(256)) / 255.0;
  return img;
}

}  // namespace

TEST(Ppm, WhitePixel) {
  const auto dir = oracle::scratch_dir("ppm_white");
  write_bytes(dir / "w.ppm", std::string("P6\n1 1\n255\n") + "\xff\xff\xff");
  const ImageTensor img = load_ppm(dir / "w.ppm");
  EXPECT_EQ(img.height, 1u);
  EXPECT_EQ(img.pixels, (std::vector<double>{1, 1, 1}));
}

TEST(Ppm, RoundtripBytes) {
  const auto dir = oracle::scratch_dir("ppm_rt");
  const ImageTensor img = quantized_image(8, 8, 1);
  write_ppm(img, dir / "a.ppm");
  const ImageTensor back = load_ppm(dir / "a.ppm");
  EXPECT_EQ(back, img);
  write_ppm(back, dir / "b.ppm");
  EXPECT_EQ(read_bytes(dir / "a.ppm"), read_bytes(dir / "b.ppm"));
}

TEST(Ppm, HeaderCommentsAccepted) {
  const auto dir = oracle::scratch_dir("ppm_comment");
  write_bytes(dir / "c.ppm", std::string("P6 # made by hand\n1 1\n255\n") + std::string("\x00\x80\xff", 3));
  const ImageTensor img = load_ppm(dir / "c.ppm");
  EXPECT_EQ(img.at(0, 0, 1), 128.0 / 255.0);
}

TEST(Ppm, RejectsAsciiMaxvalAndShortFiles) {
  const auto dir = oracle::scratch_dir("ppm_bad");
  write_bytes(dir / "p3.ppm", "P3\n1 1\n255\n255 255 255\n");
  EXPECT_THROW(load_ppm(dir / "p3.ppm"), FormatError);
  write_bytes(dir / "mv.ppm", std::string("P6\n1 1\n65535\n") + std::string(6, '\0'));
  EXPECT_THROW(load_ppm(dir / "mv.ppm"), FormatError);
  write_bytes(dir / "short.ppm", std::string("P6\n2 2\n255\n") + "\x01\x02");
  EXPECT_THROW(load_ppm(dir / "short.ppm"), FormatError);
  EXPECT_THROW(load_ppm(dir / "missing.ppm"), FormatError);
}

TEST(Wav, MonoZeros) {
  const auto dir = oracle::scratch_dir("wav_zero");
  write_bytes(dir / "z.wav", wav_bytes(1, 16, 1, std::vector<std::int32_t>(10, 0)));
  const AudioClip clip = load_wav(dir / "z.wav");
  EXPECT_EQ(clip.samples, std::vector<double>(10, 0.0));
  EXPECT_EQ(clip.sample_rate, 22050u);
}

TEST(Wav, StereoIdenticalChannelsEqualsMono) {
  const auto dir = oracle::scratch_dir("wav_stereo");
  std::vector<std::int32_t> mono{0, 1000, -2000, 32767, -32768}, stereo;
  for (auto v : mono) stereo.insert(stereo.end(), {v, v});
  write_bytes(dir / "m.wav", wav_bytes(1, 16, 1, mono));
  write_bytes(dir / "s.wav", wav_bytes(2, 16, 1, stereo));
  EXPECT_EQ(load_wav(dir / "s.wav").samples, load_wav(dir / "m.wav").samples);
  EXPECT_EQ(load_wav(dir / "m.wav").samples[3], 32767.0 / 32768.0);
}

TEST(Wav, MonoRoundtripExactAtSixteenBits) {
  const auto dir = oracle::scratch_dir("wav_rt");
  Rng rng(2);
  AudioClip clip;
  clip.sample_rate = 22050;
  for (int i = 0; i < 300; ++i) clip.samples.push_back((static_cast<double>(rng.below(65536)) - 32768.0) / 32768.0);
  write_wav(clip, dir / "a.wav");
  EXPECT_EQ(load_wav(dir / "a.wav"), clip);
}

TEST(Wav, RejectsUnsupportedEncodings) {
  const auto dir = oracle::scratch_dir("wav_bad");
  write_bytes(dir / "24.wav", wav_bytes(1, 24, 1, {1, 2, 3}));
  EXPECT_THROW(load_wav(dir / "24.wav"), FormatError);
  write_bytes(dir / "float.wav", wav_bytes(1, 32, 3, {0, 0}));
  EXPECT_THROW(load_wav(dir / "float.wav"), FormatError);
  write_bytes(dir / "junk.wav", "RIFX0000WAVE");
  EXPECT_THROW(load_wav(dir / "junk.wav"), FormatError);
  std::string truncated = wav_bytes(1, 16, 1, {1, 2, 3, 4});
  truncated.resize(truncated.size() - 3);
  write_bytes(dir / "trunc.wav", truncated);
  EXPECT_THROW(load_wav(dir / "trunc.wav"), FormatError);
}

TEST(DownsampleImage, ConstantStaysConstant) {
  ImageTensor img = ImageTensor::zeros(96, 64);
  for (auto& p : img.pixels) p = 0.3;
  const ImageTensor out = downsample_image(img, 32, 32);
  EXPECT_EQ(out.height, 32u);
  for (double v : out.pixels) EXPECT_NEAR(v, 0.3, 1e-15);
}

TEST(DownsampleImage, CheckerboardAveragesToHalf) {
  ImageTensor img = ImageTensor::zeros(64, 64);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t h = 0; h < 64; ++h)
      for (std::size_t w = 0; w < 64; ++w) img.at(h, w, c) = (h + w) % 2 ? 1.0 : 0.0;
  for (double v : downsample_image(img, 32, 32).pixels) EXPECT_EQ(v, 0.5);
}

TEST(DownsampleImage, HdFrameStaysWithinSourceBlockBounds) {
  Rng rng(3);
  ImageTensor img = ImageTensor::zeros(1080, 1920);
  for (auto& p : img.pixels) p = rng.uniform();
  const ImageTensor out = downsample_image(img, 32, 32);
  // Output cell (i, j) only draws on source rows/cols overlapping its
  // fractional footprint [i*H/32, (i+1)*H/32).
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 32; ++i)
      for (std::size_t j = 0; j < 32; ++j) {
        const std::size_t h0 = i * 1080 / 32, h1 = ((i + 1) * 1080 + 31) / 32;
        const std::size_t w0 = j * 1920 / 32, w1 = ((j + 1) * 1920 + 31) / 32;
        double lo = 1, hi = 0;
        for (std::size_t h = h0; h < h1; ++h)
          for (std::size_t w = w0; w < w1; ++w) lo = std::min(lo, img.at(h, w, c)), hi = std::max(hi, img.at(h, w, c));
        EXPECT_GE(out.at(i, j, c), lo - 1e-12);
        EXPECT_LE(out.at(i, j, c), hi + 1e-12);
      }
}

TEST(DownsampleImage, AtTargetIsIdentityAndUpsamplingIsError) {
  const ImageTensor img = quantized_image(32, 32, 4);
  EXPECT_EQ(downsample_image(img, 32, 32), img);
  EXPECT_THROW(downsample_image(img, 64, 32), UsageError);
}

TEST(DownsampleAudio, FactorCases) {
  AudioClip ramp;
  for (int i = 0; i < 10; ++i) ramp.samples.push_back(i / 10.0);
  EXPECT_EQ(downsample_audio(ramp, 1).samples, ramp.samples);
  EXPECT_EQ(downsample_audio(ramp, 2).samples, (std::vector<double>{0.0, 0.2, 0.4, 0.6, 0.8}));
  AudioClip big;
  big.samples.assign(22050, 0.0);
  EXPECT_EQ(downsample_audio(big, 10).samples.size(), 2205u);
  EXPECT_THROW(downsample_audio(ramp, 0), UsageError);
}

TEST(SynthDataset, DeterministicAndUniform) {
  const auto a = synth_dataset(512, 8, 8, 64, 7), b = synth_dataset(512, 8, 8, 64, 7);
  ASSERT_EQ(a.size(), 512u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].audio, b[i].audio);
    EXPECT_EQ(a[i].image.height, 8u);
    EXPECT_EQ(a[i].image.width, 8u);
    EXPECT_EQ(a[i].audio.samples.size(), 64u);
    EXPECT_TRUE(a[i].image.in_unit_range());
    EXPECT_TRUE(a[i].audio.in_unit_range());
  }
  EXPECT_NE(synth_dataset(1, 8, 8, 64, 8)[0].image, a[0].image);
}

TEST(SynthDataset, SampleDependsOnlyOnGlobalIndex) {
  const auto whole = synth_dataset(10, 8, 8, 64, 7);
  const auto tail = synth_dataset(3, 8, 8, 64, 7, "val", 7);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(tail[i].image, whole[7 + i].image);
    EXPECT_EQ(tail[i].split, "val");
  }
}

TEST(SynthDataset, ImageAndAudioShareInformation) {
  // Permutation test: the true pairing must beat every shuffled pairing.
  const auto data = synth_dataset(512, 8, 8, 64, 7);
  auto plugin_mi = [&](const std::vector<std::size_t>& pair) {
    info::SampleBatch b{Tensor({512, 192}), Tensor({512, 1}, 0.0), Tensor({512, 64})};
    for (std::size_t i = 0; i < 512; ++i) {
      for (std::size_t k = 0; k < 192; ++k) b.x1.at(i, k) = data[i].image.pixels[k];
      for (std::size_t k = 0; k < 64; ++k) b.y.at(i, k) = data[pair[i]].audio.samples[k];
    }
    const auto j = info::quantize(b, 8, info::projection_summarizer(192, 1, 64, 11));
    return info::mutual_info(j, {info::Variable::x1}, {info::Variable::y});
  };
  std::vector<std::size_t> pair(512);
  std::iota(pair.begin(), pair.end(), 0);
  const double paired = plugin_mi(pair);
  std::mt19937 gen(3);
  for (int r = 0; r < 20; ++r) {
    std::shuffle(pair.begin(), pair.end(), gen);
    EXPECT_GT(paired, plugin_mi(pair)) << "shuffle " << r;
  }
}

TEST(Manifest, WriteLoadRoundtripAndErrors) {
  const auto dir = oracle::scratch_dir("manifest");
  auto data = synth_dataset(4, 8, 8, 64, 1);
  data[3].split = "val";
  write_dataset(dir, data);
  const auto back = load_dataset(dir / "manifest.txt", 8, 8, 64);
  ASSERT_EQ(back.size(), 4u);
  EXPECT_EQ(back[3].split, "val");
  EXPECT_EQ(back[0].id, data[0].id);
  for (std::size_t k = 0; k < back[0].image.size(); ++k)
    EXPECT_NEAR(back[0].image.pixels[k], data[0].image.pixels[k], 0.5 / 255 + 1e-12);

  write_bytes(dir / "bad.txt", "a only_two_fields\n");
  EXPECT_THROW(load_manifest(dir / "bad.txt"), FormatError);
  write_bytes(dir / "split.txt", "a x.ppm y.wav test\n");
  EXPECT_THROW(load_manifest(dir / "split.txt"), FormatError);
  EXPECT_THROW(load_manifest(dir / "absent.txt"), FormatError);
  EXPECT_THROW(load_dataset(dir / "manifest.txt", 8, 8, 48), FormatError);
}
