#include "pcvae/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "pcvae/numerics.hpp"

namespace pcvae {

namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write '" + path.string() + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("short write to '" + path.string() + "'");
}

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

// Header token of a PNM file; '#' comments run to end of line.
std::string pnm_token(const std::vector<unsigned char>& buf, std::size_t& pos, const fs::path& path) {
  for (;;) {
    while (pos < buf.size() && std::isspace(buf[pos])) ++pos;
    if (pos < buf.size() && buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::string tok;
  while (pos < buf.size() && !std::isspace(buf[pos]) && buf[pos] != '#') tok.push_back(static_cast<char>(buf[pos++]));
  if (tok.empty()) throw FormatError("truncated PPM header in '" + path.string() + "'");
  return tok;
}

std::size_t parse_positive(const std::string& tok, const char* what, const fs::path& path) {
  std::size_t value = 0;
  for (char ch : tok) {
    if (ch < '0' || ch > '9') throw FormatError(std::string("bad PPM ") + what + " in '" + path.string() + "'");
    value = value * 10 + static_cast<std::size_t>(ch - '0');
    if (value > (1u << 24)) throw FormatError(std::string("PPM ") + what + " too large in '" + path.string() + "'");
  }
  if (value == 0) throw FormatError(std::string("PPM ") + what + " must be positive in '" + path.string() + "'");
  return value;
}

// Normalized overlap weights of each target cell with the source cells.
std::vector<std::vector<std::pair<std::size_t, double>>> area_weights(std::size_t src, std::size_t dst) {
  std::vector<std::vector<std::pair<std::size_t, double>>> w(dst);
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t o = 0; o < dst; ++o) {
    const double lo = static_cast<double>(o) * scale;
    const double hi = static_cast<double>(o + 1) * scale;
    for (auto s = static_cast<std::size_t>(std::floor(lo)); s < src && static_cast<double>(s) < hi; ++s) {
      const double overlap = std::min(hi, static_cast<double>(s + 1)) - std::max(lo, static_cast<double>(s));
      if (overlap > 0.0) w[o].push_back({s, overlap / scale});
    }
  }
  return w;
}

}  // namespace

ImageTensor load_ppm(const fs::path& path) {
  const auto buf = read_file(path);
  std::size_t pos = 0;
  const std::string magic = pnm_token(buf, pos, path);
  if (magic != "P6") throw FormatError("'" + path.string() + "' is not a binary P6 PPM (magic " + magic + ")");
  const std::size_t width = parse_positive(pnm_token(buf, pos, path), "width", path);
  const std::size_t height = parse_positive(pnm_token(buf, pos, path), "height", path);
  const std::string maxval = pnm_token(buf, pos, path);
  if (maxval != "255") throw FormatError("PPM maxval must be 255 in '" + path.string() + "', got " + maxval);
  if (pos >= buf.size() || !std::isspace(buf[pos])) throw FormatError("truncated PPM header in '" + path.string() + "'");
  ++pos;
  const std::size_t need = width * height * 3;
  if (buf.size() - pos < need) throw FormatError("PPM '" + path.string() + "' is shorter than its header declares");
  ImageTensor img = ImageTensor::zeros(height, width);
  for (std::size_t h = 0; h < height; ++h)
    for (std::size_t w = 0; w < width; ++w)
      for (std::size_t c = 0; c < 3; ++c) img.at(h, w, c) = static_cast<double>(buf[pos++]) / 255.0;
  return img;
}

void write_ppm(const ImageTensor& img, const fs::path& path) {
  if (img.pixels.size() != 3 * img.height * img.width || img.height == 0) {
    throw DimensionError("image buffer does not match its dimensions");
  }
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.pixels.size());
  for (std::size_t h = 0; h < img.height; ++h)
    for (std::size_t w = 0; w < img.width; ++w)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at(h, w, c), 0.0, 1.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
  write_file(path, out);
}

AudioClip load_wav(const fs::path& path) {
  const auto buf = read_file(path);
  const std::string name = path.string();
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("'" + name + "' is not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= buf.size()) {
    const unsigned char* hdr = buf.data() + pos;
    const std::uint32_t size = le32(hdr + 4);
    pos += 8;
    if (size > buf.size() - pos) throw FormatError("truncated chunk in '" + name + "'");
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("short fmt chunk in '" + name + "'");
      const unsigned char* f = buf.data() + pos;
      const std::uint16_t format = le16(f);
      channels = le16(f + 2);
      rate = le32(f + 4);
      bits = le16(f + 14);
      if (format != 1) throw FormatError("'" + name + "' is not integer PCM (format tag " + std::to_string(format) + ")");
      if (bits != 16) throw FormatError("'" + name + "' has " + std::to_string(bits) + "-bit samples; only 16-bit is supported");
      if (channels != 1 && channels != 2) throw FormatError("'" + name + "' must be mono or stereo");
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk in '" + name + "'");
      const std::size_t frame = 2u * channels;
      if (size % frame != 0) throw FormatError("partial sample frame in '" + name + "'");
      AudioClip clip;
      clip.sample_rate = rate;
      clip.samples.resize(size / frame);
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(le16(buf.data() + pos + i * frame));
        clip.samples[i] = static_cast<double>(raw) / 32768.0;
      }
      return clip;
    }
    pos += size + (size & 1u);
  }
  throw FormatError("'" + name + "' has no " + std::string(have_fmt ? "data" : "fmt") + " chunk");
}

void write_wav(const AudioClip& clip, const fs::path& path) {
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  const std::uint32_t rate = clip.sample_rate ? clip.sample_rate : 22050;
  std::string out = "RIFF";
  put32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, 1);  // PCM
  put16(out, 1);  // mono
  put32(out, rate);
  put32(out, rate * 2);
  put16(out, 2);
  put16(out, 16);
  out += "data";
  put32(out, 2 * n);
  for (double v : clip.samples) {
    const long q = std::clamp(std::lround(std::clamp(v, -1.0, 1.0) * 32768.0), -32768L, 32767L);
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  write_file(path, out);
}

ImageTensor downsample_image(const ImageTensor& img, std::size_t target_h, std::size_t target_w) {
  if (target_h == 0 || target_w == 0) throw UsageError("downsample target must be positive");
  if (target_h > img.height || target_w > img.width) {
    throw UsageError("downsample_image cannot upsample " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                     " to " + std::to_string(target_h) + "x" + std::to_string(target_w));
  }
  const auto wh = area_weights(img.height, target_h);
  const auto ww = area_weights(img.width, target_w);
  ImageTensor out = ImageTensor::zeros(target_h, target_w);
  std::vector<double> rows(target_h * img.width);
  for (std::size_t c = 0; c < 3; ++c) {
    // Vertical pass, then horizontal.
    for (std::size_t oh = 0; oh < target_h; ++oh)
      for (std::size_t w = 0; w < img.width; ++w) {
        double acc = 0.0;
        for (const auto& [s, weight] : wh[oh]) acc += weight * img.at(s, w, c);
        rows[oh * img.width + w] = acc;
      }
    for (std::size_t oh = 0; oh < target_h; ++oh)
      for (std::size_t ow = 0; ow < target_w; ++ow) {
        double acc = 0.0;
        for (const auto& [s, weight] : ww[ow]) acc += weight * rows[oh * img.width + s];
        out.at(oh, ow, c) = acc;
      }
  }
  return out;
}

AudioClip downsample_audio(const AudioClip& clip, std::size_t factor) {
  if (factor == 0) throw UsageError("audio downsampling factor must be >= 1");
  AudioClip out;
  out.sample_rate = clip.sample_rate / static_cast<std::uint32_t>(factor);
  for (std::size_t i = 0; i < clip.samples.size(); i += factor) out.samples.push_back(clip.samples[i]);
  return out;
}

DatasetManifest load_manifest(const fs::path& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw FormatError("cannot open manifest '" + manifest_path.string() + "'");
  DatasetManifest m;
  m.root = manifest_path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream rec(line);
    ManifestEntry e;
    std::string image, audio, extra;
    if (!(rec >> e.id)) continue;
    if (!(rec >> image >> audio >> e.split) || (rec >> extra)) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": expected 'id image audio split'");
    }
    if (e.split != "train" && e.split != "val") {
      throw FormatError("manifest line " + std::to_string(line_no) + ": split must be train or val");
    }
    e.image = m.root / image;
    e.audio = m.root / audio;
    m.entries.push_back(std::move(e));
  }
  if (m.entries.empty()) throw FormatError("manifest '" + manifest_path.string() + "' lists no samples");
  return m;
}

std::vector<PairedSample> load_dataset(const fs::path& manifest_path, std::size_t target_h, std::size_t target_w,
                                       std::size_t target_audio_len) {
  const auto manifest = load_manifest(manifest_path);
  std::vector<PairedSample> out;
  for (const auto& e : manifest.entries) {
    PairedSample s;
    s.id = e.id;
    s.split = e.split;
    s.image = load_ppm(e.image);
    if (s.image.height != target_h || s.image.width != target_w) {
      s.image = downsample_image(s.image, target_h, target_w);
    }
    s.audio = load_wav(e.audio);
    const std::size_t len = s.audio.samples.size();
    if (len != target_audio_len) {
      if (len == 0 || len % target_audio_len != 0) {
        throw FormatError("audio '" + e.audio.string() + "' has " + std::to_string(len) + " samples, expected " +
                          std::to_string(target_audio_len) + " or an integer multiple");
      }
      s.audio = downsample_audio(s.audio, len / target_audio_len);
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_dataset(const fs::path& dir, const std::vector<PairedSample>& samples) {
  fs::create_directories(dir);
  std::string manifest = "# id image audio split\n";
  for (const auto& s : samples) {
    const std::string img = s.id + ".ppm", wav = s.id + ".wav";
    write_ppm(s.image, dir / img);
    write_wav(s.audio, dir / wav);
    manifest += s.id + " " + img + " " + wav + " " + s.split + "\n";
  }
  write_file(dir / "manifest.txt", manifest);
}

std::vector<PairedSample> synth_dataset(std::size_t n, std::size_t height, std::size_t width, std::size_t audio_len,
                                        std::uint64_t seed, const std::string& split, std::size_t first_index) {
  if (n == 0) throw UsageError("synth_dataset needs n >= 1");
  if (height == 0 || width == 0 || audio_len == 0) throw DimensionError("synthetic shapes must be positive");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::vector<PairedSample> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t index = first_index + k;
    Rng rng(Rng::derive_seed(seed, index));
    double f[4];
    for (double& v : f) v = rng.uniform();

    PairedSample s;
    char id[32];
    std::snprintf(id, sizeof id, "synth-%06zu", index);
    s.id = id;
    s.split = split;
    // Factor k scales a fixed smooth pattern; a = 2f - 1 lies in [-1, 1].
    double a[4];
    for (int i = 0; i < 4; ++i) a[i] = 2.0 * f[i] - 1.0;
    s.image = ImageTensor::zeros(height, width);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t h = 0; h < height; ++h)
        for (std::size_t w = 0; w < width; ++w) {
          const double u = (static_cast<double>(w) + 0.5) / static_cast<double>(width) - 0.5;
          const double v = (static_cast<double>(h) + 0.5) / static_cast<double>(height) - 0.5;
          const double cc = static_cast<double>(c) - 1.0;
          const double val = 0.5 + 0.25 * a[0] * (2.0 * u) * (1.0 + 0.5 * cc) + 0.25 * a[1] * (2.0 * v) * (1.0 - 0.5 * cc) +
                             0.15 * a[2] * std::cos(two_pi * (u + v) + cc) + 0.15 * a[3] * (1.0 - 0.4 * cc);
          s.image.at(h, w, c) = std::clamp(val + 0.02 * rng.gaussian(), 0.0, 1.0);
        }

    // Four partials: amplitude follows the factor, pitch drifts slightly with it.
    s.audio.sample_rate = 22050;
    s.audio.samples.resize(audio_len);
    constexpr double base_cycles[4] = {2.0, 3.5, 5.0, 7.5};
    for (std::size_t t = 0; t < audio_len; ++t) {
      const double tt = static_cast<double>(t) / static_cast<double>(audio_len);
      double val = 0.0;
      for (int i = 0; i < 4; ++i)
        val += (0.05 + 0.2 * f[i]) * std::sin(two_pi * (base_cycles[i] + 0.25 * f[i]) * tt + 0.7 * i);
      s.audio.samples[t] = std::clamp(val + 0.01 * rng.gaussian(), -1.0, 1.0);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace pcvae
