#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "pcvae/errors.hpp"
#include "pcvae/training.hpp"

namespace pcvae {

namespace {

constexpr char kMagic[8] = {'P', 'C', 'V', 'A', 'E', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& os, T v) {
  std::array<char, sizeof(T)> b;
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
  os.write(b.data(), b.size());
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

// One payload: either a tensor or the config text.
struct Section {
  std::string name;
  const Tensor* tensor = nullptr;
  std::string text;

  std::uint64_t size() const {
    if (!tensor) return text.size();
    return 4 + 8 * tensor->rank() + 8 * tensor->size();
  }
};

void write_tensor(std::ostream& os, const Tensor& t) {
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_le<std::uint64_t>(os, d);
  constexpr std::size_t kChunk = 1 << 16;
  std::vector<char> buf;
  buf.reserve(kChunk * 8);
  const auto data = t.data();
  for (std::size_t i = 0; i < data.size(); i += kChunk) {
    buf.clear();
    const std::size_t end = std::min(data.size(), i + kChunk);
    for (std::size_t k = i; k < end; ++k) {
      const auto bits = std::bit_cast<std::uint64_t>(data[k]);
      for (int j = 0; j < 8; ++j) buf.push_back(static_cast<char>((bits >> (8 * j)) & 0xff));
    }
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
}

Tensor read_tensor(const std::vector<unsigned char>& bytes, const std::string& name) {
  const auto fail = [&](const std::string& why) { return CheckpointError("section " + name + ": " + why); };
  if (bytes.size() < 4) throw fail("truncated tensor header");
  const auto rank = get_le<std::uint32_t>(bytes.data());
  if (rank == 0 || rank > 8) throw fail("implausible rank " + std::to_string(rank));
  if (bytes.size() < 4 + 8ull * rank) throw fail("truncated tensor header");
  Shape shape(rank);
  std::uint64_t numel = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape[i] = get_le<std::uint64_t>(bytes.data() + 4 + 8 * i);
    if (shape[i] == 0 || shape[i] > (1ull << 40)) throw fail("bad extent");
    numel *= shape[i];
  }
  if (bytes.size() != 4 + 8ull * rank + 8 * numel) throw fail("payload size does not match its shape");
  std::vector<double> data(numel);
  const unsigned char* p = bytes.data() + 4 + 8 * rank;
  for (std::uint64_t i = 0; i < numel; ++i) data[i] = std::bit_cast<double>(get_le<std::uint64_t>(p + 8 * i));
  return Tensor(std::move(shape), std::move(data));
}

std::string u64(std::uint64_t v) { return std::to_string(v); }

std::string decoder_prefix(Modality m) { return std::string("decoder.") + modality_name(m); }

class ConfigReader {
 public:
  explicit ConfigReader(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw CheckpointError("malformed config line '" + line + "'");
      values_[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw CheckpointError("config is missing '" + key + "'");
    return it->second;
  }

  std::uint64_t uint(const std::string& key) const {
    const auto& s = str(key);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw CheckpointError("config '" + key + "' is not an integer");
    return v;
  }

  double real(const std::string& key) const {
    try {
      return parse_double(str(key));
    } catch (const Error&) {
      throw CheckpointError("config '" + key + "' is not a number");
    }
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace

std::string format_double(double v) {
  std::array<char, 64> buf;
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw NumericError("cannot format double");
  return std::string(buf.data(), ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) throw FormatError("'" + s + "' is not a number");
  return v;
}

std::map<std::string, std::string> describe_config(const ModelConfig& m, const TrainConfig& train,
                                                   const LossConfig& loss) {
  std::map<std::string, std::string> d;
  d["model.family"] = m.family;
  d["model.mode"] = to_string(m.mode);
  d["model.image_h"] = u64(m.image_h);
  d["model.image_w"] = u64(m.image_w);
  d["model.audio_len"] = u64(m.audio_len);
  d["model.stripes"] = u64(m.stripes);
  d["model.segments"] = u64(m.segments);
  d["model.visual_code"] = u64(m.visual_code);
  d["model.audio_code"] = u64(m.audio_code);
  d["model.latent_len"] = u64(m.latent_len());
  d["model.stripe_len"] = u64(m.stripe_len());
  d["model.segment_len"] = u64(m.segment_len());
  d["train.epochs"] = u64(train.epochs);
  d["train.batch_size"] = u64(train.batch_size);
  d["train.step_size"] = format_double(train.step_size);
  d["train.seed"] = u64(train.seed);
  d["train.sigma_scope"] = to_string(train.sigma_scope);
  d["loss.ii_backend"] = to_string(loss.ii_backend);
  d["loss.ii_weight"] = format_double(loss.ii_weight);
  d["loss.recon_weight"] = format_double(loss.recon_weight);
  d["loss.projection_dim"] = u64(loss.projection_dim);
  d["loss.ridge"] = format_double(loss.ridge);
  d["loss.seed"] = u64(loss.seed);
  d["loss.plugin_bins"] = u64(loss.plugin_bins);
  for (const Modality mod : {Modality::visual, Modality::audio}) {
    if (mod == Modality::visual ? !m.has_visual_decoder() : !m.has_audio_decoder()) continue;
    const DecoderConfig dc = decoder_preset(m.family + "-" + modality_name(mod), m.latent_len());
    const std::string p = decoder_prefix(mod);
    d[p + ".preset"] = dc.preset;
    d[p + ".output_shape"] = shape_str(dc.output_shape);
    d[p + ".param_count"] = u64(dc.param_count());
  }
  return d;
}

std::map<std::string, std::string> describe(const ModelState& st) {
  auto d = describe_config(st.model, st.train, st.loss);
  d["state.epochs_completed"] = u64(st.epochs_completed);
  d["state.adam_step"] = u64(st.adam_step);
  d["state.dataset_sigma_visual"] = format_double(st.dataset_sigma_visual);
  d["state.dataset_sigma_audio"] = format_double(st.dataset_sigma_audio);
  for (const auto* bank : {st.banks.visual ? &*st.banks.visual : nullptr, st.banks.audio ? &*st.banks.audio : nullptr}) {
    if (!bank) continue;
    const std::string p = std::string("bank.") + modality_name(bank->modality);
    d[p + ".seed"] = u64(bank->seed);
    d[p + ".count"] = u64(bank->count());
    d[p + ".shape"] = u64(bank->out_dim) + "x" + u64(bank->in_dim);
    d[p + ".hash"] = u64(bank->hash());
  }
  return d;
}

void save_checkpoint(const ModelState& st, const std::filesystem::path& path) {
  std::vector<Section> sections;
  {
    std::string text;
    for (const auto& [k, v] : describe(st)) text += k + "=" + v + "\n";
    sections.push_back({"config", nullptr, std::move(text)});
  }
  if (st.banks.visual) sections.push_back({"bank.visual", &st.banks.visual->matrices, {}});
  if (st.banks.audio) sections.push_back({"bank.audio", &st.banks.audio->matrices, {}});
  for (const auto* dec : {st.visual ? &*st.visual : nullptr, st.audio ? &*st.audio : nullptr}) {
    if (!dec) continue;
    const std::string p = decoder_prefix(dec->config.output);
    for (std::size_t i = 0; i < dec->params.layers.size(); ++i) {
      sections.push_back({p + ".param." + u64(2 * i), &dec->params.layers[i].weight, {}});
      sections.push_back({p + ".param." + u64(2 * i + 1), &dec->params.layers[i].bias, {}});
    }
    for (std::size_t i = 0; i < dec->adam_m.size(); ++i) {
      sections.push_back({p + ".adam_m." + u64(i), &dec->adam_m[i], {}});
      sections.push_back({p + ".adam_v." + u64(i), &dec->adam_v[i], {}});
    }
    sections.push_back({p + ".proj.x1", &dec->projections.x1, {}});
    sections.push_back({p + ".proj.x2", &dec->projections.x2, {}});
    sections.push_back({p + ".proj.y", &dec->projections.y, {}});
  }

  std::uint64_t offset = 8 + 4 + 4;
  for (const auto& s : sections) offset += 2 + s.name.size() + 8 + 8;

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(os, kVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(sections.size()));
  for (const auto& s : sections) {
    put_le<std::uint16_t>(os, static_cast<std::uint16_t>(s.name.size()));
    os.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    put_le<std::uint64_t>(os, offset);
    put_le<std::uint64_t>(os, s.size());
    offset += s.size();
  }
  for (const auto& s : sections) {
    if (s.tensor)
      write_tensor(os, *s.tensor);
    else
      os.write(s.text.data(), static_cast<std::streamsize>(s.text.size()));
  }
  os.flush();
  if (!os) throw CheckpointError("failed writing " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  is.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(is.tellg());
  is.seekg(0);
  const auto read_exact = [&](std::uint64_t offset, std::uint64_t n) {
    if (offset > file_size || n > file_size - offset)
      throw CheckpointError(path.string() + " is truncated (needs " + u64(offset + n) + " bytes, has " +
                            u64(file_size) + ")");
    std::vector<unsigned char> buf(n);
    is.seekg(static_cast<std::streamoff>(offset));
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (!is) throw CheckpointError("read error in " + path.string());
    return buf;
  };

  const auto head = read_exact(0, 16);
  if (std::memcmp(head.data(), kMagic, sizeof kMagic) != 0)
    throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");
  const auto version = get_le<std::uint32_t>(head.data() + 8);
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + u64(version));
  const auto count = get_le<std::uint32_t>(head.data() + 12);

  struct Entry {
    std::uint64_t offset, size;
  };
  std::map<std::string, Entry> table;
  std::uint64_t pos = 16;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_le<std::uint16_t>(read_exact(pos, 2).data());
    const auto name_bytes = read_exact(pos + 2, len);
    std::string name(name_bytes.begin(), name_bytes.end());
    const auto nums = read_exact(pos + 2 + len, 16);
    const Entry e{get_le<std::uint64_t>(nums.data()), get_le<std::uint64_t>(nums.data() + 8)};
    if (e.offset > file_size || e.size > file_size - e.offset)
      throw CheckpointError(path.string() + " is truncated (section " + name + " ends past the file)");
    if (!table.emplace(name, e).second) throw CheckpointError("duplicate section " + name);
    pos += 2 + len + 16;
  }
  const auto section = [&](const std::string& name) {
    const auto it = table.find(name);
    if (it == table.end()) throw CheckpointError("checkpoint lacks section " + name);
    return read_exact(it->second.offset, it->second.size);
  };
  const auto tensor = [&](const std::string& name) { return read_tensor(section(name), name); };

  const auto cfg_bytes = section("config");
  const ConfigReader cfg(std::string(cfg_bytes.begin(), cfg_bytes.end()));
  ModelState st;
  try {
    auto& m = st.model;
    m.family = cfg.str("model.family");
    m.mode = parse_input_mode(cfg.str("model.mode"));
    m.image_h = cfg.uint("model.image_h");
    m.image_w = cfg.uint("model.image_w");
    m.audio_len = cfg.uint("model.audio_len");
    m.stripes = cfg.uint("model.stripes");
    m.segments = cfg.uint("model.segments");
    m.visual_code = cfg.uint("model.visual_code");
    m.audio_code = cfg.uint("model.audio_code");
    st.train.epochs = cfg.uint("train.epochs");
    st.train.batch_size = cfg.uint("train.batch_size");
    st.train.step_size = cfg.real("train.step_size");
    st.train.seed = cfg.uint("train.seed");
    st.train.mode = m.mode;
    st.train.sigma_scope = parse_sigma_scope(cfg.str("train.sigma_scope"));
    st.loss.ii_backend = parse_ii_backend(cfg.str("loss.ii_backend"));
    st.loss.ii_weight = cfg.real("loss.ii_weight");
    st.loss.recon_weight = cfg.real("loss.recon_weight");
    st.loss.projection_dim = cfg.uint("loss.projection_dim");
    st.loss.ridge = cfg.real("loss.ridge");
    st.loss.seed = cfg.uint("loss.seed");
    st.loss.plugin_bins = cfg.uint("loss.plugin_bins");
    st.epochs_completed = cfg.uint("state.epochs_completed");
    st.adam_step = cfg.uint("state.adam_step");
    st.dataset_sigma_visual = cfg.real("state.dataset_sigma_visual");
    st.dataset_sigma_audio = cfg.real("state.dataset_sigma_audio");
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("invalid config in checkpoint: ") + e.what());
  }

  const auto load_bank = [&](Modality mod, std::size_t in_dim, std::size_t out_dim, std::size_t count) {
    const std::string p = std::string("bank.") + modality_name(mod);
    EncoderBank b;
    b.modality = mod;
    b.in_dim = in_dim;
    b.out_dim = out_dim;
    b.seed = cfg.uint(p + ".seed");
    b.matrices = tensor(p);
    if (b.matrices.shape() != Shape{count, out_dim, in_dim})
      throw CheckpointError(p + " has shape " + shape_str(b.matrices.shape()));
    return b;
  };
  const auto& m = st.model;
  if (m.uses_visual_input()) st.banks.visual = load_bank(Modality::visual, m.stripe_len(), m.visual_code, m.stripes);
  if (m.uses_audio_input()) st.banks.audio = load_bank(Modality::audio, m.segment_len(), m.audio_code, m.segments);

  const auto load_decoder = [&](Modality mod) {
    const std::string p = decoder_prefix(mod);
    DecoderState d;
    d.config = decoder_preset(cfg.str(p + ".preset"), m.latent_len());
    const auto shapes = d.config.param_shapes();
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      LayerParams lp{tensor(p + ".param." + u64(2 * i)), tensor(p + ".param." + u64(2 * i + 1))};
      if (lp.weight.shape() != shapes[i].first || lp.bias.shape() != shapes[i].second)
        throw CheckpointError(p + " layer " + u64(i) + " does not match preset " + d.config.preset);
      d.params.layers.push_back(std::move(lp));
    }
    for (std::size_t i = 0; i < 2 * shapes.size(); ++i) {
      d.adam_m.push_back(tensor(p + ".adam_m." + u64(i)));
      d.adam_v.push_back(tensor(p + ".adam_v." + u64(i)));
      const auto& want = i % 2 == 0 ? shapes[i / 2].first : shapes[i / 2].second;
      if (d.adam_m.back().shape() != want || d.adam_v.back().shape() != want)
        throw CheckpointError(p + " optimizer state does not match its parameters");
    }
    d.projections.x1 = tensor(p + ".proj.x1");
    d.projections.x2 = tensor(p + ".proj.x2");
    d.projections.y = tensor(p + ".proj.y");
    return d;
  };
  if (m.has_visual_decoder()) st.visual = load_decoder(Modality::visual);
  if (m.has_audio_decoder()) st.audio = load_decoder(Modality::audio);
  return st;
}

}  // namespace pcvae
