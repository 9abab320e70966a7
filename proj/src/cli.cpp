#include "pcvae/cli.hpp"

#include <CLI11.hpp>

#include <cctype>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "pcvae/errors.hpp"
#include "pcvae/kernels.hpp"
#include "pcvae/training.hpp"

namespace pcvae {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kSampleRate = 22050;
constexpr std::size_t kPreviewCount = 4;

struct DataOptions {
  std::size_t synthetic = 0;
  std::string manifest;
  std::uint64_t data_seed = 7;

  void add_to(CLI::App* app) {
    app->add_option("--synthetic", synthetic, "Generate N synthetic training pairs (plus N/4 validation pairs)");
    app->add_option("--dataset", manifest, "Dataset manifest (id image.ppm audio.wav split per line)");
    app->add_option("--data-seed", data_seed, "Seed of the synthetic data")->capture_default_str();
  }

  std::vector<PairedSample> load(const ModelConfig& m) const {
    if ((synthetic > 0) == !manifest.empty())
      throw UsageError("give exactly one of --synthetic N or --dataset MANIFEST");
    if (!manifest.empty()) return load_dataset(manifest, m.image_h, m.image_w, m.audio_len);
    auto data = synth_dataset(synthetic, m.image_h, m.image_w, m.audio_len, data_seed, "train", 0);
    auto val = synth_dataset(std::max<std::size_t>(1, synthetic / 4), m.image_h, m.image_w, m.audio_len, data_seed,
                             "val", synthetic);
    data.insert(data.end(), val.begin(), val.end());
    return data;
  }
};

struct TrainOptions {
  DataOptions data;
  std::string preset = "desk";
  std::optional<std::size_t> latent;
  std::string mode = "joint";
  std::size_t epochs = 50;
  std::size_t batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::string ii = "gaussian";
  double ii_weight = 1.0;
  double recon_weight = 1.0;
  std::string sigma_scope = "batch";
  std::string out;
  std::string resume;
  std::size_t sample_every = 0;
  bool dry_run = false;
  std::string config;
};

struct GenerateOptions {
  std::string checkpoint;
  std::string from;
  std::vector<std::string> inputs;
  std::size_t count = 1;
  std::string out = ".";
  std::uint64_t seed = 1;
};

struct EvalOptions {
  DataOptions data;
  std::string checkpoint;
  std::string split = "all";
  std::string ii = "gaussian";
  std::uint64_t seed = 1;
  std::string out;
};

struct PidOptions {
  std::string which;
  std::string file;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw UsageError("cannot write " + path.string());
  os << text;
}

std::string config_text(const std::map<std::string, std::string>& d) {
  std::string s;
  for (const auto& [k, v] : d) s += k + "=" + v + "\n";
  return s;
}

ImageTensor row_to_image(const Tensor& rows, std::size_t r, std::size_t h, std::size_t w) {
  ImageTensor img = ImageTensor::zeros(h, w);
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = rows.at(r, i);
  return img;
}

AudioClip row_to_audio(const Tensor& rows, std::size_t r) {
  AudioClip clip;
  clip.sample_rate = kSampleRate;
  clip.samples.resize(rows.dim(1));
  for (std::size_t i = 0; i < rows.dim(1); ++i) clip.samples[i] = rows.at(r, i);
  return clip;
}

// Decodes `latent` with every decoder of the model and writes one file per
// row and decoder, named `<stem(r)>_<modality>.<ext>`.
std::vector<fs::path> write_outputs(const ModelState& st, const Tensor& latent, const fs::path& dir,
                                    const std::function<std::string(std::size_t)>& stem) {
  fs::create_directories(dir);
  std::vector<fs::path> written;
  for (const auto* dec : {st.visual ? &*st.visual : nullptr, st.audio ? &*st.audio : nullptr}) {
    if (!dec) continue;
    const Tensor y = decode_rows(dec->config, dec->params, latent);
    for (std::size_t r = 0; r < y.dim(0); ++r) {
      if (dec->config.output == Modality::visual) {
        written.push_back(dir / (stem(r) + "_visual.ppm"));
        write_ppm(row_to_image(y, r, st.model.image_h, st.model.image_w), written.back());
      } else {
        written.push_back(dir / (stem(r) + "_audio.wav"));
        write_wav(row_to_audio(y, r), written.back());
      }
    }
  }
  return written;
}

std::vector<const PairedSample*> preview_samples(const std::vector<PairedSample>& data) {
  std::vector<const PairedSample*> out;
  for (const char* split : {"val", "train"}) {
    for (const auto& s : data)
      if (s.split == split && out.size() < kPreviewCount) out.push_back(&s);
    if (!out.empty()) break;
  }
  return out;
}

int run_train(const TrainOptions& o, std::ostream& out) {
  ModelState state;
  ModelConfig model;
  if (!o.resume.empty()) {
    state = load_checkpoint(o.resume);
    model = state.model;
    state.train.epochs = o.epochs;
  } else {
    model = resolve_model_preset(o.preset, o.latent, parse_input_mode(o.mode));
    state.model = model;
    state.train.epochs = o.epochs;
    state.train.batch_size = o.batch;
    state.train.step_size = o.lr;
    state.train.seed = o.seed;
    state.train.mode = model.mode;
    state.train.sigma_scope = parse_sigma_scope(o.sigma_scope);
    state.loss.ii_backend = parse_ii_backend(o.ii);
    state.loss.ii_weight = o.ii_weight;
    state.loss.recon_weight = o.recon_weight;
    state.loss.seed = o.seed;
    state.train.validate(state.loss);
  }

  if (o.dry_run) {
    const std::string text = config_text(describe_config(state.model, state.train, state.loss));
    if (!o.out.empty()) {
      fs::create_directories(o.out);
      write_text(fs::path(o.out) / "config.resolved", text);
    }
    out << text;
    return kExitOk;
  }
  if (o.out.empty()) throw UsageError("--out DIR is required");
  const fs::path dir(o.out);
  fs::create_directories(dir);

  const auto data = o.data.load(model);
  if (o.resume.empty()) state = init_model(model, state.train, state.loss);
  write_text(dir / "config.resolved", config_text(describe(state)));
  if (state.epochs_completed >= o.epochs) {
    out << "checkpoint already has " << state.epochs_completed << " epochs; nothing to do\n";
    return kExitOk;
  }

  const fs::path history_path = dir / "history.csv";
  const bool append = !o.resume.empty() && fs::exists(history_path);
  if (!append) write_text(history_path, TrainHistory{}.to_csv());
  const auto previews = preview_samples(data);

  const auto on_epoch = [&](const ModelState& st, const EpochRecord& rec) {
    TrainHistory one{{rec}};
    const std::string csv = one.to_csv();
    std::ofstream(history_path, std::ios::app) << csv.substr(csv.find('\n') + 1);
    out << "epoch " << rec.epoch << " loss " << format_double(rec.total_loss);
    if (rec.mse_visual) out << " mse_visual " << format_double(*rec.mse_visual);
    if (rec.mse_audio) out << " mse_audio " << format_double(*rec.mse_audio);
    if (rec.ii_nats) out << " ii_nats " << format_double(*rec.ii_nats);
    out << '\n';
    if (o.sample_every > 0 && rec.epoch % o.sample_every == 0 && !previews.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04zu", rec.epoch);
      const Tensor z = encode_rows(st, previews, Rng(Rng::derive_seed(st.train.seed, rec.epoch)));
      write_outputs(st, z, dir / "samples" / name, [&](std::size_t r) { return previews[r]->id; });
    }
  };

  try {
    train_epochs(state, data, o.epochs - state.epochs_completed, on_epoch);
  } catch (const TrainingError&) {
    save_checkpoint(state, dir / "checkpoint.partial.pcvae");
    throw;
  }
  save_checkpoint(state, dir / "checkpoint.pcvae");
  out << "wrote " << (dir / "checkpoint.pcvae").string() << '\n';
  return kExitOk;
}

int run_generate(const GenerateOptions& o, std::ostream& out) {
  const ModelState st = load_checkpoint(o.checkpoint);
  const ModelConfig& m = st.model;
  std::string image_path, audio_path;
  for (const auto& in : o.inputs) {
    std::string ext = fs::path(in).extension().string();
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext != ".ppm" && ext != ".wav") throw UsageError("cannot tell the modality of " + in + " (use .ppm or .wav)");
    std::string& slot = ext == ".ppm" ? image_path : audio_path;
    if (!slot.empty()) throw UsageError("more than one " + ext + " input given");
    slot = in;
  }
  const std::string given = !image_path.empty() && !audio_path.empty() ? "both"
                            : !audio_path.empty()                     ? "audio"
                            : !image_path.empty()                     ? "image"
                                                                      : "";
  if (given.empty()) throw UsageError("at least one --in file is required");
  const std::string from = o.from.empty() ? given : o.from;
  if (from != "audio" && from != "image" && from != "both")
    throw UsageError("--from must be audio, image or both");
  if (from != given) throw UsageError("--from " + from + " does not match the --in files (" + given + ")");
  const std::string expected =
      m.mode == InputMode::joint ? "both" : (m.mode == InputMode::audio_only ? "audio" : "image");
  if (from != expected)
    throw UsageError("checkpoint was trained in " + std::string(to_string(m.mode)) + " mode and needs --from " +
                     expected);
  if (o.count == 0) throw UsageError("--count must be positive");

  PairedSample sample;
  sample.id = "input";
  sample.image = ImageTensor::zeros(m.image_h, m.image_w);
  sample.audio.samples.assign(m.audio_len, 0.0);
  if (!image_path.empty()) {
    ImageTensor img = load_ppm(image_path);
    if (img.height != m.image_h || img.width != m.image_w) img = downsample_image(img, m.image_h, m.image_w);
    sample.image = std::move(img);
  }
  if (!audio_path.empty()) {
    AudioClip clip = load_wav(audio_path);
    const std::size_t n = clip.samples.size();
    if (n != m.audio_len) {
      if (n < m.audio_len || n % m.audio_len != 0)
        throw FormatError("audio has " + std::to_string(n) + " samples; the model needs " +
                          std::to_string(m.audio_len) + " or an integer multiple");
      clip = downsample_audio(clip, n / m.audio_len);
    }
    sample.audio = std::move(clip);
  }

  const std::vector<const PairedSample*> one{&sample};
  const Rng base(o.seed);
  Tensor latent({o.count, m.latent_len()});
  for (std::size_t k = 0; k < o.count; ++k) {
    const Tensor z = encode_rows(st, one, base.child(k));
    for (std::size_t c = 0; c < z.dim(1); ++c) latent.at(k, c) = z.at(0, c);
  }
  const auto files = write_outputs(st, latent, o.out, [](std::size_t r) {
    char name[32];
    std::snprintf(name, sizeof name, "generated_%03zu", r);
    return std::string(name);
  });
  for (const auto& f : files) out << f.string() << '\n';
  return kExitOk;
}

int run_eval(const EvalOptions& o, std::ostream& out) {
  const ModelState st = load_checkpoint(o.checkpoint);
  const bool with_ii = parse_ii_backend(o.ii) == IiBackend::gaussian;
  const auto data = o.data.load(st.model);
  std::vector<std::string> splits;
  if (o.split == "all")
    splits = {"train", "val"};
  else if (o.split == "train" || o.split == "val")
    splits = {o.split};
  else
    throw UsageError("--split must be train, val or all");

  std::string csv = eval_csv_header() + "\n";
  for (const auto& s : splits) csv += eval_csv_row(evaluate(st, data, s, with_ii, o.seed)) + "\n";
  if (o.out.empty())
    out << csv;
  else
    write_text(o.out, csv);
  return kExitOk;
}

int run_pid(const PidOptions& o, std::ostream& out) {
  if (o.which.empty() == o.file.empty()) throw UsageError("give exactly one of --case or --file");
  info::JointDistribution joint = info::independent_joint();
  if (o.which == "xor")
    joint = info::xor_joint();
  else if (o.which == "copy")
    joint = info::copy_joint();
  else if (o.which == "indep")
    joint = info::independent_joint();
  else if (!o.which.empty())
    throw UsageError("unknown case '" + o.which + "' (expected xor, copy or indep)");
  if (!o.file.empty()) joint = info::load_joint(o.file);

  const auto pid = info::pid_decompose(joint);
  const auto routes = info::interaction_routes(joint);
  (void)info::interaction_info(joint);  // enforces agreement of the two routes
  const auto line = [&](const char* key, double v, const char* formula) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v == 0.0 ? 0.0 : v);
    out << key << '=' << buf << "  # " << formula << '\n';
  };
  line("total_bits", pid.total, "I(X1,X2;Y)");
  line("unique1_bits", pid.unique1, "I(X1;Y|X2)");
  line("unique2_bits", pid.unique2, "I(X2;Y|X1)");
  line("redundancy_bits", pid.redundancy, "I(X1;X2)");
  line("synergy_bits", pid.synergy, "total - unique1 - unique2 - redundancy");
  line("ii_mi_difference_bits", routes.mi_difference, "I(X1,X2;Y) - I(X1;Y) - I(X2;Y)");
  line("ii_conditional_bits", routes.conditional, "I(X1;Y|X2) - I(X1;Y)");
  line("ii_synergy_minus_redundancy_bits", pid.interaction_synergy_minus_redundancy, "synergy - redundancy");
  return kExitOk;
}

// Fills options absent from the command line with values from a key=value
// file. CLI11 only reads config files on the root app, so subcommands do it here.
void apply_config_file(CLI::App& cmd, const std::string& path) {
  if (!fs::exists(path)) throw UsageError("config file '" + path + "' does not exist");
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_file(path);
  } catch (const CLI::Error& ex) {
    throw UsageError("cannot read config file '" + path + "': " + ex.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    CLI::Option* opt = nullptr;
    try {
      opt = cmd.get_option("--" + item.name);
    } catch (const CLI::OptionNotFound&) {
      throw UsageError("unknown key '" + item.name + "' in config file '" + path + "'");
    }
    if (item.name == "config") throw UsageError("config files cannot nest");
    if (opt->count() > 0) continue;
    std::vector<std::string> values;
    for (const auto& v : item.inputs) {
      if (!v.empty() && v[0] == '#') break;  // trailing comment
      values.push_back(v);
    }
    try {
      opt->add_result(values);
      opt->run_callback();
    } catch (const CLI::Error& ex) {
      throw UsageError("bad value for '" + item.name + "' in config file '" + path + "': " + ex.what());
    }
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Paired cross-modal VAE with frozen random-projection encoders"};
  app.require_subcommand(1);
  std::string kernel_choice = "parallel";
  app.add_option("--kernels", kernel_choice, "Kernel implementation: parallel or serial")
      ->check(CLI::IsMember({"parallel", "serial"}))
      ->capture_default_str();

  TrainOptions t;
  auto* train_cmd = app.add_subcommand("train", "Train decoders on paired data");
  t.data.add_to(train_cmd);
  train_cmd->add_option("--preset", t.preset, "desk, paper, paper-visual or paper-audio")->capture_default_str();
  train_cmd->add_option("--latent", t.latent, "Latent length (joint latents split evenly)");
  train_cmd->add_option("--mode", t.mode, "joint, audio-only or visual-only")->capture_default_str();
  train_cmd->add_option("--epochs", t.epochs, "Total epochs")->capture_default_str();
  train_cmd->add_option("--batch", t.batch, "Batch size")->capture_default_str();
  train_cmd->add_option("--lr", t.lr, "Adam step size")->capture_default_str();
  train_cmd->add_option("--seed", t.seed, "Seed of encoders, decoders, projections and noise")->capture_default_str();
  train_cmd->add_option("--ii", t.ii, "Interaction term: gaussian or off")->capture_default_str();
  train_cmd->add_option("--ii-weight", t.ii_weight, "Weight of the interaction term")->capture_default_str();
  train_cmd->add_option("--recon-weight", t.recon_weight, "Weight of the reconstruction term")->capture_default_str();
  train_cmd->add_option("--sigma-scope", t.sigma_scope, "Noise scale from the batch or the whole dataset")
      ->capture_default_str();
  train_cmd->add_option("--out", t.out, "Output directory");
  train_cmd->add_option("--resume", t.resume, "Continue from a checkpoint up to --epochs total");
  train_cmd->add_option("--sample-every", t.sample_every, "Write sample outputs every N epochs (0 = never)");
  train_cmd->add_flag("--dry-run", t.dry_run, "Resolve and print the configuration, then exit");
  train_cmd->add_option("--config", t.config, "key=value file of option defaults; flags override it");

  GenerateOptions g;
  auto* gen_cmd = app.add_subcommand("generate", "Decode outputs from a trained checkpoint");
  gen_cmd->add_option("--checkpoint", g.checkpoint, "Checkpoint file")->required();
  gen_cmd->add_option("--from", g.from, "Input modalities: audio, image or both");
  gen_cmd->add_option("--in", g.inputs, "Input file, .ppm image or .wav audio (repeatable)")->required();
  gen_cmd->add_option("--count", g.count, "Number of samples")->capture_default_str();
  gen_cmd->add_option("--out", g.out, "Output directory")->capture_default_str();
  gen_cmd->add_option("--seed", g.seed, "Noise seed")->capture_default_str();

  EvalOptions e;
  auto* eval_cmd = app.add_subcommand("eval", "Reconstruction and interaction metrics per split");
  e.data.add_to(eval_cmd);
  eval_cmd->add_option("--checkpoint", e.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--split", e.split, "train, val or all")->capture_default_str();
  eval_cmd->add_option("--ii", e.ii, "gaussian or off")->capture_default_str();
  eval_cmd->add_option("--seed", e.seed, "Noise seed")->capture_default_str();
  eval_cmd->add_option("--out", e.out, "CSV file (default: stdout)");

  PidOptions p;
  auto* pid_cmd = app.add_subcommand("pid", "Exact information decomposition of a discrete joint");
  pid_cmd->add_option("--case", p.which, "xor, copy or indep");
  pid_cmd->add_option("--file", p.file, "Joint pmf file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train_cmd->parsed() && !t.config.empty()) apply_config_file(*train_cmd, t.config);
    kernels::configure_threads_from_env();
    kernels::set_execution(kernel_choice == "serial" ? kernels::Execution::serial : kernels::Execution::parallel);
    if (train_cmd->parsed()) return run_train(t, out);
    if (gen_cmd->parsed()) return run_generate(g, out);
    if (eval_cmd->parsed()) return run_eval(e, out);
    return run_pid(p, out);
  } catch (const TrainingError& ex) {
    err << "error: training diverged: " << ex.what() << '\n';
    return kExitDiverged;
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const DistributionError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const CheckpointError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const TokenizationError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const DimensionError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace pcvae
