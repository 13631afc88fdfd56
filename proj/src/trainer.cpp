#include "gengan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "gengan/config.hpp"
#include "gengan/error.hpp"
#include "gengan/rng.hpp"
#include "serial_util.hpp"

namespace gengan {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidInput("epochs must be at least 1");
  if (batch_size < 1) throw InvalidInput("batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw InvalidInput("learning_rate must be positive");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InvalidInput("epsilon must lie in [0, 1]");
  if (!(label_variance >= 0.0)) throw InvalidInput("label_variance must be non-negative");
  if (!(label_mean >= 0.0 && label_mean <= 1.0)) throw InvalidInput("label_mean must lie in [0, 1]");
  if (!(inference_label >= 0.0 && inference_label <= 1.0))
    throw InvalidInput("inference_label must lie in [0, 1]");
  if (d_z < 1) throw InvalidInput("d_z must be at least 1");
  if (gen_depth < 1 || gen_depth > 8) throw InvalidInput("gen_depth must lie in [1, 8]");
  if (gen_base_channels < 1 || disc_base_channels < 1) throw InvalidInput("channel widths must be positive");
  const int mult = 1 << gen_depth;
  if (crop_frames < mult || crop_frames % mult != 0)
    throw InvalidInput("crop_frames must be a positive multiple of 2^gen_depth");
  if (checkpoint_every < 1) throw InvalidInput("checkpoint_every must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw InvalidInput("Adam betas must lie in [0, 1)");
}

GeneratorTopology TrainConfig::generator_topology(int bands) const {
  GeneratorTopology t;
  t.bands = bands;
  t.base_channels = gen_base_channels;
  t.depth = gen_depth;
  t.noise_dim = d_z;
  return t;
}

DiscriminatorTopology TrainConfig::discriminator_topology(int bands) const {
  DiscriminatorTopology t;
  t.bands = bands;
  t.base_channels = disc_base_channels;
  return t;
}

// --- key=value config -------------------------------------------------------

namespace {

struct Field {
  const char* key;
  std::function<void(TrainConfig&, const KeyValue&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

#define GENGAN_INT_FIELD(name) \
  Field{#name, [](TrainConfig& c, const KeyValue& kv) { c.name = to_int(kv); }, \
        [](const TrainConfig& c) { return std::to_string(c.name); }}
#define GENGAN_DOUBLE_FIELD(name) \
  Field{#name, [](TrainConfig& c, const KeyValue& kv) { c.name = to_double(kv); }, \
        [](const TrainConfig& c) { return fmt_double(c.name); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      GENGAN_INT_FIELD(epochs),
      GENGAN_INT_FIELD(batch_size),
      GENGAN_DOUBLE_FIELD(learning_rate),
      GENGAN_DOUBLE_FIELD(epsilon),
      GENGAN_DOUBLE_FIELD(label_mean),
      GENGAN_DOUBLE_FIELD(label_variance),
      GENGAN_INT_FIELD(d_z),
      Field{"seed", [](TrainConfig& c, const KeyValue& kv) { c.seed = to_u64(kv); },
            [](const TrainConfig& c) { return std::to_string(c.seed); }},
      Field{"generator_target",
            [](TrainConfig& c, const KeyValue& kv) {
              try {
                c.generator_target = parse_generator_target(kv.value);
              } catch (const InvalidInput& e) {
                throw ParseError(kv.line, e.what());
              }
            },
            [](const TrainConfig& c) { return to_string(c.generator_target); }},
      GENGAN_INT_FIELD(crop_frames),
      GENGAN_INT_FIELD(checkpoint_every),
      GENGAN_DOUBLE_FIELD(inference_label),
      GENGAN_INT_FIELD(gen_base_channels),
      GENGAN_INT_FIELD(gen_depth),
      GENGAN_INT_FIELD(disc_base_channels),
      GENGAN_DOUBLE_FIELD(beta1),
      GENGAN_DOUBLE_FIELD(beta2),
  };
  return f;
}

#undef GENGAN_INT_FIELD
#undef GENGAN_DOUBLE_FIELD

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  for (const auto& kv : parse_key_values(text)) {
    auto it = std::find_if(fields().begin(), fields().end(),
                           [&](const Field& f) { return kv.key == f.key; });
    if (it == fields().end()) throw ParseError(kv.line, "unknown key '" + kv.key + "'");
    it->set(cfg, kv);
  }
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  return parse_train_config(read_text_file(path));
}

std::map<std::string, std::string> to_key_values(const TrainConfig& cfg) {
  std::map<std::string, std::string> out;
  for (const auto& f : fields()) out[f.key] = f.get(cfg);
  return out;
}

namespace {

TrainConfig config_from_map(const json& j) {
  std::string text;
  for (const auto& [k, v] : j.items()) text += k + "=" + v.get<std::string>() + "\n";
  return parse_train_config(text);
}

}  // namespace

// --- training loop ----------------------------------------------------------

TrainState init_state(const TrainConfig& cfg, const FrontendConfig& fe) {
  cfg.validate();
  TrainState s;
  s.config = cfg;
  s.frontend = fe;
  s.generator = Generator(cfg.generator_topology(fe.n_bands), derive_seed(cfg.seed, "generator"));
  s.discriminator = Discriminator(cfg.discriminator_topology(fe.n_bands), derive_seed(cfg.seed, "discriminator"));
  s.gen_opt = nn::Adam(cfg.learning_rate, cfg.beta1, cfg.beta2);
  s.disc_opt = nn::Adam(cfg.learning_rate, cfg.beta1, cfg.beta2);
  return s;
}

Tensor crop_batch(const std::vector<const MelSpectrogram*>& mels, const std::vector<int>& offsets, int frames) {
  if (mels.empty()) throw InvalidInput("crop_batch: empty batch");
  const std::size_t bands = static_cast<std::size_t>(mels.front()->n_bands);
  Tensor t({mels.size(), bands, static_cast<std::size_t>(frames)});
  for (std::size_t i = 0; i < mels.size(); ++i) {
    const MelSpectrogram& m = *mels[i];
    if (static_cast<std::size_t>(m.n_bands) != bands) throw InvalidInput("crop_batch: band count mismatch");
    const int start = offsets[i];
    const int avail = std::clamp(m.n_frames - start, 0, frames);
    for (std::size_t b = 0; b < bands; ++b) {
      const double* src = m.values.data() + b * m.n_frames + start;
      std::copy(src, src + avail, &t.at(i, b, 0));
    }
  }
  return t;
}

namespace {

void check_finite(double v, int epoch, std::size_t batch) {
  if (!std::isfinite(v)) throw DivergenceError(static_cast<std::size_t>(epoch), batch);
}

std::filesystem::path periodic_name(const std::filesystem::path& dir, int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "checkpoint_e%03d.ckpt", epoch);
  return dir / buf;
}

}  // namespace

void train_epochs(TrainState& s, const std::vector<UtteranceRecord>& records, int until_epoch,
                  const TrainOptions& opts) {
  const TrainConfig& cfg = s.config;
  cfg.validate();
  auto train_set = filter_split(records, Split::train);
  if (train_set.empty()) throw InvalidInput("training manifest has no train-split utterances");
  if (until_epoch < s.epoch) throw InvalidInput("requested epoch is behind the training state");

  std::vector<MelSpectrogram> mels;
  std::vector<double> labels;
  mels.reserve(train_set.size());
  for (const auto& r : train_set) {
    mels.push_back(mel_spectrogram(read_wav(r.audio_path), s.frontend));
    labels.push_back(label_value(r.gender));
  }

  const std::size_t n = mels.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const auto gen_params = s.generator.params();
  const auto disc_params = s.discriminator.params();

  while (s.epoch < until_epoch) {
    const int epoch = s.epoch;
    const auto order = epoch_permutation(n, derive_seed(cfg.seed, "epoch"), static_cast<std::size_t>(epoch));
    const std::uint64_t crop_seed = derive_seed(cfg.seed, "crop", static_cast<std::uint64_t>(epoch));
    const std::uint64_t batch_seed = derive_seed(cfg.seed, "batch", static_cast<std::uint64_t>(epoch));
    EpochLosses sum;
    std::size_t batches = 0;

    for (std::size_t start = 0; start < n; start += bs, ++batches) {
      const std::size_t count = std::min(bs, n - start);
      std::vector<const MelSpectrogram*> batch;
      std::vector<int> offsets;
      std::vector<double> y;
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t idx = order[start + k];
        const MelSpectrogram& m = mels[idx];
        const int slack = m.n_frames - cfg.crop_frames;
        const std::uint64_t r = derive_seed(crop_seed, "utt", idx);
        offsets.push_back(slack > 0 ? static_cast<int>(r % static_cast<std::uint64_t>(slack + 1)) : 0);
        batch.push_back(&m);
        y.push_back(labels[idx]);
      }
      const Tensor real = crop_batch(batch, offsets, cfg.crop_frames);
      const auto y_n = sample_soft_labels(count, cfg.label_mean, cfg.label_variance,
                                          derive_seed(batch_seed, "labels", batches))
                           .values;
      Tensor z({count, static_cast<std::size_t>(cfg.d_z)});
      z.data = sample_noise(z.size(), derive_seed(batch_seed, "noise", batches));

      const Tensor fake = s.generator.forward(real, z, y_n);

      // Discriminator step on L_D.
      nn::zero_grad(disc_params);
      const auto y_r = s.discriminator.forward(real);
      std::vector<double> d(count);
      for (std::size_t i = 0; i < count; ++i) d[i] = bce_grad(y[i], y_r[i]) / double(count);
      s.discriminator.backward(d);
      const auto y_f_detached = s.discriminator.forward(fake);
      for (std::size_t i = 0; i < count; ++i) d[i] = bce_grad(y_n[i], y_f_detached[i]) / double(count);
      s.discriminator.backward(d);
      const LossBreakdown ld = discriminator_loss_batch(y, y_r, y_n, y_f_detached);
      check_finite(ld.total, epoch, batches);
      s.disc_opt.step(disc_params);
      ++s.d_updates;
      if (opts.on_update) opts.on_update('D');

      // Generator step on L_G against the updated discriminator.
      nn::zero_grad(gen_params);
      const auto y_f = s.discriminator.forward(fake);
      const std::vector<double>& target = cfg.generator_target == GeneratorTarget::ground_truth ? y : y_n;
      const LossBreakdown lg = generator_loss_batch(real, fake, target, y_f, cfg.epsilon);
      check_finite(lg.total, epoch, batches);
      Tensor d_fake(fake.shape);
      const double scale = 2.0 / static_cast<double>(fake.size());
      for (std::size_t i = 0; i < fake.size(); ++i) d_fake.data[i] = scale * (fake.data[i] - real.data[i]);
      if (cfg.epsilon > 0.0) {
        for (std::size_t i = 0; i < count; ++i) d[i] = cfg.epsilon * bce_grad(target[i], y_f[i]) / double(count);
        const Tensor d_adv = s.discriminator.backward(d);
        for (std::size_t i = 0; i < d_fake.size(); ++i) d_fake.data[i] += d_adv.data[i];
      }
      s.generator.backward(d_fake);
      s.gen_opt.step(gen_params);
      ++s.g_updates;
      if (opts.on_update) opts.on_update('G');

      sum.generator += lg.total;
      sum.distortion += lg.distortion;
      sum.adversarial += lg.adversarial;
      sum.discriminator += ld.total;
      sum.disc_real += ld.real_term;
      sum.disc_fake += ld.fake_term;
    }
    if (!nn::all_finite(gen_params) || !nn::all_finite(disc_params))
      throw DivergenceError(static_cast<std::size_t>(epoch), batches);

    const double inv = 1.0 / static_cast<double>(batches);
    s.history.push_back({sum.generator * inv, sum.discriminator * inv, sum.distortion * inv,
                         sum.adversarial * inv, sum.disc_real * inv, sum.disc_fake * inv});
    s.epoch = epoch + 1;
    if (opts.on_epoch) opts.on_epoch(s);
    if (!opts.checkpoint_dir.empty() && s.epoch % cfg.checkpoint_every == 0)
      save_state(periodic_name(opts.checkpoint_dir, s.epoch), s);
  }
  if (!opts.checkpoint_dir.empty()) save_state(opts.checkpoint_dir / "checkpoint.ckpt", s);
}

TrainState train(const TrainConfig& cfg, const std::vector<UtteranceRecord>& records, const TrainOptions& opts) {
  cfg.validate();
  if (records.empty()) throw InvalidInput("training manifest is empty");
  TrainState s = init_state(cfg);
  if (!opts.checkpoint_dir.empty()) std::filesystem::create_directories(opts.checkpoint_dir);
  train_epochs(s, records, cfg.epochs, opts);
  return s;
}

// --- checkpoints ------------------------------------------------------------

namespace {

constexpr const char* kStateKind = "gengan-train-state";

json history_json(const std::vector<EpochLosses>& h) {
  json a = json::array();
  for (const auto& e : h)
    a.push_back({{"generator", e.generator},
                 {"discriminator", e.discriminator},
                 {"distortion", e.distortion},
                 {"adversarial", e.adversarial},
                 {"disc_real", e.disc_real},
                 {"disc_fake", e.disc_fake}});
  return a;
}

void store_moments(TensorContainer& c, const std::string& prefix, const nn::Adam& opt,
                   const std::vector<nn::Param*>& ps) {
  for (std::size_t i = 0; i < opt.first.size(); ++i) {
    c.put(prefix + "m/" + ps[i]->name, opt.first[i]);
    c.put(prefix + "v/" + ps[i]->name, opt.second[i]);
  }
}

void load_moments(const TensorContainer& c, const std::string& prefix, nn::Adam& opt,
                  const std::vector<nn::Param*>& ps) {
  opt.first.clear();
  opt.second.clear();
  if (opt.t_ == 0) return;
  for (auto* p : ps) {
    for (auto [tag, dest] : {std::pair{"m/", &opt.first}, std::pair{"v/", &opt.second}}) {
      const std::string name = prefix + tag + p->name;
      const auto* t = c.find(name);
      if (!t) throw CheckpointError("tensor '" + name + "' missing from checkpoint");
      if (t->value.shape != p->value.shape) throw CheckpointError("tensor '" + name + "' has an unexpected shape");
      dest->push_back(t->value);
    }
  }
}

json topology_json(const GeneratorTopology& g) {
  return {{"bands", g.bands}, {"base_channels", g.base_channels}, {"depth", g.depth},
          {"kernel", g.kernel}, {"noise_dim", g.noise_dim}};
}

GeneratorTopology generator_topology_from(const json& j) {
  GeneratorTopology g;
  g.bands = j.at("bands").get<int>();
  g.base_channels = j.at("base_channels").get<int>();
  g.depth = j.at("depth").get<int>();
  g.kernel = j.at("kernel").get<int>();
  g.noise_dim = j.at("noise_dim").get<int>();
  return g;
}

}  // namespace

void save_state(const std::filesystem::path& path, const TrainState& s) {
  TrainState& m = const_cast<TrainState&>(s);  // params() hands out mutable pointers only
  const auto gp = m.generator.params();
  const auto dp = m.discriminator.params();
  const auto& dt = s.discriminator.topology();
  json meta = {{"kind", kStateKind},
               {"config", to_key_values(s.config)},
               {"frontend", detail::frontend_json(s.frontend)},
               {"generator_topology", topology_json(s.generator.topology())},
               {"discriminator_topology",
                {{"bands", dt.bands}, {"base_channels", dt.base_channels}, {"blocks", dt.blocks}, {"kernel", dt.kernel}}},
               {"epoch", s.epoch},
               {"history", history_json(s.history)},
               {"d_updates", s.d_updates},
               {"g_updates", s.g_updates},
               {"generator_adam_steps", s.gen_opt.t_},
               {"discriminator_adam_steps", s.disc_opt.t_}};
  TensorContainer c;
  c.metadata = meta.dump();
  store_params(c, "generator/", gp);
  store_params(c, "discriminator/", dp);
  store_moments(c, "adam/generator/", s.gen_opt, gp);
  store_moments(c, "adam/discriminator/", s.disc_opt, dp);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_container(path, c);
}

TrainState resume(const std::filesystem::path& path) {
  const TensorContainer c = read_container(path);
  const json meta = detail::parse_metadata(c.metadata, kStateKind, path);
  try {
    const TrainConfig cfg = config_from_map(meta.at("config"));
    const FrontendConfig fe = detail::frontend_from_json(meta.at("frontend"));
    TrainState s = init_state(cfg, fe);
    load_params(c, "generator/", s.generator.params());
    load_params(c, "discriminator/", s.discriminator.params());
    s.gen_opt.t_ = meta.at("generator_adam_steps").get<std::uint64_t>();
    s.disc_opt.t_ = meta.at("discriminator_adam_steps").get<std::uint64_t>();
    load_moments(c, "adam/generator/", s.gen_opt, s.generator.params());
    load_moments(c, "adam/discriminator/", s.disc_opt, s.discriminator.params());
    s.epoch = meta.at("epoch").get<int>();
    s.d_updates = meta.at("d_updates").get<std::uint64_t>();
    s.g_updates = meta.at("g_updates").get<std::uint64_t>();
    for (const auto& e : meta.at("history"))
      s.history.push_back({e.at("generator").get<double>(), e.at("discriminator").get<double>(),
                           e.at("distortion").get<double>(), e.at("adversarial").get<double>(),
                           e.at("disc_real").get<double>(), e.at("disc_fake").get<double>()});
    if (s.history.size() != static_cast<std::size_t>(s.epoch))
      throw CheckpointError(path.string() + ": loss history does not match the epoch counter");
    return s;
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": malformed metadata: " + e.what());
  } catch (const InvalidInput& e) {
    throw CheckpointError(path.string() + ": invalid stored configuration: " + e.what());
  }
}

// --- inference --------------------------------------------------------------

TransformModel load_transform_model(const std::filesystem::path& checkpoint) {
  if (!std::filesystem::exists(checkpoint)) throw CheckpointError("checkpoint not found: " + checkpoint.string());
  const auto bytes = detail::read_bytes(checkpoint);
  const TensorContainer c = deserialize(bytes);
  const json meta = detail::parse_metadata(c.metadata, kStateKind, checkpoint);
  TransformModel model;
  try {
    const TrainConfig cfg = config_from_map(meta.at("config"));
    model.frontend = detail::frontend_from_json(meta.at("frontend"));
    model.inference_label = cfg.inference_label;
    model.generator = Generator(generator_topology_from(meta.at("generator_topology")), 0);
  } catch (const json::exception& e) {
    throw CheckpointError(checkpoint.string() + ": malformed metadata: " + e.what());
  } catch (const InvalidInput& e) {
    throw CheckpointError(checkpoint.string() + ": invalid stored configuration: " + e.what());
  }
  load_params(c, "generator/", model.generator.params());
  model.digest = hex_digest(bytes);
  return model;
}

Waveform transform(const Waveform& x, const TransformModel& model, std::uint64_t seed) {
  const MelSpectrogram m = mel_spectrogram(x, model.frontend);
  const auto z = sample_noise(static_cast<std::size_t>(model.generator.topology().noise_dim),
                              derive_seed(seed, "transform"));
  const MelSpectrogram out = generate(model.generator, m, z, model.inference_label);
  Waveform y = invert_mel(out, model.vocoder_iterations, model.frontend);
  y.samples.resize(x.samples.size(), 0.0);
  return y;
}

Waveform transform(const Waveform& x, const std::filesystem::path& checkpoint, std::uint64_t seed) {
  return transform(x, load_transform_model(checkpoint), seed);
}

}  // namespace gengan
