// Command-line front end: corpus generation, training, transformation,
// attacker training, evaluation and reporting.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gengan/adversary.hpp"
#include "gengan/config.hpp"
#include "gengan/corpus.hpp"
#include "gengan/error.hpp"
#include "gengan/metrics.hpp"
#include "gengan/report.hpp"
#include "gengan/rng.hpp"
#include "gengan/trainer.hpp"

namespace fs = std::filesystem;
using namespace gengan;

namespace {

CorpusConfig load_corpus_config(const fs::path& path) {
  CorpusConfig c;
  for (const auto& kv : parse_key_values(read_text_file(path))) {
    if (kv.key == "n_speakers") c.n_speakers = to_int(kv);
    else if (kv.key == "utterances_per_speaker") c.utterances_per_speaker = to_int(kv);
    else if (kv.key == "vocabulary_size") c.vocabulary_size = to_int(kv);
    else if (kv.key == "seed") c.seed = to_u64(kv);
    else if (kv.key == "min_words") c.min_words = to_int(kv);
    else if (kv.key == "max_words") c.max_words = to_int(kv);
    else throw ParseError(kv.line, "unknown key '" + kv.key + "'");
  }
  return c;
}

AttackerConfig load_attacker_config(const fs::path& path) {
  AttackerConfig c;
  for (const auto& kv : parse_key_values(read_text_file(path))) {
    if (kv.key == "seed") c.seed = to_u64(kv);
    else if (kv.key == "gender_epochs") c.gender.epochs = to_int(kv);
    else if (kv.key == "gender_channels") c.gender.channels = to_int(kv);
    else if (kv.key == "embedder_epochs") c.embedder.epochs = to_int(kv);
    else if (kv.key == "embedder_channels") c.embedder.channels = to_int(kv);
    else if (kv.key == "embedding_dim") c.embedder.embedding_dim = to_int(kv);
    else throw ParseError(kv.line, "unknown key '" + kv.key + "'");
  }
  return c;
}

void write_loss_csv(const fs::path& path, const TrainState& s) {
  std::ofstream out(path);
  out << "epoch,L_G,L_D,L_d,L_a,D_real,D_fake\n";
  out.precision(10);
  for (std::size_t i = 0; i < s.history.size(); ++i) {
    const auto& h = s.history[i];
    out << i + 1 << ',' << h.generator << ',' << h.discriminator << ',' << h.distortion << ',' << h.adversarial
        << ',' << h.disc_real << ',' << h.disc_fake << '\n';
  }
}

void print_epoch(const TrainState& s) {
  const auto& h = s.history.back();
  std::printf("epoch %3d  L_G %.6f  L_D %.4f  L_d %.6f  L_a %.4f\n", s.epoch, h.generator, h.discriminator,
              h.distortion, h.adversarial);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gender-ambiguous voice transformation and privacy evaluation"};
  app.require_subcommand(1);

  // corpus build
  auto* corpus = app.add_subcommand("corpus", "Synthetic corpus tools");
  corpus->require_subcommand(1);
  auto* build = corpus->add_subcommand("build", "Generate the synthetic corpus and its manifest");
  std::string corpus_out = "corpus", corpus_cfg;
  CorpusConfig cc;
  build->add_option("--out", corpus_out, "Output directory");
  build->add_option("--config", corpus_cfg, "key=value file")->check(CLI::ExistingFile);
  auto* o_spk = build->add_option("--speakers", cc.n_speakers, "Number of speakers (even)");
  auto* o_utt = build->add_option("--utterances", cc.utterances_per_speaker, "Utterances per speaker");
  auto* o_voc = build->add_option("--vocabulary", cc.vocabulary_size, "Vocabulary size");
  auto* o_cseed = build->add_option("--seed", cc.seed, "Corpus seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "Adversarial training of the generator");
  std::string manifest, train_out = "run", train_cfg, resume_path;
  int epochs_override = 0;
  std::uint64_t seed_override = 0;
  train_cmd->add_option("--manifest", manifest, "Corpus manifest")->required();
  train_cmd->add_option("--out", train_out, "Checkpoint directory");
  train_cmd->add_option("--config", train_cfg, "key=value training configuration");
  auto* o_epochs = train_cmd->add_option("--epochs", epochs_override, "Override the epoch count");
  auto* o_tseed = train_cmd->add_option("--seed", seed_override, "Override the seed");
  train_cmd->add_option("--resume", resume_path, "Continue from a saved training state");

  // transform
  auto* tf_cmd = app.add_subcommand("transform", "Transform one WAV file");
  std::string tf_in, tf_out, checkpoint;
  std::uint64_t tf_seed = 0;
  tf_cmd->add_option("input", tf_in, "Input WAV")->required();
  tf_cmd->add_option("output", tf_out, "Output WAV")->required();
  tf_cmd->add_option("--checkpoint", checkpoint, "Generator checkpoint")->required();
  tf_cmd->add_option("--seed", tf_seed, "Noise seed");

  // attackers train
  auto* att = app.add_subcommand("attackers", "Attacker models");
  att->require_subcommand(1);
  auto* att_train = att->add_subcommand("train", "Train gender, speaker and word attackers on original audio");
  std::string att_manifest, att_out = "attackers.ckpt", att_cfg;
  att_train->add_option("--manifest", att_manifest, "Corpus manifest")->required();
  att_train->add_option("--out", att_out, "Attacker bundle");
  att_train->add_option("--config", att_cfg, "key=value attacker configuration");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Run the attack scenario on the test split");
  std::string ev_checkpoint, ev_manifest, ev_out = "report.json", ev_attackers = "attackers.ckpt", ev_mode = "gengan",
                                          ev_plots, ev_label;
  std::uint64_t ev_seed = 0;
  int ev_iters = 64;
  ev->add_option("--checkpoint", ev_checkpoint, "Generator checkpoint (gengan mode)");
  ev->add_option("--manifest", ev_manifest, "Corpus manifest")->required();
  ev->add_option("--out", ev_out, "Report JSON");
  ev->add_option("--attackers", ev_attackers, "Attacker bundle");
  ev->add_option("--mode", ev_mode, "original, vocoder or gengan");
  ev->add_option("--seed", ev_seed, "Evaluation seed");
  ev->add_option("--vocoder-iterations", ev_iters, "Phase reconstruction iterations");
  ev->add_option("--plots", ev_plots, "Directory for a spectrogram grid of test utterances");
  ev->add_option("--label", ev_label, "System label used in tables and plots");

  // report
  auto* rep = app.add_subcommand("report", "Tabulate and plot evaluation reports");
  std::vector<std::string> rep_in;
  std::string rep_plots;
  rep->add_option("--in", rep_in, "Report JSON file(s)")->required();
  rep->add_option("--plots", rep_plots, "Directory for CSV and trade-off plot");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (build->parsed()) {
      CorpusConfig cfg = corpus_cfg.empty() ? CorpusConfig{} : load_corpus_config(corpus_cfg);
      if (o_spk->count()) cfg.n_speakers = cc.n_speakers;
      if (o_utt->count()) cfg.utterances_per_speaker = cc.utterances_per_speaker;
      if (o_voc->count()) cfg.vocabulary_size = cc.vocabulary_size;
      if (o_cseed->count()) cfg.seed = cc.seed;
      const fs::path dir = resolve_output(corpus_out);
      const auto recs = build_corpus(cfg, dir);
      std::printf("%zu utterances written to %s\n", recs.size(), (dir / "manifest.tsv").string().c_str());
    } else if (train_cmd->parsed()) {
      const auto recs = load_manifest(manifest);
      const fs::path dir = resolve_output(train_out);
      fs::create_directories(dir);
      TrainOptions opts;
      opts.checkpoint_dir = dir;
      opts.on_epoch = print_epoch;
      TrainState state;
      if (!resume_path.empty()) {
        state = resume(resume_path);
        const int until = o_epochs->count() ? epochs_override : state.config.epochs;
        train_epochs(state, recs, until, opts);
      } else {
        TrainConfig cfg = train_cfg.empty() ? TrainConfig{} : load_train_config(train_cfg);
        if (o_epochs->count()) cfg.epochs = epochs_override;
        if (o_tseed->count()) cfg.seed = seed_override;
        state = train(cfg, recs, opts);
      }
      write_loss_csv(dir / "losses.csv", state);
      std::printf("checkpoint: %s\n", (dir / "checkpoint.ckpt").string().c_str());
    } else if (tf_cmd->parsed()) {
      const Waveform y = transform(read_wav(tf_in), fs::path(checkpoint), tf_seed);
      write_wav(resolve_output(tf_out), y);
    } else if (att_train->parsed()) {
      const AttackerConfig cfg = att_cfg.empty() ? AttackerConfig{} : load_attacker_config(att_cfg);
      const auto suite = train_attackers(load_manifest(att_manifest), cfg);
      const fs::path out = resolve_output(att_out);
      save_attackers(out, suite);
      std::printf("gender classifier training accuracy: %.2f%%\n", suite.gender_log.epoch_accuracy.back());
      std::printf("word templates: %zu\nattackers: %s\n", suite.templates.templates.size(), out.string().c_str());
    } else if (ev->parsed()) {
      EvalRequest req;
      req.mode = parse_eval_mode(ev_mode);
      if (req.mode == EvalMode::gengan && ev_checkpoint.empty())
        throw InvalidInput("--checkpoint is required in gengan mode");
      req.checkpoint = ev_checkpoint;
      req.manifest = ev_manifest;
      req.attackers = resolve_output(ev_attackers);
      req.seed = ev_seed;
      req.vocoder_iterations = ev_iters;
      MetricsReport r = evaluate(req);
      if (!ev_label.empty()) r.label = ev_label;
      write_report(resolve_output(ev_out), r);
      std::cout << format_table({r});
      if (!ev_plots.empty() && req.mode == EvalMode::gengan) {
        const auto model = load_transform_model(req.checkpoint);
        const auto test = filter_split(load_manifest(req.manifest), Split::test);
        std::vector<std::pair<MelSpectrogram, MelSpectrogram>> pairs;
        std::vector<std::string> labels;
        for (std::size_t i = 0; i < test.size() && pairs.size() < 4; i += std::max<std::size_t>(1, test.size() / 4)) {
          const Waveform x = read_wav(test[i].audio_path);
          const Waveform y = transform(x, model, derive_seed(req.seed, "utterance", i));
          pairs.emplace_back(mel_spectrogram(x, model.frontend), mel_spectrogram(y, model.frontend));
          labels.push_back(test[i].speaker_id + " (" + gender_code(test[i].gender) + ")");
        }
        const fs::path png = resolve_output(ev_plots) / "spectrograms.png";
        render_spectrogram_grid(pairs, labels, png);
        std::printf("plot: %s\n", png.string().c_str());
      }
    } else if (rep->parsed()) {
      std::vector<MetricsReport> reports;
      for (const auto& p : rep_in)
        for (auto& r : read_reports(p)) reports.push_back(std::move(r));
      const auto out = render_report(reports, rep_plots.empty() ? fs::path() : resolve_output(rep_plots));
      std::cout << out.table;
      for (const auto& f : out.files) std::printf("wrote %s\n", f.string().c_str());
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
