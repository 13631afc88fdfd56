#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gengan/corpus.hpp"
#include "gengan/frontend.hpp"
#include "gengan/gan.hpp"

namespace gengan {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;
  double learning_rate = 0.001;
  double epsilon = 0.001;
  double label_mean = 0.5;
  double label_variance = 0.05;
  int d_z = 64;
  std::uint64_t seed = 0;
  GeneratorTarget generator_target = GeneratorTarget::ground_truth;
  int crop_frames = 128;
  int checkpoint_every = 10;
  double inference_label = 0.5;
  int gen_base_channels = 16;
  int gen_depth = 4;
  int disc_base_channels = 16;
  double beta1 = 0.9;
  double beta2 = 0.999;

  void validate() const;
  GeneratorTopology generator_topology(int bands) const;
  DiscriminatorTopology discriminator_topology(int bands) const;
};

/// key=value lines mirroring the field names above ('#' starts a comment).
/// Unknown keys and malformed values raise ParseError(line).
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::map<std::string, std::string> to_key_values(const TrainConfig& cfg);

struct EpochLosses {
  double generator = 0.0;      // L_G
  double discriminator = 0.0;  // L_D
  double distortion = 0.0;     // L_d
  double adversarial = 0.0;    // L_a
  double disc_real = 0.0;
  double disc_fake = 0.0;
};

struct TrainState {
  TrainConfig config;
  FrontendConfig frontend;
  int epoch = 0;  // completed epochs
  Generator generator;
  Discriminator discriminator;
  nn::Adam gen_opt;
  nn::Adam disc_opt;
  std::vector<EpochLosses> history;
  std::uint64_t d_updates = 0;
  std::uint64_t g_updates = 0;
};

struct TrainOptions {
  /// Where periodic and final checkpoints go; empty disables writing.
  std::filesystem::path checkpoint_dir;
  /// Called with 'D' or 'G' after every optimizer step.
  std::function<void(char)> on_update;
  /// Called after every completed epoch.
  std::function<void(const TrainState&)> on_epoch;
};

TrainState init_state(const TrainConfig& cfg, const FrontendConfig& fe = {});

/// Runs the alternating updates until `state.epoch == until_epoch`.
/// InvalidInput for an empty record set; DivergenceError on a non-finite loss.
void train_epochs(TrainState& state, const std::vector<UtteranceRecord>& records, int until_epoch,
                  const TrainOptions& opts = {});

/// Fresh state trained for cfg.epochs over the train split of `records`.
TrainState train(const TrainConfig& cfg, const std::vector<UtteranceRecord>& records,
                 const TrainOptions& opts = {});

void save_state(const std::filesystem::path& path, const TrainState& state);
/// Restores a state written by save_state. CheckpointError for a missing
/// file, version mismatch or corrupted tensor block (naming it).
TrainState resume(const std::filesystem::path& path);

/// Generator and settings needed for inference.
struct TransformModel {
  Generator generator;
  FrontendConfig frontend;
  double inference_label = 0.5;
  int vocoder_iterations = 64;
  std::string digest;  // SHA-256 of the checkpoint file
};

TransformModel load_transform_model(const std::filesystem::path& checkpoint);

/// x -> mel -> generator (z drawn from `seed`, label 0.5) -> vocoder.
Waveform transform(const Waveform& x, const TransformModel& model, std::uint64_t seed);
Waveform transform(const Waveform& x, const std::filesystem::path& checkpoint, std::uint64_t seed);

/// Training-set preparation shared with the attackers: fixed-length crop of
/// a spectrogram starting at `offset`, padded with the floor value.
Tensor crop_batch(const std::vector<const MelSpectrogram*>& mels, const std::vector<int>& offsets, int frames);

}  // namespace gengan
