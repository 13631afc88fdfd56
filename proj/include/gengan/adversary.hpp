#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gengan/container.hpp"
#include "gengan/corpus.hpp"
#include "gengan/frontend.hpp"
#include "gengan/nn.hpp"

namespace gengan {

/// Attacker input: peak-normalized audio analysed with the shared frontend.
MelSpectrogram attacker_features(const Waveform& x, const FrontendConfig& fe = {});

// --- gender classifier ------------------------------------------------------

struct GenderNetConfig {
  int channels = 32;
  int kernel = 5;
  int epochs = 12;
  int batch_size = 16;
  int crop_frames = 64;
  double learning_rate = 1e-3;
};

/// Five conv + batch-norm + max-pool blocks over mel frames, global average
/// pooling, one linear unit and a sigmoid (probability of female).
class GenderNet {
 public:
  static constexpr int kBlocks = 5;

  GenderNet() = default;
  GenderNet(int bands, const GenderNetConfig& cfg, std::uint64_t seed);

  std::vector<double> forward(const Tensor& mel, bool training);
  void backward(std::span<const double> d_prob);

  std::vector<nn::Param*> params();
  std::vector<nn::Buffer*> buffers();
  /// Minimum frame count accepted by forward (shorter inputs are padded).
  std::size_t min_frames() const { return std::size_t{1} << kBlocks; }
  int bands() const { return bands_; }
  const GenderNetConfig& config() const { return cfg_; }

 private:
  int bands_ = 80;
  GenderNetConfig cfg_;
  std::vector<nn::Conv1d> convs_;
  std::vector<nn::BatchNorm1d> norms_;
  std::vector<nn::LeakyRelu> acts_;
  std::vector<nn::MaxPool1d> pools_;
  nn::Linear out_;
  nn::Sigmoid squash_;
  std::size_t pooled_length_ = 0;
};

struct GenderTrainLog {
  std::vector<double> epoch_accuracy;  // training accuracy per epoch, percent
};

/// Trains on the train split of `records`. InvalidInput unless both genders
/// are present. Deterministic in `seed`.
GenderNet train_gender_classifier(const std::vector<UtteranceRecord>& records, std::uint64_t seed,
                                  const GenderNetConfig& cfg = {}, GenderTrainLog* log = nullptr,
                                  const FrontendConfig& fe = {});

/// Probability in (0, 1) that `x` is a female voice.
double classify_gender(const GenderNet& net, const Waveform& x, const FrontendConfig& fe = {});
double classify_gender(const GenderNet& net, const MelSpectrogram& features);

// --- speaker embedder -------------------------------------------------------

struct EmbedderConfig {
  int channels = 32;
  int blocks = 4;
  int embedding_dim = 64;
  int epochs = 30;
  int batch_size = 16;
  int crop_frames = 64;
  double learning_rate = 2e-3;
  double margin = 0.2;  // additive margin on the target cosine
  double scale = 15.0;
};

/// Residual 1-D convolutional embedder; embeddings are the L2-normalized
/// output of the last linear layer.
class SpeakerEmbedder {
 public:
  SpeakerEmbedder() = default;
  SpeakerEmbedder(int bands, int n_speakers, const EmbedderConfig& cfg, std::uint64_t seed);

  /// (N, bands, T) -> (N, dim) unit vectors.
  Tensor forward(const Tensor& mel, bool training);
  /// Gradient w.r.t. the unit embeddings; accumulates parameter gradients.
  void backward(const Tensor& d_emb);

  std::vector<nn::Param*> params();  // embedding network only
  std::vector<nn::Buffer*> buffers();
  int bands() const { return bands_; }
  int dim() const { return cfg_.embedding_dim; }
  const EmbedderConfig& config() const { return cfg_; }

  nn::Param class_weights;  // (n_speakers, dim), training head

 private:
  struct Block {
    nn::Conv1d conv1, conv2;
    nn::BatchNorm1d bn1, bn2;
    nn::LeakyRelu act1{0.0}, act2{0.0};
  };
  int bands_ = 80;
  EmbedderConfig cfg_;
  nn::Conv1d stem_;
  nn::BatchNorm1d stem_bn_;
  nn::LeakyRelu stem_act_{0.0};
  std::vector<Block> blocks_;
  nn::Linear proj_;
  Tensor raw_;  // pre-normalization embeddings
  std::size_t length_ = 0;
};

SpeakerEmbedder train_speaker_embedder(const std::vector<UtteranceRecord>& records, std::uint64_t seed,
                                       const EmbedderConfig& cfg = {}, const FrontendConfig& fe = {});

std::vector<double> embed(const SpeakerEmbedder& e, const Waveform& x, const FrontendConfig& fe = {});
std::vector<double> embed(const SpeakerEmbedder& e, const MelSpectrogram& features);
double cosine(std::span<const double> a, std::span<const double> b);

struct TrialPair {
  std::filesystem::path enrollment;
  std::filesystem::path test;
  bool same_speaker = false;
  double score = 0.0;
};

struct TrialIndex {
  std::size_t enrollment = 0;
  std::size_t test = 0;
  bool same_speaker = false;
};

/// Every same-speaker pair of `utterances` (enrollment before test in list
/// order) plus an equal number of random different-speaker pairs,
/// deterministic in `seed`.
std::vector<TrialIndex> build_trial_indices(const std::vector<UtteranceRecord>& utterances, std::uint64_t seed);

/// build_trial_indices over the test split, as file paths.
std::vector<TrialPair> build_trials(const std::vector<UtteranceRecord>& records, std::uint64_t seed);

/// Scores each pair by the cosine of the two embeddings. MissingAsset when
/// an audio file is absent.
std::vector<TrialPair> score_trials(const SpeakerEmbedder& e, std::vector<TrialPair> trials,
                                    const FrontendConfig& fe = {});

/// Tab-separated enroll_path, test_path, label (1 same / 0 different), with
/// an optional fourth score column.
void write_trials(const std::filesystem::path& path, const std::vector<TrialPair>& trials, bool with_scores);
std::vector<TrialPair> read_trials(const std::filesystem::path& path);

// --- proxy transcriber ------------------------------------------------------

struct TemplateBank {
  std::map<std::string, MelSpectrogram> templates;  // one averaged template per word
  bool empty() const { return templates.empty(); }
};

/// Frame ranges [begin, end) of voiced segments found by energy thresholding.
std::vector<std::pair<int, int>> segment_words(const MelSpectrogram& features);

/// Averages the segments of train-split utterances whose segment count
/// matches their transcript length, per word, after length normalization.
TemplateBank build_templates(const std::vector<UtteranceRecord>& records, const FrontendConfig& fe = {});

/// Dynamic-time-warping distance between two spectrograms, normalized by
/// the warping path length.
double dtw_distance(const MelSpectrogram& a, int a_begin, int a_end, const MelSpectrogram& b);

/// InvalidInput for an empty bank.
std::vector<std::string> transcribe(const TemplateBank& bank, const Waveform& x, const FrontendConfig& fe = {});
std::vector<std::string> transcribe(const TemplateBank& bank, const MelSpectrogram& features);

// --- bundle -----------------------------------------------------------------

struct AttackerConfig {
  std::uint64_t seed = 11;
  GenderNetConfig gender;
  EmbedderConfig embedder;
};

struct AttackerSuite {
  FrontendConfig frontend;
  GenderNet gender;
  SpeakerEmbedder embedder;
  TemplateBank templates;
  GenderTrainLog gender_log;
};

/// Trains all three attackers on original audio only.
AttackerSuite train_attackers(const std::vector<UtteranceRecord>& records, const AttackerConfig& cfg = {});
void save_attackers(const std::filesystem::path& path, const AttackerSuite& suite);
AttackerSuite load_attackers(const std::filesystem::path& path);

}  // namespace gengan
