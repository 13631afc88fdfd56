#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gengan/audio.hpp"
#include "gengan/gan.hpp"

namespace gengan {

enum class Split { train, test };
std::string to_string(Split s);

struct SpeakerProfile {
  std::string speaker_id;
  Gender gender = Gender::male;
  double f0_base = 120.0;       // Hz
  double formant_shift = 1.0;   // vocal-tract scaling
  std::uint64_t seed = 0;
};

struct UtteranceRecord {
  std::filesystem::path audio_path;  // absolute once loaded
  std::string speaker_id;
  Gender gender = Gender::male;
  std::vector<std::string> transcript;
  Split split = Split::train;
};

struct CorpusConfig {
  int n_speakers = 20;
  int utterances_per_speaker = 30;
  int vocabulary_size = 16;
  std::uint64_t seed = 7;
  int min_words = 2;
  int max_words = 4;
  double test_fraction = 1.0 / 3.0;  // trailing utterances of each speaker
};

/// Speaker i is male for even i, female for odd i.
SpeakerProfile make_speaker(int index, std::uint64_t corpus_seed);

/// Token names of the first `size` vocabulary words ("i-a", "a-u", ...).
std::vector<std::string> vocabulary(int size);

/// Formant synthesis of a word sequence for one speaker; peak-normalized
/// to 0.9 and deterministic in (profile, words, seed).
Waveform synthesize_utterance(const SpeakerProfile& speaker, const std::vector<std::string>& words,
                              std::uint64_t seed);

/// Generates the corpus under `out_dir` (wav/ tree plus manifest.tsv) and
/// returns the records. InvalidInput for zero/odd speaker counts or a
/// vocabulary smaller than two words.
std::vector<UtteranceRecord> build_corpus(const CorpusConfig& cfg, const std::filesystem::path& out_dir);

/// Tab-separated manifest with header row:
///   audio_path  speaker_id  gender  transcript  split
/// audio_path is written relative to the manifest's directory.
void write_manifest(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records);

/// Validates and loads a manifest. Unknown columns are ignored. A row whose
/// audio file is absent raises MissingAsset(path); malformed rows raise
/// ParseError(line).
std::vector<UtteranceRecord> load_manifest(const std::filesystem::path& path);

std::vector<UtteranceRecord> filter_split(const std::vector<UtteranceRecord>& records, Split split);

/// Uniform sampling without replacement inside an epoch; the order is
/// reshuffled at every epoch boundary. Deterministic in the seed.
class BatchSampler {
 public:
  BatchSampler(std::size_t population, std::uint64_t seed);
  /// Next n indices. A draw that crosses an epoch boundary takes the
  /// remainder of the current permutation and continues in a fresh one.
  std::vector<std::size_t> next(std::size_t n);
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();
  std::size_t population_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

/// Permutation of 0..population-1 for epoch `epoch` under `seed`.
std::vector<std::size_t> epoch_permutation(std::size_t population, std::uint64_t seed, std::size_t epoch);

struct LabelledWaveform {
  Waveform audio;
  Gender gender;
};

/// First batch of n records from the seeded sampler, loaded from disk.
std::vector<LabelledWaveform> sample_batch(const std::vector<UtteranceRecord>& records, std::size_t n,
                                           std::uint64_t seed);

/// Autocorrelation pitch estimate (Hz) over voiced frames; 0 if unvoiced.
double estimate_f0(const Waveform& x, double f_lo = 60.0, double f_hi = 400.0);

}  // namespace gengan
