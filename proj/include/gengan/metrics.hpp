#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gengan/adversary.hpp"
#include "gengan/corpus.hpp"

namespace gengan {

struct ScoredTrial {
  double score = 0.0;
  bool target = false;  // same speaker
};

/// Equal error rate in percent. Operating points are taken at every
/// distinct score (accept when score >= threshold) plus the accept-all and
/// reject-all ends; the EER is where FAR and FRR cross, interpolated
/// linearly between the two adjacent points. InvalidInput unless both
/// classes are present.
double compute_eer(const std::vector<ScoredTrial>& trials);
double compute_eer(const std::vector<TrialPair>& trials);

/// 100 - 2|x - 50|; InvalidInput outside [0, 100].
double normalized_eer(double eer);
double normalized_gr(double gr);

/// Minimum number of substitutions, deletions and insertions.
std::size_t edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);
/// 100 * edits / |ref|; InvalidInput for an empty reference.
double word_error_rate(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

struct WordAccuracy {
  double value = 100.0;  // clamped at 0
  double raw_wer = 0.0;
};
/// 100 - WER clamped below at 0; InvalidInput for a negative WER.
WordAccuracy word_accuracy(double wer);

/// Percentage of predictions (P(female) >= 0.5) that match the labels.
double gender_recognition_rate(const std::vector<double>& prob_female, const std::vector<Gender>& labels);

struct MetricsReport {
  std::string label;
  std::string mode;
  double eer = 0.0;       // EER, percent
  double eer_norm = 0.0;  // eer
  double gr = 0.0;        // GR, percent
  double gr_norm = 0.0;   // gr
  double wer = 0.0;       // raw, may exceed 100
  double word_accuracy = 100.0;
  std::size_t utterances = 0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  std::string checkpoint_digest;
  std::string attackers_digest;
  std::string manifest_digest;
  std::string config_digest;

  /// Recomputes the derived fields from the raw ones.
  void derive();
};

std::string to_json(const MetricsReport& r);
MetricsReport report_from_json(const std::string& text);
void write_report(const std::filesystem::path& path, const MetricsReport& r);
/// Reads one report object or an array of reports.
std::vector<MetricsReport> read_reports(const std::filesystem::path& path);

// --- evaluation harness -----------------------------------------------------

struct EvalUtterance {
  UtteranceRecord record;
  Waveform audio;
};

/// Attacker callbacks. `utt` indexes the evaluated utterance list; real
/// attackers only look at the waveform.
struct AttackerHooks {
  std::function<double(std::size_t utt, const Waveform& x)> gender;
  /// Score of an (original enrollment, evaluated test) pair.
  std::function<double(std::size_t enroll, const Waveform& enroll_x, std::size_t test, const Waveform& test_x)>
      verify;
  std::function<std::vector<std::string>(std::size_t utt, const Waveform& x)> transcribe;
};

AttackerHooks hooks_for(const AttackerSuite& suite);

using WaveTransform = std::function<Waveform(std::size_t utt, const Waveform& x)>;

/// Runs the attack scenario over `utts`: each waveform is transformed, the
/// gender classifier and transcriber see the transformed audio, and every
/// trial scores an original enrollment against a transformed test
/// utterance. Failures are rethrown as StageError tagged with the stage.
MetricsReport evaluate_utterances(const std::vector<EvalUtterance>& utts, const WaveTransform& transform,
                                  const AttackerHooks& hooks, std::uint64_t seed);

enum class EvalMode { original, vocoder, gengan };
std::string to_string(EvalMode m);
EvalMode parse_eval_mode(const std::string& s);

struct EvalRequest {
  EvalMode mode = EvalMode::gengan;
  std::filesystem::path checkpoint;  // required for gengan
  std::filesystem::path manifest;
  std::filesystem::path attackers;
  std::uint64_t seed = 0;
  int vocoder_iterations = 64;
};

/// File-level entry point: test split of the manifest, attacker bundle and
/// (for gengan mode) the generator checkpoint.
MetricsReport evaluate(const EvalRequest& req);

}  // namespace gengan
