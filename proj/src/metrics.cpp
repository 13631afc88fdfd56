#include "gengan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>

#include "gengan/error.hpp"
#include "gengan/rng.hpp"
#include "gengan/trainer.hpp"
#include "serial_util.hpp"

namespace gengan {

using nlohmann::json;

double compute_eer(const std::vector<ScoredTrial>& trials) {
  std::vector<double> tgt, non;
  for (const auto& t : trials) {
    if (!std::isfinite(t.score)) throw InvalidInput("compute_eer: non-finite score");
    (t.target ? tgt : non).push_back(t.score);
  }
  if (tgt.empty() || non.empty()) throw InvalidInput("compute_eer: need target and non-target trials");
  std::sort(tgt.begin(), tgt.end());
  std::sort(non.begin(), non.end());
  std::vector<double> thresholds;
  for (const auto& t : trials) thresholds.push_back(t.score);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  // Operating points for "accept if score >= threshold", then reject-all.
  const double nt = double(tgt.size()), nn_ = double(non.size());
  std::vector<std::pair<double, double>> pts;  // (FAR, FRR)
  for (double th : thresholds) {
    const double frr = double(std::lower_bound(tgt.begin(), tgt.end(), th) - tgt.begin()) / nt;
    const double far = double(non.end() - std::lower_bound(non.begin(), non.end(), th)) / nn_;
    pts.push_back({far, frr});
  }
  pts.push_back({0.0, 1.0});

  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double d0 = pts[i].first - pts[i].second;
    const double d1 = pts[i + 1].first - pts[i + 1].second;
    if (d0 == 0.0) return 100.0 * pts[i].first;
    if (d0 > 0.0 && d1 <= 0.0) {
      const double a = d0 / (d0 - d1);
      return 100.0 * (pts[i].first + a * (pts[i + 1].first - pts[i].first));
    }
  }
  return 100.0 * pts.back().first;  // unreachable: the last point has FAR - FRR = -1
}

double compute_eer(const std::vector<TrialPair>& trials) {
  std::vector<ScoredTrial> s;
  s.reserve(trials.size());
  for (const auto& t : trials) s.push_back({t.score, t.same_speaker});
  return compute_eer(s);
}

namespace {

double fold(double x, const char* what) {
  if (!(x >= 0.0 && x <= 100.0)) throw InvalidInput(std::string(what) + " must lie in [0, 100]");
  return 100.0 - 2.0 * std::abs(x - 50.0);
}

}  // namespace

double normalized_eer(double eer) { return fold(eer, "EER"); }
double normalized_gr(double gr) { return fold(gr, "GR"); }

std::size_t edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

double word_error_rate(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  if (ref.empty()) throw InvalidInput("word_error_rate: empty reference");
  return 100.0 * double(edit_distance(ref, hyp)) / double(ref.size());
}

WordAccuracy word_accuracy(double wer) {
  if (!(wer >= 0.0)) throw InvalidInput("word_accuracy: WER must be non-negative");
  return {std::max(0.0, 100.0 - wer), wer};
}

double gender_recognition_rate(const std::vector<double>& prob_female, const std::vector<Gender>& labels) {
  if (prob_female.size() != labels.size() || labels.empty())
    throw InvalidInput("gender_recognition_rate: need one prediction per label");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += (prob_female[i] >= 0.5) == (labels[i] == Gender::female);
  return 100.0 * double(hit) / double(labels.size());
}

// --- report -----------------------------------------------------------------

void MetricsReport::derive() {
  eer_norm = normalized_eer(eer);
  gr_norm = normalized_gr(gr);
  word_accuracy = gengan::word_accuracy(wer).value;
}

std::string to_json(const MetricsReport& r) {
  json j = {{"label", r.label},
            {"mode", r.mode},
            {"EER", r.eer},
            {"eer", r.eer_norm},
            {"GR", r.gr},
            {"gr", r.gr_norm},
            {"WER", r.wer},
            {"A_w", r.word_accuracy},
            {"utterances", r.utterances},
            {"trials", r.trials},
            {"seed", r.seed},
            {"checkpoint_digest", r.checkpoint_digest},
            {"attackers_digest", r.attackers_digest},
            {"manifest_digest", r.manifest_digest},
            {"config_digest", r.config_digest}};
  return j.dump(2) + "\n";
}

namespace {

MetricsReport report_from(const json& j) {
  MetricsReport r;
  r.label = j.value("label", std::string());
  r.mode = j.value("mode", std::string());
  r.eer = j.at("EER").get<double>();
  r.eer_norm = j.at("eer").get<double>();
  r.gr = j.at("GR").get<double>();
  r.gr_norm = j.at("gr").get<double>();
  r.wer = j.at("WER").get<double>();
  r.word_accuracy = j.at("A_w").get<double>();
  r.utterances = j.value("utterances", std::size_t{0});
  r.trials = j.value("trials", std::size_t{0});
  r.seed = j.value("seed", std::uint64_t{0});
  r.checkpoint_digest = j.value("checkpoint_digest", std::string());
  r.attackers_digest = j.value("attackers_digest", std::string());
  r.manifest_digest = j.value("manifest_digest", std::string());
  r.config_digest = j.value("config_digest", std::string());
  return r;
}

}  // namespace

MetricsReport report_from_json(const std::string& text) {
  try {
    return report_from(json::parse(text));
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed report: ") + e.what());
  }
}

void write_report(const std::filesystem::path& path, const MetricsReport& r) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << to_json(r);
}

std::vector<MetricsReport> read_reports(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingAsset(path.string());
  try {
    json j;
    in >> j;
    std::vector<MetricsReport> out;
    if (j.is_array()) {
      for (const auto& e : j) out.push_back(report_from(e));
    } else {
      out.push_back(report_from(j));
    }
    return out;
  } catch (const json::exception& e) {
    throw InvalidInput(path.string() + ": malformed report: " + e.what());
  }
}

// --- evaluation -------------------------------------------------------------

AttackerHooks hooks_for(const AttackerSuite& suite) {
  auto shared = std::make_shared<const AttackerSuite>(suite);
  auto enroll_cache = std::make_shared<std::map<std::size_t, std::vector<double>>>();
  auto test_cache = std::make_shared<std::map<std::size_t, std::vector<double>>>();
  AttackerHooks h;
  h.gender = [shared](std::size_t, const Waveform& x) { return classify_gender(shared->gender, x, shared->frontend); };
  h.verify = [shared, enroll_cache, test_cache](std::size_t a, const Waveform& xa, std::size_t b,
                                                const Waveform& xb) {
    auto get = [&](std::map<std::size_t, std::vector<double>>& cache, std::size_t k, const Waveform& x)
        -> const std::vector<double>& {
      auto it = cache.find(k);
      if (it == cache.end()) it = cache.emplace(k, embed(shared->embedder, x, shared->frontend)).first;
      return it->second;
    };
    return cosine(get(*enroll_cache, a, xa), get(*test_cache, b, xb));
  };
  h.transcribe = [shared](std::size_t, const Waveform& x) {
    return transcribe(shared->templates, x, shared->frontend);
  };
  return h;
}

namespace {

template <class F>
auto staged(const char* stage, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  }
}

}  // namespace

MetricsReport evaluate_utterances(const std::vector<EvalUtterance>& utts, const WaveTransform& transform,
                                  const AttackerHooks& hooks, std::uint64_t seed) {
  if (utts.empty()) throw StageError("input", InvalidInput("no test utterances to evaluate"));
  std::vector<Waveform> out(utts.size());
  staged("transform", [&] {
    for (std::size_t i = 0; i < utts.size(); ++i) out[i] = transform(i, utts[i].audio);
    return 0;
  });

  MetricsReport r;
  r.seed = seed;
  r.utterances = utts.size();
  r.gr = staged("gender", [&] {
    std::vector<double> p;
    std::vector<Gender> y;
    for (std::size_t i = 0; i < utts.size(); ++i) {
      p.push_back(hooks.gender(i, out[i]));
      y.push_back(utts[i].record.gender);
    }
    return gender_recognition_rate(p, y);
  });
  r.eer = staged("verification", [&] {
    std::vector<UtteranceRecord> recs;
    for (const auto& u : utts) recs.push_back(u.record);
    std::vector<ScoredTrial> scored;
    for (const auto& t : build_trial_indices(recs, seed))
      scored.push_back({hooks.verify(t.enrollment, utts[t.enrollment].audio, t.test, out[t.test]), t.same_speaker});
    r.trials = scored.size();
    return compute_eer(scored);
  });
  r.wer = staged("transcription", [&] {
    std::size_t edits = 0, words = 0;
    for (std::size_t i = 0; i < utts.size(); ++i) {
      const auto& ref = utts[i].record.transcript;
      if (ref.empty()) throw InvalidInput("utterance " + std::to_string(i) + " has an empty transcript");
      edits += edit_distance(ref, hooks.transcribe(i, out[i]));
      words += ref.size();
    }
    return 100.0 * double(edits) / double(words);
  });
  staged("metrics", [&] {
    r.derive();
    return 0;
  });
  return r;
}

std::string to_string(EvalMode m) {
  switch (m) {
    case EvalMode::original: return "original";
    case EvalMode::vocoder: return "vocoder";
    case EvalMode::gengan: return "gengan";
  }
  return "gengan";
}

EvalMode parse_eval_mode(const std::string& s) {
  if (s == "original") return EvalMode::original;
  if (s == "vocoder") return EvalMode::vocoder;
  if (s == "gengan") return EvalMode::gengan;
  throw InvalidInput("unknown evaluation mode '" + s + "' (expected original, vocoder or gengan)");
}

namespace {

std::string file_digest(const std::filesystem::path& p) { return hex_digest(detail::read_bytes(p)); }

}  // namespace

MetricsReport evaluate(const EvalRequest& req) {
  const auto records = staged("manifest", [&] { return load_manifest(req.manifest); });
  const AttackerSuite suite = staged("attackers", [&] { return load_attackers(req.attackers); });
  TransformModel model;
  if (req.mode == EvalMode::gengan) model = staged("checkpoint", [&] { return load_transform_model(req.checkpoint); });
  if (req.vocoder_iterations < 1) throw StageError("input", InvalidInput("vocoder iterations must be at least 1"));
  model.vocoder_iterations = req.vocoder_iterations;

  std::vector<EvalUtterance> utts = staged("load", [&] {
    std::vector<EvalUtterance> u;
    for (const auto& r : filter_split(records, Split::test)) u.push_back({r, read_wav(r.audio_path)});
    return u;
  });

  WaveTransform tf;
  switch (req.mode) {
    case EvalMode::original:
      tf = [](std::size_t, const Waveform& x) { return x; };
      break;
    case EvalMode::vocoder:
      tf = [&](std::size_t, const Waveform& x) {
        Waveform y = invert_mel(mel_spectrogram(x, suite.frontend), req.vocoder_iterations, suite.frontend);
        y.samples.resize(x.samples.size(), 0.0);
        return y;
      };
      break;
    case EvalMode::gengan:
      tf = [&](std::size_t i, const Waveform& x) { return transform(x, model, derive_seed(req.seed, "utterance", i)); };
      break;
  }
  MetricsReport r = evaluate_utterances(utts, tf, hooks_for(suite), req.seed);
  r.mode = to_string(req.mode);
  r.label = r.mode;
  r.checkpoint_digest = model.digest;
  r.attackers_digest = file_digest(req.attackers);
  r.manifest_digest = file_digest(req.manifest);
  const json cfg = {{"mode", r.mode}, {"seed", req.seed}, {"vocoder_iterations", req.vocoder_iterations}};
  const std::string text = cfg.dump();
  r.config_digest = hex_digest(std::vector<std::uint8_t>(text.begin(), text.end()));
  return r;
}

}  // namespace gengan
