#include "gengan/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <numbers>
#include <random>
#include <sstream>

#include "gengan/error.hpp"
#include "gengan/rng.hpp"

namespace gengan {

namespace {

struct Vowel {
  const char* symbol;
  std::array<double, 4> formants;  // adult male reference, Hz
};

// F1-F3 from classic vowel measurements; F4 held near 3.4 kHz.
constexpr std::array<Vowel, 8> kVowels = {{
    {"i", {270, 2290, 3010, 3500}},
    {"a", {730, 1090, 2440, 3400}},
    {"u", {300, 870, 2240, 3300}},
    {"e", {530, 1840, 2480, 3450}},
    {"o", {570, 840, 2410, 3350}},
    {"ae", {660, 1720, 2410, 3400}},
    {"uh", {520, 1190, 2390, 3350}},
    {"ih", {390, 1990, 2550, 3450}},
}};

constexpr std::array<double, 4> kBandwidths = {80.0, 100.0, 150.0, 220.0};

struct WordShape {
  std::string token;
  std::vector<int> vowels;
};

std::vector<WordShape> word_table(int size) {
  std::vector<WordShape> words;
  const auto add_pairs = [&](int n_vowels) {
    for (int a = 0; a < n_vowels && int(words.size()) < size; ++a)
      for (int b = 0; b < n_vowels && int(words.size()) < size; ++b) {
        if (a == b) continue;
        const std::string tok = std::string(kVowels[a].symbol) + "-" + kVowels[b].symbol;
        if (std::any_of(words.begin(), words.end(), [&](const WordShape& w) { return w.token == tok; }))
          continue;
        words.push_back({tok, {a, b}});
      }
  };
  add_pairs(5);
  add_pairs(8);
  for (int a = 0; a < 8 && int(words.size()) < size; ++a)
    for (int b = 0; b < 8 && int(words.size()) < size; ++b)
      for (int c = 0; c < 8 && int(words.size()) < size; ++c) {
        if (a == b || b == c) continue;
        words.push_back({std::string(kVowels[a].symbol) + "-" + kVowels[b].symbol + "-" + kVowels[c].symbol,
                         {a, b, c}});
      }
  if (int(words.size()) < size) throw InvalidInput("vocabulary_size too large");
  return words;
}

const WordShape& lookup_word(const std::vector<WordShape>& table, const std::string& token) {
  for (const auto& w : table)
    if (w.token == token) return w;
  throw InvalidInput("unknown vocabulary word '" + token + "'");
}

// Speaker timbre beyond f0 and the global formant scale.
struct Timbre {
  std::array<double, 4> formant_scale;
  double bandwidth_scale;
  double tilt;        // one-pole low-pass coefficient on the source
  double aspiration;  // breath noise relative level
  double declination;
};

Timbre timbre_of(const SpeakerProfile& s) {
  std::mt19937_64 rng(derive_seed(s.seed, "timbre"));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Timbre t;
  for (auto& f : t.formant_scale) f = s.formant_shift * (0.95 + 0.10 * u(rng));
  t.bandwidth_scale = 0.8 + 0.5 * u(rng);
  t.tilt = 0.55 + 0.35 * u(rng);
  t.aspiration = 0.01 + 0.05 * u(rng);
  t.declination = 0.04 + 0.12 * u(rng);
  return t;
}

double poly_blep(double t, double dt) {
  if (t < dt) {
    t /= dt;
    return t + t - t * t - 1.0;
  }
  if (t > 1.0 - dt) {
    t = (t - 1.0) / dt;
    return t * t + t + t + 1.0;
  }
  return 0.0;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \r\n") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::string to_string(Split s) { return s == Split::test ? "test" : "train"; }

SpeakerProfile make_speaker(int index, std::uint64_t corpus_seed) {
  SpeakerProfile p;
  char id[16];
  std::snprintf(id, sizeof id, "spk%03d", index);
  p.speaker_id = id;
  p.seed = derive_seed(corpus_seed, "speaker", static_cast<std::uint64_t>(index));
  p.gender = index % 2 == 0 ? Gender::male : Gender::female;
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (p.gender == Gender::male) {
    p.f0_base = 85.0 + 70.0 * u(rng);
    p.formant_shift = 0.90 + 0.10 * u(rng);
  } else {
    p.f0_base = 165.0 + 90.0 * u(rng);
    p.formant_shift = 1.08 + 0.14 * u(rng);
  }
  return p;
}

std::vector<std::string> vocabulary(int size) {
  if (size < 2) throw InvalidInput("vocabulary_size must be at least 2");
  std::vector<std::string> out;
  for (const auto& w : word_table(size)) out.push_back(w.token);
  return out;
}

Waveform synthesize_utterance(const SpeakerProfile& speaker, const std::vector<std::string>& words,
                              std::uint64_t seed) {
  constexpr double fs = kSampleRate;
  const auto table = word_table(static_cast<int>(kVowels.size() * kVowels.size()));
  const Timbre timbre = timbre_of(speaker);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Piecewise targets: per sample formant set, f0 and source amplitude.
  struct Segment {
    std::size_t length;
    std::array<double, 4> f_start, f_end;
    double amp_start, amp_end;
    double f0_scale;
  };
  std::vector<Segment> plan;
  const auto samples = [&](double sec) { return static_cast<std::size_t>(sec * fs); };
  const std::array<double, 4> rest = {500, 1500, 2500, 3400};
  plan.push_back({samples(0.10 + 0.05 * u(rng)), rest, rest, 0.0, 0.0, 1.0});
  for (const auto& token : words) {
    const auto& w = lookup_word(table, token);
    const double word_f0 = 1.0 + 0.08 * (2.0 * u(rng) - 1.0);
    std::array<double, 4> prev = kVowels[w.vowels.front()].formants;
    // onset ramp
    plan.push_back({samples(0.02), prev, prev, 0.0, 1.0, word_f0});
    for (std::size_t i = 0; i < w.vowels.size(); ++i) {
      const auto& f = kVowels[w.vowels[i]].formants;
      if (i > 0) plan.push_back({samples(0.05), prev, f, 1.0, 1.0, word_f0});
      plan.push_back({samples(0.12 + 0.05 * u(rng)), f, f, 1.0, 1.0, word_f0});
      prev = f;
    }
    plan.push_back({samples(0.03), prev, prev, 1.0, 0.0, word_f0});
    plan.push_back({samples(0.11 + 0.05 * u(rng)), prev, prev, 0.0, 0.0, word_f0});
  }
  plan.push_back({samples(0.08), rest, rest, 0.0, 0.0, 1.0});

  std::size_t total = 0;
  for (const auto& s : plan) total += s.length;
  Waveform out;
  out.samples.assign(total, 0.0);

  std::array<double, 4> y1{}, y2{};
  double phase = 0.0, tilt_state = 0.0;
  std::size_t n = 0;
  std::array<double, 4> a1{}, a2{}, b0{};
  for (const auto& seg : plan) {
    for (std::size_t i = 0; i < seg.length; ++i, ++n) {
      const double frac = seg.length > 1 ? static_cast<double>(i) / (seg.length - 1) : 0.0;
      const double progress = static_cast<double>(n) / static_cast<double>(total);
      const double smooth = 0.5 - 0.5 * std::cos(std::numbers::pi * frac);
      const double amp = seg.amp_start + (seg.amp_end - seg.amp_start) * smooth;
      const double vibrato = 1.0 + 0.01 * std::sin(2.0 * std::numbers::pi * 5.0 * n / fs);
      const double f0 = speaker.f0_base * seg.f0_scale * (1.0 + timbre.declination * (0.5 - progress)) * vibrato;
      if (n % 16 == 0) {
        for (int k = 0; k < 4; ++k) {
          const double f = (seg.f_start[k] + (seg.f_end[k] - seg.f_start[k]) * smooth) * timbre.formant_scale[k];
          const double bw = kBandwidths[k] * timbre.bandwidth_scale;
          const double r = std::exp(-std::numbers::pi * bw / fs);
          a1[k] = 2.0 * r * std::cos(2.0 * std::numbers::pi * std::min(f, 0.45 * fs) / fs);
          a2[k] = -r * r;
          b0[k] = 1.0 - a1[k] - a2[k];
        }
      }
      const double dt = f0 / fs;
      phase += dt;
      if (phase >= 1.0) phase -= 1.0;
      const double saw = 2.0 * phase - 1.0 - poly_blep(phase, dt);
      tilt_state = timbre.tilt * tilt_state + (1.0 - timbre.tilt) * saw;
      double x = amp * (tilt_state + timbre.aspiration * gauss(rng));
      for (int k = 0; k < 4; ++k) {
        const double y = b0[k] * x + a1[k] * y1[k] + a2[k] * y2[k];
        y2[k] = y1[k];
        y1[k] = y;
        x = y;
      }
      out.samples[n] = x;
    }
  }
  out = peak_normalize(std::move(out), 0.9);
  for (double& v : out.samples) v += 3e-4 * gauss(rng);
  return out;
}

std::vector<UtteranceRecord> build_corpus(const CorpusConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.n_speakers <= 0) throw InvalidInput("n_speakers must be positive");
  if (cfg.n_speakers % 2 != 0) throw InvalidInput("n_speakers must be even for a gender-balanced corpus");
  if (cfg.utterances_per_speaker <= 0) throw InvalidInput("utterances_per_speaker must be positive");
  if (cfg.min_words < 1 || cfg.max_words < cfg.min_words) throw InvalidInput("invalid words-per-utterance range");
  if (!(cfg.test_fraction >= 0.0 && cfg.test_fraction < 1.0)) throw InvalidInput("test_fraction must lie in [0,1)");
  const auto vocab = vocabulary(cfg.vocabulary_size);
  const int n_test = static_cast<int>(std::lround(cfg.utterances_per_speaker * cfg.test_fraction));

  std::vector<UtteranceRecord> records;
  for (int s = 0; s < cfg.n_speakers; ++s) {
    const auto speaker = make_speaker(s, cfg.seed);
    for (int i = 0; i < cfg.utterances_per_speaker; ++i) {
      const std::uint64_t useed = derive_seed(cfg.seed, speaker.speaker_id, static_cast<std::uint64_t>(i));
      std::mt19937_64 rng(useed);
      std::uniform_int_distribution<int> n_words(cfg.min_words, cfg.max_words);
      std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
      UtteranceRecord r;
      const int count = n_words(rng);
      for (int w = 0; w < count; ++w) r.transcript.push_back(vocab[pick(rng)]);
      r.speaker_id = speaker.speaker_id;
      r.gender = speaker.gender;
      r.split = i >= cfg.utterances_per_speaker - n_test ? Split::test : Split::train;
      char name[64];
      std::snprintf(name, sizeof name, "%s_%03d.wav", speaker.speaker_id.c_str(), i);
      r.audio_path = out_dir / "wav" / speaker.speaker_id / name;
      write_wav(r.audio_path, synthesize_utterance(speaker, r.transcript, derive_seed(useed, "audio")));
      records.push_back(std::move(r));
    }
  }
  write_manifest(out_dir / "manifest.tsv", records);
  return records;
}

void write_manifest(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write manifest " + path.string());
  const auto base = path.has_parent_path() ? std::filesystem::absolute(path.parent_path())
                                           : std::filesystem::current_path();
  out << "audio_path\tspeaker_id\tgender\ttranscript\tsplit\n";
  for (const auto& r : records) {
    std::string transcript;
    for (const auto& t : r.transcript) transcript += (transcript.empty() ? "" : " ") + t;
    const auto rel = std::filesystem::absolute(r.audio_path).lexically_relative(base);
    out << (rel.empty() ? r.audio_path.string() : rel.generic_string()) << '\t' << r.speaker_id << '\t'
        << gender_code(r.gender) << '\t' << transcript << '\t' << to_string(r.split) << '\n';
  }
}

std::vector<UtteranceRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingAsset(path.string());
  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  std::vector<UtteranceRecord> records;
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> col;
  std::map<std::string, Gender> speaker_gender;
  const char* required[] = {"audio_path", "speaker_id", "gender", "transcript", "split"};
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (col.empty()) {
      for (std::size_t i = 0; i < fields.size(); ++i) col[trim(fields[i])] = i;
      for (const char* name : required)
        if (!col.count(name)) throw ParseError(line_no, std::string("header lacks column '") + name + "'");
      continue;
    }
    const auto field = [&](const char* name) -> std::string {
      const auto i = col.at(name);
      if (i >= fields.size()) throw ParseError(line_no, std::string("missing field '") + name + "'");
      return trim(fields[i]);
    };
    UtteranceRecord r;
    const auto audio = field("audio_path");
    if (audio.empty()) throw ParseError(line_no, "empty audio_path");
    r.audio_path = std::filesystem::path(audio).is_absolute() ? std::filesystem::path(audio) : base / audio;
    r.speaker_id = field("speaker_id");
    if (r.speaker_id.empty()) throw ParseError(line_no, "empty speaker_id");
    const auto g = field("gender");
    if (g != "M" && g != "F") throw ParseError(line_no, "gender must be M or F");
    r.gender = parse_gender(g[0]);
    std::istringstream ts(field("transcript"));
    for (std::string tok; ts >> tok;) r.transcript.push_back(tok);
    const auto s = field("split");
    if (s == "train") r.split = Split::train;
    else if (s == "test") r.split = Split::test;
    else throw ParseError(line_no, "split must be train or test");
    const auto [it, inserted] = speaker_gender.emplace(r.speaker_id, r.gender);
    if (!inserted && it->second != r.gender)
      throw ParseError(line_no, "speaker " + r.speaker_id + " has inconsistent gender");
    if (!std::filesystem::exists(r.audio_path)) throw MissingAsset(r.audio_path.string());
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<UtteranceRecord> filter_split(const std::vector<UtteranceRecord>& records, Split split) {
  std::vector<UtteranceRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [&](const UtteranceRecord& r) { return r.split == split; });
  return out;
}

std::vector<std::size_t> epoch_permutation(std::size_t population, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(population);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, "epoch", epoch));
  // Fisher-Yates with an explicit index draw so the order is portable.
  for (std::size_t i = population; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

BatchSampler::BatchSampler(std::size_t population, std::uint64_t seed) : population_(population), seed_(seed) {
  if (population == 0) throw InvalidInput("cannot sample from an empty record set");
  reshuffle();
}

void BatchSampler::reshuffle() {
  order_ = epoch_permutation(population_, seed_, epoch_);
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next(std::size_t n) {
  if (n > population_) throw InvalidInput("batch larger than the record set");
  std::vector<std::size_t> out;
  out.reserve(n);
  while (out.size() < n) {
    if (cursor_ == population_) {
      ++epoch_;
      reshuffle();
    }
    out.push_back(order_[cursor_++]);
  }
  return out;
}

std::vector<LabelledWaveform> sample_batch(const std::vector<UtteranceRecord>& records, std::size_t n,
                                           std::uint64_t seed) {
  if (n > records.size()) throw InvalidInput("batch size exceeds number of records");
  if (n == 0) return {};
  BatchSampler sampler(records.size(), seed);
  std::vector<LabelledWaveform> out;
  for (auto i : sampler.next(n)) out.push_back({read_wav(records[i].audio_path), records[i].gender});
  return out;
}

double estimate_f0(const Waveform& x, double f_lo, double f_hi) {
  const auto frame = static_cast<std::size_t>(0.04 * x.sample_rate);
  const auto hop = frame / 2;
  if (x.samples.size() < frame) return 0.0;
  double peak = 0.0;
  for (double v : x.samples) peak = std::max(peak, std::abs(v));
  const auto lag_min = static_cast<std::size_t>(x.sample_rate / f_hi);
  const auto lag_max = std::min(frame - 1, static_cast<std::size_t>(x.sample_rate / f_lo));
  std::vector<double> estimates;
  for (std::size_t s = 0; s + frame <= x.samples.size(); s += hop) {
    const double* p = x.samples.data() + s;
    double energy = 0.0;
    for (std::size_t i = 0; i < frame; ++i) energy += p[i] * p[i];
    if (std::sqrt(energy / frame) < 0.1 * peak) continue;
    double best = 0.0;
    std::size_t best_lag = 0;
    for (std::size_t lag = lag_min; lag <= lag_max; ++lag) {
      double acc = 0.0, e1 = 0.0, e2 = 0.0;
      for (std::size_t i = 0; i + lag < frame; ++i) {
        acc += p[i] * p[i + lag];
        e1 += p[i] * p[i];
        e2 += p[i + lag] * p[i + lag];
      }
      const double r = acc / std::sqrt(e1 * e2 + 1e-12);
      if (r > best) {
        best = r;
        best_lag = lag;
      }
    }
    if (best > 0.5 && best_lag > 0) estimates.push_back(static_cast<double>(x.sample_rate) / best_lag);
  }
  if (estimates.empty()) return 0.0;
  std::nth_element(estimates.begin(), estimates.begin() + estimates.size() / 2, estimates.end());
  return estimates[estimates.size() / 2];
}

}  // namespace gengan
