#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "gengan/adversary.hpp"
#include "gengan/container.hpp"
#include "gengan/error.hpp"
#include "test_support.hpp"

using namespace gengan;
namespace fs = std::filesystem;

namespace {

const std::vector<UtteranceRecord>& corpus() {
  static const std::vector<UtteranceRecord> recs = [] {
    CorpusConfig c;
    c.n_speakers = 8;
    c.utterances_per_speaker = 12;
    c.vocabulary_size = 6;
    c.seed = 21;
    return build_corpus(c, test_support::scratch_dir("adversary_corpus"));
  }();
  return recs;
}

AttackerConfig quick_config() {
  AttackerConfig c;
  c.gender.epochs = 20;
  c.embedder.epochs = 10;
  return c;
}

const AttackerSuite& suite() {
  static const AttackerSuite s = train_attackers(corpus(), quick_config());
  return s;
}

double held_out_accuracy(const GenderNet& net) {
  std::size_t hit = 0, n = 0;
  for (const auto& r : filter_split(corpus(), Split::test)) {
    const double p = classify_gender(net, read_wav(r.audio_path));
    hit += (p >= 0.5) == (r.gender == Gender::female);
    ++n;
  }
  return 100.0 * double(hit) / double(n);
}

std::string suite_digest(const AttackerSuite& s, const std::string& name) {
  const auto path = test_support::scratch_dir(name) / "att.ckpt";
  save_attackers(path, s);
  std::ifstream in(path, std::ios::binary);
  return hex_digest({std::istreambuf_iterator<char>(in), {}});
}

Waveform scaled(Waveform x, double a) {
  for (double& v : x.samples) v *= a;
  return x;
}

}  // namespace

TEST_CASE("gender classifier learns the corpus and outputs probabilities") {
  const double acc = held_out_accuracy(suite().gender);
  MESSAGE("held-out gender accuracy " << acc);
  CHECK(acc >= 90.0);
  CHECK_FALSE(suite().gender_log.epoch_accuracy.empty());
  for (const auto& r : filter_split(corpus(), Split::test)) {
    const double p = classify_gender(suite().gender, read_wav(r.audio_path));
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
  Waveform silence;
  silence.samples.assign(4000, 0.0);
  const double p = classify_gender(suite().gender, silence);
  CHECK(p > 0.0);
  CHECK(p < 1.0);
  Waveform tiny;
  tiny.samples.assign(1200, 0.01);
  CHECK_NOTHROW(classify_gender(suite().gender, tiny));
}

TEST_CASE("gender classifier with shuffled labels is at chance") {
  auto recs = corpus();
  std::vector<Gender> labels;
  for (const auto& r : recs) labels.push_back(r.gender);
  std::shuffle(labels.begin(), labels.end(), std::mt19937_64(4));
  for (std::size_t i = 0; i < recs.size(); ++i) recs[i].gender = labels[i];
  const auto net = train_gender_classifier(recs, 3, quick_config().gender);
  const double acc = held_out_accuracy(net);
  MESSAGE("shuffled-label held-out accuracy " << acc);
  CHECK(acc >= 40.0);
  CHECK(acc <= 60.0);
}

TEST_CASE("gender classifier preconditions and determinism") {
  std::vector<UtteranceRecord> males;
  for (const auto& r : corpus())
    if (r.gender == Gender::male) males.push_back(r);
  CHECK_THROWS_AS(train_gender_classifier(males, 1), InvalidInput);

  GenderNetConfig c = quick_config().gender;
  c.epochs = 1;
  GenderNet a = train_gender_classifier(corpus(), 5, c);
  GenderNet b = train_gender_classifier(corpus(), 5, c);
  TensorContainer ca, cb;
  for (auto* p : a.params()) ca.put(p->name, p->value);
  for (auto* p : b.params()) cb.put(p->name, p->value);
  CHECK(hex_digest(serialize(ca)) == hex_digest(serialize(cb)));
}

TEST_CASE("attacker bundle is deterministic and round trips") {
  CHECK(suite_digest(suite(), "att_a") == suite_digest(train_attackers(corpus(), quick_config()), "att_b"));
  const auto dir = test_support::scratch_dir("att_rt");
  save_attackers(dir / "a.ckpt", suite());
  const auto back = load_attackers(dir / "a.ckpt");
  const Waveform x = read_wav(corpus()[5].audio_path);
  CHECK(classify_gender(back.gender, x) == classify_gender(suite().gender, x));
  CHECK(embed(back.embedder, x) == embed(suite().embedder, x));
  CHECK(transcribe(back.templates, x) == transcribe(suite().templates, x));
  CHECK_THROWS_AS(load_attackers(dir / "none.ckpt"), CheckpointError);
}

TEST_CASE("speaker embeddings") {
  const auto& e = suite().embedder;
  const auto test = filter_split(corpus(), Split::test);
  std::vector<std::vector<double>> emb;
  for (const auto& r : test) {
    emb.push_back(embed(e, read_wav(r.audio_path)));
    double norm = 0.0;
    for (double v : emb.back()) norm += v * v;
    CHECK(emb.back().size() == 64);
    CHECK(std::abs(std::sqrt(norm) - 1.0) <= 1e-6);
  }
  double same = 0, diff = 0;
  int ns = 0, nd = 0;
  for (std::size_t i = 0; i < test.size(); ++i)
    for (std::size_t j = i + 1; j < test.size(); ++j) {
      const double s = cosine(emb[i], emb[j]);
      CHECK(s >= -1.0 - 1e-12);
      CHECK(s <= 1.0 + 1e-12);
      CHECK(cosine(emb[j], emb[i]) == s);
      if (test[i].speaker_id == test[j].speaker_id) {
        same += s;
        ++ns;
      } else {
        diff += s;
        ++nd;
      }
    }
  MESSAGE("mean same-speaker " << same / ns << " different " << diff / nd);
  CHECK(same / ns > diff / nd);

  const Waveform x = read_wav(test[0].audio_path);
  CHECK(std::abs(cosine(emb[0], embed(e, x)) - 1.0) <= 1e-6);
  for (double a : {0.5, 0.9}) CHECK(std::abs(cosine(embed(e, scaled(x, a)), emb[0]) - 1.0) <= 1e-3);
}

TEST_CASE("trial lists") {
  const auto trials = build_trials(corpus(), 3);
  std::size_t same = 0;
  for (const auto& t : trials) {
    CHECK(t.enrollment != t.test);
    same += t.same_speaker;
  }
  CHECK(same == 8 * (4 * 3 / 2));
  CHECK(trials.size() == 2 * same);
  CHECK(build_trials(corpus(), 3).size() == trials.size());

  const auto dir = test_support::scratch_dir("trials");
  auto scored = score_trials(suite().embedder, std::vector<TrialPair>(trials.begin(), trials.begin() + 10));
  write_trials(dir / "t.tsv", scored, true);
  const auto back = read_trials(dir / "t.tsv");
  REQUIRE(back.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(back[i].enrollment == scored[i].enrollment);
    CHECK(back[i].same_speaker == scored[i].same_speaker);
    CHECK(std::abs(back[i].score - scored[i].score) <= 1e-9);
  }
  // Swapped slots give the same score.
  auto swapped = scored;
  for (auto& t : swapped) std::swap(t.enrollment, t.test);
  swapped = score_trials(suite().embedder, swapped);
  for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(swapped[i].score - scored[i].score) <= 1e-12);

  std::ofstream(dir / "bad.tsv") << "enroll_path\ttest_path\tlabel\na.wav\tb.wav\tmaybe\n";
  CHECK_THROWS_AS(read_trials(dir / "bad.tsv"), ParseError);
  auto missing = trials;
  missing[0].test = dir / "gone.wav";
  CHECK_THROWS_AS(score_trials(suite().embedder, {missing[0]}), MissingAsset);
}

TEST_CASE("proxy transcriber") {
  const auto& bank = suite().templates;
  CHECK(bank.templates.size() == 6);
  Waveform silence;
  silence.samples.assign(16000, 0.0);
  CHECK(transcribe(bank, silence).empty());
  CHECK_THROWS_AS(transcribe(TemplateBank{}, silence), InvalidInput);

  std::size_t correct = 0;
  const auto vocab = vocabulary(6);
  for (std::size_t w = 0; w < vocab.size(); ++w) {
    const auto x = synthesize_utterance(make_speaker(int(w % 8), 21), {vocab[w]}, 1000 + w);
    const auto got = transcribe(bank, x);
    correct += got == std::vector<std::string>{vocab[w]};
  }
  MESSAGE(correct << " of " << vocab.size() << " single words recognised");
  CHECK(correct >= 5);

  std::size_t edits = 0, words = 0;
  for (const auto& r : filter_split(corpus(), Split::test)) {
    const auto hyp = transcribe(bank, read_wav(r.audio_path));
    std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
    for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= r.transcript.size(); ++i) {
      cur[0] = i;
      for (std::size_t j = 1; j <= hyp.size(); ++j)
        cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r.transcript[i - 1] != hyp[j - 1])});
      std::swap(prev, cur);
    }
    edits += prev[hyp.size()];
    words += r.transcript.size();
  }
  const double accuracy = 100.0 - 100.0 * double(edits) / double(words);
  MESSAGE("held-out word accuracy " << accuracy);
  CHECK(accuracy >= 90.0);
}

TEST_CASE("word segmentation and alignment") {
  const auto x = synthesize_utterance(make_speaker(1, 21), vocabulary(3), 5);
  const auto m = attacker_features(x);
  const auto seg = segment_words(m);
  CHECK(seg.size() == 3);
  for (std::size_t i = 1; i < seg.size(); ++i) CHECK(seg[i].first >= seg[i - 1].second);
  CHECK(dtw_distance(m, seg[0].first, seg[0].second, m) >= 0.0);
}
