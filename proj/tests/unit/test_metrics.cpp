#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "gengan/error.hpp"
#include "gengan/metrics.hpp"
#include "gengan/report.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace gengan;

namespace {

std::vector<ScoredTrial> trials_of(std::vector<double> targets, std::vector<double> non) {
  std::vector<ScoredTrial> t;
  for (double s : targets) t.push_back({s, true});
  for (double s : non) t.push_back({s, false});
  return t;
}

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<EvalUtterance> stub_utterances(std::size_t speakers, std::size_t per_speaker) {
  std::vector<EvalUtterance> u;
  for (std::size_t s = 0; s < speakers; ++s)
    for (std::size_t k = 0; k < per_speaker; ++k) {
      EvalUtterance e;
      e.record.speaker_id = "spk" + std::to_string(s);
      e.record.gender = s % 2 ? Gender::female : Gender::male;
      e.record.transcript = {"i-a", "u-o"};
      e.audio.samples.assign(4, double(s));
      u.push_back(e);
    }
  return u;
}

AttackerHooks oracle_hooks(const std::vector<EvalUtterance>& u) {
  AttackerHooks h;
  h.gender = [&u](std::size_t i, const Waveform&) { return label_value(u[i].record.gender); };
  h.verify = [&u](std::size_t a, const Waveform&, std::size_t b, const Waveform&) {
    return u[a].record.speaker_id == u[b].record.speaker_id ? 1.0 : 0.0;
  };
  h.transcribe = [&u](std::size_t i, const Waveform&) { return u[i].record.transcript; };
  return h;
}

const WaveTransform kIdentity = [](std::size_t, const Waveform& x) { return x; };

}  // namespace

TEST_CASE("folded metrics reproduce the reference table arithmetic") {
  const std::vector<std::pair<double, double>> eer{{5.73, 11.46}, {17.42, 34.84}, {51.88, 96.24}, {41.95, 83.90},
                                                   {38.37, 76.74}};
  const std::vector<std::pair<double, double>> gr{{91.37, 17.26}, {89.04, 21.92}, {53.90, 92.20},
                                                  {50.01, 99.98}, {48.39, 96.78}, {53.63, 92.74}};
  for (auto [in, out] : eer) CHECK(std::abs(normalized_eer(in) - out) <= 0.01);
  for (auto [in, out] : gr) CHECK(std::abs(normalized_gr(in) - out) <= 0.01);
  CHECK(std::abs(word_accuracy(4.36).value - 95.64) <= 0.01);
  CHECK(normalized_eer(50.0) == 100.0);
  CHECK_THROWS_AS(normalized_eer(-0.1), InvalidInput);
  CHECK_THROWS_AS(normalized_gr(100.5), InvalidInput);
}

TEST_CASE("folding symmetry and range") {
  for (double d = 0.0; d <= 50.0; d += 0.25) {
    CHECK(normalized_gr(50.0 + d) == normalized_gr(50.0 - d));
    CHECK(normalized_eer(50.0 + d) >= 0.0);
    CHECK(normalized_eer(50.0 + d) <= 100.0);
    if (d > 0.0) CHECK(normalized_eer(50.0 + d) < 100.0);
  }
}

TEST_CASE("EER examples") {
  CHECK(compute_eer(trials_of({0.9, 0.8}, {0.2, 0.1})) == 0.0);
  const auto t = trials_of({0.8, 0.4}, {0.6, 0.2});
  CHECK(compute_eer(t) == doctest::Approx(test_support::sweep_eer(t)).epsilon(1e-12));
  CHECK(compute_eer(t) == doctest::Approx(50.0));
  CHECK(compute_eer(trials_of({0.1, 0.2}, {0.8, 0.9})) == 100.0);
  CHECK_THROWS_AS(compute_eer(trials_of({0.5}, {})), InvalidInput);
  CHECK_THROWS_AS(compute_eer(trials_of({}, {0.5})), InvalidInput);
}

TEST_CASE("EER of indistinguishable classes is near chance") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  std::vector<ScoredTrial> t;
  for (int i = 0; i < 10000; ++i) t.push_back({g(rng), i % 2 == 0});
  const double eer = compute_eer(t);
  CHECK(eer >= 48.0);
  CHECK(eer <= 52.0);
}

TEST_CASE("EER matches a brute-force threshold sweep") {
  std::mt19937_64 rng(77);
  for (int set = 0; set < 200; ++set) {
    const int n = 2 + int(rng() % 49);
    std::vector<ScoredTrial> t;
    for (int i = 0; i < n; ++i) {
      // Coarse grid so ties are common.
      const bool target = i == 0 ? true : (i == 1 ? false : (rng() & 1));
      t.push_back({double(rng() % 20) / 10.0 + (target ? 0.3 : 0.0), target});
    }
    const double got = compute_eer(t);
    CHECK(std::abs(got - test_support::sweep_eer(t)) <= 1e-9);
    CHECK(got >= 0.0);
    CHECK(got <= 100.0);
  }
}

TEST_CASE("WER examples") {
  CHECK(word_error_rate(words("a b c"), words("a b c")) == 0.0);
  CHECK(word_error_rate(words("a b c d"), {}) == 100.0);
  CHECK(word_error_rate(words("a b c"), words("a x c")) == doctest::Approx(33.33).epsilon(1e-4));
  CHECK(word_error_rate(words("a"), words("a b c")) == 200.0);
  CHECK_THROWS_AS(word_error_rate({}, words("a")), InvalidInput);
}

TEST_CASE("WER relabeling invariance") {
  const auto ref = words("x y z x y"), hyp = words("x z z y");
  const auto ref2 = words("q r s q r"), hyp2 = words("q s s r");
  CHECK(word_error_rate(ref, hyp) == word_error_rate(ref2, hyp2));
}

TEST_CASE("WER matches shortest edit paths for all short sequences") {
  const auto [bad, checked] = test_support::wer_mismatches(3, 6);
  MESSAGE(checked << " sequence pairs checked");
  CHECK(checked == 1092u * 1093u);
  CHECK(bad == 0);
}

TEST_CASE("word accuracy") {
  CHECK(word_accuracy(0.0).value == 100.0);
  const auto a = word_accuracy(120.0);
  CHECK(a.value == 0.0);
  CHECK(a.raw_wer == 120.0);
  CHECK_THROWS_AS(word_accuracy(-1.0), InvalidInput);
}

TEST_CASE("gender recognition rate") {
  CHECK(gender_recognition_rate({0.9, 0.2, 0.5}, {Gender::female, Gender::male, Gender::female}) == 100.0);
  CHECK(gender_recognition_rate({0.1, 0.8}, {Gender::female, Gender::male}) == 0.0);
  CHECK_THROWS_AS(gender_recognition_rate({0.1}, {}), InvalidInput);
}

TEST_CASE("oracle attackers on original audio") {
  const auto u = stub_utterances(6, 4);
  const auto r = evaluate_utterances(u, kIdentity, oracle_hooks(u), 3);
  CHECK(r.gr == 100.0);
  CHECK(r.eer == 0.0);
  CHECK(r.wer == 0.0);
  CHECK(r.gr_norm == 0.0);
  CHECK(r.eer_norm == 0.0);
  CHECK(r.word_accuracy == 100.0);
  CHECK(r.utterances == 24);
  CHECK(r.trials == 2 * 6 * 6);
}

TEST_CASE("coin-flip gender classifier is at chance") {
  const auto u = stub_utterances(5000, 2);
  auto hooks = oracle_hooks(u);
  std::mt19937_64 rng(8);
  hooks.gender = [&rng](std::size_t, const Waveform&) { return (rng() & 1) ? 0.9 : 0.1; };
  const auto r = evaluate_utterances(u, kIdentity, hooks, 1);
  CHECK(r.gr_norm >= 98.0);
  CHECK(r.gr_norm <= 100.0);
}

TEST_CASE("failures are tagged with their stage") {
  const auto u = stub_utterances(4, 2);
  auto check_stage = [&](const WaveTransform& tf, const AttackerHooks& h, const std::string& stage, int code) {
    try {
      evaluate_utterances(u, tf, h, 0);
      FAIL("expected a StageError");
    } catch (const StageError& e) {
      CHECK(e.stage() == stage);
      CHECK(e.exit_code() == code);
    }
  };
  const WaveTransform bad_tf = [](std::size_t, const Waveform&) -> Waveform { throw MissingAsset("x.ckpt"); };
  check_stage(bad_tf, oracle_hooks(u), "transform", 3);
  auto h = oracle_hooks(u);
  h.gender = [](std::size_t, const Waveform&) -> double { throw InvalidInput("bad"); };
  check_stage(kIdentity, h, "gender", 2);
  h = oracle_hooks(u);
  h.verify = [](std::size_t, const Waveform&, std::size_t, const Waveform&) -> double {
    throw CheckpointError("bad");
  };
  check_stage(kIdentity, h, "verification", 4);
  h = oracle_hooks(u);
  h.transcribe = [](std::size_t, const Waveform&) -> std::vector<std::string> { throw InvalidInput("bad"); };
  check_stage(kIdentity, h, "transcription", 2);
  CHECK_THROWS_AS(evaluate_utterances({}, kIdentity, h, 0), StageError);
}

TEST_CASE("report derivation and serialization") {
  MetricsReport r;
  r.label = "GenGAN";
  r.eer = 38.37;
  r.gr = 53.63;
  r.wer = 23.36;
  r.derive();
  CHECK(std::abs(r.eer_norm - 76.74) <= 0.01);
  CHECK(std::abs(r.gr_norm - 92.74) <= 0.01);
  CHECK(std::abs(r.word_accuracy - 76.64) <= 0.01);
  const std::string table = format_table({r});
  CHECK(table.find("76.64") != std::string::npos);
  const auto row = table.substr(table.find("GenGAN"));
  const auto p1 = row.find("76.64"), p2 = row.find("38.37"), p3 = row.find("76.74"), p4 = row.find("53.63"),
             p5 = row.find("92.74");
  CHECK(p1 < p2);
  CHECK(p2 < p3);
  CHECK(p3 < p4);
  CHECK(p4 < p5);
  CHECK(p5 != std::string::npos);

  const auto back = report_from_json(to_json(r));
  CHECK(back.eer == r.eer);
  CHECK(back.gr == r.gr);
  CHECK(back.wer == r.wer);
  CHECK(back.label == r.label);
  CHECK(std::abs(normalized_eer(back.eer) - back.eer_norm) <= 0.01);

  MetricsReport over;
  over.wer = 130.0;
  over.derive();
  CHECK(over.word_accuracy == 0.0);
  CHECK(report_from_json(to_json(over)).wer == 130.0);
}

TEST_CASE("report rendering writes a 150 dpi PNG") {
  const auto dir = test_support::scratch_dir("report");
  MetricsReport a, b;
  a.label = "original";
  a.eer = 5.73;
  a.gr = 91.37;
  a.wer = 4.36;
  b.label = "gengan";
  b.eer = 38.37;
  b.gr = 53.63;
  b.wer = 23.36;
  a.derive();
  b.derive();
  const auto out = render_report({a, b}, dir);
  CHECK(out.csv.find("gengan") != std::string::npos);
  REQUIRE(std::filesystem::exists(dir / "tradeoff.png"));
  CHECK(std::filesystem::exists(dir / "metrics.csv"));
  std::ifstream in(dir / "tradeoff.png", std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), {});
  CHECK(bytes.substr(1, 3) == "PNG");
  const auto phys = bytes.find("pHYs");
  REQUIRE(phys != std::string::npos);
  auto be32 = [&](std::size_t at) {
    return (std::uint32_t(std::uint8_t(bytes[at])) << 24) | (std::uint32_t(std::uint8_t(bytes[at + 1])) << 16) |
           (std::uint32_t(std::uint8_t(bytes[at + 2])) << 8) | std::uint32_t(std::uint8_t(bytes[at + 3]));
  };
  CHECK(be32(phys + 4) == 5906);  // 150 dpi in pixels per metre
  CHECK(be32(phys + 8) == 5906);
  CHECK(bytes[phys + 12] == 1);
  CHECK_THROWS_AS(render_report({}, dir), InvalidInput);
}

TEST_CASE("report files accept a single object or an array") {
  const auto dir = test_support::scratch_dir("reports");
  MetricsReport r;
  r.label = "x";
  r.derive();
  write_report(dir / "one.json", r);
  CHECK(read_reports(dir / "one.json").size() == 1);
  std::ofstream(dir / "two.json") << "[" << to_json(r) << "," << to_json(r) << "]";
  CHECK(read_reports(dir / "two.json").size() == 2);
  CHECK_THROWS_AS(read_reports(dir / "missing.json"), MissingAsset);
}
