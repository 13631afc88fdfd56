#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"
#include "gengan/container.hpp"
#include "gengan/corpus.hpp"
#include "gengan/error.hpp"
#include "test_support.hpp"

using namespace gengan;
namespace fs = std::filesystem;

namespace {

CorpusConfig small_config() {
  CorpusConfig c;
  c.n_speakers = 4;
  c.utterances_per_speaker = 3;
  c.vocabulary_size = 6;
  c.seed = 7;
  return c;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("corpus generation is byte-identical across runs") {
  const auto a = test_support::scratch_dir("corpus_a"), b = test_support::scratch_dir("corpus_b");
  const auto ra = build_corpus(small_config(), a);
  const auto rb = build_corpus(small_config(), b);
  REQUIRE(ra.size() == 12);
  REQUIRE(rb.size() == 12);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK(fs::relative(ra[i].audio_path, a) == fs::relative(rb[i].audio_path, b));
    CHECK(file_bytes(ra[i].audio_path) == file_bytes(rb[i].audio_path));
  }
  CHECK(hex_digest(file_bytes(a / "manifest.tsv")) == hex_digest(file_bytes(b / "manifest.tsv")));
}

TEST_CASE("default corpus is gender balanced") {
  std::map<Gender, int> count;
  for (int i = 0; i < 20; ++i) count[make_speaker(i, 7).gender]++;
  CHECK(count[Gender::male] == 10);
  CHECK(count[Gender::female] == 10);
}

TEST_CASE("speaker profiles") {
  for (std::uint64_t seed : {1u, 7u, 99u})
    for (int i = 0; i < 40; ++i) {
      const auto p = make_speaker(i, seed);
      if (p.gender == Gender::male) {
        CHECK(p.f0_base >= 85.0);
        CHECK(p.f0_base <= 155.0);
      } else {
        CHECK(p.f0_base >= 165.0);
        CHECK(p.f0_base <= 255.0);
      }
      const auto q = make_speaker(i, seed);
      CHECK(q.f0_base == p.f0_base);
      CHECK(q.formant_shift == p.formant_shift);
      CHECK(q.speaker_id == p.speaker_id);
    }
}

TEST_CASE("invalid corpus settings") {
  const auto dir = test_support::scratch_dir("corpus_bad");
  auto c = small_config();
  c.n_speakers = 0;
  CHECK_THROWS_AS(build_corpus(c, dir), InvalidInput);
  c.n_speakers = 3;
  CHECK_THROWS_AS(build_corpus(c, dir), InvalidInput);
  c = small_config();
  c.vocabulary_size = 1;
  CHECK_THROWS_AS(build_corpus(c, dir), InvalidInput);
}

TEST_CASE("male and female pitch is separated") {
  const auto dir = test_support::scratch_dir("corpus_f0");
  auto c = small_config();
  c.n_speakers = 8;
  c.utterances_per_speaker = 2;
  double male = 0, female = 0;
  int nm = 0, nf = 0;
  for (const auto& r : build_corpus(c, dir)) {
    const double f0 = estimate_f0(read_wav(r.audio_path));
    CHECK(f0 > 0.0);
    (r.gender == Gender::male ? male : female) += f0;
    ++(r.gender == Gender::male ? nm : nf);
  }
  MESSAGE("mean f0 male " << male / nm << " female " << female / nf);
  CHECK(female / nf - male / nm >= 40.0);
}

TEST_CASE("manifest round trip and errors") {
  const auto dir = test_support::scratch_dir("manifest");
  const auto recs = build_corpus(small_config(), dir);
  const auto loaded = load_manifest(dir / "manifest.tsv");
  REQUIRE(loaded.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(fs::equivalent(loaded[i].audio_path, recs[i].audio_path));
    CHECK(loaded[i].speaker_id == recs[i].speaker_id);
    CHECK(loaded[i].gender == recs[i].gender);
    CHECK(loaded[i].transcript == recs[i].transcript);
    CHECK(loaded[i].split == recs[i].split);
  }
  const auto vocab = vocabulary(6);
  for (const auto& r : loaded)
    for (const auto& w : r.transcript) CHECK(std::find(vocab.begin(), vocab.end(), w) != vocab.end());

  write_manifest(dir / "copy.tsv", loaded);
  CHECK(load_manifest(dir / "copy.tsv").size() == loaded.size());

  std::ofstream(dir / "empty.tsv") << "audio_path\tspeaker_id\tgender\ttranscript\tsplit\n";
  CHECK(load_manifest(dir / "empty.tsv").empty());

  std::ofstream(dir / "extra.tsv") << "audio_path\tspeaker_id\tgender\ttranscript\tsplit\tnote\n"
                                   << fs::relative(loaded[0].audio_path, dir).string() << "\tspk\tM\ti-a\ttrain\thi\n";
  CHECK(load_manifest(dir / "extra.tsv").size() == 1);

  std::ofstream(dir / "absent.tsv") << "audio_path\tspeaker_id\tgender\ttranscript\tsplit\n"
                                    << "wav/nope.wav\tspk\tM\ti-a\ttrain\n";
  try {
    load_manifest(dir / "absent.tsv");
    FAIL("expected MissingAsset");
  } catch (const MissingAsset& e) {
    CHECK(e.path().find("nope.wav") != std::string::npos);
  }

  std::ofstream(dir / "bad.tsv") << "audio_path\tspeaker_id\tgender\ttranscript\tsplit\n"
                                 << fs::relative(loaded[0].audio_path, dir).string() << "\tspk\tM\ti-a\ttrain\n"
                                 << fs::relative(loaded[0].audio_path, dir).string() << "\tspk\tX\ti-a\ttrain\n";
  try {
    load_manifest(dir / "bad.tsv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(load_manifest(dir / "missing.tsv"), MissingAsset);
}

TEST_CASE("batch sampling") {
  const auto dir = test_support::scratch_dir("batches");
  const auto recs = build_corpus(small_config(), dir);
  const auto all = sample_batch(recs, recs.size(), 3);
  CHECK(all.size() == recs.size());
  CHECK_THROWS_AS(sample_batch(recs, recs.size() + 1, 3), InvalidInput);

  BatchSampler s(recs.size(), 3);
  auto idx = s.next(recs.size());
  std::sort(idx.begin(), idx.end());
  std::vector<std::size_t> want(recs.size());
  std::iota(want.begin(), want.end(), 0);
  CHECK(idx == want);

  BatchSampler a(50, 9), b(50, 9);
  for (int i = 0; i < 20; ++i) CHECK(a.next(7) == b.next(7));
  CHECK(epoch_permutation(50, 9, 0) != epoch_permutation(50, 9, 1));
}

TEST_CASE("selection frequency is uniform") {
  constexpr std::size_t kPopulation = 40, kDraws = 10000;
  const double p = 1.0 / kPopulation;
  const double sigma = std::sqrt(kDraws * p * (1.0 - p));

  // First pick of independently seeded samplers: a multinomial sample.
  std::vector<int> first(kPopulation, 0);
  for (std::size_t i = 0; i < kDraws; ++i) first[BatchSampler(kPopulation, i).next(1)[0]]++;
  for (int c : first) CHECK(std::abs(c - double(kDraws) * p) <= 3.0 * sigma);

  // One sampler streaming across epoch boundaries.
  std::vector<int> stream(kPopulation, 0);
  BatchSampler s(kPopulation, 1);
  for (std::size_t drawn = 0; drawn < kDraws; drawn += 16)
    for (auto i : s.next(16)) stream[i]++;
  for (int c : stream) CHECK(std::abs(c - double(kDraws) * p) <= 3.0 * sigma);
}
