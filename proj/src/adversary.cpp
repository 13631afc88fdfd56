#include "gengan/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "gengan/error.hpp"
#include "gengan/rng.hpp"
#include "serial_util.hpp"

namespace gengan {

using nlohmann::json;

MelSpectrogram attacker_features(const Waveform& x, const FrontendConfig& fe) {
  return mel_spectrogram(peak_normalize(x, 0.9), fe);
}

namespace {

// Pads short spectrograms with the floor value up to `min_frames`.
Tensor single_batch(const MelSpectrogram& m, std::size_t min_frames) {
  const std::size_t frames = std::max<std::size_t>(static_cast<std::size_t>(m.n_frames), min_frames);
  Tensor t({1, static_cast<std::size_t>(m.n_bands), frames});
  for (int b = 0; b < m.n_bands; ++b)
    std::copy_n(m.values.data() + std::size_t(b) * m.n_frames, m.n_frames, &t.at(0, std::size_t(b), 0));
  return t;
}

// Random fixed-length crops for one minibatch.
Tensor random_crops(const std::vector<MelSpectrogram>& feats, const std::vector<std::size_t>& idx, int frames,
                    std::uint64_t seed) {
  const std::size_t bands = static_cast<std::size_t>(feats.front().n_bands);
  Tensor t({idx.size(), bands, static_cast<std::size_t>(frames)});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const MelSpectrogram& m = feats[idx[i]];
    const int slack = m.n_frames - frames;
    const int start = slack > 0 ? static_cast<int>(derive_seed(seed, "crop", i) % std::uint64_t(slack + 1)) : 0;
    const int avail = std::min(frames, m.n_frames - start);
    for (std::size_t b = 0; b < bands; ++b)
      std::copy_n(m.values.data() + b * m.n_frames + start, avail, &t.at(i, b, 0));
  }
  return t;
}

std::vector<MelSpectrogram> load_features(const std::vector<UtteranceRecord>& records, const FrontendConfig& fe) {
  std::vector<MelSpectrogram> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(attacker_features(read_wav(r.audio_path), fe));
  return out;
}

void collect_buffers(nn::BatchNorm1d& bn, std::vector<nn::Buffer*>& out) { bn.buffers(out); }

}  // namespace

// --- GenderNet --------------------------------------------------------------

GenderNet::GenderNet(int bands, const GenderNetConfig& cfg, std::uint64_t seed) : bands_(bands), cfg_(cfg) {
  if (bands < 1 || cfg.channels < 1 || cfg.kernel < 1 || cfg.kernel % 2 == 0)
    throw InvalidInput("invalid gender classifier configuration");
  const auto c = static_cast<std::size_t>(cfg.channels);
  const auto k = static_cast<std::size_t>(cfg.kernel);
  std::size_t in = static_cast<std::size_t>(bands);
  for (int i = 0; i < kBlocks; ++i) {
    const std::string name = "gender.block" + std::to_string(i);
    convs_.emplace_back(name + ".conv", in, c, k, 1, k / 2);
    norms_.emplace_back(name + ".bn", c);
    in = c;
  }
  acts_.assign(kBlocks, nn::LeakyRelu(0.0));
  pools_.assign(kBlocks, nn::MaxPool1d());
  out_ = nn::Linear("gender.out", c, 1);
  nn::Rng rng(seed);
  for (auto& cv : convs_) cv.init(rng);
  out_.init(rng);
}

std::vector<double> GenderNet::forward(const Tensor& mel, bool training) {
  if (mel.rank() != 3 || mel.dim(1) != static_cast<std::size_t>(bands_) || mel.dim(2) < min_frames())
    throw InvalidInput("gender classifier: expected (N, " + std::to_string(bands_) + ", T >= " +
                       std::to_string(min_frames()) + ") input");
  Tensor h = mel;
  for (int i = 0; i < kBlocks; ++i)
    h = pools_[i].forward(acts_[i].forward(norms_[i].forward(convs_[i].forward(h), training)));
  pooled_length_ = h.dim(2);
  return squash_.forward(out_.forward(nn::mean_over_time(h))).data;
}

void GenderNet::backward(std::span<const double> d_prob) {
  Tensor d({d_prob.size(), 1});
  std::copy(d_prob.begin(), d_prob.end(), d.data.begin());
  d = nn::mean_over_time_backward(out_.backward(squash_.backward(d)), pooled_length_);
  for (int i = kBlocks; i-- > 0;)
    d = convs_[i].backward(norms_[i].backward(acts_[i].backward(pools_[i].backward(d))));
}

std::vector<nn::Param*> GenderNet::params() {
  std::vector<nn::Param*> ps;
  for (int i = 0; i < kBlocks; ++i) {
    convs_[i].collect(ps);
    norms_[i].collect(ps);
  }
  out_.collect(ps);
  return ps;
}

std::vector<nn::Buffer*> GenderNet::buffers() {
  std::vector<nn::Buffer*> bs;
  for (auto& n : norms_) collect_buffers(n, bs);
  return bs;
}

GenderNet train_gender_classifier(const std::vector<UtteranceRecord>& records, std::uint64_t seed,
                                  const GenderNetConfig& cfg, GenderTrainLog* log, const FrontendConfig& fe) {
  const auto train = filter_split(records, Split::train);
  std::size_t females = 0;
  for (const auto& r : train) females += r.gender == Gender::female;
  if (females == 0 || females == train.size())
    throw InvalidInput("gender classifier needs both genders in the train split");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.crop_frames < 32 || !(cfg.learning_rate > 0))
    throw InvalidInput("invalid gender classifier training settings");

  const auto feats = load_features(train, fe);
  GenderNet net(fe.n_bands, cfg, derive_seed(seed, "gendernet"));
  const auto ps = net.params();
  nn::Adam opt(cfg.learning_rate);
  const std::size_t n = train.size(), bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_permutation(n, derive_seed(seed, "gender-epoch"), static_cast<std::size_t>(epoch));
    std::size_t correct = 0;
    for (std::size_t start = 0, b = 0; start < n; start += bs, ++b) {
      const std::vector<std::size_t> idx(order.begin() + start, order.begin() + std::min(n, start + bs));
      const Tensor x = random_crops(feats, idx, cfg.crop_frames,
                                    derive_seed(derive_seed(seed, "gender-crop", epoch), "batch", b));
      nn::zero_grad(ps);
      const auto p = net.forward(x, true);
      std::vector<double> d(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const double y = label_value(train[idx[i]].gender);
        d[i] = bce_grad(y, p[i]) / double(idx.size());
        correct += (p[i] >= 0.5) == (y > 0.5);
      }
      net.backward(d);
      opt.step(ps);
    }
    if (log) log->epoch_accuracy.push_back(100.0 * double(correct) / double(n));
  }
  return net;
}

double classify_gender(const GenderNet& net, const MelSpectrogram& features) {
  GenderNet copy = net;
  return copy.forward(single_batch(features, copy.min_frames()), false).front();
}

double classify_gender(const GenderNet& net, const Waveform& x, const FrontendConfig& fe) {
  return classify_gender(net, attacker_features(x, fe));
}

// --- speaker embedder -------------------------------------------------------

SpeakerEmbedder::SpeakerEmbedder(int bands, int n_speakers, const EmbedderConfig& cfg, std::uint64_t seed)
    : bands_(bands), cfg_(cfg) {
  if (bands < 1 || n_speakers < 1 || cfg.channels < 1 || cfg.blocks < 1 || cfg.embedding_dim < 1)
    throw InvalidInput("invalid speaker embedder configuration");
  const auto c = static_cast<std::size_t>(cfg.channels);
  stem_ = nn::Conv1d("embed.stem", static_cast<std::size_t>(bands), c, 3, 1, 1);
  stem_bn_ = nn::BatchNorm1d("embed.stem_bn", c);
  for (int i = 0; i < cfg.blocks; ++i) {
    const std::string name = "embed.block" + std::to_string(i);
    Block b;
    b.conv1 = nn::Conv1d(name + ".conv1", c, c, 3, 1, 1);
    b.conv2 = nn::Conv1d(name + ".conv2", c, c, 3, 1, 1);
    b.bn1 = nn::BatchNorm1d(name + ".bn1", c);
    b.bn2 = nn::BatchNorm1d(name + ".bn2", c);
    blocks_.push_back(std::move(b));
  }
  const auto dim = static_cast<std::size_t>(cfg.embedding_dim);
  proj_ = nn::Linear("embed.proj", c, dim);
  class_weights = nn::Param("embed.class_weights", {static_cast<std::size_t>(n_speakers), dim});
  nn::Rng rng(seed);
  stem_.init(rng);
  for (auto& b : blocks_) {
    b.conv1.init(rng);
    b.conv2.init(rng);
  }
  proj_.init(rng);
  std::normal_distribution<double> g(0.0, 1.0);
  for (double& w : class_weights.value.data) w = g(rng);
}

Tensor SpeakerEmbedder::forward(const Tensor& mel, bool training) {
  if (mel.rank() != 3 || mel.dim(1) != static_cast<std::size_t>(bands_) || mel.dim(2) == 0)
    throw InvalidInput("speaker embedder: expected (N, " + std::to_string(bands_) + ", T) input");
  Tensor h = stem_act_.forward(stem_bn_.forward(stem_.forward(mel), training));
  for (auto& b : blocks_) {
    Tensor r = b.act1.forward(b.bn1.forward(b.conv1.forward(h), training));
    r = b.bn2.forward(b.conv2.forward(r), training);
    for (std::size_t i = 0; i < r.size(); ++i) r.data[i] += h.data[i];
    h = b.act2.forward(r);
  }
  length_ = h.dim(2);
  raw_ = proj_.forward(nn::mean_over_time(h));
  Tensor e = raw_;
  const std::size_t n = e.dim(0), d = e.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += e.data[i * d + j] * e.data[i * d + j];
    const double inv = 1.0 / std::max(std::sqrt(s), 1e-12);
    for (std::size_t j = 0; j < d; ++j) e.data[i * d + j] *= inv;
  }
  return e;
}

void SpeakerEmbedder::backward(const Tensor& d_emb) {
  const std::size_t n = raw_.dim(0), d = raw_.dim(1);
  Tensor dr(raw_.shape);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = raw_.data.data() + i * d;
    const double* g = d_emb.data.data() + i * d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += r[j] * r[j];
    const double norm = std::max(std::sqrt(s), 1e-12);
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += g[j] * r[j] / norm;
    for (std::size_t j = 0; j < d; ++j) dr.data[i * d + j] = (g[j] - dot * r[j] / norm) / norm;
  }
  Tensor dh = nn::mean_over_time_backward(proj_.backward(dr), length_);
  for (std::size_t k = blocks_.size(); k-- > 0;) {
    Block& b = blocks_[k];
    const Tensor dr2 = b.act2.backward(dh);
    Tensor dx = b.conv1.backward(b.bn1.backward(b.act1.backward(b.conv2.backward(b.bn2.backward(dr2)))));
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += dr2.data[i];
    dh = std::move(dx);
  }
  stem_.backward(stem_bn_.backward(stem_act_.backward(dh)));
}

std::vector<nn::Param*> SpeakerEmbedder::params() {
  std::vector<nn::Param*> ps;
  stem_.collect(ps);
  stem_bn_.collect(ps);
  for (auto& b : blocks_) {
    b.conv1.collect(ps);
    b.bn1.collect(ps);
    b.conv2.collect(ps);
    b.bn2.collect(ps);
  }
  proj_.collect(ps);
  return ps;
}

std::vector<nn::Buffer*> SpeakerEmbedder::buffers() {
  std::vector<nn::Buffer*> bs;
  collect_buffers(stem_bn_, bs);
  for (auto& b : blocks_) {
    collect_buffers(b.bn1, bs);
    collect_buffers(b.bn2, bs);
  }
  return bs;
}

SpeakerEmbedder train_speaker_embedder(const std::vector<UtteranceRecord>& records, std::uint64_t seed,
                                       const EmbedderConfig& cfg, const FrontendConfig& fe) {
  const auto train = filter_split(records, Split::train);
  std::map<std::string, std::size_t> speaker_index;
  for (const auto& r : train) speaker_index.emplace(r.speaker_id, 0);
  if (speaker_index.size() < 2) throw InvalidInput("speaker embedder needs at least two speakers");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.crop_frames < 1 || !(cfg.learning_rate > 0))
    throw InvalidInput("invalid speaker embedder training settings");
  std::size_t next = 0;
  for (auto& [id, idx] : speaker_index) idx = next++;

  const auto feats = load_features(train, fe);
  SpeakerEmbedder net(fe.n_bands, static_cast<int>(speaker_index.size()), cfg, derive_seed(seed, "embedder"));
  auto ps = net.params();
  ps.push_back(&net.class_weights);
  nn::Adam opt(cfg.learning_rate);
  const std::size_t n = train.size(), bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t classes = speaker_index.size(), dim = static_cast<std::size_t>(cfg.embedding_dim);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_permutation(n, derive_seed(seed, "embed-epoch"), static_cast<std::size_t>(epoch));
    for (std::size_t start = 0, b = 0; start < n; start += bs, ++b) {
      const std::vector<std::size_t> idx(order.begin() + start, order.begin() + std::min(n, start + bs));
      const Tensor x = random_crops(feats, idx, cfg.crop_frames,
                                    derive_seed(derive_seed(seed, "embed-crop", epoch), "batch", b));
      nn::zero_grad(ps);
      const Tensor e = net.forward(x, true);

      // Additive-margin softmax over normalized class weights.
      const auto& w = net.class_weights.value.data;
      std::vector<double> wn(w.size()), wnorm(classes);
      for (std::size_t k = 0; k < classes; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < dim; ++j) s += w[k * dim + j] * w[k * dim + j];
        wnorm[k] = std::max(std::sqrt(s), 1e-12);
        for (std::size_t j = 0; j < dim; ++j) wn[k * dim + j] = w[k * dim + j] / wnorm[k];
      }
      Tensor de(e.shape);
      std::vector<double> dwn(w.size(), 0.0);
      const double inv_n = 1.0 / double(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const std::size_t target = speaker_index.at(train[idx[i]].speaker_id);
        std::vector<double> logits(classes);
        for (std::size_t k = 0; k < classes; ++k) {
          double c = 0.0;
          for (std::size_t j = 0; j < dim; ++j) c += wn[k * dim + j] * e.data[i * dim + j];
          logits[k] = cfg.scale * (c - (k == target ? cfg.margin : 0.0));
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double& l : logits) z += (l = std::exp(l - mx));
        for (std::size_t k = 0; k < classes; ++k) {
          const double dc = cfg.scale * (logits[k] / z - (k == target ? 1.0 : 0.0)) * inv_n;
          for (std::size_t j = 0; j < dim; ++j) {
            de.data[i * dim + j] += dc * wn[k * dim + j];
            dwn[k * dim + j] += dc * e.data[i * dim + j];
          }
        }
      }
      auto& dw = net.class_weights.grad.data;
      for (std::size_t k = 0; k < classes; ++k) {
        double dot = 0.0;
        for (std::size_t j = 0; j < dim; ++j) dot += dwn[k * dim + j] * wn[k * dim + j];
        for (std::size_t j = 0; j < dim; ++j)
          dw[k * dim + j] += (dwn[k * dim + j] - dot * wn[k * dim + j]) / wnorm[k];
      }
      net.backward(de);
      opt.step(ps);
    }
  }
  return net;
}

std::vector<double> embed(const SpeakerEmbedder& e, const MelSpectrogram& features) {
  SpeakerEmbedder copy = e;
  return copy.forward(single_batch(features, 1), false).data;
}

std::vector<double> embed(const SpeakerEmbedder& e, const Waveform& x, const FrontendConfig& fe) {
  return embed(e, attacker_features(x, fe));
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidInput("cosine: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

// --- trials -----------------------------------------------------------------

std::vector<TrialIndex> build_trial_indices(const std::vector<UtteranceRecord>& utts, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_speaker;
  for (std::size_t i = 0; i < utts.size(); ++i) by_speaker[utts[i].speaker_id].push_back(i);

  std::vector<TrialIndex> trials;
  for (const auto& [id, members] : by_speaker)
    for (std::size_t a = 0; a < members.size(); ++a)
      for (std::size_t b = a + 1; b < members.size(); ++b) trials.push_back({members[a], members[b], true});

  std::size_t possible = 0;
  for (const auto& [id, members] : by_speaker) possible += members.size() * (utts.size() - members.size());
  const std::size_t wanted = std::min(trials.size(), possible / 2);
  std::mt19937_64 rng(derive_seed(seed, "trials"));
  std::set<std::pair<std::size_t, std::size_t>> used;
  while (used.size() < wanted) {
    std::size_t a = static_cast<std::size_t>(rng() % utts.size());
    std::size_t b = static_cast<std::size_t>(rng() % utts.size());
    if (utts[a].speaker_id == utts[b].speaker_id) continue;
    if (a > b) std::swap(a, b);
    if (!used.insert({a, b}).second) continue;
    trials.push_back({a, b, false});
  }
  return trials;
}

std::vector<TrialPair> build_trials(const std::vector<UtteranceRecord>& records, std::uint64_t seed) {
  const auto test = filter_split(records, Split::test);
  std::vector<TrialPair> out;
  for (const auto& t : build_trial_indices(test, seed))
    out.push_back({test[t.enrollment].audio_path, test[t.test].audio_path, t.same_speaker, 0.0});
  return out;
}

std::vector<TrialPair> score_trials(const SpeakerEmbedder& e, std::vector<TrialPair> trials,
                                    const FrontendConfig& fe) {
  std::map<std::filesystem::path, std::vector<double>> cache;
  auto get = [&](const std::filesystem::path& p) -> const std::vector<double>& {
    auto it = cache.find(p);
    if (it == cache.end()) it = cache.emplace(p, embed(e, read_wav(p), fe)).first;
    return it->second;
  };
  for (auto& t : trials) t.score = cosine(get(t.enrollment), get(t.test));
  return trials;
}

void write_trials(const std::filesystem::path& path, const std::vector<TrialPair>& trials, bool with_scores) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << "enroll_path\ttest_path\tlabel" << (with_scores ? "\tscore" : "") << '\n';
  out.precision(17);
  for (const auto& t : trials) {
    out << t.enrollment.string() << '\t' << t.test.string() << '\t' << (t.same_speaker ? 1 : 0);
    if (with_scores) out << '\t' << t.score;
    out << '\n';
  }
}

std::vector<TrialPair> read_trials(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingAsset(path.string());
  std::vector<TrialPair> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (no == 1 && line.rfind("enroll_path", 0) == 0)) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, '\t');) cols.push_back(c);
    if (cols.size() < 3 || cols.size() > 4) throw ParseError(no, "expected 3 or 4 tab-separated columns");
    TrialPair t;
    t.enrollment = cols[0];
    t.test = cols[1];
    if (cols[2] != "0" && cols[2] != "1") throw ParseError(no, "label must be 0 or 1");
    t.same_speaker = cols[2] == "1";
    if (cols.size() == 4) {
      try {
        std::size_t used = 0;
        t.score = std::stod(cols[3], &used);
        if (used != cols[3].size()) throw std::invalid_argument(cols[3]);
      } catch (const std::exception&) {
        throw ParseError(no, "malformed score '" + cols[3] + "'");
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

// --- transcriber ------------------------------------------------------------

std::vector<std::pair<int, int>> segment_words(const MelSpectrogram& m) {
  const int frames = m.n_frames;
  std::vector<double> e(static_cast<std::size_t>(frames), 0.0);
  for (int b = 0; b < m.n_bands; ++b)
    for (int f = 0; f < frames; ++f) e[f] += m.at(b, f) / m.n_bands;
  std::vector<double> s(e.size());
  for (int f = 0; f < frames; ++f) {
    const int lo = std::max(0, f - 1), hi = std::min(frames - 1, f + 1);
    double acc = 0.0;
    for (int k = lo; k <= hi; ++k) acc += e[k];
    s[f] = acc / (hi - lo + 1);
  }
  std::vector<std::pair<int, int>> segs;
  if (s.empty()) return segs;
  const auto [mn, mx] = std::minmax_element(s.begin(), s.end());
  if (*mx - *mn < 0.05) return segs;
  const double thr = *mn + 0.35 * (*mx - *mn);
  static constexpr int kMaxGap = 3, kMinLength = 4;
  for (int f = 0; f < frames;) {
    if (s[f] <= thr) {
      ++f;
      continue;
    }
    int end = f;
    while (end < frames && s[end] > thr) ++end;
    if (!segs.empty() && f - segs.back().second <= kMaxGap)
      segs.back().second = end;
    else
      segs.push_back({f, end});
    f = end;
  }
  std::erase_if(segs, [](const auto& g) { return g.second - g.first < kMinLength; });
  return segs;
}

double dtw_distance(const MelSpectrogram& a, int a_begin, int a_end, const MelSpectrogram& b) {
  const int n = a_end - a_begin, m = b.n_frames;
  if (n <= 0 || m <= 0 || a.n_bands != b.n_bands) throw InvalidInput("dtw: incompatible inputs");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(static_cast<std::size_t>(m + 1), inf), cur(prev.size(), inf);
  prev[0] = 0.0;
  for (int i = 1; i <= n; ++i) {
    cur.assign(cur.size(), inf);
    for (int j = 1; j <= m; ++j) {
      double d = 0.0;
      for (int k = 0; k < a.n_bands; ++k) {
        const double diff = a.at(k, a_begin + i - 1) - b.at(k, j - 1);
        d += diff * diff;
      }
      d = std::sqrt(d);
      cur[j] = d + std::min({prev[j], cur[j - 1], prev[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m] / double(n + m);
}

namespace {

MelSpectrogram slice_resampled(const MelSpectrogram& m, int begin, int end, int frames) {
  MelSpectrogram out = m;
  out.n_frames = frames;
  out.values.assign(std::size_t(m.n_bands) * frames, 0.0);
  const int len = end - begin;
  for (int f = 0; f < frames; ++f) {
    const double pos = frames > 1 ? double(f) * (len - 1) / (frames - 1) : 0.0;
    const int i0 = static_cast<int>(std::floor(pos));
    const int i1 = std::min(i0 + 1, len - 1);
    const double w = pos - i0;
    for (int b = 0; b < m.n_bands; ++b)
      out.at(b, f) = (1 - w) * m.at(b, begin + i0) + w * m.at(b, begin + i1);
  }
  return out;
}

}  // namespace

TemplateBank build_templates(const std::vector<UtteranceRecord>& records, const FrontendConfig& fe) {
  struct Piece {
    const MelSpectrogram* mel;
    int begin, end;
  };
  const auto train = filter_split(records, Split::train);
  const auto feats = load_features(train, fe);
  std::map<std::string, std::vector<Piece>> pieces;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto segs = segment_words(feats[i]);
    if (segs.size() != train[i].transcript.size()) continue;
    for (std::size_t w = 0; w < segs.size(); ++w)
      pieces[train[i].transcript[w]].push_back({&feats[i], segs[w].first, segs[w].second});
  }
  TemplateBank bank;
  for (auto& [word, ps] : pieces) {
    std::vector<int> lengths;
    for (const auto& p : ps) lengths.push_back(p.end - p.begin);
    std::nth_element(lengths.begin(), lengths.begin() + lengths.size() / 2, lengths.end());
    const int frames = lengths[lengths.size() / 2];
    MelSpectrogram avg = slice_resampled(*ps.front().mel, ps.front().begin, ps.front().end, frames);
    std::fill(avg.values.begin(), avg.values.end(), 0.0);
    for (const auto& p : ps) {
      const auto r = slice_resampled(*p.mel, p.begin, p.end, frames);
      for (std::size_t k = 0; k < avg.values.size(); ++k) avg.values[k] += r.values[k] / double(ps.size());
    }
    bank.templates.emplace(word, std::move(avg));
  }
  return bank;
}

std::vector<std::string> transcribe(const TemplateBank& bank, const MelSpectrogram& features) {
  if (bank.empty()) throw InvalidInput("transcriber: empty template bank");
  std::vector<std::string> words;
  for (const auto& [b, e] : segment_words(features)) {
    double best = std::numeric_limits<double>::infinity();
    const std::string* pick = nullptr;
    for (const auto& [word, tpl] : bank.templates) {
      const double d = dtw_distance(features, b, e, tpl);
      if (d < best) {
        best = d;
        pick = &word;
      }
    }
    words.push_back(*pick);
  }
  return words;
}

std::vector<std::string> transcribe(const TemplateBank& bank, const Waveform& x, const FrontendConfig& fe) {
  if (bank.empty()) throw InvalidInput("transcriber: empty template bank");
  return transcribe(bank, attacker_features(x, fe));
}

// --- bundle -----------------------------------------------------------------

AttackerSuite train_attackers(const std::vector<UtteranceRecord>& records, const AttackerConfig& cfg) {
  AttackerSuite s;
  s.gender = train_gender_classifier(records, derive_seed(cfg.seed, "gender"), cfg.gender, &s.gender_log,
                                     s.frontend);
  s.embedder = train_speaker_embedder(records, derive_seed(cfg.seed, "speaker"), cfg.embedder, s.frontend);
  s.templates = build_templates(records, s.frontend);
  if (s.templates.empty()) throw InvalidInput("no utterance segmented cleanly enough to build word templates");
  return s;
}

namespace {

constexpr const char* kAttackerKind = "gengan-attackers";

void store_buffers(TensorContainer& c, const std::string& prefix, const std::vector<nn::Buffer*>& bs) {
  for (const auto* b : bs) c.put(prefix + b->name, b->value);
}

void load_buffers(const TensorContainer& c, const std::string& prefix, const std::vector<nn::Buffer*>& bs) {
  for (auto* b : bs) {
    const auto* t = c.find(prefix + b->name);
    if (!t) throw CheckpointError("tensor '" + prefix + b->name + "' missing from attacker file");
    if (t->value.shape != b->value.shape)
      throw CheckpointError("tensor '" + prefix + b->name + "' has an unexpected shape");
    b->value = t->value;
  }
}

}  // namespace

void save_attackers(const std::filesystem::path& path, const AttackerSuite& suite) {
  AttackerSuite& s = const_cast<AttackerSuite&>(suite);  // params() hands out mutable pointers only
  const auto& g = s.gender.config();
  const auto& e = s.embedder.config();
  json words = json::array();
  for (const auto& [w, t] : s.templates.templates) words.push_back(w);
  json meta = {{"kind", kAttackerKind},
               {"frontend", detail::frontend_json(s.frontend)},
               {"gender", {{"channels", g.channels}, {"kernel", g.kernel}, {"epochs", g.epochs},
                           {"batch_size", g.batch_size}, {"crop_frames", g.crop_frames},
                           {"learning_rate", g.learning_rate}, {"train_accuracy", s.gender_log.epoch_accuracy}}},
               {"embedder", {{"channels", e.channels}, {"blocks", e.blocks}, {"embedding_dim", e.embedding_dim},
                             {"epochs", e.epochs}, {"batch_size", e.batch_size}, {"crop_frames", e.crop_frames},
                             {"learning_rate", e.learning_rate}, {"margin", e.margin}, {"scale", e.scale},
                             {"speakers", s.embedder.class_weights.value.dim(0)}}},
               {"words", words}};
  TensorContainer c;
  c.metadata = meta.dump();
  store_params(c, "", s.gender.params());
  store_buffers(c, "", s.gender.buffers());
  auto eps = s.embedder.params();
  eps.push_back(&s.embedder.class_weights);
  store_params(c, "", eps);
  store_buffers(c, "", s.embedder.buffers());
  for (const auto& [w, t] : s.templates.templates) {
    Tensor v({std::size_t(t.n_bands), std::size_t(t.n_frames)});
    v.data = t.values;
    c.put("template." + w, std::move(v));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_container(path, c);
}

AttackerSuite load_attackers(const std::filesystem::path& path) {
  const TensorContainer c = read_container(path);
  const json meta = detail::parse_metadata(c.metadata, kAttackerKind, path);
  AttackerSuite s;
  try {
    s.frontend = detail::frontend_from_json(meta.at("frontend"));
    const auto& gj = meta.at("gender");
    GenderNetConfig g;
    g.channels = gj.at("channels").get<int>();
    g.kernel = gj.at("kernel").get<int>();
    g.epochs = gj.at("epochs").get<int>();
    g.batch_size = gj.at("batch_size").get<int>();
    g.crop_frames = gj.at("crop_frames").get<int>();
    g.learning_rate = gj.at("learning_rate").get<double>();
    s.gender_log.epoch_accuracy = gj.at("train_accuracy").get<std::vector<double>>();
    const auto& ej = meta.at("embedder");
    EmbedderConfig e;
    e.channels = ej.at("channels").get<int>();
    e.blocks = ej.at("blocks").get<int>();
    e.embedding_dim = ej.at("embedding_dim").get<int>();
    e.epochs = ej.at("epochs").get<int>();
    e.batch_size = ej.at("batch_size").get<int>();
    e.crop_frames = ej.at("crop_frames").get<int>();
    e.learning_rate = ej.at("learning_rate").get<double>();
    e.margin = ej.at("margin").get<double>();
    e.scale = ej.at("scale").get<double>();
    s.gender = GenderNet(s.frontend.n_bands, g, 0);
    s.embedder = SpeakerEmbedder(s.frontend.n_bands, ej.at("speakers").get<int>(), e, 0);
    for (const auto& w : meta.at("words")) {
      const std::string word = w.get<std::string>();
      const Tensor& t = c.get("template." + word);
      if (t.rank() != 2 || t.dim(0) != static_cast<std::size_t>(s.frontend.n_bands))
        throw CheckpointError("tensor 'template." + word + "' has an unexpected shape");
      MelSpectrogram m;
      m.n_bands = static_cast<int>(t.dim(0));
      m.n_frames = static_cast<int>(t.dim(1));
      m.values = t.data;
      s.templates.templates.emplace(word, std::move(m));
    }
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": malformed metadata: " + e.what());
  } catch (const InvalidInput& e) {
    throw CheckpointError(path.string() + ": invalid stored configuration: " + e.what());
  }
  load_params(c, "", s.gender.params());
  load_buffers(c, "", s.gender.buffers());
  auto eps = s.embedder.params();
  eps.push_back(&s.embedder.class_weights);
  load_params(c, "", eps);
  load_buffers(c, "", s.embedder.buffers());
  return s;
}

}  // namespace gengan
