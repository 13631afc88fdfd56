#pragma once

// Brute-force reference implementations used to cross-check the metric code.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "gengan/metrics.hpp"

namespace test_support {

/// EER by sweeping 2n+1 thresholds: below every score, at every score and
/// halfway between neighbouring scores. Rates are counted directly.
inline double sweep_eer(const std::vector<gengan::ScoredTrial>& trials) {
  std::vector<double> scores;
  for (const auto& t : trials) scores.push_back(t.score);
  std::sort(scores.begin(), scores.end());
  std::vector<double> th{-std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < scores.size(); ++i) {
    th.push_back(scores[i]);
    th.push_back(i + 1 < scores.size() ? 0.5 * (scores[i] + scores[i + 1]) : std::numeric_limits<double>::infinity());
  }
  std::vector<double> far, frr;
  for (double t : th) {
    double fa = 0, fr = 0, nt = 0, nn = 0;
    for (const auto& s : trials) {
      if (s.target) {
        nt += 1;
        if (s.score < t) fr += 1;
      } else {
        nn += 1;
        if (s.score >= t) fa += 1;
      }
    }
    far.push_back(fa / nn);
    frr.push_back(fr / nt);
  }
  for (std::size_t i = 0; i + 1 < th.size(); ++i) {
    const double d0 = far[i] - frr[i], d1 = far[i + 1] - frr[i + 1];
    if (d0 == 0.0) return 100.0 * far[i];
    if (d0 > 0.0 && d1 <= 0.0) return 100.0 * (far[i] + d0 / (d0 - d1) * (far[i + 1] - far[i]));
  }
  return 100.0 * far.back();
}

/// Every token sequence over `alphabet` symbols with length <= max_len,
/// and shortest-path edit distances between all of them found by
/// breadth-first search over single substitutions, insertions and deletions.
class EditGraph {
 public:
  EditGraph(int alphabet, int max_len) : alphabet_(alphabet), max_len_(max_len) {
    seqs_.push_back({});
    for (std::size_t i = 0; i < seqs_.size(); ++i) {
      if (int(seqs_[i].size()) == max_len) continue;
      for (int a = 0; a < alphabet; ++a) {
        auto s = seqs_[i];
        s.push_back(a);
        seqs_.push_back(s);
      }
    }
    for (std::size_t i = 0; i < seqs_.size(); ++i) index_[key(seqs_[i])] = i;
    adj_.resize(seqs_.size());
    for (std::size_t i = 0; i < seqs_.size(); ++i) {
      const auto& s = seqs_[i];
      for (std::size_t p = 0; p < s.size(); ++p) {
        auto d = s;
        d.erase(d.begin() + long(p));
        adj_[i].push_back(index_.at(key(d)));
        for (int a = 0; a < alphabet; ++a) {
          if (a == s[p]) continue;
          auto t = s;
          t[p] = a;
          adj_[i].push_back(index_.at(key(t)));
        }
      }
      if (int(s.size()) < max_len)
        for (std::size_t p = 0; p <= s.size(); ++p)
          for (int a = 0; a < alphabet; ++a) {
            auto t = s;
            t.insert(t.begin() + long(p), a);
            adj_[i].push_back(index_.at(key(t)));
          }
    }
  }

  std::size_t size() const { return seqs_.size(); }
  const std::vector<int>& sequence(std::size_t i) const { return seqs_[i]; }

  std::vector<int> distances_from(std::size_t src) const {
    std::vector<int> dist(seqs_.size(), -1);
    std::queue<std::size_t> q;
    dist[src] = 0;
    q.push(src);
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      for (auto v : adj_[u])
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          q.push(v);
        }
    }
    return dist;
  }

 private:
  static std::uint64_t key(const std::vector<int>& s) {
    std::uint64_t k = 0;
    for (int v : s) k = k * 8 + std::uint64_t(v + 1);
    return k;
  }
  int alphabet_, max_len_;
  std::vector<std::vector<int>> seqs_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  std::vector<std::vector<std::size_t>> adj_;
};

inline std::vector<std::string> tokens_of(const std::vector<int>& s) {
  static const char* names[] = {"a", "b", "c", "d"};
  std::vector<std::string> out;
  for (int v : s) out.push_back(names[v]);
  return out;
}

/// Number of pairs (ref non-empty) where word_error_rate disagrees with the
/// graph distance, and the number of pairs checked.
inline std::pair<std::size_t, std::size_t> wer_mismatches(int alphabet, int max_len) {
  const EditGraph g(alphabet, max_len);
  std::vector<std::vector<std::string>> toks;
  for (std::size_t i = 0; i < g.size(); ++i) toks.push_back(tokens_of(g.sequence(i)));
  std::size_t bad = 0, checked = 0;
  for (std::size_t r = 0; r < g.size(); ++r) {
    if (toks[r].empty()) continue;
    const auto dist = g.distances_from(r);
    for (std::size_t h = 0; h < g.size(); ++h) {
      const double want = 100.0 * dist[h] / double(toks[r].size());
      if (std::abs(gengan::word_error_rate(toks[r], toks[h]) - want) > 1e-9) ++bad;
      ++checked;
    }
  }
  return {bad, checked};
}

}  // namespace test_support
