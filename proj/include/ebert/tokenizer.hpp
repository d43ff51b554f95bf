#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ebert/genome_io.hpp"

namespace ebert {

using TokenId = std::int32_t;

struct TokenizerConfig {
  int k = 7;           // k-mer size, 1..10
  int stride = 7;      // 1..k; also governs auxiliary pooling
  int l_input = 150;   // fixed output sequence length

  /// Token count before padding for a window of `len` bp.
  int real_tokens(std::int64_t len) const {
    if (len < k) return 0;
    return static_cast<int>((len - k) / stride) + 1;
  }

  void validate() const {
    if (k < 1 || k > 10) throw std::invalid_argument("k must be in [1, 10]");
    if (stride < 1 || stride > k) throw std::invalid_argument("stride must be in [1, k]");
    if (l_input < 1) throw std::invalid_argument("l_input must be positive");
  }
};

/// DNA token vocabulary: 3 specials followed by all 4^k k-mers, with the
/// left-most base most significant (A=0, C=1, G=2, T=3).
struct Vocab {
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kMask = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr TokenId kDnaOffset = 3;

  int k = 0;
  TokenId size = 0;  // 4^k + 3

  TokenId dna_tokens() const { return size - kDnaOffset; }

  TokenId encode(std::string_view kmer) const {
    TokenId id = 0;
    for (char c : kmer) {
      int d;
      switch (c) {
        case 'A': d = 0; break;
        case 'C': d = 1; break;
        case 'G': d = 2; break;
        case 'T': d = 3; break;
        default: return kUnk;
      }
      id = id * 4 + d;
    }
    return id + kDnaOffset;
  }

  std::string decode(TokenId id) const {
    if (id < kDnaOffset || id >= size) throw std::out_of_range("not a DNA token id");
    TokenId v = id - kDnaOffset;
    std::string s(static_cast<std::size_t>(k), 'A');
    static constexpr std::array<char, 4> bases = {'A', 'C', 'G', 'T'};
    for (int i = k - 1; i >= 0; --i) {
      s[static_cast<std::size_t>(i)] = bases[static_cast<std::size_t>(v % 4)];
      v /= 4;
    }
    return s;
  }
};

inline Vocab build_vocab(int k) {
  if (k < 1 || k > 10) throw std::invalid_argument("k must be in [1, 10]");
  Vocab v;
  v.k = k;
  TokenId n = 1;
  for (int i = 0; i < k; ++i) n *= 4;
  v.size = n + Vocab::kDnaOffset;
  return v;
}

/// Aligned token channels for one window. `ideas_ids` is empty in DNA-only
/// mode and the aux channels are empty unless auxiliary features are enabled;
/// position i of every populated channel describes the same bp span
/// [i*stride, i*stride + k).
struct TokenizedPair {
  std::vector<TokenId> dna_ids;
  std::vector<TokenId> ideas_ids;
  std::vector<std::uint8_t> attention_mask;
  std::vector<double> dnase;
  std::vector<double> mappability;

  bool has_ideas() const { return !ideas_ids.empty(); }
  bool has_aux() const { return !dnase.empty(); }
  int real_tokens() const {
    int n = 0;
    for (auto m : attention_mask) n += m;
    return n;
  }
};

inline std::pair<std::vector<TokenId>, std::vector<std::uint8_t>> tokenize_dna(
    std::string_view seq, const TokenizerConfig& cfg, const Vocab& vocab) {
  cfg.validate();
  if (static_cast<std::int64_t>(seq.size()) < cfg.k)
    throw std::invalid_argument("sequence shorter than k");

  int n = cfg.real_tokens(static_cast<std::int64_t>(seq.size()));
  if (n > cfg.l_input) n = cfg.l_input;

  std::vector<TokenId> ids(static_cast<std::size_t>(cfg.l_input), Vocab::kPad);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(cfg.l_input), 0);
  for (int i = 0; i < n; ++i) {
    ids[static_cast<std::size_t>(i)] =
        vocab.encode(seq.substr(static_cast<std::size_t>(i) * cfg.stride,
                                static_cast<std::size_t>(cfg.k)));
    mask[static_cast<std::size_t>(i)] = 1;
  }
  return {std::move(ids), std::move(mask)};
}

/// Modal state over each token's k-bp span; ties go to the smallest state id.
inline std::vector<TokenId> pool_ideas(const std::vector<std::uint8_t>& states_per_bp,
                                       const TokenizerConfig& cfg) {
  int n = cfg.real_tokens(static_cast<std::int64_t>(states_per_bp.size()));
  if (n > cfg.l_input) n = cfg.l_input;

  std::vector<TokenId> out(static_cast<std::size_t>(cfg.l_input), 0);
  std::array<int, kIdeasStates> counts{};
  for (int i = 0; i < n; ++i) {
    counts.fill(0);
    const std::size_t base = static_cast<std::size_t>(i) * cfg.stride;
    for (int j = 0; j < cfg.k; ++j) ++counts[states_per_bp[base + static_cast<std::size_t>(j)]];
    int best = 0;
    for (int s = 1; s < kIdeasStates; ++s)
      if (counts[s] > counts[best]) best = s;
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

enum class PoolMode { Max, Min };

/// Per-token extremum over the token's span: max for DNase peaks, min so any
/// low-uniqueness bp drags its mappability token down.
inline std::vector<double> pool_auxiliary(const std::vector<double>& signal_per_bp,
                                          const TokenizerConfig& cfg, PoolMode mode) {
  int n = cfg.real_tokens(static_cast<std::int64_t>(signal_per_bp.size()));
  if (n > cfg.l_input) n = cfg.l_input;

  std::vector<double> out(static_cast<std::size_t>(cfg.l_input), 0.0);
  for (int i = 0; i < n; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * cfg.stride;
    double v = signal_per_bp[base];
    for (int j = 1; j < cfg.k; ++j) {
      const double x = signal_per_bp[base + static_cast<std::size_t>(j)];
      v = (mode == PoolMode::Max) ? std::max(v, x) : std::min(v, x);
    }
    out[static_cast<std::size_t>(i)] = v;
  }
  return out;
}

inline TokenizedPair tokenize_window(const SampleWindow& w, const TokenizerConfig& cfg,
                                     const Vocab& vocab, bool with_aux, bool with_ideas) {
  if (w.dna.size() != static_cast<std::size_t>(kWindowLen) ||
      w.ideas_states.size() != w.dna.size() || w.dnase.size() != w.dna.size() ||
      w.mappability.size() != w.dna.size())
    throw std::invalid_argument("window channels must all have length 1000");

  TokenizedPair pair;
  auto [ids, mask] = tokenize_dna(w.dna, cfg, vocab);
  pair.dna_ids = std::move(ids);
  pair.attention_mask = std::move(mask);
  if (with_ideas) pair.ideas_ids = pool_ideas(w.ideas_states, cfg);
  if (with_aux) {
    pair.dnase = pool_auxiliary(w.dnase, cfg, PoolMode::Max);
    pair.mappability = pool_auxiliary(w.mappability, cfg, PoolMode::Min);
  }
  return pair;
}

}  // namespace ebert
