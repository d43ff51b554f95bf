#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ebert/rand.hpp"
#include "ebert/tokenizer.hpp"

namespace ebert {

constexpr TokenId kIgnore = -1;          // label value for untargeted positions
constexpr TokenId kIdeasMaskState = 36;  // sentinel; state vocabulary is 37 with it
constexpr TokenId kIdeasVocab = 37;

enum class MaskAction : std::uint8_t { Mask, Random, Keep };

struct MaskPlan {
  std::vector<int> dna_positions;        // sorted token indices
  std::vector<MaskAction> actions;       // parallel to dna_positions
  int ideas_anchor = -1;                 // member of dna_positions
  int ideas_flank = 0;                   // tokens masked on each side of the anchor
};

/// Model inputs plus prediction targets; IGNORE marks untargeted positions.
struct MaskedExample {
  std::vector<TokenId> input_dna;
  std::vector<TokenId> input_ideas;  // empty in DNA-only mode
  std::vector<TokenId> dna_labels;
  std::vector<TokenId> ideas_labels;
  std::vector<std::uint8_t> attention_mask;
};

/// Number of positions to mask: max(1, round-half-up(rate * real_tokens)).
/// The epsilon absorbs binary representation error in products like 0.15*150.
inline int mask_count(double rate, int real_tokens) {
  const int n = static_cast<int>(std::floor(rate * real_tokens + 0.5 + 1e-9));
  return std::max(1, n);
}

inline MaskPlan sample_mask_plan(const TokenizedPair& pair, double rate, int k, Rng& rng) {
  if (rate <= 0.0 || rate >= 1.0) throw std::invalid_argument("mask rate must be in (0, 1)");
  if (k < 1) throw std::invalid_argument("k must be positive");

  std::vector<int> maskable;
  int real = 0;
  for (std::size_t i = 0; i < pair.dna_ids.size(); ++i) {
    if (!pair.attention_mask[i]) continue;
    ++real;
    if (pair.dna_ids[i] != Vocab::kUnk) maskable.push_back(static_cast<int>(i));
  }
  if (maskable.empty()) throw std::invalid_argument("no maskable positions");

  int n = std::min(mask_count(rate, real), static_cast<int>(maskable.size()));

  // partial Fisher-Yates: the first n entries become the sample
  for (int i = 0; i < n; ++i) {
    const std::size_t j =
        static_cast<std::size_t>(i) + rng.uniform_int(maskable.size() - static_cast<std::size_t>(i));
    std::swap(maskable[static_cast<std::size_t>(i)], maskable[j]);
  }
  MaskPlan plan;
  plan.dna_positions.assign(maskable.begin(), maskable.begin() + n);
  std::sort(plan.dna_positions.begin(), plan.dna_positions.end());

  plan.actions.resize(static_cast<std::size_t>(n));
  for (auto& a : plan.actions) {
    const double u = rng.uniform();
    a = u < 0.8 ? MaskAction::Mask : (u < 0.9 ? MaskAction::Random : MaskAction::Keep);
  }
  plan.ideas_anchor = plan.dna_positions[rng.uniform_int(static_cast<std::uint64_t>(n))];
  // 100/k is fractional for most k; floor keeps the span within one state width
  plan.ideas_flank = 100 / k;
  return plan;
}

inline MaskedExample apply_paired_masking(const TokenizedPair& pair, const MaskPlan& plan,
                                          const Vocab& vocab, Rng& rng) {
  MaskedExample ex;
  ex.input_dna = pair.dna_ids;
  ex.input_ideas = pair.ideas_ids;
  ex.attention_mask = pair.attention_mask;
  ex.dna_labels.assign(pair.dna_ids.size(), kIgnore);
  ex.ideas_labels.assign(pair.has_ideas() ? pair.ideas_ids.size() : 0, kIgnore);

  for (std::size_t i = 0; i < plan.dna_positions.size(); ++i) {
    const auto pos = static_cast<std::size_t>(plan.dna_positions[i]);
    ex.dna_labels[pos] = pair.dna_ids[pos];  // original token, incl. RANDOM/KEEP
    switch (plan.actions[i]) {
      case MaskAction::Mask:
        ex.input_dna[pos] = Vocab::kMask;
        break;
      case MaskAction::Random:
        ex.input_dna[pos] = Vocab::kDnaOffset +
                            static_cast<TokenId>(rng.uniform_int(
                                static_cast<std::uint64_t>(vocab.dna_tokens())));
        break;
      case MaskAction::Keep:
        break;
    }
  }

  if (pair.has_ideas()) {
    const int real = pair.real_tokens();
    const int lo = std::max(plan.ideas_anchor - plan.ideas_flank, 0);
    const int hi = std::min(plan.ideas_anchor + plan.ideas_flank, real - 1);
    for (int i = lo; i <= hi; ++i) ex.input_ideas[static_cast<std::size_t>(i)] = kIdeasMaskState;
    // flanks are masked but not predicted; only the anchor carries a target
    ex.ideas_labels[static_cast<std::size_t>(plan.ideas_anchor)] =
        pair.ideas_ids[static_cast<std::size_t>(plan.ideas_anchor)];
  }
  return ex;
}

}  // namespace ebert
