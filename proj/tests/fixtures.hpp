// Shared test scaffolding: temp-dir management and synthetic genomic fixtures.
#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "ebert/genome_io.hpp"
#include "ebert/rand.hpp"
#include "ebert/tokenizer.hpp"
#include "ebert/training.hpp"

namespace fixtures {

class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    dir_ = std::filesystem::temp_directory_path() /
           ("ebert_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

private:
  std::filesystem::path dir_;
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

inline std::string random_dna(std::size_t len, ebert::Rng& rng) {
  static const char bases[] = "ACGT";
  std::string s(len, 'A');
  for (auto& c : s) c = bases[rng.uniform_int(4)];
  return s;
}

// one chromosome with matching full-coverage IDEAS tiling and simple tracks
struct SyntheticChrom {
  std::string fasta;
  std::string ideas;
  std::string dnase;
  std::string mapp;
};

inline SyntheticChrom synthetic_chrom(const std::string& name, std::int64_t len,
                                      ebert::Rng& rng) {
  SyntheticChrom s;
  s.fasta = ">" + name + "\n" + random_dna(static_cast<std::size_t>(len), rng) + "\n";
  for (std::int64_t p = 0; p < len; p += 200) {
    const std::int64_t end = std::min(p + 200, len);
    s.ideas += name + "\t" + std::to_string(p) + "\t" + std::to_string(end) + "\t" +
               std::to_string(rng.uniform_int(36)) + "\n";
  }
  for (std::int64_t p = 0; p < len; p += 500) {
    const std::int64_t end = std::min(p + 250, len);
    s.dnase += name + "\t" + std::to_string(p) + "\t" + std::to_string(end) + "\t" +
               std::to_string(rng.uniform() * 10.0) + "\n";
  }
  s.mapp = name + "\t0\t" + std::to_string(len) + "\t1.0\n";
  return s;
}

// --- synthetic desk-scale training data -------------------------------------

/// Window of exactly l_input tokens (no padding); positives carry a planted
/// motif at a token-aligned offset inside the center third of the window,
/// mirroring how a binding site sits inside the labeled center bin.
inline ebert::TokenizedPair random_window_pair(const ebert::TokenizerConfig& tok,
                                               const ebert::Vocab& vocab, ebert::Rng& rng,
                                               const std::string* motif, int state_lo = 0,
                                               int state_span = 36) {
  const std::size_t bp =
      static_cast<std::size_t>(tok.l_input - 1) * tok.stride + static_cast<std::size_t>(tok.k);
  std::string dna = random_dna(bp, rng);
  if (motif) {
    const int motif_tokens = static_cast<int>(motif->size()) / tok.k;
    const int lo = tok.l_input / 3;
    const int hi = std::min(2 * tok.l_input / 3, tok.l_input - motif_tokens);
    const int tpos =
        lo + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(std::max(1, hi - lo))));
    dna.replace(static_cast<std::size_t>(tpos) * tok.stride, motif->size(), *motif);
  }
  const auto state = static_cast<std::uint8_t>(
      state_lo + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(state_span))));
  std::vector<std::uint8_t> states(bp, state);
  std::vector<double> dnase(bp), mapp(bp);
  for (auto& x : dnase) x = rng.uniform();
  for (auto& x : mapp) x = 0.5 + 0.5 * rng.uniform();

  ebert::TokenizedPair p;
  auto [ids, mask] = ebert::tokenize_dna(dna, tok, vocab);
  p.dna_ids = std::move(ids);
  p.attention_mask = std::move(mask);
  p.ideas_ids = ebert::pool_ideas(states, tok);
  p.dnase = ebert::pool_auxiliary(dnase, tok, ebert::PoolMode::Max);
  p.mappability = ebert::pool_auxiliary(mapp, tok, ebert::PoolMode::Min);
  return p;
}

struct SyntheticTfOptions {
  ebert::TokenizerConfig tok{4, 4, 16};
  int train_pos = 60;
  int train_neg = 600;
  int eval_pos = 30;
  int eval_neg = 300;
  std::uint64_t seed = 5;
  std::string motif = "GATTACAGATTACAGA";
};

/// Motif-separable binding task. Bound windows carry the motif and draw
/// their epigenetic state from the low range, Unbound windows from the high
/// range; the ranges overlap so the state suggests the label without
/// deciding it.
inline ebert::FinetuneDataset motif_dataset(const SyntheticTfOptions& o) {
  const auto vocab = ebert::build_vocab(o.tok.k);
  ebert::FinetuneDataset data;
  ebert::Rng train_rng(o.seed);
  for (int i = 0; i < o.train_pos; ++i)
    data.train.push_back({random_window_pair(o.tok, vocab, train_rng, &o.motif, 0, 24), 1});
  for (int i = 0; i < o.train_neg; ++i)
    data.train.push_back({random_window_pair(o.tok, vocab, train_rng, nullptr, 12, 24), 0});
  ebert::Rng eval_rng(o.seed ^ 0xabcdef);
  for (int i = 0; i < o.eval_pos; ++i)
    data.eval.push_back({random_window_pair(o.tok, vocab, eval_rng, &o.motif, 0, 24), 1});
  for (int i = 0; i < o.eval_neg; ++i)
    data.eval.push_back({random_window_pair(o.tok, vocab, eval_rng, nullptr, 12, 24), 0});
  return data;
}

/// Random-window masked-LM corpus at the same geometry.
inline std::vector<ebert::TokenizedPair> mlm_corpus(const ebert::TokenizerConfig& tok,
                                                    int windows, std::uint64_t seed) {
  const auto vocab = ebert::build_vocab(tok.k);
  ebert::Rng rng(seed);
  std::vector<ebert::TokenizedPair> corpus;
  corpus.reserve(static_cast<std::size_t>(windows));
  for (int i = 0; i < windows; ++i)
    corpus.push_back(random_window_pair(tok, vocab, rng, nullptr));
  return corpus;
}

}  // namespace fixtures
