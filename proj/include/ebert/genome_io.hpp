#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "ebert/text_io.hpp"

namespace ebert {

constexpr std::int64_t kIdeasResolution = 200;  // bp per epigenetic-state bin
constexpr int kIdeasStates = 36;                // valid state ids are [0, 36)
constexpr std::int64_t kBinWidth = 200;         // labeled-bin width, bp
constexpr std::int64_t kBinStride = 50;         // labeled-bin sliding stride, bp
constexpr std::int64_t kWindowFlank = 400;      // bp added on each side of a bin
constexpr std::int64_t kWindowLen = kBinWidth + 2 * kWindowFlank;  // 1000

/// Named chromosomes of uppercase bases over {A,C,G,T,N}.
struct GenomeAssembly {
  std::map<std::string, std::string> chromosomes;

  bool has(const std::string& name) const { return chromosomes.count(name) != 0; }
  const std::string& at(const std::string& name) const { return chromosomes.at(name); }
};

/// Per-cell-type epigenetic state ids, one per 200bp bin.
struct IdeasTrack {
  std::string cell_type;
  std::int64_t resolution = kIdeasResolution;
  std::map<std::string, std::vector<std::uint8_t>> segments;

  bool has(const std::string& chrom) const { return segments.count(chrom) != 0; }

  /// State at a base-pair position; bins past the parsed coverage read as 0.
  std::uint8_t state_at(const std::string& chrom, std::int64_t bp) const {
    const auto& seg = segments.at(chrom);
    const std::size_t bin = static_cast<std::size_t>(bp / resolution);
    return bin < seg.size() ? seg[bin] : 0;
  }
};

/// Sparse real-valued coverage; positions outside any interval read as 0.
struct SignalTrack {
  struct Interval {
    std::int64_t start;
    std::int64_t end;  // half-open
    double value;
  };

  std::string name;
  std::map<std::string, std::vector<Interval>> intervals;

  bool has(const std::string& chrom) const { return intervals.count(chrom) != 0; }

  double value_at(const std::string& chrom, std::int64_t bp) const {
    auto it = intervals.find(chrom);
    if (it == intervals.end()) return 0.0;
    const auto& v = it->second;
    auto up = std::upper_bound(v.begin(), v.end(), bp,
                               [](std::int64_t p, const Interval& i) { return p < i.start; });
    if (up == v.begin()) return 0.0;
    --up;
    return bp < up->end ? up->value : 0.0;
  }

  /// Densify [start, start+n) into out[0..n); out-of-coverage positions get 0.
  void fill(const std::string& chrom, std::int64_t start, std::vector<double>& out,
            std::size_t offset, std::size_t n) const {
    for (std::size_t i = 0; i < n; ++i) out[offset + i] = 0.0;
    auto it = intervals.find(chrom);
    if (it == intervals.end()) return;
    const auto& v = it->second;
    const std::int64_t end = start + static_cast<std::int64_t>(n);
    auto first = std::lower_bound(v.begin(), v.end(), start,
                                  [](const Interval& i, std::int64_t p) { return i.end <= p; });
    for (; first != v.end() && first->start < end; ++first) {
      const std::int64_t lo = std::max(first->start, start);
      const std::int64_t hi = std::min(first->end, end);
      for (std::int64_t p = lo; p < hi; ++p)
        out[offset + static_cast<std::size_t>(p - start)] = first->value;
    }
  }
};

enum class BinLabel : std::uint8_t { Unbound = 0, Bound = 1, Ambiguous = 2 };

/// One 200bp bin of the ENCODE-DREAM labeling grid.
struct LabeledBin {
  std::string chromosome;
  std::int64_t start = 0;
  std::int64_t end = 0;  // start + 200
  BinLabel label = BinLabel::Unbound;
};

/// A labeled bin expanded by 400bp on each side, with all per-bp channels
/// materialized to exactly 1000 entries (chromosome-edge overhang is padded).
struct SampleWindow {
  std::string chromosome;
  std::int64_t window_start = 0;  // may be negative before clipping
  std::int64_t window_end = 0;
  LabeledBin center_bin;
  std::string dna;                     // length 1000, {A,C,G,T,N}
  std::vector<std::uint8_t> ideas_states;  // per bp
  std::vector<double> dnase;               // per bp
  std::vector<double> mappability;         // per bp
};

// ---------------------------------------------------------------------------
// FASTA

inline GenomeAssembly read_fasta(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError(path, -1, "file is empty");

  GenomeAssembly g;
  std::string current;
  bool saw_any = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    const std::int64_t lineno = static_cast<std::int64_t>(i) + 1;
    if (line.empty()) continue;
    if (line[0] == '>') {
      // header: name is the first whitespace-delimited token
      std::string name = line.substr(1, line.find_first_of(" \t") - 1);
      if (name.empty()) throw ParseError(path, lineno, "empty FASTA header name");
      if (g.has(name)) throw ParseError(path, lineno, "duplicate chromosome '" + name + "'");
      g.chromosomes[name];
      current = name;
      saw_any = true;
      continue;
    }
    if (!saw_any) throw ParseError(path, lineno, "sequence line before any '>' header");
    std::string& seq = g.chromosomes[current];
    for (char c : line) {
      if (!std::isalpha(static_cast<unsigned char>(c)))
        throw ParseError(path, lineno, std::string("invalid sequence character '") + c + "'");
      const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      // IUPAC ambiguity codes collapse to the single unknown base
      seq.push_back((u == 'A' || u == 'C' || u == 'G' || u == 'T') ? u : 'N');
    }
  }
  if (g.chromosomes.empty()) throw ParseError(path, -1, "file is empty");
  return g;
}

inline void write_fasta(std::ostream& os, const GenomeAssembly& g, std::size_t width = 60) {
  for (const auto& [name, seq] : g.chromosomes) {
    os << '>' << name << '\n';
    for (std::size_t i = 0; i < seq.size(); i += width)
      os << std::string_view(seq).substr(i, width) << '\n';
    if (seq.empty()) os << '\n';
  }
}

// ---------------------------------------------------------------------------
// IDEAS segmentation: "chrom  start  end  state", dense 200bp tiling from 0.

inline IdeasTrack read_ideas_segmentation(const std::string& path, const std::string& cell_type) {
  const auto lines = read_lines(path);
  IdeasTrack track;
  track.cell_type = cell_type;

  // end of the previous interval per chromosome; -1 marks "closed" (partial last bin)
  std::map<std::string, std::int64_t> cursor;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::int64_t lineno = static_cast<std::int64_t>(i) + 1;
    if (lines[i].empty() || lines[i][0] == '#') continue;
    const auto f = detail::split_fields(lines[i]);
    if (f.size() != 4) throw ParseError(path, lineno, "expected 4 fields: chrom start end state");

    std::int64_t start, end, state;
    if (!detail::parse_i64(f[1], start) || !detail::parse_i64(f[2], end) ||
        !detail::parse_i64(f[3], state))
      throw ParseError(path, lineno, "malformed numeric field");
    const std::string chrom(f[0]);

    if (state < 0 || state >= kIdeasStates)
      throw ParseError(path, lineno, "state id " + std::to_string(state) + " out of range [0, 36)");
    if (start < 0 || end <= start) throw ParseError(path, lineno, "bad interval coordinates");
    if (start % kIdeasResolution != 0)
      throw ParseError(path, lineno, "interval start not a multiple of 200");

    auto [it, fresh] = cursor.emplace(chrom, 0);
    if (!fresh) {
      if (it->second < 0)
        throw ParseError(path, lineno, "interval after a partial final bin");
      if (start < it->second) throw ParseError(path, lineno, "unsorted or overlapping intervals");
      if (start > it->second) throw ParseError(path, lineno, "gap in coverage");
    } else if (start != 0) {
      throw ParseError(path, lineno, "coverage must start at 0");
    }

    auto& seg = track.segments[chrom];
    const std::int64_t bins = (end - start + kIdeasResolution - 1) / kIdeasResolution;
    seg.insert(seg.end(), static_cast<std::size_t>(bins), static_cast<std::uint8_t>(state));
    it->second = (end % kIdeasResolution == 0) ? end : -1;
  }
  return track;
}

// ---------------------------------------------------------------------------
// Signal tracks: bedGraph-style "chrom start end value".

inline SignalTrack read_signal_track(const std::string& path) {
  const auto lines = read_lines(path);
  SignalTrack track;
  track.name = path;

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::int64_t lineno = static_cast<std::int64_t>(i) + 1;
    if (lines[i].empty() || lines[i][0] == '#') continue;
    const auto f = detail::split_fields(lines[i]);
    if (f.size() != 4) throw ParseError(path, lineno, "expected 4 fields: chrom start end value");
    std::int64_t start, end;
    double value;
    if (!detail::parse_i64(f[1], start) || !detail::parse_i64(f[2], end) ||
        !detail::parse_f64(f[3], value))
      throw ParseError(path, lineno, "malformed numeric field");
    if (start < 0 || end < 0) throw ParseError(path, lineno, "negative coordinates");
    if (start >= end) throw ParseError(path, lineno, "interval start must precede end");
    track.intervals[std::string(f[0])].push_back({start, end, value});
  }

  for (auto& [chrom, v] : track.intervals) {
    std::stable_sort(v.begin(), v.end(),
                     [](const auto& a, const auto& b) { return a.start < b.start; });
    for (std::size_t i = 1; i < v.size(); ++i)
      if (v[i].start < v[i - 1].end)
        throw ParseError(path, -1, "overlapping intervals on " + chrom + " at " +
                                       std::to_string(v[i].start));
  }
  return track;
}

// ---------------------------------------------------------------------------
// Binding labels: header row, then "chrom start end code" with code B/U/A.

inline std::vector<LabeledBin> read_labels(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError(path, -1, "file is empty");

  std::vector<LabeledBin> bins;
  for (std::size_t i = 1; i < lines.size(); ++i) {  // line 0 is the header
    const std::int64_t lineno = static_cast<std::int64_t>(i) + 1;
    if (lines[i].empty()) continue;
    const auto f = detail::split_fields(lines[i]);
    if (f.size() != 4) throw ParseError(path, lineno, "expected 4 fields: chr start stop code");
    std::int64_t start, end;
    if (!detail::parse_i64(f[1], start) || !detail::parse_i64(f[2], end))
      throw ParseError(path, lineno, "malformed coordinate");
    if (end - start != kBinWidth)
      throw ParseError(path, lineno, "bin width must be 200, got " + std::to_string(end - start));
    if (start % kBinStride != 0)
      throw ParseError(path, lineno, "bin start not on the 50bp sliding grid");

    BinLabel label;
    if (f[3] == "B")
      label = BinLabel::Bound;
    else if (f[3] == "U")
      label = BinLabel::Unbound;
    else if (f[3] == "A")
      label = BinLabel::Ambiguous;
    else
      throw ParseError(path, lineno, "unknown label code '" + std::string(f[3]) + "'");
    bins.push_back({std::string(f[0]), start, end, label});
  }
  return bins;
}

// ---------------------------------------------------------------------------
// Windowing

/// Expand a labeled bin by 400bp on each side. Overhang past either
/// chromosome end is kept in the output arrays as pad values (base N,
/// state 0, signal 0) so every channel has exactly 1000 entries.
inline SampleWindow make_window(const LabeledBin& bin, const GenomeAssembly& genome,
                                const IdeasTrack& ideas, const SignalTrack& dnase,
                                const SignalTrack& mapp) {
  const std::string& chrom = bin.chromosome;
  if (!genome.has(chrom)) throw std::runtime_error("chromosome '" + chrom + "' absent from genome");
  if (!ideas.has(chrom)) throw std::runtime_error("chromosome '" + chrom + "' absent from IDEAS track");
  if (!dnase.has(chrom)) throw std::runtime_error("chromosome '" + chrom + "' absent from DNase track");
  if (!mapp.has(chrom)) throw std::runtime_error("chromosome '" + chrom + "' absent from mappability track");

  const std::string& seq = genome.at(chrom);
  const std::int64_t chrom_len = static_cast<std::int64_t>(seq.size());

  SampleWindow w;
  w.chromosome = chrom;
  w.center_bin = bin;
  w.window_start = bin.start - kWindowFlank;
  w.window_end = bin.end + kWindowFlank;

  const std::int64_t lo = std::max<std::int64_t>(w.window_start, 0);
  const std::int64_t hi = std::min(w.window_end, chrom_len);
  const std::size_t left_pad = static_cast<std::size_t>(lo - w.window_start);
  const std::size_t body = static_cast<std::size_t>(std::max<std::int64_t>(hi - lo, 0));

  w.dna.assign(kWindowLen, 'N');
  w.ideas_states.assign(kWindowLen, 0);
  w.dnase.assign(kWindowLen, 0.0);
  w.mappability.assign(kWindowLen, 0.0);

  for (std::size_t i = 0; i < body; ++i) {
    const std::int64_t p = lo + static_cast<std::int64_t>(i);
    w.dna[left_pad + i] = seq[static_cast<std::size_t>(p)];
    w.ideas_states[left_pad + i] = ideas.state_at(chrom, p);
  }
  dnase.fill(chrom, lo, w.dnase, left_pad, body);
  mapp.fill(chrom, lo, w.mappability, left_pad, body);
  return w;
}

// ---------------------------------------------------------------------------
// Chromosome splits

enum class SplitStage { Pretrain, Finetune };

struct ChromosomeSplit {
  std::vector<std::string> train;
  std::vector<std::string> eval;
};

inline ChromosomeSplit chromosome_split(SplitStage stage, const std::vector<std::string>& names) {
  static const std::set<std::string> pretrain_eval = {"chr8", "chr21"};
  static const std::set<std::string> finetune_eval = {"chr1", "chr8", "chr21"};
  static const std::set<std::string> never = {"chrY", "chrM"};

  ChromosomeSplit split;
  for (const auto& name : names) {
    if (never.count(name)) continue;
    if (stage == SplitStage::Pretrain) {
      (pretrain_eval.count(name) ? split.eval : split.train).push_back(name);
    } else {
      if (finetune_eval.count(name)) {
        split.eval.push_back(name);
      } else if (name.size() > 3 && name.rfind("chr", 0) == 0) {
        // finetune training set is the fixed list chr2-7, chr9-20, chr22, chrX
        const std::string tail = name.substr(3);
        bool ok = tail == "X" || tail == "22";
        if (!ok) {
          std::int64_t n;
          ok = detail::parse_i64(tail, n) && ((n >= 2 && n <= 7) || (n >= 9 && n <= 20));
        }
        if (ok) split.train.push_back(name);
      }
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.eval.begin(), split.eval.end());
  return split;
}

}  // namespace ebert
