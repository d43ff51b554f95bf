#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ebert {

/// Scores and binary labels for one evaluation set, index-aligned.
struct PredictionSet {
  std::vector<double> scores;
  std::vector<int> labels;  // 0 or 1

  int positives() const {
    return static_cast<int>(std::count(labels.begin(), labels.end(), 1));
  }
  int negatives() const { return static_cast<int>(labels.size()) - positives(); }

  void validate() const {
    if (scores.size() != labels.size())
      throw std::invalid_argument("scores and labels must be aligned");
    if (scores.empty()) throw std::invalid_argument("empty prediction set");
  }
};

struct MetricReport {
  double auprc = 0.0;
  double auroc = 0.0;
  double recall_at_10fdr = 0.0;
  double recall_at_50fdr = 0.0;
};

namespace detail {

// (tp, fp) totals at each threshold between distinct score values, in
// descending score order; tied scores enter as one group.
inline std::vector<std::pair<int, int>> confusion_steps(const PredictionSet& p) {
  std::vector<std::size_t> order(p.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return p.scores[a] > p.scores[b]; });

  std::vector<std::pair<int, int>> steps;
  int tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = p.scores[order[i]];
    while (i < order.size() && p.scores[order[i]] == s) {
      (p.labels[order[i]] == 1 ? tp : fp)++;
      ++i;
    }
    steps.emplace_back(tp, fp);
  }
  return steps;
}

}  // namespace detail

/// Average precision with step interpolation over descending unique-score
/// thresholds: sum of (R_n - R_{n-1}) * P_n with tied scores grouped.
inline double auprc(const PredictionSet& p) {
  p.validate();
  const int pos = p.positives();
  if (pos == 0) throw std::invalid_argument("AUPRC undefined without positives");

  double ap = 0.0, prev_recall = 0.0;
  for (const auto& [tp, fp] : detail::confusion_steps(p)) {
    const double precision = static_cast<double>(tp) / (tp + fp);
    const double recall = static_cast<double>(tp) / pos;
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

/// Mann-Whitney statistic via rank sums: P(score_pos > score_neg) plus half
/// the ties.
inline double auroc(const PredictionSet& p) {
  p.validate();
  const int pos = p.positives();
  const int neg = p.negatives();
  if (pos == 0 || neg == 0)
    throw std::invalid_argument("AUROC undefined for a degenerate class");

  std::vector<std::size_t> order(p.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return p.scores[a] < p.scores[b]; });

  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && p.scores[order[j]] == p.scores[order[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t t = i; t < j; ++t)
      if (p.labels[order[t]] == 1) rank_sum_pos += avg_rank;
    i = j;
  }
  const double u = rank_sum_pos - 0.5 * pos * (pos + 1.0);
  return u / (static_cast<double>(pos) * neg);
}

/// Maximum recall over thresholds whose precision is at least 1 - fdr; 0 when
/// no threshold qualifies.
inline double recall_at_fdr(const PredictionSet& p, double fdr) {
  p.validate();
  if (fdr <= 0.0 || fdr >= 1.0) throw std::invalid_argument("fdr must be in (0, 1)");
  const int pos = p.positives();
  if (pos == 0) throw std::invalid_argument("recall undefined without positives");

  const double min_precision = 1.0 - fdr;
  double best = 0.0;
  for (const auto& [tp, fp] : detail::confusion_steps(p)) {
    const double precision = static_cast<double>(tp) / (tp + fp);
    if (precision >= min_precision) best = std::max(best, static_cast<double>(tp) / pos);
  }
  return best;
}

inline MetricReport evaluate_predictions(const PredictionSet& p) {
  MetricReport r;
  r.auprc = auprc(p);
  r.auroc = auroc(p);
  r.recall_at_10fdr = recall_at_fdr(p, 0.10);
  r.recall_at_50fdr = recall_at_fdr(p, 0.50);
  return r;
}

// ---------------------------------------------------------------------------
// Rank aggregation

/// Competition ("min") ranks for values where higher is better.
inline std::vector<int> rank_descending(const std::vector<double>& values) {
  std::vector<int> ranks(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    int r = 1;
    for (std::size_t j = 0; j < values.size(); ++j)
      if (values[j] > values[i]) ++r;
    ranks[i] = r;
  }
  return ranks;
}

/// Ranks for values where lower is better (used on mean ranks).
inline std::vector<int> rank_ascending(const std::vector<double>& values) {
  std::vector<int> ranks(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    int r = 1;
    for (std::size_t j = 0; j < values.size(); ++j)
      if (values[j] < values[i]) ++r;
    ranks[i] = r;
  }
  return ranks;
}

struct ModelRanking {
  std::string model;
  double mean_rank = 0.0;
  int overall_rank = 0;
  bool tied = false;
};

/// Leaderboard aggregation: mean per-dataset rank per model, ordered
/// ascending. Exact mean-rank ties share the minimum rank and are flagged;
/// listing order breaks ties by name.
inline std::vector<ModelRanking> rank_models(
    const std::vector<std::string>& models,
    const std::vector<std::vector<int>>& per_dataset_ranks) {
  if (models.empty()) throw std::invalid_argument("no models to rank");
  std::vector<double> means(models.size(), 0.0);
  for (const auto& row : per_dataset_ranks) {
    if (row.size() != models.size())
      throw std::invalid_argument("rank matrix has a short row");
    for (std::size_t m = 0; m < models.size(); ++m) {
      if (row[m] < 1) throw std::invalid_argument("ranks must be >= 1");
      means[m] += row[m];
    }
  }
  if (per_dataset_ranks.empty()) throw std::invalid_argument("no datasets to rank over");
  for (auto& v : means) v /= static_cast<double>(per_dataset_ranks.size());

  const auto overall = rank_ascending(means);
  std::vector<ModelRanking> out(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    out[m] = {models[m], means[m], overall[m], false};
    for (std::size_t j = 0; j < models.size(); ++j)
      if (j != m && means[j] == means[m]) out[m].tied = true;
  }
  std::sort(out.begin(), out.end(), [](const ModelRanking& a, const ModelRanking& b) {
    if (a.mean_rank != b.mean_rank) return a.mean_rank < b.mean_rank;
    return a.model < b.model;
  });
  return out;
}

/// Within one dataset: rank each of the four metrics across models (higher is
/// better), average the four ranks, then rank those averages ascending.
inline std::map<std::string, int> rank_dataset(const std::map<std::string, MetricReport>& reports) {
  if (reports.size() < 2) throw std::invalid_argument("need at least two models to rank");

  std::vector<std::string> names;
  std::vector<std::vector<double>> metric_cols(4);
  for (const auto& [name, r] : reports) {
    names.push_back(name);
    metric_cols[0].push_back(r.auprc);
    metric_cols[1].push_back(r.auroc);
    metric_cols[2].push_back(r.recall_at_10fdr);
    metric_cols[3].push_back(r.recall_at_50fdr);
  }

  std::vector<double> mean_rank(names.size(), 0.0);
  for (const auto& col : metric_cols) {
    const auto ranks = rank_descending(col);
    for (std::size_t i = 0; i < names.size(); ++i) mean_rank[i] += ranks[i];
  }
  for (auto& v : mean_rank) v /= 4.0;

  const auto final_ranks = rank_ascending(mean_rank);
  std::map<std::string, int> out;
  for (std::size_t i = 0; i < names.size(); ++i) out[names[i]] = final_ranks[i];
  return out;
}

}  // namespace ebert
