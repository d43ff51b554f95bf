#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ebert/metrics.hpp"
#include "ebert/text_io.hpp"

namespace ebert {

// Named aggregate results published for the benchmark tables shipped under
// data/. cmd_analyze recomputes each from the fixture and must reproduce the
// reference value to 4 decimal places.

struct BenchmarkTable {
  // dataset -> model -> metrics; models are DBERT, EBERT, EBERT+
  std::map<std::string, std::map<std::string, MetricReport>> cells;
  std::vector<std::string> datasets;  // in file order
};

struct RankTable {
  std::vector<std::string> models;
  std::vector<std::string> datasets;
  std::vector<std::vector<int>> ranks;  // [dataset][model]
};

struct Claim {
  std::string name;
  double reference = 0.0;  // value the analyzer must reproduce (4 dp)
  double computed = 0.0;
  bool pass = false;
};

struct AnalysisReport {
  std::vector<Claim> claims;
  std::vector<int> overall_ranks;            // computed, in table model order
  std::vector<int> reference_overall_ranks;  // published overall row
  bool ranks_pass = false;

  // open-convention extras, reported for visibility rather than checked
  std::map<std::string, double> variance_population;
  std::map<std::string, double> variance_sample;
  std::vector<std::string> rank_convention_notes;

  bool all_pass() const {
    if (!ranks_pass) return false;
    return std::all_of(claims.begin(), claims.end(), [](const Claim& c) { return c.pass; });
  }
};

// ---------------------------------------------------------------------------
// Fixture parsing

inline BenchmarkTable read_benchmark_table(const std::string& path) {
  const auto lines = read_lines(path);
  BenchmarkTable t;
  bool header_seen = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::int64_t lineno = static_cast<std::int64_t>(i) + 1;
    const std::string& line = lines[i];
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!header_seen) {
      if (f.size() != 6 || f[0] != "dataset" || f[1] != "model")
        throw ParseError(path, lineno, "expected header dataset,model,auprc,auroc,re10fdr,re50fdr");
      header_seen = true;
      continue;
    }
    if (f.size() != 6) throw ParseError(path, lineno, "expected 6 columns");
    MetricReport r;
    double vals[4];
    for (int c = 0; c < 4; ++c)
      if (!detail::parse_f64(f[static_cast<std::size_t>(c) + 2], vals[c]))
        throw ParseError(path, lineno, "malformed metric value");
    r.auprc = vals[0];
    r.auroc = vals[1];
    r.recall_at_10fdr = vals[2];
    r.recall_at_50fdr = vals[3];
    if (t.cells.find(f[0]) == t.cells.end()) t.datasets.push_back(f[0]);
    t.cells[f[0]][f[1]] = r;
  }
  if (t.datasets.size() != 13)
    throw ParseError(path, -1, "expected 13 datasets, found " + std::to_string(t.datasets.size()));
  for (const auto& d : t.datasets)
    for (const char* m : {"DBERT", "EBERT", "EBERT+"})
      if (t.cells.at(d).find(m) == t.cells.at(d).end())
        throw ParseError(path, -1, "dataset " + d + " is missing model " + m);
  return t;
}

inline RankTable read_rank_table(const std::string& path) {
  const auto lines = read_lines(path);
  RankTable t;
  bool header_seen = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::int64_t lineno = static_cast<std::int64_t>(i) + 1;
    const std::string& line = lines[i];
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!header_seen) {
      if (f.size() < 3 || f[0] != "dataset")
        throw ParseError(path, lineno, "expected header dataset,<model>,...");
      t.models.assign(f.begin() + 1, f.end());
      header_seen = true;
      continue;
    }
    if (f.size() != t.models.size() + 1) throw ParseError(path, lineno, "short rank row");
    std::vector<int> row;
    for (std::size_t c = 1; c < f.size(); ++c) {
      std::int64_t v;
      if (!detail::parse_i64(f[c], v) || v < 1) throw ParseError(path, lineno, "bad rank value");
      row.push_back(static_cast<int>(v));
    }
    t.datasets.push_back(f[0]);
    t.ranks.push_back(std::move(row));
  }
  if (t.datasets.size() != 13)
    throw ParseError(path, -1, "expected 13 datasets, found " + std::to_string(t.datasets.size()));
  return t;
}

// ---------------------------------------------------------------------------
// Aggregates

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline bool is_ctcf(const std::string& dataset) { return dataset.rfind("CTCF", 0) == 0; }

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v, bool sample) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - (sample ? 1 : 0));
}

}  // namespace detail

inline AnalysisReport analyze_tables(const BenchmarkTable& s1, const RankTable& t1) {
  AnalysisReport rep;

  auto auprc_of = [&](const std::string& dataset, const std::string& model) {
    return s1.cells.at(dataset).at(model).auprc;
  };
  auto collect = [&](const std::string& model) {
    std::vector<double> v;
    for (const auto& d : s1.datasets) v.push_back(auprc_of(d, model));
    return v;
  };

  auto add_claim = [&](const std::string& name, double reference, double computed) {
    Claim c{name, reference, computed, std::abs(computed - reference) < 5e-5};
    rep.claims.push_back(c);
  };

  add_claim("median_auprc ebert_plus", 0.5405, detail::median(collect("EBERT+")));
  add_claim("median_auprc ebert", 0.4061, detail::median(collect("EBERT")));
  add_claim("median_auprc dbert", 0.1495, detail::median(collect("DBERT")));

  std::vector<double> ctcf_aux_delta, ctcf_ideas_delta, other_aux_delta, other_ideas_delta;
  std::vector<double> all_aux_delta;
  for (const auto& d : s1.datasets) {
    const double aux = auprc_of(d, "EBERT+") - auprc_of(d, "EBERT");
    const double ideas = auprc_of(d, "EBERT") - auprc_of(d, "DBERT");
    all_aux_delta.push_back(aux);
    (detail::is_ctcf(d) ? ctcf_aux_delta : other_aux_delta).push_back(aux);
    (detail::is_ctcf(d) ? ctcf_ideas_delta : other_ideas_delta).push_back(ideas);
  }
  add_claim("ctcf_mean_auprc_gain ebert_plus_over_ebert", 0.2154, detail::mean(ctcf_aux_delta));
  add_claim("ctcf_mean_auprc_gain ebert_over_dbert", 0.0531, detail::mean(ctcf_ideas_delta));
  add_claim("non_ctcf_mean_auprc_gain ebert_over_dbert", 0.2469, detail::mean(other_ideas_delta));
  add_claim("non_ctcf_mean_auprc_gain ebert_plus_over_ebert", 0.1164, detail::mean(other_aux_delta));
  add_claim("auxiliary_gain_min", 0.0334, *std::min_element(all_aux_delta.begin(), all_aux_delta.end()));
  add_claim("auxiliary_gain_max", 0.2201, *std::max_element(all_aux_delta.begin(), all_aux_delta.end()));
  add_claim("auxiliary_gain_median", 0.1375, detail::median(all_aux_delta));

  // overall leaderboard row from mean per-dataset ranks
  rep.reference_overall_ranks = {3, 1, 2, 4, 5};
  const auto ranking = rank_models(t1.models, t1.ranks);
  rep.overall_ranks.resize(t1.models.size());
  for (const auto& r : ranking) {
    for (std::size_t m = 0; m < t1.models.size(); ++m)
      if (t1.models[m] == r.model) rep.overall_ranks[m] = r.overall_rank;
  }
  rep.ranks_pass = rep.overall_ranks == rep.reference_overall_ranks;

  // reported both ways because the published wording is ambiguous about which
  // quantity the challenge averaged
  for (const char* model : {"EBERT", "EBERT+"}) {
    rep.variance_population[model] = detail::variance(collect(model), false);
    rep.variance_sample[model] = detail::variance(collect(model), true);
  }
  for (const auto& d : s1.datasets) {
    const auto by_rank = rank_dataset(s1.cells.at(d));
    std::vector<double> mean_metric;
    std::vector<std::string> names;
    for (const auto& [name, r] : s1.cells.at(d)) {
      names.push_back(name);
      mean_metric.push_back(0.25 * (r.auprc + r.auroc + r.recall_at_10fdr + r.recall_at_50fdr));
    }
    const auto by_value = rank_descending(mean_metric);
    std::ostringstream os;
    os << d << ": rank-average (";
    for (std::size_t i = 0; i < names.size(); ++i)
      os << names[i] << "=" << by_rank.at(names[i]) << (i + 1 < names.size() ? " " : "");
    os << ") vs value-average (";
    for (std::size_t i = 0; i < names.size(); ++i)
      os << names[i] << "=" << by_value[i] << (i + 1 < names.size() ? " " : "");
    os << ")";
    rep.rank_convention_notes.push_back(os.str());
  }
  return rep;
}

inline AnalysisReport analyze_tables(const std::string& table_s1_path,
                                     const std::string& table_1_path) {
  return analyze_tables(read_benchmark_table(table_s1_path), read_rank_table(table_1_path));
}

// ---------------------------------------------------------------------------
// Report rendering

inline void write_report_text(std::ostream& os, const AnalysisReport& rep,
                              const RankTable& t1) {
  os << std::fixed << std::setprecision(4);
  for (const auto& c : rep.claims)
    os << (c.pass ? "PASS " : "FAIL ") << c.name << ": computed " << c.computed
       << ", reference " << c.reference << "\n";
  os << (rep.ranks_pass ? "PASS " : "FAIL ") << "overall_leaderboard_row:";
  for (std::size_t m = 0; m < t1.models.size(); ++m)
    os << " " << t1.models[m] << "=" << rep.overall_ranks[m]
       << "(ref " << rep.reference_overall_ranks[m] << ")";
  os << "\n";
  os << "auprc variance across cell types (population | sample):\n";
  for (const auto& [model, v] : rep.variance_population)
    os << "  " << model << ": " << std::setprecision(6) << v << " | "
       << rep.variance_sample.at(model) << std::setprecision(4) << "\n";
  os << "per-dataset ranking under both averaging conventions:\n";
  for (const auto& note : rep.rank_convention_notes) os << "  " << note << "\n";
  os << (rep.all_pass() ? "ALL CLAIMS PASS" : "CLAIM FAILURES PRESENT") << "\n";
}

inline void write_report_csv(std::ostream& os, const AnalysisReport& rep) {
  os << "claim,paper_value,computed_value,pass\n" << std::fixed << std::setprecision(4);
  for (const auto& c : rep.claims)
    os << c.name << "," << c.reference << "," << c.computed << ","
       << (c.pass ? "pass" : "fail") << "\n";
  os << "overall_leaderboard_row,";
  for (std::size_t i = 0; i < rep.reference_overall_ranks.size(); ++i)
    os << rep.reference_overall_ranks[i] << (i + 1 < rep.reference_overall_ranks.size() ? ";" : "");
  os << ",";
  for (std::size_t i = 0; i < rep.overall_ranks.size(); ++i)
    os << rep.overall_ranks[i] << (i + 1 < rep.overall_ranks.size() ? ";" : "");
  os << "," << (rep.ranks_pass ? "pass" : "fail") << "\n";
}

}  // namespace ebert
