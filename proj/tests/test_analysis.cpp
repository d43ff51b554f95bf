#include "ebert/analysis.hpp"

#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"

using namespace ebert;

namespace {
const std::string kS1 = std::string(EBERT_DATA_DIR) + "/table_s1.csv";
const std::string kT1 = std::string(EBERT_DATA_DIR) + "/table_1.csv";
}  // namespace

TEST_CASE("benchmark fixtures parse to the expected shape") {
  const auto s1 = read_benchmark_table(kS1);
  CHECK(s1.datasets.size() == 13);
  CHECK(s1.cells.at("REST:liver").at("EBERT+").auprc == 0.5405);
  const auto t1 = read_rank_table(kT1);
  CHECK(t1.models == std::vector<std::string>{"EBERT+", "JTeam", "FactorNet", "Anchor", "DeepGRN"});
  CHECK(t1.ranks.size() == 13);
}

TEST_CASE("all published aggregate claims pass on the shipped fixtures") {
  const auto rep = analyze_tables(kS1, kT1);
  CHECK(rep.all_pass());
  REQUIRE(rep.claims.size() == 10);
  for (const auto& c : rep.claims) {
    INFO(c.name, " computed=", c.computed, " reference=", c.reference);
    CHECK(c.pass);
  }
  CHECK(rep.overall_ranks == std::vector<int>{3, 1, 2, 4, 5});

  // the published variance figures match the sample convention
  CHECK(rep.variance_sample.at("EBERT") == doctest::Approx(0.01).epsilon(0.15));
  CHECK(rep.variance_sample.at("EBERT+") == doctest::Approx(0.019).epsilon(0.05));
}

TEST_CASE("report renders both text and csv") {
  const auto s1 = read_benchmark_table(kS1);
  const auto t1 = read_rank_table(kT1);
  const auto rep = analyze_tables(s1, t1);

  std::ostringstream text;
  write_report_text(text, rep, t1);
  CHECK(text.str().find("ALL CLAIMS PASS") != std::string::npos);
  CHECK(text.str().find("median_auprc ebert_plus: computed 0.5405") != std::string::npos);

  std::ostringstream csv;
  write_report_csv(csv, rep);
  CHECK(csv.str().rfind("claim,paper_value,computed_value,pass\n", 0) == 0);
  CHECK(csv.str().find("overall_leaderboard_row,3;1;2;4;5,3;1;2;4;5,pass") != std::string::npos);
}

TEST_CASE("a perturbed fixture cell fails its claim") {
  fixtures::TempDir tmp("analysis");
  std::ifstream in(kS1);
  std::stringstream buf;
  buf << in.rdbuf();
  std::string content = buf.str();
  const auto pos = content.find("REST:liver,EBERT+,0.5405");
  REQUIRE(pos != std::string::npos);
  content.replace(pos, std::string("REST:liver,EBERT+,0.5405").size(), "REST:liver,EBERT+,0.6405");
  fixtures::write_file(tmp.path("s1.csv"), content);

  const auto rep = analyze_tables(tmp.path("s1.csv"), kT1);
  CHECK(!rep.all_pass());
  bool median_failed = false;
  for (const auto& c : rep.claims)
    if (c.name == "median_auprc ebert_plus" && !c.pass) median_failed = true;
  CHECK(median_failed);
}

TEST_CASE("malformed fixtures raise parse errors") {
  fixtures::TempDir tmp("analysis_err");
  fixtures::write_file(tmp.path("bad.csv"), "dataset,model\nCTCF:iPSC,DBERT\n");
  CHECK_THROWS_AS(read_benchmark_table(tmp.path("bad.csv")), ParseError);

  fixtures::write_file(tmp.path("short.csv"),
                       "dataset,model,auprc,auroc,re10fdr,re50fdr\nA,DBERT,0.1,0.2,0.3,0.4\n");
  CHECK_THROWS_WITH_AS(read_benchmark_table(tmp.path("short.csv")),
                       doctest::Contains("expected 13 datasets"), ParseError);

  fixtures::write_file(tmp.path("rank.csv"), "dataset,a,b\nD1,1,x\n");
  CHECK_THROWS_AS(read_rank_table(tmp.path("rank.csv")), ParseError);
}
