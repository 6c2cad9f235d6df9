#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "../oracles/pareto_oracle.hpp"
#include "qebias/errors.hpp"
#include "qebias/mock.hpp"
#include "qebias/report.hpp"

using namespace qebias;

namespace {

std::vector<EvaluationInstance> ambiguous_fixture(std::size_t n, const std::string& lang = "it") {
  std::vector<EvaluationInstance> out;
  for (std::size_t i = 0; i < n; ++i) {
    EvaluationInstance inst;
    inst.id = "a" + lang + std::to_string(i);
    inst.language_pair = {"en", lang};
    inst.source = "The doctor number " + std::to_string(i) + " arrived.";
    inst.condition = Condition::ambiguous_fm;
    inst.variants = {{VariantLabel::F, "La dottoressa " + std::to_string(i) + " è arrivata."},
                     {VariantLabel::M, "Il dottore " + std::to_string(i) + " è arrivato."}};
    out.push_back(inst);
  }
  return out;
}

std::vector<EvaluationInstance> unambiguous_fixture(std::size_t n, const std::string& lang = "it") {
  std::vector<EvaluationInstance> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = i % 2 ? Gender::M : Gender::F;
    EvaluationInstance inst;
    inst.id = "u" + lang + std::to_string(i);
    inst.language_pair = {"en", lang};
    inst.source = std::string(g == Gender::F ? "She" : "He") + " is doctor " + std::to_string(i) + ".";
    inst.condition = Condition::unambiguous_intra;
    inst.variants = {{VariantLabel::F, "È la dottoressa " + std::to_string(i) + "."},
                     {VariantLabel::M, "È il dottore " + std::to_string(i) + "."}};
    inst.correct_variant = variant_for(g);
    inst.source_group = g;
    out.push_back(inst);
  }
  return out;
}

AuditReport audit_with(const std::string& model, const std::vector<EvaluationInstance>& instances,
                       std::uint64_t seed = 42) {
  AuditConfig config;
  config.dataset = "fixture.jsonl";
  config.scorer_endpoint = "mock:" + model;
  config.bootstrap_resamples = 500;
  config.seed = seed;
  ScorerClient client(open_scorer_channel(config.scorer_endpoint));
  return run_audit(config, instances, client);
}

AuditReport strip_time(AuditReport r) {
  r.metadata.timestamp.clear();
  return r;
}

}  // namespace

TEST(Audit, ConstantScorerOnAmbiguousGivesRatioOne) {
  const auto r = audit_with("constant:0.6", ambiguous_fixture(10));
  ASSERT_EQ(r.cells.size(), 1u);
  const auto& ratio = *r.cells[0].summary.ratio;
  EXPECT_EQ(*ratio.mean, 1.0);
  EXPECT_EQ(*ratio.t_p_value, 1.0);
  EXPECT_EQ(ratio.n_used, 10u);
}

TEST(Audit, BiasedScorerMakesPhiInfinite) {
  const auto r = audit_with("biased:0.8:0.1:dottoressa", unambiguous_fixture(20));
  const auto& s = r.cells[0].summary;
  EXPECT_EQ(*s.er_f, 1.0);
  EXPECT_EQ(*s.er_m, 0.0);
  EXPECT_EQ(s.phi.kind, PhiValue::Kind::undefined_infinite);
  EXPECT_FALSE(s.phi_p_value.has_value());
  EXPECT_EQ(s.bootstrap_skipped, 500u);
}

TEST(Audit, ConstantScorerTiesAreErrors) {
  const auto r = audit_with("constant:0.5", unambiguous_fixture(12));
  const auto& s = r.cells[0].summary;
  EXPECT_EQ(*s.er_f, 1.0);
  EXPECT_EQ(*s.er_m, 1.0);
  EXPECT_EQ(s.phi.kind, PhiValue::Kind::finite);
  EXPECT_EQ(s.phi.value, 1.0);
  EXPECT_EQ(*s.tie_rate, 1.0);
}

TEST(Audit, DeterministicForSameSeed) {
  auto instances = ambiguous_fixture(30);
  const auto more = unambiguous_fixture(40);
  instances.insert(instances.end(), more.begin(), more.end());
  const auto a = strip_time(audit_with("hash:1", instances));
  const auto b = strip_time(audit_with("hash:1", instances));
  EXPECT_EQ(a, b);
  EXPECT_EQ(emit(a, ReportFormat::structured), emit(b, ReportFormat::structured));
}

TEST(Audit, CellsPerLanguageAndUnweightedMeans) {
  auto instances = unambiguous_fixture(10, "it");
  const auto de = unambiguous_fixture(30, "de");
  instances.insert(instances.end(), de.begin(), de.end());
  const auto r = audit_with("hash:2", instances);
  ASSERT_EQ(r.cells.size(), 2u);
  ASSERT_EQ(r.means.size(), 1u);
  EXPECT_EQ(r.means[0].languages, (std::vector<std::string>{"en-de", "en-it"}));
  EXPECT_DOUBLE_EQ(*r.means[0].er_total,
                   (*r.cells[0].summary.er_total + *r.cells[1].summary.er_total) / 2.0);
}

TEST(Audit, ConditionFilterCountsSkipped) {
  auto instances = ambiguous_fixture(5);
  const auto more = unambiguous_fixture(4);
  instances.insert(instances.end(), more.begin(), more.end());
  AuditConfig config;
  config.scorer_endpoint = "mock:hash";
  config.condition = Condition::unambiguous_intra;
  config.bootstrap_resamples = 50;
  ScorerClient client(open_scorer_channel(config.scorer_endpoint));
  const auto r = run_audit(config, instances, client);
  EXPECT_EQ(r.skipped_instances, 5u);
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_EQ(r.cells[0].condition, Condition::unambiguous_intra);
}

TEST(Audit, ScaleOverrideApplied) {
  AuditConfig config;
  config.scorer_endpoint = "mock:constant:10";
  config.scale = ScaleDescriptor{0.0, 25.0, false};
  config.bootstrap_resamples = 10;
  ScorerClient client(open_scorer_channel(config.scorer_endpoint));
  const auto r = run_audit(config, ambiguous_fixture(3), client);
  EXPECT_EQ(r.metadata.scale, "0:25:lower");
  EXPECT_EQ(r.clamped_scores, 0u);
  EXPECT_EQ(*r.cells[0].summary.ratio->mean, 1.0);
}

TEST(Audit, MissingDatasetNamesStage) {
  AuditConfig config;
  config.dataset = "/nonexistent/data.jsonl";
  config.scorer_endpoint = "mock:hash";
  try {
    run_audit(config);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("load:", 0), 0u) << e.what();
  }
}

TEST(Pareto, DeclaredExamples) {
  const std::vector<ParetoInput> in = {{"A", 0.1, 0.2}, {"B", 0.2, 0.1}, {"C", 0.2, 0.3}};
  const auto p = pareto_points(in);
  EXPECT_TRUE(p[0].on_frontier);
  EXPECT_TRUE(p[1].on_frontier);
  EXPECT_FALSE(p[2].on_frontier);
  EXPECT_TRUE(pareto_points(std::vector<ParetoInput>{{"X", 0.5, 0.5}})[0].on_frontier);
  const auto dup = pareto_points(std::vector<ParetoInput>{{"X", 0.5, 0.5}, {"Y", 0.5, 0.5}});
  EXPECT_TRUE(dup[0].on_frontier && dup[1].on_frontier);
  EXPECT_THROW(pareto_points(std::vector<ParetoInput>{{"N", 0.1, -0.1}}), InputError);
}

TEST(Pareto, MatchesBruteForce) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 100;
    std::vector<ParetoInput> in;
    std::vector<oracle::Pt> pts;
    for (std::size_t i = 0; i < n; ++i) {
      const double er = static_cast<double>(rng() % 10) / 10.0;
      const double gap = static_cast<double>(rng() % 10) / 10.0;
      in.push_back({"m" + std::to_string(i), er, gap});
      pts.push_back({er, gap});
    }
    const auto got = pareto_points(in);
    const auto want = oracle::non_dominated(pts);
    for (std::size_t i = 0; i < n; ++i) {
      ASSERT_EQ(got[i].on_frontier, want[i]);
      ASSERT_EQ(got[i].metric_name, in[i].name);
    }
    // Every dominated point is dominated by some frontier point.
    for (std::size_t i = 0; i < n; ++i) {
      if (got[i].on_frontier) continue;
      bool covered = false;
      for (std::size_t j = 0; j < n; ++j) {
        covered |= got[j].on_frontier && got[j].er_total <= got[i].er_total &&
                   got[j].gap <= got[i].gap;
      }
      ASSERT_TRUE(covered);
    }
  }
}

TEST(Pareto, GapFromParity) {
  EXPECT_DOUBLE_EQ(gap_from_parity(0.9375), 0.0625);
  EXPECT_DOUBLE_EQ(gap_from_parity(1.5), 0.5);
}

TEST(Emit, StructuredRoundTrip) {
  auto instances = ambiguous_fixture(8);
  const auto more = unambiguous_fixture(10);
  instances.insert(instances.end(), more.begin(), more.end());
  auto r = audit_with("hash:9", instances);
  RetentionCurve curve;
  curve.thresholds = {0.0, 0.5};
  curve.retained_fraction_by_group = {{"F", {1.0, 0.25}}, {"M", {1.0, 0.5}}};
  curve.gap = {0.0, 0.25};
  r.retention = curve;
  QadBlock q;
  q.scorer_name = "hash(9)";
  q.candidate_sets = 4;
  q.delta = delta_m(std::vector<GenderMatch>{GenderMatch::F, GenderMatch::M, GenderMatch::M,
                                             GenderMatch::none});
  r.qad = q;
  const auto text = emit(r, ReportFormat::structured);
  EXPECT_EQ(parse_structured_report(text), r);
  EXPECT_THROW(parse_structured_report("{}"), InputError);
}

TEST(Emit, CsvOneCellHasHeaderAndOneRow) {
  const auto r = audit_with("hash", ambiguous_fixture(4));
  const auto csv = emit(r, ReportFormat::csv_tables);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_EQ(csv.rfind("scorer,language_pair,condition", 0), 0u);
}

TEST(Emit, MarkdownColumns) {
  EXPECT_EQ(markdown_columns(Condition::unambiguous_intra),
            (std::vector<std::string>{"Metric", "ER", "Φ", "tie_rate", "p"}));
  EXPECT_EQ(markdown_columns(Condition::ambiguous_fm),
            (std::vector<std::string>{"Metric", "Ratio", "CI95", "p", "Excluded"}));
  const auto r = audit_with("hash", unambiguous_fixture(6));
  const auto md = emit(r, ReportFormat::markdown_tables);
  EXPECT_NE(md.find("| Metric | ER | Φ | tie_rate | p |"), std::string::npos) << md;
}

TEST(Emit, FormatNames) {
  EXPECT_EQ(parse_report_format("structured"), ReportFormat::structured);
  EXPECT_EQ(parse_report_format("csv_tables"), ReportFormat::csv_tables);
  EXPECT_EQ(parse_report_format("markdown_tables"), ReportFormat::markdown_tables);
  EXPECT_THROW(parse_report_format("xml"), InputError);
}
