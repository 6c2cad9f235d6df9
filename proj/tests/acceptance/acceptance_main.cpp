// Acceptance suite: one PASS/FAIL line per criterion, tolerances fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles/bleu_oracle.hpp"
#include "../oracles/bootstrap_oracle.hpp"
#include "../oracles/wilcoxon_oracle.hpp"
#include "qebias/biasstats.hpp"
#include "qebias/downstream.hpp"
#include "qebias/errors.hpp"
#include "qebias/mock.hpp"
#include "qebias/report.hpp"
#include "qebias/scoring.hpp"

#ifndef QE_BIAS_BIN
#error "QE_BIAS_BIN must name the qe-bias executable"
#endif

using namespace qebias;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kExactRuntimeSecs = 1.0;
constexpr std::size_t kCalibrationInstances = 500;
constexpr std::size_t kCalibrationSeeds = 100;
constexpr std::size_t kCalibrationMaxRejections = 10;
constexpr double kCalibrationAlpha = 0.05;
constexpr double kCalibrationRuntimeSecs = 30.0;
constexpr std::size_t kBootstrapResamples = 10000;
constexpr std::uint64_t kBootstrapSeed = 42;
constexpr double kBootstrapTolerance = 0.02;
constexpr double kBleuTolerance = 1e-9;
constexpr double kFilterShift = 0.05;
constexpr std::size_t kQadSets = 200;
constexpr std::size_t kProtocolRequests = 1000;

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<EvaluationInstance> ambiguous_instances(std::size_t n, const std::string& tag) {
  std::vector<EvaluationInstance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = tag + std::to_string(i);
    EvaluationInstance inst;
    inst.id = "amb-" + k;
    inst.language_pair = {"en", "it"};
    inst.source = "The doctor " + k + " has arrived.";
    inst.condition = Condition::ambiguous_fm;
    inst.variants = {{VariantLabel::F, "La dottoressa " + k + " è arrivata."},
                     {VariantLabel::M, "Il dottore " + k + " è arrivato."}};
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<EvaluationInstance> unambiguous_instances(std::size_t n) {
  std::vector<EvaluationInstance> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = i % 2 ? Gender::M : Gender::F;
    const auto k = std::to_string(i);
    EvaluationInstance inst;
    inst.id = "un-" + k;
    inst.language_pair = {"en", "de"};
    inst.source = std::string(g == Gender::F ? "She" : "He") + " is doctor " + k + ".";
    inst.condition = Condition::unambiguous_intra;
    inst.variants = {{VariantLabel::F, "Sie ist Ärztin " + k + "."},
                     {VariantLabel::M, "Sie ist Arzt " + k + "."}};
    inst.correct_variant = variant_for(g);
    inst.source_group = g;
    out.push_back(std::move(inst));
  }
  return out;
}

AuditReport audit(const std::string& scorer_spec, std::span<const EvaluationInstance> instances,
                  std::size_t resamples = 1000) {
  AuditConfig config;
  config.dataset = "synthetic";
  config.scorer_endpoint = scorer_spec;
  config.bootstrap_resamples = resamples;
  config.seed = 42;
  ScorerClient client(open_scorer_channel(scorer_spec));
  return run_audit(config, instances, client);
}

Outcome exact_statistics() {
  const auto start = Clock::now();
  const auto instances = ambiguous_instances(300, "x");
  ScorerClient client(open_scorer_channel("mock:biased:0.8:0.05:dottoressa"));
  std::vector<ScoreRequest> requests;
  for (const auto& inst : instances) {
    requests.push_back(build_scored_inputs(inst, VariantLabel::F, {}));
    requests.push_back(build_scored_inputs(inst, VariantLabel::M, {}));
  }
  const auto records = client.score_batch(requests, client.info().scale);
  std::size_t exact = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto r = score_ratio(records[2 * i].normalized, records[2 * i + 1].normalized);
    if (r && *r == 0.9375) ++exact;
  }
  const auto report = audit("mock:biased:0.8:0.05:dottoressa", instances);
  const double elapsed = seconds_since(start);
  const auto& ratio = *report.cells.at(0).summary.ratio;
  std::ostringstream d;
  d << "exact ratios " << exact << "/300, mean " << *ratio.mean << ", CI width "
    << (*ratio.ci95_high - *ratio.ci95_low) << ", p " << *ratio.t_p_value << ", " << elapsed << " s";
  const bool pass = exact == 300 && *ratio.mean == 0.9375 && *ratio.ci95_low == *ratio.ci95_high &&
                    *ratio.t_p_value == 0.0 && elapsed < kExactRuntimeSecs;
  return {pass, d.str()};
}

Outcome calibration() {
  const auto start = Clock::now();
  std::size_t rejections = 0;
  double ratio_mean_sum = 0.0;
  for (std::size_t seed = 0; seed < kCalibrationSeeds; ++seed) {
    const auto instances = ambiguous_instances(kCalibrationInstances, "s" + std::to_string(seed) + "-");
    const auto report = audit("mock:hash:" + std::to_string(seed), instances);
    const auto& ratio = *report.cells.at(0).summary.ratio;
    if (*ratio.t_p_value < kCalibrationAlpha) ++rejections;
    ratio_mean_sum += *ratio.mean;
  }
  const double elapsed = seconds_since(start);
  std::ostringstream d;
  d << rejections << "/" << kCalibrationSeeds << " seeds reject at p<" << kCalibrationAlpha
    << " (limit " << kCalibrationMaxRejections << "), mean ratio over seeds "
    << ratio_mean_sum / kCalibrationSeeds << ", " << elapsed << " s";
  return {rejections <= kCalibrationMaxRejections && elapsed < kCalibrationRuntimeSecs, d.str()};
}

Outcome bootstrap_oracle() {
  const std::vector<GroupJudgment> judgments = {
      {Gender::F, Judgment::error},   {Gender::F, Judgment::error},
      {Gender::F, Judgment::correct}, {Gender::M, Judgment::error},
      {Gender::M, Judgment::correct}, {Gender::M, Judgment::correct}};
  const std::vector<oracle::Obs> obs = {{true, true},  {true, true},   {true, false},
                                        {false, true}, {false, false}, {false, false}};
  const double exact = oracle::bootstrap_phi_le_one(obs);
  BootstrapOptions o;
  o.resamples = kBootstrapResamples;
  o.seed = kBootstrapSeed;
  const auto a = bootstrap_phi_test(judgments, o);
  const auto b = bootstrap_phi_test(judgments, o);
  o.threads = 1;
  const auto c = bootstrap_phi_test(judgments, o);
  const bool same = a.p_value == b.p_value && a.p_value == c.p_value &&
                    a.skipped_resamples == b.skipped_resamples &&
                    a.skipped_resamples == c.skipped_resamples;
  std::ostringstream d;
  d << "p " << a.p_value << " vs exhaustive " << exact << " (tolerance " << kBootstrapTolerance
    << "), repeat " << (same ? "identical" : "differs");
  return {std::fabs(a.p_value - exact) <= kBootstrapTolerance && same, d.str()};
}

Outcome ties_policy() {
  const auto report = audit("mock:constant:0.5", unambiguous_instances(40), 200);
  const auto& s = report.cells.at(0).summary;
  std::ostringstream d;
  d << "ER_F " << s.er_f.value_or(-1) << ", ER_M " << s.er_m.value_or(-1) << ", phi "
    << to_string(s.phi.kind) << " " << s.phi.value << ", tie_rate " << s.tie_rate.value_or(-1);
  const bool pass = s.er_f == 1.0 && s.er_m == 1.0 && s.phi.kind == PhiValue::Kind::finite &&
                    s.phi.value == 1.0 && s.tie_rate == 1.0;
  return {pass, d.str()};
}

Outcome bleu_oracle() {
  const std::string h1 = "the cat sat on the mat", r1 = "the cat is on the mat";
  const std::string h2 = "the cat sat", r2 = "the cat sat on the mat";
  const double hand1 = 100.0 * std::pow(1.0 / 18.0, 0.25);
  const double hand2 = 100.0 * std::exp(-1.0);
  const double b1 = sentence_bleu(h1, r1), b2 = sentence_bleu(h2, r2);
  const double identity = sentence_bleu("la dottoressa è arrivata", "la dottoressa è arrivata");
  const double err = std::max({std::fabs(b1 - hand1), std::fabs(b2 - hand2),
                               std::fabs(b1 - oracle::bleu(h1, r1)), std::fabs(b2 - oracle::bleu(h2, r2))});
  std::ostringstream d;
  d.precision(12);
  d << "fixture 1 " << b1 << ", fixture 2 " << b2 << ", max error " << err << ", identity " << identity;
  return {err <= kBleuTolerance && identity == 100.0, d.str()};
}

Outcome wilcoxon_oracle() {
  std::mt19937_64 rng(2024);
  std::size_t checked = 0, mismatched = 0;
  auto check = [&](const std::vector<double>& a, const std::vector<double>& b) {
    ++checked;
    if (wilcoxon_signed_rank(a, b).p_value != oracle::wilcoxon_two_sided(a, b)) ++mismatched;
  };
  check({1, 2, 3, 4, 5}, {0, 0, 0, 0, 0});
  check({3.0, 1.0, 4.5, 2.0, 6.0, 5.5}, {1.0, 1.5, 2.5, 4.5, 2.0, 1.0});
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng() % 6;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<double>(rng() % 5) * 0.5;
      b[i] = static_cast<double>(rng() % 5) * 0.5;
    }
    check(a, b);
  }
  const bool five = wilcoxon_signed_rank(std::vector<double>{1, 2, 3, 4, 5},
                                         std::vector<double>{0, 0, 0, 0, 0})
                        .p_value == 0.0625;
  const std::vector<double> same = {0.3, 0.4, 0.5};
  const auto degenerate = wilcoxon_signed_rank(same, same);
  std::ostringstream d;
  d << checked << " fixtures with n <= 6, " << mismatched << " mismatches, {1..5} p "
    << (five ? "0.0625" : "wrong") << ", all-zero p " << degenerate.p_value;
  return {mismatched == 0 && five && degenerate.p_value == 1.0, d.str()};
}

Outcome filtering() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(kFilterShift, 1.0);
  std::map<std::string, std::vector<double>> scores;
  for (int i = 0; i < 5000; ++i) {
    const double m = u(rng);
    scores["M"].push_back(m);
    scores["F"].push_back(m - kFilterShift);
  }
  const auto grid = parse_threshold_grid("0:1:0.01");
  const auto curve = retention_curve(scores, grid);
  bool gap_ok = true, monotone = true;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    gap_ok &= curve.gap[i] >= 0.0;
    if (i > 0) {
      for (const auto& [g, f] : curve.retained_fraction_by_group) monotone &= f[i] <= f[i - 1];
    }
  }
  const double max_gap = *std::max_element(curve.gap.begin(), curve.gap.end());
  std::ostringstream d;
  d << grid.size() << " thresholds, gap >= 0 " << (gap_ok ? "everywhere" : "violated")
    << ", monotone " << (monotone ? "yes" : "no") << ", gap at 0 " << curve.gap.front()
    << ", max gap " << max_gap;
  return {gap_ok && monotone && curve.gap.front() == 0.0, d.str()};
}

std::vector<CandidateSet> qad_sets() {
  std::vector<CandidateSet> sets;
  const std::vector<std::string> tails = {"è arrivata", "è qui", "lavora oggi", "parla"};
  const std::vector<std::string> tails_m = {"è arrivato", "è qui", "lavora oggi", "parla"};
  for (std::size_t i = 0; i < kQadSets; ++i) {
    const auto k = std::to_string(i);
    CandidateSet s;
    s.instance_id = "q" + k;
    s.source = "The doctor " + k + " has arrived.";
    const auto h_f = "La dottoressa " + k + " è arrivata.";
    const auto h_m = "Il dottore " + k + " è arrivato.";
    for (std::size_t j = 0; j < tails.size(); ++j) {
      s.candidates.push_back("La dottoressa " + k + " " + tails[j] + ".");
      s.candidates.push_back("Il dottore " + k + " " + tails_m[j] + ".");
    }
    auto words = unique_word_sets(h_f, h_m);
    s.f_unique_words = std::move(words.f_unique);
    s.m_unique_words = std::move(words.m_unique);
    sets.push_back(std::move(s));
  }
  return sets;
}

DeltaM qad_delta(const std::string& scorer_spec, std::vector<CandidateSet> sets) {
  ScorerClient client(open_scorer_channel(scorer_spec));
  std::vector<ScoreRequest> requests;
  for (const auto& s : sets) {
    for (std::size_t k = 0; k < s.candidates.size(); ++k) {
      requests.push_back({s.instance_id + "#" + std::to_string(k), *s.source, s.candidates[k], {}});
    }
  }
  const auto records = client.score_batch(requests, client.info().scale);
  std::size_t at = 0;
  std::vector<GenderMatch> labels;
  for (auto& s : sets) {
    for (std::size_t k = 0; k < s.candidates.size(); ++k) s.scores.push_back(records[at++].normalized);
    labels.push_back(gender_match(rerank(s).best_hypothesis, s.f_unique_words, s.m_unique_words));
  }
  return delta_m(labels);
}

bool tie_break_permutations() {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    CandidateSet s;
    const std::size_t n = 1 + rng() % 10;
    for (std::size_t i = 0; i < n; ++i) {
      s.candidates.push_back("c" + std::to_string(i));
      s.scores.push_back(static_cast<double>(rng() % 3) / 2.0);
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int p = 0; p < 5; ++p) {
      std::shuffle(perm.begin(), perm.end(), rng);
      CandidateSet t;
      for (auto i : perm) {
        t.candidates.push_back(s.candidates[i]);
        t.scores.push_back(s.scores[i]);
      }
      const double best = *std::max_element(t.scores.begin(), t.scores.end());
      const auto first =
          static_cast<std::size_t>(std::find(t.scores.begin(), t.scores.end(), best) - t.scores.begin());
      const auto a = rerank(t), b = rerank(t);
      if (a.best_index != first || b.best_index != first || a.best_hypothesis != t.candidates[first]) {
        return false;
      }
    }
  }
  return true;
}

Outcome qad_propagation() {
  const auto sets = qad_sets();
  const auto biased = qad_delta("mock:biased:0.8:0.05:dottoressa,arrivata", sets);
  const auto hashed = qad_delta("mock:hash:7", sets);
  const bool ties = tie_break_permutations();
  std::ostringstream d;
  d << kQadSets << " sets, delta_M biased " << biased.percentage_points << " pp (raw "
    << biased.raw_difference() << "), hash " << hashed.percentage_points << " pp (raw "
    << hashed.raw_difference() << "), tie-break permutations " << (ties ? "stable" : "unstable");
  return {biased.percentage_points < hashed.percentage_points && ties, d.str()};
}

Outcome protocol_robustness() {
  std::vector<ScoreRequest> requests;
  for (std::size_t i = 0; i < kProtocolRequests; ++i) {
    requests.push_back({"req-" + std::to_string(i), "source " + std::to_string(i),
                        "hypothesis " + std::to_string(i), {}});
  }
  auto matched = [&](ScorerClient& client) {
    const auto out = client.score_batch(requests, client.info().scale);
    std::size_t ok = 0;
    HashModel model(11);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i].id == requests[i].id &&
          out[i].raw == model.score(requests[i].source_text, requests[i].hypothesis_text)) {
        ++ok;
      }
    }
    return ok;
  };
  MockServerOptions shuffled;
  shuffled.order = ResponseOrder::shuffle;
  shuffled.shuffle_seed = 3;
  ScorerClient in_process(std::make_unique<InProcessChannel>(
      std::make_shared<MockScorerServer>(std::make_shared<HashModel>(11), shuffled)));
  const auto ok_in = matched(in_process);
  ScorerClient subprocess(std::make_unique<ProcessChannel>(
      std::string(QE_BIAS_BIN) + " serve-mock --model hash:11 --order shuffle --seed 3"));
  const auto ok_sub = matched(subprocess);

  MockServerOptions dropping;
  dropping.order = ResponseOrder::reverse;
  dropping.drop_ids = {"req-417"};
  EndpointOptions eo;
  eo.timeout = 300ms;
  ScorerClient lossy(std::make_unique<InProcessChannel>(
                         std::make_shared<MockScorerServer>(std::make_shared<HashModel>(11), dropping)),
                     eo);
  std::string error;
  try {
    lossy.score_batch(requests, kUnitScale);
  } catch (const EndpointError& e) {
    error = e.what();
  }
  const bool named = error.find("timed out") != std::string::npos &&
                     error.find("req-417") != std::string::npos;
  std::ostringstream d;
  d << "matched " << ok_in << "/" << kProtocolRequests << " in-process and " << ok_sub << "/"
    << kProtocolRequests << " over a subprocess; dropped id "
    << (named ? "named in timeout error" : "not reported: '" + error + "'");
  return {ok_in == kProtocolRequests && ok_sub == kProtocolRequests && named, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"exact_statistics_fixture", exact_statistics},
      {"calibration_hash_scorer", calibration},
      {"bootstrap_oracle_equivalence", bootstrap_oracle},
      {"ties_policy", ties_policy},
      {"bleu_oracle", bleu_oracle},
      {"wilcoxon_oracle", wilcoxon_oracle},
      {"filtering_simulator", filtering},
      {"qad_bias_propagation", qad_propagation},
      {"protocol_robustness", protocol_robustness},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
