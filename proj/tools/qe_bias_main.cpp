// qe-bias: command-line front end for gender-bias audits of QE scorers.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qebias/biasstats.hpp"
#include "qebias/channel.hpp"
#include "qebias/corpus.hpp"
#include "qebias/downstream.hpp"
#include "qebias/errors.hpp"
#include "qebias/mock.hpp"
#include "qebias/report.hpp"
#include "qebias/scoring.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace qebias;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitEndpoint = 3;

void write_output(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + out_path + "'");
  out << text;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  return in;
}

std::optional<fs::path> cache_path(const std::string& explicit_path, bool disabled) {
  if (disabled) return std::nullopt;
  if (!explicit_path.empty()) return fs::path(explicit_path);
  const char* dir = std::getenv("QE_BIAS_CACHE_DIR");
  if (dir == nullptr || *dir == '\0') return std::nullopt;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError(std::string("cannot create cache directory '") + dir + "'");
  return fs::path(dir) / "scores.jsonl";
}

struct EndpointFlags {
  double timeout_secs = 30.0;
  int retries = 0;

  void add(CLI::App* cmd) {
    cmd->add_option("--scorer-timeout-secs", timeout_secs, "Seconds to wait for endpoint responses")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--retries", retries, "Re-send unanswered requests once")->check(CLI::Range(0, 1));
  }
  EndpointOptions options() const {
    EndpointOptions o;
    o.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_secs * 1000.0));
    o.retries = retries;
    return o;
  }
};

struct CacheFlags {
  std::string path;
  bool disabled = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--cache", path, "Score cache file (default: $QE_BIAS_CACHE_DIR/scores.jsonl)");
    cmd->add_flag("--no-cache", disabled, "Do not read or write the score cache");
  }
};

// --- audit ---------------------------------------------------------------

struct AuditArgs {
  std::string dataset;
  std::string schema = "native";
  std::string condition;
  std::string scorer;
  std::string scale;
  std::string strategy = "none";
  std::string separator = " ";
  std::string translator;
  std::size_t bootstrap = 1000;
  std::uint64_t seed = 0;
  bool two_sided = false;
  unsigned threads = 0;
  std::string language_pair;
  std::string out;
  std::string format = "structured";
  EndpointFlags endpoint;
  CacheFlags cache;
};

int run_audit_cmd(const AuditArgs& a) {
  AuditConfig config;
  config.dataset = a.dataset;
  config.schema = parse_schema(a.schema);
  if (!a.condition.empty() && a.condition != "all") config.condition = parse_condition(a.condition);
  config.scorer_endpoint = a.scorer;
  if (!a.scale.empty()) config.scale = ScaleDescriptor::parse(a.scale);
  config.strategy.kind = parse_context_kind(a.strategy);
  config.strategy.separator = a.separator;
  config.translator_endpoint = a.translator;
  config.bootstrap_resamples = a.bootstrap;
  config.seed = a.seed;
  config.two_sided_bootstrap = a.two_sided;
  config.threads = a.threads;
  config.endpoint = a.endpoint.options();
  config.cache_path = cache_path(a.cache.path, a.cache.disabled);
  if (!a.language_pair.empty()) config.default_language_pair = LanguagePair::parse(a.language_pair);
  const auto format = parse_report_format(a.format);

  const auto report = run_audit(config);
  write_output(a.out, emit(report, format));
  return 0;
}

// --- validate ------------------------------------------------------------

struct ValidateArgs {
  std::string dataset;
  std::string schema = "native";
  std::string condition;
  std::string language_pair;
  std::string write_native_path;
};

int run_validate_cmd(const ValidateArgs& a) {
  LoadOptions options;
  if (!a.condition.empty()) options.condition = parse_condition(a.condition);
  if (!a.language_pair.empty()) options.default_language_pair = LanguagePair::parse(a.language_pair);
  LoadedDataset loaded;
  try {
    loaded = load_dataset(a.dataset, parse_schema(a.schema), options);
  } catch (const InputError& e) {
    std::cout << "error: " << e.what() << "\n";
    throw;
  }
  for (const auto& w : loaded.warnings) {
    std::cout << "warning: line " << w.line << ": " << w.instance_id << ": " << w.message << "\n";
  }
  std::map<std::pair<std::string, std::string>, std::size_t> counts;
  for (const auto& inst : loaded.instances) {
    ++counts[{inst.language_pair.str(), std::string(to_string(inst.condition))}];
  }
  for (const auto& [key, n] : counts) {
    std::cout << key.first << " " << key.second << ": " << n << " instances\n";
  }
  std::cout << loaded.instances.size() << " instances, " << loaded.warnings.size() << " warnings, "
            << loaded.skipped_rows << " skipped rows\n";
  if (!a.write_native_path.empty()) {
    std::ofstream out(a.write_native_path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + a.write_native_path + "'");
    write_native(out, loaded.instances);
  }
  return 0;
}

// --- scorer helpers ------------------------------------------------------

struct ScorerSession {
  std::unique_ptr<ScorerClient> client;
  ScaleDescriptor scale;
  std::optional<ScoreCache> cache;

  ScorerSession(const std::string& spec, const std::string& scale_override,
                const EndpointFlags& endpoint, const CacheFlags& cache_flags) {
    try {
      client = std::make_unique<ScorerClient>(open_scorer_channel(spec), endpoint.options());
    } catch (const EndpointError& e) {
      throw EndpointError(std::string("scorer: ") + e.what());
    }
    scale = scale_override.empty() ? client->info().scale : ScaleDescriptor::parse(scale_override);
    if (auto p = cache_path(cache_flags.path, cache_flags.disabled)) cache.emplace(*p);
  }

  std::vector<double> score(std::span<const ScoreRequest> requests) {
    CachedScoring scored;
    try {
      scored = score_with_cache(*client, cache ? &*cache : nullptr, requests, scale);
    } catch (const EndpointError& e) {
      throw EndpointError(std::string("scoring: ") + e.what());
    }
    if (cache) cache->save();
    std::vector<double> out;
    out.reserve(scored.records.size());
    for (const auto& r : scored.records) out.push_back(r.normalized);
    return out;
  }
};

// --- filter-sim ----------------------------------------------------------

struct FilterSimArgs {
  std::string grid = "0:1:0.01";
  std::string scores_path;
  std::string dataset;
  std::string schema = "native";
  std::string condition;
  std::string scorer;
  std::string scale;
  std::string strategy = "none";
  std::string out;
  EndpointFlags endpoint;
  CacheFlags cache;
};

int run_filter_sim_cmd(const FilterSimArgs& a) {
  const auto thresholds = parse_threshold_grid(a.grid);
  std::map<std::string, std::vector<double>> by_group;
  if (!a.scores_path.empty()) {
    auto in = open_input(a.scores_path);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto obj = json::parse(line);
        by_group[obj.at("group").get<std::string>()].push_back(obj.at("score").get<double>());
      } catch (const json::exception& e) {
        throw InputError("line " + std::to_string(n) + ": " + e.what());
      }
    }
  } else {
    if (a.dataset.empty() || a.scorer.empty()) {
      throw InputError("filter-sim needs --scores or both --dataset and --scorer");
    }
    LoadOptions options;
    if (!a.condition.empty()) options.condition = parse_condition(a.condition);
    const auto loaded = load_dataset(a.dataset, parse_schema(a.schema), options);
    ContextStrategy strategy;
    strategy.kind = parse_context_kind(a.strategy);
    if (strategy.kind == ContextKind::concat_translated_context) {
      throw InputError("filter-sim supports the none and ctx strategies");
    }
    std::vector<ScoreRequest> requests;
    std::vector<std::string> groups;
    for (const auto& inst : loaded.instances) {
      if (options.condition && inst.condition != *options.condition) continue;
      const auto [first, second] = variant_labels(inst.condition);
      for (auto label : {first, second}) {
        requests.push_back(build_scored_inputs(inst, label, strategy));
        groups.emplace_back(to_string(label));
      }
    }
    ScorerSession session(a.scorer, a.scale, a.endpoint, a.cache);
    const auto scores = session.score(requests);
    for (std::size_t i = 0; i < scores.size(); ++i) by_group[groups[i]].push_back(scores[i]);
  }
  const auto curve = retention_curve(by_group, thresholds);
  ordered_json j;
  j["thresholds"] = curve.thresholds;
  j["retained_fraction_by_group"] = curve.retained_fraction_by_group;
  j["gap"] = curve.gap;
  write_output(a.out, j.dump(2) + "\n");
  return 0;
}

// --- gt-filter -----------------------------------------------------------

struct GtFilterArgs {
  std::string pairs_path;
  std::string out;
};

int run_gt_filter_cmd(const GtFilterArgs& a) {
  auto in = open_input(a.pairs_path);
  std::vector<GtPair> pairs;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto obj = json::parse(line);
      GtPair p;
      p.id = obj.at("id").get<std::string>();
      p.reference_f = obj.at("reference_f").get<std::string>();
      p.reference_m = obj.at("reference_m").get<std::string>();
      p.translation_f = obj.at("translation_f").get<std::string>();
      p.translation_m = obj.at("translation_m").get<std::string>();
      p.inflection_ok_f = obj.value("inflection_ok_f", true);
      p.inflection_ok_m = obj.value("inflection_ok_m", true);
      pairs.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw InputError("line " + std::to_string(n) + ": " + e.what());
    }
  }
  const auto result = gt_filter(pairs);
  const auto& s = result.stats;
  ordered_json bands = ordered_json::array();
  for (auto band : kAllBands) {
    const auto it = s.bands.find(band);
    const BandStats b = it == s.bands.end() ? BandStats{} : it->second;
    bands.push_back({{"band", to_string(band)},
                     {"stage1_f", b.stage1_f},
                     {"stage1_m", b.stage1_m},
                     {"stage2", b.stage2},
                     {"wilcoxon_p", b.wilcoxon_p ? ordered_json(*b.wilcoxon_p) : ordered_json()}});
  }
  ordered_json retained = ordered_json::array();
  for (const auto& r : result.retained) {
    retained.push_back({{"id", r.pair.id},
                        {"bleu_f", r.bleu_f},
                        {"bleu_m", r.bleu_m},
                        {"band", to_string(r.band)}});
  }
  ordered_json j;
  j["input_pairs"] = s.input_pairs;
  j["dropped_inflection"] = s.dropped_inflection;
  j["dropped_band_mismatch"] = s.dropped_band_mismatch;
  j["stage1_total_f"] = s.stage1_total_f();
  j["stage1_total_m"] = s.stage1_total_m();
  j["stage2_total"] = s.stage2_total();
  j["bands"] = std::move(bands);
  j["retained"] = std::move(retained);
  write_output(a.out, j.dump(2) + "\n");
  return 0;
}

// --- qad -----------------------------------------------------------------

struct QadArgs {
  std::string nbest;
  std::string scorer;
  std::string scale;
  bool fold_case = false;
  std::string out;
  EndpointFlags endpoint;
  CacheFlags cache;
};

int run_qad_cmd(const QadArgs& a) {
  auto in = open_input(a.nbest);
  auto sets = load_candidate_sets(in);
  if (sets.empty()) throw InputError("no candidate sets in '" + a.nbest + "'");
  std::string scorer_name = "precomputed";
  if (!a.scorer.empty()) {
    std::vector<ScoreRequest> requests;
    for (const auto& set : sets) {
      if (!set.source) {
        throw InputError("candidate set '" + set.instance_id + "' has no source to score against");
      }
      for (std::size_t k = 0; k < set.candidates.size(); ++k) {
        requests.push_back({set.instance_id + "#" + std::to_string(k), *set.source,
                            set.candidates[k], std::nullopt});
      }
    }
    ScorerSession session(a.scorer, a.scale, a.endpoint, a.cache);
    scorer_name = session.client->info().name;
    const auto scores = session.score(requests);
    std::size_t at = 0;
    for (auto& set : sets) {
      set.scores.assign(scores.begin() + static_cast<std::ptrdiff_t>(at),
                        scores.begin() + static_cast<std::ptrdiff_t>(at + set.candidates.size()));
      at += set.candidates.size();
    }
  } else {
    for (const auto& set : sets) {
      if (set.scores.empty()) {
        throw InputError("candidate set '" + set.instance_id + "' has no scores; pass --scorer");
      }
    }
  }
  std::vector<GenderMatch> labels;
  ordered_json choices = ordered_json::array();
  for (const auto& set : sets) {
    const auto choice = rerank(set);
    const auto label =
        gender_match(choice.best_hypothesis, set.f_unique_words, set.m_unique_words, a.fold_case);
    labels.push_back(label);
    choices.push_back({{"instance_id", set.instance_id},
                       {"best_index", choice.best_index},
                       {"best_hypothesis", choice.best_hypothesis},
                       {"match", to_string(label)}});
  }
  const auto d = delta_m(labels);
  ordered_json j;
  j["scorer_name"] = scorer_name;
  j["candidate_sets"] = sets.size();
  j["delta_m"] = d.percentage_points;
  j["delta_m_raw"] = d.raw_difference();
  j["count_f"] = d.count_f;
  j["count_m"] = d.count_m;
  j["count_both"] = d.count_both;
  j["count_none"] = d.count_none;
  j["n"] = d.n;
  j["fold_case"] = a.fold_case;
  j["choices"] = std::move(choices);
  write_output(a.out, j.dump(2) + "\n");
  return 0;
}

// --- pareto --------------------------------------------------------------

struct ParetoArgs {
  std::string points_path;
  std::vector<std::string> reports;
  std::string panel = "unambiguous";
  std::string out;
  std::string format = "json";
};

std::optional<ParetoInput> point_from_report(const AuditReport& r, const std::string& panel) {
  std::vector<double> er;
  std::optional<double> bias;
  for (const auto& m : r.means) {
    if (!is_ambiguous(m.condition) && m.er_total) er.push_back(*m.er_total);
  }
  for (const auto& m : r.means) {
    if (panel == "ambiguous" && m.condition == Condition::ambiguous_fm) bias = m.ratio_mean;
    if (panel == "unambiguous" && m.condition == Condition::unambiguous_intra) bias = m.phi;
  }
  if (!bias && panel == "unambiguous") {
    for (const auto& m : r.means) {
      if (m.condition == Condition::unambiguous_extra) bias = m.phi;
    }
  }
  if (er.empty() || !bias) return std::nullopt;
  double er_mean = 0.0;
  for (double x : er) er_mean += x;
  er_mean /= static_cast<double>(er.size());
  return ParetoInput{r.metadata.scorer_name, er_mean, gap_from_parity(*bias)};
}

int run_pareto_cmd(const ParetoArgs& a) {
  if (a.panel != "ambiguous" && a.panel != "unambiguous") {
    throw InputError("--panel must be ambiguous or unambiguous");
  }
  std::vector<ParetoInput> inputs;
  if (!a.points_path.empty()) {
    auto in = open_input(a.points_path);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto obj = json::parse(line);
        inputs.push_back({obj.at("name").get<std::string>(), obj.at("er_total").get<double>(),
                          obj.at("gap").get<double>()});
      } catch (const json::exception& e) {
        throw InputError("line " + std::to_string(n) + ": " + e.what());
      }
    }
  }
  for (const auto& path : a.reports) {
    auto in = open_input(path);
    std::stringstream buf;
    buf << in.rdbuf();
    const auto report = parse_structured_report(buf.str());
    const auto p = point_from_report(report, a.panel);
    if (!p) {
      std::cerr << "skipping '" << path << "': no " << a.panel << " bias value or error rate\n";
      continue;
    }
    inputs.push_back(*p);
  }
  if (inputs.empty()) throw InputError("pareto needs --points or --report input");
  const auto points = pareto_points(inputs);
  std::ostringstream out;
  if (a.format == "csv") {
    out << "metric,er_total,gap,on_frontier\n";
    for (const auto& p : points) {
      out << p.metric_name << ',' << p.er_total << ',' << p.gap << ','
          << (p.on_frontier ? "true" : "false") << '\n';
    }
  } else if (a.format == "json") {
    ordered_json arr = ordered_json::array();
    for (const auto& p : points) {
      arr.push_back({{"metric_name", p.metric_name},
                     {"er_total", p.er_total},
                     {"gap", p.gap},
                     {"on_frontier", p.on_frontier}});
    }
    out << arr.dump(2) << "\n";
  } else {
    throw InputError("unknown pareto format '" + a.format + "'");
  }
  write_output(a.out, out.str());
  return 0;
}

// --- mock endpoints ------------------------------------------------------

struct ServeMockArgs {
  std::string model = "hash";
  std::string order = "in-order";
  std::uint64_t seed = 0;
  std::vector<std::string> drop;
  bool inject_unknown = false;
  std::string socket;
  std::size_t max_connections = 0;
};

int run_serve_mock_cmd(const ServeMockArgs& a) {
  MockServerOptions options;
  if (a.order == "in-order") {
    options.order = ResponseOrder::in_order;
  } else if (a.order == "reverse") {
    options.order = ResponseOrder::reverse;
  } else if (a.order == "shuffle") {
    options.order = ResponseOrder::shuffle;
  } else {
    throw InputError("unknown --order '" + a.order + "'");
  }
  options.shuffle_seed = a.seed;
  options.drop_ids.insert(a.drop.begin(), a.drop.end());
  options.inject_unknown_id = a.inject_unknown;
  MockScorerServer server(std::shared_ptr<const ScoreModel>(parse_score_model(a.model)), options);
  if (!a.socket.empty()) {
    serve_unix_socket(server, a.socket, a.max_connections);
  } else {
    serve_lines(server, 0, 1);
  }
  return 0;
}

int run_serve_translator_cmd(const std::string& prefix) {
  MockTranslatorServer server(
      [prefix](const std::string& text, const std::string&) { return prefix + text; });
  serve_lines(server, 0, 1);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gender-bias audits for quality-estimation scorers"};
  app.name("qe-bias");
  app.require_subcommand(1);

  AuditArgs audit;
  auto* audit_cmd = app.add_subcommand("audit", "Score a contrastive dataset and report bias");
  audit_cmd->add_option("--dataset", audit.dataset, "Dataset path")->required();
  audit_cmd->add_option("--schema", audit.schema, "native|mtgeneval|gate|mgente");
  audit_cmd->add_option("--condition", audit.condition,
                        "ambiguous_fm|ambiguous_neutral|unambiguous_intra|unambiguous_extra|all");
  audit_cmd->add_option("--scorer", audit.scorer, "Scorer endpoint: mock:<model>|exec:<cmd>|unix:<path>")
      ->required();
  audit_cmd->add_option("--scale", audit.scale, "Override the declared scale, min:max:higher|lower");
  audit_cmd->add_option("--strategy", audit.strategy, "none|ctx|ctx-translated");
  audit_cmd->add_option("--separator", audit.separator, "Context/sentence separator");
  audit_cmd->add_option("--translator", audit.translator, "Translator endpoint for ctx-translated");
  audit_cmd->add_option("--bootstrap", audit.bootstrap, "Bootstrap resamples")->check(CLI::PositiveNumber);
  audit_cmd->add_option("--seed", audit.seed, "Bootstrap seed");
  audit_cmd->add_flag("--two-sided", audit.two_sided, "Two-sided bootstrap test for phi");
  audit_cmd->add_option("--threads", audit.threads, "Bootstrap threads (0 = all cores)");
  audit_cmd->add_option("--language-pair", audit.language_pair,
                        "Language pair for records that do not carry one, e.g. en-it");
  audit_cmd->add_option("--out", audit.out, "Output path (default stdout)");
  audit_cmd->add_option("--format", audit.format, "structured|csv_tables|markdown_tables");
  audit.endpoint.add(audit_cmd);
  audit.cache.add(audit_cmd);

  ValidateArgs validate;
  auto* validate_cmd = app.add_subcommand("validate", "Load and check a dataset");
  validate_cmd->add_option("--dataset", validate.dataset, "Dataset path")->required();
  validate_cmd->add_option("--schema", validate.schema, "native|mtgeneval|gate|mgente");
  validate_cmd->add_option("--condition", validate.condition, "Condition for multi-purpose layouts");
  validate_cmd->add_option("--language-pair", validate.language_pair, "Default language pair");
  validate_cmd->add_option("--write-native", validate.write_native_path,
                           "Also write the instances in the native format");

  FilterSimArgs filter;
  auto* filter_cmd = app.add_subcommand("filter-sim", "Per-gender retention under QE thresholds");
  filter_cmd->add_option("--threshold-grid", filter.grid, "lo:hi:step");
  filter_cmd->add_option("--scores", filter.scores_path, "Line-delimited {group, score} records");
  filter_cmd->add_option("--dataset", filter.dataset, "Dataset to score instead of --scores");
  filter_cmd->add_option("--schema", filter.schema, "Dataset schema");
  filter_cmd->add_option("--condition", filter.condition, "Condition filter");
  filter_cmd->add_option("--scorer", filter.scorer, "Scorer endpoint");
  filter_cmd->add_option("--scale", filter.scale, "Scale override");
  filter_cmd->add_option("--strategy", filter.strategy, "none|ctx");
  filter_cmd->add_option("--out", filter.out, "Output path");
  filter.endpoint.add(filter_cmd);
  filter.cache.add(filter_cmd);

  GtFilterArgs gt;
  auto* gt_cmd = app.add_subcommand("gt-filter", "Two-stage BLEU-banded filter of translated pairs");
  gt_cmd->add_option("--pairs", gt.pairs_path, "Line-delimited pair records")->required();
  gt_cmd->add_option("--out", gt.out, "Output path");

  QadArgs qad;
  auto* qad_cmd = app.add_subcommand("qad", "QE reranking of N-best lists and gender accounting");
  qad_cmd->add_option("--nbest", qad.nbest, "Line-delimited candidate sets")->required();
  qad_cmd->add_option("--scorer", qad.scorer, "Scorer endpoint (otherwise records carry scores)");
  qad_cmd->add_option("--scale", qad.scale, "Scale override");
  qad_cmd->add_flag("--fold-case", qad.fold_case, "Case-insensitive gender word matching");
  qad_cmd->add_option("--out", qad.out, "Output path");
  qad.endpoint.add(qad_cmd);
  qad.cache.add(qad_cmd);

  ParetoArgs pareto;
  auto* pareto_cmd = app.add_subcommand("pareto", "Pareto frontier over error rate and parity gap");
  pareto_cmd->add_option("--points", pareto.points_path, "Line-delimited {name, er_total, gap}");
  pareto_cmd->add_option("--report", pareto.reports, "Structured audit reports, one per metric");
  pareto_cmd->add_option("--panel", pareto.panel, "ambiguous|unambiguous gap for --report input");
  pareto_cmd->add_option("--format", pareto.format, "json|csv");
  pareto_cmd->add_option("--out", pareto.out, "Output path");

  ServeMockArgs serve;
  auto* serve_cmd = app.add_subcommand("serve-mock", "Run a mock scorer endpoint on stdio or a socket");
  serve_cmd->add_option("--model", serve.model, "constant:<v>|hash[:<salt>]|biased:<b>:<p>:<words>");
  serve_cmd->add_option("--order", serve.order, "in-order|reverse|shuffle");
  serve_cmd->add_option("--seed", serve.seed, "Shuffle seed");
  serve_cmd->add_option("--drop", serve.drop, "Request ids to leave unanswered");
  serve_cmd->add_flag("--inject-unknown", serve.inject_unknown, "Answer one id nobody asked for");
  serve_cmd->add_option("--socket", serve.socket, "Serve on this unix socket instead of stdio");
  serve_cmd->add_option("--max-connections", serve.max_connections, "Exit after this many clients");

  std::string prefix;
  auto* translator_cmd =
      app.add_subcommand("serve-mock-translator", "Run a mock translator endpoint on stdio");
  translator_cmd->add_option("--prefix", prefix, "Prepended to every text");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (*audit_cmd) return run_audit_cmd(audit);
    if (*validate_cmd) return run_validate_cmd(validate);
    if (*filter_cmd) return run_filter_sim_cmd(filter);
    if (*gt_cmd) return run_gt_filter_cmd(gt);
    if (*qad_cmd) return run_qad_cmd(qad);
    if (*pareto_cmd) return run_pareto_cmd(pareto);
    if (*serve_cmd) return run_serve_mock_cmd(serve);
    if (*translator_cmd) return run_serve_translator_cmd(prefix);
  } catch (const InputError& e) {
    std::cerr << "qe-bias: input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const EstimationError& e) {
    std::cerr << "qe-bias: " << e.what() << "\n";
    return kExitInput;
  } catch (const EndpointError& e) {
    std::cerr << "qe-bias: endpoint error: " << e.what() << "\n";
    return kExitEndpoint;
  } catch (const std::exception& e) {
    std::cerr << "qe-bias: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
