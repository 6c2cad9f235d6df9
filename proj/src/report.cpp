#include "qebias/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ctime>
#include <map>
#include <sstream>

#include <json.hpp>

#include "qebias/errors.hpp"
#include "qebias/mock.hpp"

namespace qebias {

using nlohmann::json;
using nlohmann::ordered_json;

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

BiasSummary summarize_cell(std::span<const EvaluationInstance> instances,
                           std::span<const std::pair<double, double>> scores,
                           const BootstrapOptions& bootstrap) {
  if (instances.size() != scores.size()) throw InputError("summarize_cell: size mismatch");
  BiasSummary s;
  if (instances.empty()) return s;
  const auto condition = instances.front().condition;

  if (is_ambiguous(condition)) {
    std::vector<std::optional<double>> ratios;
    ratios.reserve(scores.size());
    for (const auto& [num, den] : scores) ratios.push_back(score_ratio(num, den));
    s.ratio = aggregate_ratio(std::span<const std::optional<double>>(ratios));
    return s;
  }

  const auto [first, second] = variant_labels(condition);
  std::vector<GroupJudgment> judgments;
  judgments.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    const bool correct_is_first = *inst.correct_variant == first;
    const double correct = correct_is_first ? scores[i].first : scores[i].second;
    const double incorrect = correct_is_first ? scores[i].second : scores[i].first;
    judgments.push_back({*inst.source_group, judge_instance(inst, correct, incorrect)});
  }
  (void)second;
  const auto rates = error_rates(judgments);
  s.outcome_f = rates.f;
  s.outcome_m = rates.m;
  s.er_total = rates.er_total;
  s.er_f = rates.f.error_rate();
  s.er_m = rates.m.error_rate();
  s.phi = phi(s.er_f, s.er_m);
  s.tie_rate = tie_rate(std::span<const GroupJudgment>(judgments));
  try {
    const auto boot = bootstrap_phi_test(judgments, bootstrap);
    s.phi_p_value = boot.p_value;
    s.bootstrap_valid = boot.valid_resamples;
    s.bootstrap_skipped = boot.skipped_resamples;
  } catch (const EstimationError&) {
    s.bootstrap_valid = 0;
    s.bootstrap_skipped = bootstrap.resamples;
  }
  return s;
}

namespace {

std::optional<double> mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

template <typename Fn>
auto in_stage(const char* stage, Fn&& fn) {
  try {
    return fn();
  } catch (const InputError& e) {
    throw InputError(std::string(stage) + ": " + e.what());
  } catch (const EndpointError& e) {
    throw EndpointError(std::string(stage) + ": " + e.what());
  }
}

}  // namespace

std::vector<CrossLanguageMean> cross_language_means(std::span<const ReportCell> cells) {
  std::map<Condition, std::vector<const ReportCell*>> by_condition;
  for (const auto& c : cells) by_condition[c.condition].push_back(&c);
  std::vector<CrossLanguageMean> out;
  for (const auto& [condition, group] : by_condition) {
    CrossLanguageMean m;
    m.condition = condition;
    std::vector<double> ratio, er, er_f, er_m, phis, ties;
    for (const auto* c : group) {
      m.languages.push_back(c->language_pair.str());
      const auto& s = c->summary;
      if (s.ratio && s.ratio->mean) ratio.push_back(*s.ratio->mean);
      if (s.er_total) er.push_back(*s.er_total);
      if (s.er_f) er_f.push_back(*s.er_f);
      if (s.er_m) er_m.push_back(*s.er_m);
      if (s.phi.kind == PhiValue::Kind::finite) phis.push_back(s.phi.value);
      if (s.tie_rate) ties.push_back(*s.tie_rate);
    }
    m.ratio_mean = mean_of(ratio);
    m.er_total = mean_of(er);
    m.er_f = mean_of(er_f);
    m.er_m = mean_of(er_m);
    m.phi = mean_of(phis);
    m.phi_cells = phis.size();
    m.tie_rate = mean_of(ties);
    out.push_back(std::move(m));
  }
  return out;
}

AuditReport run_audit(const AuditConfig& config, std::span<const EvaluationInstance> all,
                      ScorerClient& scorer, TranslatorClient* translator, ScoreCache* cache) {
  AuditReport report;
  auto& meta = report.metadata;
  meta.scorer_name = scorer.info().name;
  meta.scorer_endpoint = config.scorer_endpoint;
  meta.dataset = config.dataset.string();
  meta.schema = std::string(to_string(config.schema));
  meta.condition = config.condition ? std::string(to_string(*config.condition)) : "all";
  meta.strategy = std::string(to_string(config.strategy.kind));
  meta.separator = config.strategy.separator;
  const auto scale = config.scale.value_or(scorer.info().scale);
  meta.scale = scale.str();
  meta.seed = config.seed;
  meta.bootstrap_resamples = config.bootstrap_resamples;
  meta.bootstrap_test = config.two_sided_bootstrap ? "two_sided" : "one_sided_f_higher";
  meta.timestamp = utc_timestamp();

  std::vector<EvaluationInstance> instances;
  for (const auto& inst : all) {
    if (config.condition && inst.condition != *config.condition) {
      ++report.skipped_instances;
      continue;
    }
    instances.push_back(inst);
  }

  if (config.strategy.kind == ContextKind::concat_translated_context) {
    if (translator == nullptr) {
      throw InputError("translate: strategy ctx-translated needs a translator endpoint");
    }
    in_stage("translate", [&] {
      std::map<std::string, std::vector<std::string>> contexts_by_language;
      for (const auto& inst : instances) {
        if (inst.context) contexts_by_language[inst.language_pair.target].push_back(*inst.context);
      }
      for (const auto& [lang, texts] : contexts_by_language) translator->translate_batch(texts, lang);
      return 0;
    });
  }

  std::vector<ScoreRequest> requests;
  requests.reserve(instances.size() * 2);
  in_stage("build inputs", [&] {
    for (const auto& inst : instances) {
      const auto [first, second] = variant_labels(inst.condition);
      requests.push_back(build_scored_inputs(inst, first, config.strategy, translator));
      requests.push_back(build_scored_inputs(inst, second, config.strategy, translator));
    }
    return 0;
  });

  const auto scored =
      in_stage("scoring", [&] { return score_with_cache(scorer, cache, requests, scale); });
  report.cache_hits = scored.cache_hits;
  report.scored_requests = scored.scored;
  report.clamped_scores = scored.clamped;

  std::map<std::pair<LanguagePair, Condition>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    cells[{instances[i].language_pair, instances[i].condition}].push_back(i);
  }
  BootstrapOptions boot;
  boot.resamples = config.bootstrap_resamples;
  boot.seed = config.seed;
  boot.two_sided = config.two_sided_bootstrap;
  boot.threads = config.threads;
  for (const auto& [key, members] : cells) {
    std::vector<EvaluationInstance> cell_instances;
    std::vector<std::pair<double, double>> cell_scores;
    for (const auto i : members) {
      cell_instances.push_back(instances[i]);
      cell_scores.emplace_back(scored.records[2 * i].normalized,
                               scored.records[2 * i + 1].normalized);
    }
    ReportCell cell;
    cell.language_pair = key.first;
    cell.condition = key.second;
    cell.instances = members.size();
    cell.summary = summarize_cell(cell_instances, cell_scores, boot);
    if (cell.summary.ratio) {
      report.excluded_zero_denominator += cell.summary.ratio->n_excluded_zero_denominator;
    }
    report.cells.push_back(std::move(cell));
  }
  report.means = cross_language_means(report.cells);
  return report;
}

AuditReport run_audit(const AuditConfig& config) {
  LoadOptions options;
  options.condition = config.condition;
  options.default_language_pair = config.default_language_pair;
  const auto loaded =
      in_stage("load", [&] { return load_dataset(config.dataset, config.schema, options); });

  auto scorer = in_stage("scorer", [&] {
    return std::make_unique<ScorerClient>(open_scorer_channel(config.scorer_endpoint),
                                          config.endpoint);
  });
  std::unique_ptr<TranslatorClient> translator;
  if (config.strategy.kind == ContextKind::concat_translated_context) {
    if (config.translator_endpoint.empty()) {
      throw InputError("translate: strategy ctx-translated needs --translator");
    }
    translator = in_stage("translator", [&] {
      return std::make_unique<TranslatorClient>(open_translator_channel(config.translator_endpoint),
                                                config.endpoint);
    });
  }
  std::optional<ScoreCache> cache;
  if (config.cache_path) cache.emplace(*config.cache_path);

  auto report = run_audit(config, loaded.instances, *scorer, translator.get(),
                          cache ? &*cache : nullptr);
  report.skipped_instances += loaded.skipped_rows;
  report.load_warnings = loaded.warnings.size();
  if (cache) cache->save();
  return report;
}

double gap_from_parity(double value) { return std::fabs(1.0 - value); }

std::vector<ParetoPoint> pareto_points(std::span<const ParetoInput> points) {
  std::vector<ParetoPoint> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    if (p.gap < 0.0) throw InputError("pareto point '" + p.name + "' has a negative gap");
  }
  for (const auto& p : points) {
    bool dominated = false;
    for (const auto& q : points) {
      if (q.er_total <= p.er_total && q.gap <= p.gap &&
          (q.er_total < p.er_total || q.gap < p.gap)) {
        dominated = true;
        break;
      }
    }
    out.push_back({p.name, p.er_total, p.gap, !dominated});
  }
  return out;
}

ReportFormat parse_report_format(std::string_view text) {
  if (text == "structured" || text == "json") return ReportFormat::structured;
  if (text == "csv_tables" || text == "csv") return ReportFormat::csv_tables;
  if (text == "markdown_tables" || text == "markdown" || text == "md") {
    return ReportFormat::markdown_tables;
  }
  throw InputError("unknown report format '" + std::string(text) + "'");
}

std::vector<std::string> markdown_columns(Condition condition) {
  if (is_ambiguous(condition)) return {"Metric", "Ratio", "CI95", "p", "Excluded"};
  return {"Metric", "ER", "Φ", "tie_rate", "p"};
}

// --- serialization -------------------------------------------------------

namespace {

ordered_json opt(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::optional<double> get_opt(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

ordered_json outcome_json(const GroupOutcome& g) {
  return {{"group", to_string(g.group)}, {"n", g.n}, {"errors", g.errors}, {"ties", g.ties}};
}

GroupOutcome outcome_from(const json& j) {
  GroupOutcome g;
  g.group = parse_gender(j.at("group").get<std::string>());
  g.n = j.at("n").get<std::size_t>();
  g.errors = j.at("errors").get<std::size_t>();
  g.ties = j.at("ties").get<std::size_t>();
  return g;
}

PhiValue::Kind parse_phi_kind(std::string_view text) {
  for (auto k : {PhiValue::Kind::finite, PhiValue::Kind::undefined_balanced,
                 PhiValue::Kind::undefined_infinite, PhiValue::Kind::undefined_no_data}) {
    if (text == to_string(k)) return k;
  }
  throw InputError("unknown phi kind '" + std::string(text) + "'");
}

Direction parse_direction(std::string_view text) {
  for (auto d : {Direction::below_one, Direction::above_one, Direction::at_one}) {
    if (text == to_string(d)) return d;
  }
  throw InputError("unknown direction '" + std::string(text) + "'");
}

ordered_json summary_json(const BiasSummary& s) {
  ordered_json j;
  j["er_total"] = opt(s.er_total);
  j["er_f"] = opt(s.er_f);
  j["er_m"] = opt(s.er_m);
  j["outcome_f"] = outcome_json(s.outcome_f);
  j["outcome_m"] = outcome_json(s.outcome_m);
  j["phi"] = {{"kind", to_string(s.phi.kind)}, {"value", s.phi.value}};
  j["phi_p_value"] = opt(s.phi_p_value);
  j["bootstrap_valid"] = s.bootstrap_valid;
  j["bootstrap_skipped"] = s.bootstrap_skipped;
  j["tie_rate"] = opt(s.tie_rate);
  if (s.ratio) {
    const auto& r = *s.ratio;
    j["ratio"] = {{"n_used", r.n_used},
                  {"n_excluded_zero_denominator", r.n_excluded_zero_denominator},
                  {"null_value", r.null_value},
                  {"mean", opt(r.mean)},
                  {"ci95_low", opt(r.ci95_low)},
                  {"ci95_high", opt(r.ci95_high)},
                  {"t_statistic", opt(r.t_statistic)},
                  {"t_p_value", opt(r.t_p_value)},
                  {"direction", to_string(r.direction)}};
  } else {
    j["ratio"] = nullptr;
  }
  return j;
}

BiasSummary summary_from(const json& j) {
  BiasSummary s;
  s.er_total = get_opt(j, "er_total");
  s.er_f = get_opt(j, "er_f");
  s.er_m = get_opt(j, "er_m");
  s.outcome_f = outcome_from(j.at("outcome_f"));
  s.outcome_m = outcome_from(j.at("outcome_m"));
  s.phi.kind = parse_phi_kind(j.at("phi").at("kind").get<std::string>());
  s.phi.value = j.at("phi").at("value").get<double>();
  s.phi_p_value = get_opt(j, "phi_p_value");
  s.bootstrap_valid = j.at("bootstrap_valid").get<std::size_t>();
  s.bootstrap_skipped = j.at("bootstrap_skipped").get<std::size_t>();
  s.tie_rate = get_opt(j, "tie_rate");
  if (const auto& r = j.at("ratio"); !r.is_null()) {
    RatioSummary rs;
    rs.n_used = r.at("n_used").get<std::size_t>();
    rs.n_excluded_zero_denominator = r.at("n_excluded_zero_denominator").get<std::size_t>();
    rs.null_value = r.at("null_value").get<double>();
    rs.mean = get_opt(r, "mean");
    rs.ci95_low = get_opt(r, "ci95_low");
    rs.ci95_high = get_opt(r, "ci95_high");
    rs.t_statistic = get_opt(r, "t_statistic");
    rs.t_p_value = get_opt(r, "t_p_value");
    rs.direction = parse_direction(r.at("direction").get<std::string>());
    s.ratio = rs;
  }
  return s;
}

ordered_json report_json(const AuditReport& r) {
  ordered_json j;
  const auto& m = r.metadata;
  j["metadata"] = {{"scorer_name", m.scorer_name},
                   {"scorer_endpoint", m.scorer_endpoint},
                   {"dataset", m.dataset},
                   {"schema", m.schema},
                   {"condition", m.condition},
                   {"strategy", m.strategy},
                   {"separator", m.separator},
                   {"scale", m.scale},
                   {"seed", m.seed},
                   {"bootstrap_resamples", m.bootstrap_resamples},
                   {"bootstrap_test", m.bootstrap_test},
                   {"ratio_test", m.ratio_test},
                   {"timestamp", m.timestamp}};
  ordered_json cells = ordered_json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"language_pair", c.language_pair.str()},
                     {"condition", to_string(c.condition)},
                     {"instances", c.instances},
                     {"summary", summary_json(c.summary)}});
  }
  j["cells"] = std::move(cells);
  ordered_json means = ordered_json::array();
  for (const auto& mean : r.means) {
    means.push_back({{"condition", to_string(mean.condition)},
                     {"languages", mean.languages},
                     {"ratio_mean", opt(mean.ratio_mean)},
                     {"er_total", opt(mean.er_total)},
                     {"er_f", opt(mean.er_f)},
                     {"er_m", opt(mean.er_m)},
                     {"phi", opt(mean.phi)},
                     {"phi_cells", mean.phi_cells},
                     {"tie_rate", opt(mean.tie_rate)}});
  }
  j["means"] = std::move(means);
  if (r.retention) {
    j["retention"] = {{"thresholds", r.retention->thresholds},
                      {"retained_fraction_by_group", r.retention->retained_fraction_by_group},
                      {"gap", r.retention->gap}};
  } else {
    j["retention"] = nullptr;
  }
  if (r.qad) {
    const auto& d = r.qad->delta;
    j["qad"] = {{"scorer_name", r.qad->scorer_name},
                {"candidate_sets", r.qad->candidate_sets},
                {"delta_m", d.percentage_points},
                {"delta_m_raw", d.raw_difference()},
                {"count_f", d.count_f},
                {"count_m", d.count_m},
                {"count_both", d.count_both},
                {"count_none", d.count_none},
                {"n", d.n}};
  } else {
    j["qad"] = nullptr;
  }
  j["counts"] = {{"excluded_zero_denominator", r.excluded_zero_denominator},
                 {"clamped_scores", r.clamped_scores},
                 {"skipped_instances", r.skipped_instances},
                 {"load_warnings", r.load_warnings},
                 {"cache_hits", r.cache_hits},
                 {"scored_requests", r.scored_requests}};
  return j;
}

std::string fmt_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ec == std::errc() ? ptr : buf);
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_double(*v) : ""; }

std::string fixed(double v, int digits) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(digits);
  out << v;
  return out.str();
}

std::string fixed_opt(const std::optional<double>& v, int digits) {
  return v ? fixed(*v, digits) : "n/a";
}

std::string phi_text(const PhiValue& p) {
  switch (p.kind) {
    case PhiValue::Kind::finite: return fixed(p.value, 2);
    case PhiValue::Kind::undefined_infinite: return "∞";
    case PhiValue::Kind::undefined_balanced: return "n/a (0/0)";
    case PhiValue::Kind::undefined_no_data: return "n/a";
  }
  return "n/a";
}

std::string csv_cells(const AuditReport& r) {
  std::ostringstream out;
  out << "scorer,language_pair,condition,instances,ratio_mean,ratio_ci95_low,ratio_ci95_high,"
         "ratio_p,ratio_direction,excluded_zero_denominator,er_total,er_f,er_m,phi,phi_kind,"
         "phi_p,tie_rate,n_f,n_m\n";
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  for (const auto& c : r.cells) {
    const auto& s = c.summary;
    const auto* ratio = s.ratio ? &*s.ratio : nullptr;
    out << quote(r.metadata.scorer_name) << ',' << c.language_pair.str() << ','
        << to_string(c.condition) << ',' << c.instances << ','
        << (ratio ? fmt_opt(ratio->mean) : "") << ',' << (ratio ? fmt_opt(ratio->ci95_low) : "")
        << ',' << (ratio ? fmt_opt(ratio->ci95_high) : "") << ','
        << (ratio ? fmt_opt(ratio->t_p_value) : "") << ','
        << (ratio ? std::string(to_string(ratio->direction)) : "") << ','
        << (ratio ? std::to_string(ratio->n_excluded_zero_denominator) : "") << ','
        << fmt_opt(s.er_total) << ',' << fmt_opt(s.er_f) << ',' << fmt_opt(s.er_m) << ','
        << (s.phi.kind == PhiValue::Kind::finite ? fmt_double(s.phi.value) : "") << ','
        << to_string(s.phi.kind) << ',' << fmt_opt(s.phi_p_value) << ',' << fmt_opt(s.tie_rate)
        << ',' << s.outcome_f.n << ',' << s.outcome_m.n << '\n';
  }
  return out.str();
}

void markdown_table(std::ostringstream& out, Condition condition,
                    const std::vector<std::vector<std::string>>& rows) {
  const auto cols = markdown_columns(condition);
  out << '|';
  for (const auto& c : cols) out << ' ' << c << " |";
  out << "\n|";
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i == 0 ? " --- |" : " ---: |");
  out << '\n';
  for (const auto& row : rows) {
    out << '|';
    for (const auto& v : row) out << ' ' << v << " |";
    out << '\n';
  }
  out << '\n';
}

std::vector<std::string> markdown_row(const std::string& metric, Condition condition,
                                      const BiasSummary& s) {
  if (is_ambiguous(condition)) {
    const auto& r = s.ratio;
    std::string ci = "n/a";
    if (r && r->ci95_low && r->ci95_high) {
      ci = "[" + fixed(*r->ci95_low, 3) + ", " + fixed(*r->ci95_high, 3) + "]";
    }
    return {metric, r ? fixed_opt(r->mean, 3) : "n/a", ci, r ? fixed_opt(r->t_p_value, 3) : "n/a",
            r ? std::to_string(r->n_excluded_zero_denominator) : "0"};
  }
  return {metric, fixed_opt(s.er_total, 2), phi_text(s.phi), fixed_opt(s.tie_rate, 2),
          fixed_opt(s.phi_p_value, 3)};
}

std::string markdown(const AuditReport& r) {
  std::ostringstream out;
  const auto& m = r.metadata;
  out << "# QE gender bias audit: " << m.scorer_name << "\n\n";
  out << "dataset `" << m.dataset << "` (" << m.schema << "), strategy " << m.strategy
      << ", scale " << m.scale << ", seed " << m.seed << ", bootstrap " << m.bootstrap_resamples
      << " (" << m.bootstrap_test << ")\n\n";
  for (const auto& c : r.cells) {
    out << "## " << c.language_pair.str() << " · " << to_string(c.condition) << " (n="
        << c.instances << ")\n\n";
    markdown_table(out, c.condition, {markdown_row(m.scorer_name, c.condition, c.summary)});
  }
  for (const auto& mean : r.means) {
    out << "## Mean across languages · " << to_string(mean.condition) << " (";
    for (std::size_t i = 0; i < mean.languages.size(); ++i) {
      out << (i ? ", " : "") << mean.languages[i];
    }
    out << ")\n\n";
    std::vector<std::string> row;
    if (is_ambiguous(mean.condition)) {
      row = {m.scorer_name, fixed_opt(mean.ratio_mean, 3), "n/a", "n/a", "-"};
    } else {
      row = {m.scorer_name, fixed_opt(mean.er_total, 2), fixed_opt(mean.phi, 2),
             fixed_opt(mean.tie_rate, 2), "n/a"};
    }
    markdown_table(out, mean.condition, {row});
  }
  return out.str();
}

}  // namespace

std::string emit(const AuditReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::structured: return report_json(report).dump(2) + "\n";
    case ReportFormat::csv_tables: return csv_cells(report);
    case ReportFormat::markdown_tables: return markdown(report);
  }
  throw InputError("unknown report format");
}

AuditReport parse_structured_report(std::string_view text) {
  AuditReport r;
  try {
    const auto j = json::parse(text);
    const auto& m = j.at("metadata");
    auto& meta = r.metadata;
    meta.scorer_name = m.at("scorer_name").get<std::string>();
    meta.scorer_endpoint = m.at("scorer_endpoint").get<std::string>();
    meta.dataset = m.at("dataset").get<std::string>();
    meta.schema = m.at("schema").get<std::string>();
    meta.condition = m.at("condition").get<std::string>();
    meta.strategy = m.at("strategy").get<std::string>();
    meta.separator = m.at("separator").get<std::string>();
    meta.scale = m.at("scale").get<std::string>();
    meta.seed = m.at("seed").get<std::uint64_t>();
    meta.bootstrap_resamples = m.at("bootstrap_resamples").get<std::size_t>();
    meta.bootstrap_test = m.at("bootstrap_test").get<std::string>();
    meta.ratio_test = m.at("ratio_test").get<std::string>();
    meta.timestamp = m.at("timestamp").get<std::string>();
    for (const auto& c : j.at("cells")) {
      ReportCell cell;
      cell.language_pair = LanguagePair::parse(c.at("language_pair").get<std::string>());
      cell.condition = parse_condition(c.at("condition").get<std::string>());
      cell.instances = c.at("instances").get<std::size_t>();
      cell.summary = summary_from(c.at("summary"));
      r.cells.push_back(std::move(cell));
    }
    for (const auto& mj : j.at("means")) {
      CrossLanguageMean mean;
      mean.condition = parse_condition(mj.at("condition").get<std::string>());
      mean.languages = mj.at("languages").get<std::vector<std::string>>();
      mean.ratio_mean = get_opt(mj, "ratio_mean");
      mean.er_total = get_opt(mj, "er_total");
      mean.er_f = get_opt(mj, "er_f");
      mean.er_m = get_opt(mj, "er_m");
      mean.phi = get_opt(mj, "phi");
      mean.phi_cells = mj.at("phi_cells").get<std::size_t>();
      mean.tie_rate = get_opt(mj, "tie_rate");
      r.means.push_back(std::move(mean));
    }
    if (const auto& ret = j.at("retention"); !ret.is_null()) {
      RetentionCurve curve;
      curve.thresholds = ret.at("thresholds").get<std::vector<double>>();
      curve.retained_fraction_by_group =
          ret.at("retained_fraction_by_group").get<std::map<std::string, std::vector<double>>>();
      curve.gap = ret.at("gap").get<std::vector<double>>();
      r.retention = std::move(curve);
    }
    if (const auto& q = j.at("qad"); !q.is_null()) {
      QadBlock qad;
      qad.scorer_name = q.at("scorer_name").get<std::string>();
      qad.candidate_sets = q.at("candidate_sets").get<std::size_t>();
      qad.delta.percentage_points = q.at("delta_m").get<double>();
      qad.delta.count_f = q.at("count_f").get<std::size_t>();
      qad.delta.count_m = q.at("count_m").get<std::size_t>();
      qad.delta.count_both = q.at("count_both").get<std::size_t>();
      qad.delta.count_none = q.at("count_none").get<std::size_t>();
      qad.delta.n = q.at("n").get<std::size_t>();
      r.qad = qad;
    }
    const auto& counts = j.at("counts");
    r.excluded_zero_denominator = counts.at("excluded_zero_denominator").get<std::size_t>();
    r.clamped_scores = counts.at("clamped_scores").get<std::size_t>();
    r.skipped_instances = counts.at("skipped_instances").get<std::size_t>();
    r.load_warnings = counts.at("load_warnings").get<std::size_t>();
    r.cache_hits = counts.at("cache_hits").get<std::size_t>();
    r.scored_requests = counts.at("scored_requests").get<std::size_t>();
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed structured report: ") + e.what());
  }
  return r;
}

}  // namespace qebias
