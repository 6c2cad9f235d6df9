#pragma once
// Audit orchestration (corpus -> scoring -> statistics), report assembly,
// Pareto frontier over (error rate, gap from parity) and serialization.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qebias/biasstats.hpp"
#include "qebias/corpus.hpp"
#include "qebias/downstream.hpp"
#include "qebias/scoring.hpp"

namespace qebias {

struct AuditConfig {
  std::filesystem::path dataset;
  Schema schema = Schema::native;
  std::optional<Condition> condition;
  std::string scorer_endpoint;
  // Overrides the scale declared in the scorer handshake.
  std::optional<ScaleDescriptor> scale;
  ContextStrategy strategy;
  std::string translator_endpoint;
  std::size_t bootstrap_resamples = 1000;
  std::uint64_t seed = 0;
  bool two_sided_bootstrap = false;
  EndpointOptions endpoint;
  std::optional<std::filesystem::path> cache_path;
  LanguagePair default_language_pair{"en", "und"};
  unsigned threads = 0;
};

struct ReportMetadata {
  std::string scorer_name;
  std::string scorer_endpoint;
  std::string dataset;
  std::string schema;
  std::string condition;
  std::string strategy;
  std::string separator;
  std::string scale;
  std::uint64_t seed = 0;
  std::size_t bootstrap_resamples = 0;
  std::string bootstrap_test;
  std::string ratio_test = "two_sided_one_sample_t";
  std::string timestamp;

  bool operator==(const ReportMetadata&) const = default;
};

struct ReportCell {
  LanguagePair language_pair;
  Condition condition = Condition::ambiguous_fm;
  std::size_t instances = 0;
  BiasSummary summary;

  bool operator==(const ReportCell&) const = default;
};

// Unweighted mean of per-language cells for one condition.
struct CrossLanguageMean {
  Condition condition = Condition::ambiguous_fm;
  std::vector<std::string> languages;
  std::optional<double> ratio_mean;
  std::optional<double> er_total;
  std::optional<double> er_f;
  std::optional<double> er_m;
  // Mean over the cells with a finite phi; phi_cells says how many.
  std::optional<double> phi;
  std::size_t phi_cells = 0;
  std::optional<double> tie_rate;

  bool operator==(const CrossLanguageMean&) const = default;
};

struct QadBlock {
  std::string scorer_name;
  std::size_t candidate_sets = 0;
  DeltaM delta;

  bool operator==(const QadBlock&) const = default;
};

struct AuditReport {
  ReportMetadata metadata;
  std::vector<ReportCell> cells;
  std::vector<CrossLanguageMean> means;
  std::optional<RetentionCurve> retention;
  std::optional<QadBlock> qad;
  std::size_t excluded_zero_denominator = 0;
  std::size_t clamped_scores = 0;
  std::size_t skipped_instances = 0;
  std::size_t load_warnings = 0;
  std::size_t cache_hits = 0;
  std::size_t scored_requests = 0;

  bool operator==(const AuditReport&) const = default;
};

// Scores every (instance, variant) pair through the cache, judges, and
// aggregates one cell per (language pair, condition). Errors from each
// stage are rethrown with the stage named.
AuditReport run_audit(const AuditConfig& config);

// Same, over already-loaded instances and open endpoints.
AuditReport run_audit(const AuditConfig& config, std::span<const EvaluationInstance> instances,
                      ScorerClient& scorer, TranslatorClient* translator = nullptr,
                      ScoreCache* cache = nullptr);

// Statistics for one cell from the normalized scores of each instance's two
// variants (in variant_labels() order).
BiasSummary summarize_cell(std::span<const EvaluationInstance> instances,
                           std::span<const std::pair<double, double>> scores,
                           const BootstrapOptions& bootstrap);

std::vector<CrossLanguageMean> cross_language_means(std::span<const ReportCell> cells);

struct ParetoInput {
  std::string name;
  double er_total = 0.0;
  double gap = 0.0;
};

struct ParetoPoint {
  std::string metric_name;
  double er_total = 0.0;
  double gap = 0.0;
  bool on_frontier = false;
};

// |1 - value| for a ratio or phi.
double gap_from_parity(double value);

// Flags points not strictly dominated (another point <= on both axes and
// < on one). Order is preserved; duplicates are both on the frontier.
std::vector<ParetoPoint> pareto_points(std::span<const ParetoInput> points);

enum class ReportFormat { structured, csv_tables, markdown_tables };

ReportFormat parse_report_format(std::string_view text);

std::string emit(const AuditReport& report, ReportFormat format);
AuditReport parse_structured_report(std::string_view text);

// Column names of the markdown table for a condition.
std::vector<std::string> markdown_columns(Condition condition);

std::string utc_timestamp();

}  // namespace qebias
