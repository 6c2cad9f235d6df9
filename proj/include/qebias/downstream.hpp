#pragma once
// Downstream uses of a QE scorer: threshold filtering with per-gender
// retention, a two-stage BLEU-banded filter for machine translations of
// counterfactual pairs, and N-best reranking with gender-representation
// accounting.

#include <array>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qebias/corpus.hpp"

namespace qebias {

struct RetentionCurve {
  std::vector<double> thresholds;
  std::map<std::string, std::vector<double>> retained_fraction_by_group;
  // retained(M) - retained(F) per threshold; empty unless both groups exist.
  std::vector<double> gap;

  bool operator==(const RetentionCurve&) const = default;
};

// Share of each group's scores with score >= threshold. Thresholds must be
// ascending; throws InputError naming any empty group.
RetentionCurve retention_curve(const std::map<std::string, std::vector<double>>& scores_by_group,
                               std::span<const double> thresholds);

// "lo:hi:step" inclusive of both ends (up to rounding).
std::vector<double> parse_threshold_grid(std::string_view spec);

// Sentence BLEU-4 on the harness tokenization, uniform weights, brevity
// penalty exp(1 - r/c) when c < r, add-one smoothing on the 2..4-gram
// precisions. Result in [0, 100].
double sentence_bleu(std::string_view hypothesis, std::string_view reference);

enum class QualityBand { Poor, Fair, Good, VeryGood, Excellent };

inline constexpr std::array<QualityBand, 5> kAllBands{QualityBand::Poor, QualityBand::Fair,
                                                      QualityBand::Good, QualityBand::VeryGood,
                                                      QualityBand::Excellent};

std::string_view to_string(QualityBand b);

// Lower-inclusive partition: Poor [0,20), Fair [20,30), Good [30,40),
// VeryGood [40,50), Excellent [50,100]. Values outside [0,100] are clamped.
QualityBand quality_band(double bleu);

struct WilcoxonResult {
  double p_value = 1.0;
  double w_plus = 0.0;
  std::size_t effective_n = 0;
  bool exact = true;
  // All differences were zero; p is 1 by convention.
  bool degenerate = false;
};

inline constexpr std::size_t kWilcoxonExactLimit = 25;

// Two-sided signed-rank test on a - b. Zero differences are dropped, tied
// magnitudes get average ranks, the null distribution is exact up to
// kWilcoxonExactLimit non-zero pairs and normal (tie-corrected, with
// continuity correction) above.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> paired_a,
                                    std::span<const double> paired_b);

struct GtPair {
  std::string id;
  std::string reference_f;
  std::string reference_m;
  std::string translation_f;
  std::string translation_m;
  bool inflection_ok_f = true;
  bool inflection_ok_m = true;
};

struct BandStats {
  // Sides passing their own inflection check whose BLEU falls in the band.
  std::size_t stage1_f = 0;
  std::size_t stage1_m = 0;
  // Pairs retained in the band after both stages.
  std::size_t stage2 = 0;
  std::optional<double> wilcoxon_p;
};

struct FilterStats {
  std::size_t input_pairs = 0;
  std::size_t dropped_inflection = 0;
  std::size_t dropped_band_mismatch = 0;
  std::map<QualityBand, BandStats> bands;

  std::size_t stage1_total_f() const;
  std::size_t stage1_total_m() const;
  std::size_t stage2_total() const;
};

struct RetainedPair {
  GtPair pair;
  double bleu_f = 0.0;
  double bleu_m = 0.0;
  QualityBand band = QualityBand::Poor;
};

struct GtFilterResult {
  std::vector<RetainedPair> retained;
  FilterStats stats;
};

// Stage 1 drops pairs with a failed inflection flag on either side; stage 2
// keeps pairs whose two translations fall in the same BLEU band and runs a
// Wilcoxon test on the retained F/M BLEU within each band.
GtFilterResult gt_filter(std::span<const GtPair> pairs);

struct CandidateSet {
  std::string instance_id;
  std::optional<std::string> source;
  std::vector<std::string> candidates;
  std::vector<double> scores;
  std::set<std::string> f_unique_words;
  std::set<std::string> m_unique_words;
};

struct RerankChoice {
  std::size_t best_index = 0;
  std::string best_hypothesis;
};

// Argmax of scores; ties go to the lowest index.
RerankChoice rerank(const CandidateSet& set);

enum class GenderMatch { F, M, both, none };

std::string_view to_string(GenderMatch g);

// Token containment of the tokenized hypothesis against the unique-word
// sets. With fold_case, tokens and set entries are compared case-folded.
GenderMatch gender_match(std::string_view hypothesis, const std::set<std::string>& f_unique,
                         const std::set<std::string>& m_unique, bool fold_case = false);

struct DeltaM {
  // 100 * (count_f - count_m) / n.
  double percentage_points = 0.0;
  std::size_t count_f = 0;
  std::size_t count_m = 0;
  std::size_t count_both = 0;
  std::size_t count_none = 0;
  std::size_t n = 0;
  // Raw count difference count_f - count_m.
  long long raw_difference() const {
    return static_cast<long long>(count_f) - static_cast<long long>(count_m);
  }
  bool operator==(const DeltaM&) const = default;
};

// Throws InputError for an empty list.
DeltaM delta_m(std::span<const GenderMatch> labels);

struct UniqueWords {
  std::set<std::string> f_unique;
  std::set<std::string> m_unique;
};

UniqueWords unique_word_sets(std::string_view h_f, std::string_view h_m);

// N-best input records: {instance_id, candidates[], h_f, h_m} with optional
// source, scores[], f_unique[] and m_unique[]. Annotated unique words take
// precedence over the reference set difference.
std::vector<CandidateSet> load_candidate_sets(std::istream& in);

}  // namespace qebias
