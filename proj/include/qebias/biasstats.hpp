#pragma once
// Bias statistics over normalized QE scores: per-instance score ratios with
// confidence intervals and one-sample t-tests, error rates with ties counted
// as errors, the feminine/masculine error-rate ratio (phi) and its paired
// bootstrap significance test.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qebias/corpus.hpp"

namespace qebias {

enum class Direction { below_one, above_one, at_one };

std::string_view to_string(Direction d);

struct RatioSummary {
  std::size_t n_used = 0;
  std::size_t n_excluded_zero_denominator = 0;
  double null_value = 1.0;
  // Absent when n_used == 0.
  std::optional<double> mean;
  std::optional<double> ci95_low;
  std::optional<double> ci95_high;
  std::optional<double> t_statistic;
  std::optional<double> t_p_value;
  Direction direction = Direction::at_one;

  bool operator==(const RatioSummary&) const = default;
};

// numerator / denominator, or nullopt (excluded) for a zero denominator.
std::optional<double> score_ratio(double numerator, double denominator);

// Mean, normal-approximation CI (mean +- 1.96 sd / sqrt(n)) and a two-sided
// one-sample t-test against null_value with n-1 degrees of freedom.
// Zero-variance samples get p = 1 at the null value and p = 0 elsewhere;
// a single observation gets a collapsed CI and p = 1. The result does not
// depend on the order of `ratios`.
RatioSummary aggregate_ratio(std::span<const double> ratios, double null_value = 1.0);
// Same, counting nullopt entries as zero-denominator exclusions.
RatioSummary aggregate_ratio(std::span<const std::optional<double>> ratios,
                             double null_value = 1.0);

// Two-sided p-value of a Student t statistic.
double student_t_two_sided_p(double t, double degrees_of_freedom);

enum class Judgment { correct, error, tie_error };

std::string_view to_string(Judgment j);

inline bool is_error(Judgment j) { return j != Judgment::correct; }

// Strict comparison: equal scores are a tie, and ties count as errors.
Judgment judge_instance(double score_correct, double score_incorrect);
// Same, requiring an unambiguous instance.
Judgment judge_instance(const EvaluationInstance& instance, double score_correct,
                        double score_incorrect);

struct GroupJudgment {
  Gender group;
  Judgment judgment;
};

struct GroupOutcome {
  Gender group = Gender::F;
  std::size_t n = 0;
  std::size_t errors = 0;
  std::size_t ties = 0;

  std::optional<double> error_rate() const;
  bool operator==(const GroupOutcome&) const = default;
};

struct ErrorRates {
  GroupOutcome f{Gender::F};
  GroupOutcome m{Gender::M};
  std::optional<double> er_total;
};

ErrorRates error_rates(std::span<const GroupJudgment> judgments);

struct PhiValue {
  enum class Kind { finite, undefined_balanced, undefined_infinite, undefined_no_data };
  Kind kind = Kind::undefined_no_data;
  double value = 0.0;  // meaningful for finite only

  bool operator==(const PhiValue&) const = default;
};

std::string_view to_string(PhiValue::Kind k);

// er_f / er_m. er_m = 0 yields undefined_balanced when er_f = 0 too and
// undefined_infinite otherwise. Missing rates yield undefined_no_data.
PhiValue phi(std::optional<double> er_f, std::optional<double> er_m);

struct BootstrapOptions {
  std::size_t resamples = 1000;
  std::uint64_t seed = 0;
  // Default: one-sided, H1 "feminine error rate higher" (p = share of
  // resamples with phi <= 1). Two-sided doubles the smaller tail.
  bool two_sided = false;
  // 0 picks the hardware concurrency.
  unsigned threads = 0;
};

struct BootstrapResult {
  double p_value = 1.0;
  PhiValue phi_point;
  std::size_t valid_resamples = 0;
  std::size_t skipped_resamples = 0;
};

// Resamples instances with replacement, each draw keeping an instance's
// group and judgment together. Resamples where phi is undefined (no
// masculine errors, or an empty group) are skipped and counted. Each
// resample uses its own generator stream derived from (seed, index), so
// the result is bit-for-bit reproducible regardless of thread count.
// Throws EstimationError("phi not estimable") when every resample is
// skipped, and InputError for resamples == 0.
BootstrapResult bootstrap_phi_test(std::span<const GroupJudgment> judgments,
                                   const BootstrapOptions& options);

std::optional<double> tie_rate(std::span<const Judgment> judgments);
std::optional<double> tie_rate(std::span<const GroupJudgment> judgments);

// Counter-based generator: SplitMix64 over a seed derived from (seed,
// stream). Bounded draws use rejection, so results are identical on every
// platform.
class StreamRng {
 public:
  StreamRng(std::uint64_t seed, std::uint64_t stream);
  std::uint64_t next();
  // Uniform in [0, bound).
  std::uint64_t below(std::uint64_t bound);

 private:
  std::uint64_t state_;
};

struct BiasSummary {
  // Unambiguous conditions.
  std::optional<double> er_total;
  std::optional<double> er_f;
  std::optional<double> er_m;
  GroupOutcome outcome_f{Gender::F};
  GroupOutcome outcome_m{Gender::M};
  PhiValue phi;
  std::optional<double> phi_p_value;
  std::size_t bootstrap_valid = 0;
  std::size_t bootstrap_skipped = 0;
  std::optional<double> tie_rate;
  // Ambiguous conditions.
  std::optional<RatioSummary> ratio;

  bool operator==(const BiasSummary&) const = default;
};

}  // namespace qebias
