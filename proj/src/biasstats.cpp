#include "qebias/biasstats.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "qebias/errors.hpp"

namespace qebias {

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::below_one: return "below_one";
    case Direction::above_one: return "above_one";
    case Direction::at_one: return "at_one";
  }
  return "?";
}

std::string_view to_string(Judgment j) {
  switch (j) {
    case Judgment::correct: return "correct";
    case Judgment::error: return "error";
    case Judgment::tie_error: return "tie_error";
  }
  return "?";
}

std::string_view to_string(PhiValue::Kind k) {
  switch (k) {
    case PhiValue::Kind::finite: return "finite";
    case PhiValue::Kind::undefined_balanced: return "undefined_balanced";
    case PhiValue::Kind::undefined_infinite: return "undefined_infinite";
    case PhiValue::Kind::undefined_no_data: return "undefined_no_data";
  }
  return "?";
}

std::optional<double> score_ratio(double numerator, double denominator) {
  if (denominator == 0.0) return std::nullopt;
  return numerator / denominator;
}

double student_t_two_sided_p(double t, double degrees_of_freedom) {
  const boost::math::students_t dist(degrees_of_freedom);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
  return std::min(1.0, p);
}

RatioSummary aggregate_ratio(std::span<const double> ratios, double null_value) {
  RatioSummary s;
  s.null_value = null_value;
  s.n_used = ratios.size();
  if (ratios.empty()) return s;

  // Sorted accumulation makes the result permutation invariant.
  std::vector<double> xs(ratios.begin(), ratios.end());
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);

  s.mean = mean;
  s.direction = mean < null_value   ? Direction::below_one
                : mean > null_value ? Direction::above_one
                                    : Direction::at_one;
  if (xs.size() < 2) {
    s.ci95_low = s.ci95_high = mean;
    s.t_p_value = 1.0;
    return s;
  }
  const double sd = std::sqrt(ss / (n - 1.0));
  const double se = sd / std::sqrt(n);
  s.ci95_low = mean - 1.96 * se;
  s.ci95_high = mean + 1.96 * se;
  if (se == 0.0) {
    s.t_p_value = mean == null_value ? 1.0 : 0.0;
    return s;
  }
  const double t = (mean - null_value) / se;
  s.t_statistic = t;
  s.t_p_value = student_t_two_sided_p(t, n - 1.0);
  return s;
}

RatioSummary aggregate_ratio(std::span<const std::optional<double>> ratios, double null_value) {
  std::vector<double> used;
  used.reserve(ratios.size());
  for (const auto& r : ratios) {
    if (r) used.push_back(*r);
  }
  auto s = aggregate_ratio(std::span<const double>(used), null_value);
  s.n_excluded_zero_denominator = ratios.size() - used.size();
  return s;
}

Judgment judge_instance(double score_correct, double score_incorrect) {
  if (score_correct > score_incorrect) return Judgment::correct;
  if (score_correct == score_incorrect) return Judgment::tie_error;
  return Judgment::error;
}

Judgment judge_instance(const EvaluationInstance& instance, double score_correct,
                        double score_incorrect) {
  if (is_ambiguous(instance.condition)) {
    throw InputError("instance '" + instance.id + "' is ambiguous and has no correct form");
  }
  return judge_instance(score_correct, score_incorrect);
}

std::optional<double> GroupOutcome::error_rate() const {
  if (n == 0) return std::nullopt;
  return static_cast<double>(errors) / static_cast<double>(n);
}

ErrorRates error_rates(std::span<const GroupJudgment> judgments) {
  ErrorRates r;
  for (const auto& j : judgments) {
    auto& g = j.group == Gender::F ? r.f : r.m;
    ++g.n;
    if (is_error(j.judgment)) ++g.errors;
    if (j.judgment == Judgment::tie_error) ++g.ties;
  }
  const auto n = r.f.n + r.m.n;
  if (n > 0) r.er_total = static_cast<double>(r.f.errors + r.m.errors) / static_cast<double>(n);
  return r;
}

PhiValue phi(std::optional<double> er_f, std::optional<double> er_m) {
  if (!er_f || !er_m) return {PhiValue::Kind::undefined_no_data, 0.0};
  if (*er_m > 0.0) return {PhiValue::Kind::finite, *er_f / *er_m};
  if (*er_f == 0.0) return {PhiValue::Kind::undefined_balanced, 0.0};
  return {PhiValue::Kind::undefined_infinite, 0.0};
}

std::optional<double> tie_rate(std::span<const Judgment> judgments) {
  if (judgments.empty()) return std::nullopt;
  const auto ties = std::count(judgments.begin(), judgments.end(), Judgment::tie_error);
  return static_cast<double>(ties) / static_cast<double>(judgments.size());
}

std::optional<double> tie_rate(std::span<const GroupJudgment> judgments) {
  if (judgments.empty()) return std::nullopt;
  std::size_t ties = 0;
  for (const auto& j : judgments) ties += j.judgment == Judgment::tie_error ? 1 : 0;
  return static_cast<double>(ties) / static_cast<double>(judgments.size());
}

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

StreamRng::StreamRng(std::uint64_t seed, std::uint64_t stream)
    : state_(mix64(mix64(seed) ^ (stream * 0xD1B54A32D192ED03ull + 0x8CB92BA72F3D8DD7ull))) {}

std::uint64_t StreamRng::next() {
  state_ += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t StreamRng::below(std::uint64_t bound) {
  // Rejection sampling on the top of the range keeps draws unbiased.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  while (true) {
    const std::uint64_t x = next();
    if (x < limit) return x % bound;
  }
}

BootstrapResult bootstrap_phi_test(std::span<const GroupJudgment> judgments,
                                   const BootstrapOptions& options) {
  if (options.resamples == 0) throw InputError("bootstrap needs at least one resample");
  BootstrapResult result;
  const auto rates = error_rates(judgments);
  result.phi_point = phi(rates.f.error_rate(), rates.m.error_rate());
  const std::size_t n = judgments.size();
  if (n == 0) throw EstimationError("phi not estimable: no instances");

  // Per resample: 0 skipped, 1 phi <= 1 only, 2 phi >= 1 only, 3 phi == 1.
  std::vector<std::uint8_t> outcome(options.resamples, 0);
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      StreamRng rng(options.seed, b);
      std::uint64_t nf = 0, ef = 0, nm = 0, em = 0;
      for (std::size_t k = 0; k < n; ++k) {
        const auto& j = judgments[rng.below(n)];
        const bool err = is_error(j.judgment);
        if (j.group == Gender::F) {
          ++nf;
          ef += err;
        } else {
          ++nm;
          em += err;
        }
      }
      if (nf == 0 || nm == 0 || em == 0) continue;
      // phi = (ef/nf) / (em/nm), compared with 1 exactly via cross products.
      const std::uint64_t lhs = ef * nm;
      const std::uint64_t rhs = em * nf;
      outcome[b] = lhs == rhs ? 3 : (lhs < rhs ? 1 : 2);
    }
  };

  unsigned threads = options.threads ? options.threads : std::thread::hardware_concurrency();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(
                                                         (options.resamples + 255) / 256)));
  if (threads == 1) {
    run(0, options.resamples);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (options.resamples + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(options.resamples, begin + chunk);
      if (begin < end) pool.emplace_back(run, begin, end);
    }
  }

  std::size_t at_most_one = 0;
  std::size_t at_least_one = 0;
  for (const auto o : outcome) {
    if (o == 0) {
      ++result.skipped_resamples;
      continue;
    }
    ++result.valid_resamples;
    if (o & 1) ++at_most_one;
    if (o & 2) ++at_least_one;
  }
  if (result.valid_resamples == 0) {
    throw EstimationError("phi not estimable: every bootstrap resample has no masculine errors");
  }
  const double valid = static_cast<double>(result.valid_resamples);
  if (options.two_sided) {
    result.p_value = std::min(1.0, 2.0 * std::min(at_most_one / valid, at_least_one / valid));
  } else {
    result.p_value = at_most_one / valid;
  }
  return result;
}

}  // namespace qebias
