#include "qebias/downstream.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>

#include <json.hpp>

#include "qebias/errors.hpp"
#include "qebias/text.hpp"

namespace qebias {

using nlohmann::json;

RetentionCurve retention_curve(const std::map<std::string, std::vector<double>>& scores_by_group,
                               std::span<const double> thresholds) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw InputError("thresholds must be sorted ascending");
  }
  RetentionCurve curve;
  curve.thresholds.assign(thresholds.begin(), thresholds.end());
  for (const auto& [group, raw_scores] : scores_by_group) {
    if (raw_scores.empty()) throw InputError("group '" + group + "' has no scores");
    std::vector<double> scores = raw_scores;
    std::sort(scores.begin(), scores.end());
    const double n = static_cast<double>(scores.size());
    auto& fractions = curve.retained_fraction_by_group[group];
    for (const double tau : thresholds) {
      const auto first_kept = std::lower_bound(scores.begin(), scores.end(), tau);
      fractions.push_back(static_cast<double>(scores.end() - first_kept) / n);
    }
  }
  const auto f = curve.retained_fraction_by_group.find("F");
  const auto m = curve.retained_fraction_by_group.find("M");
  if (f != curve.retained_fraction_by_group.end() && m != curve.retained_fraction_by_group.end()) {
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      curve.gap.push_back(m->second[i] - f->second[i]);
    }
  }
  return curve;
}

std::vector<double> parse_threshold_grid(std::string_view spec) {
  auto number = [&](std::string_view s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw InputError("invalid threshold grid '" + std::string(spec) + "'");
    }
    return v;
  };
  const auto c1 = spec.find(':');
  const auto c2 = c1 == std::string_view::npos ? c1 : spec.find(':', c1 + 1);
  if (c2 == std::string_view::npos) {
    throw InputError("threshold grid must look like lo:hi:step, got '" + std::string(spec) + "'");
  }
  const double lo = number(spec.substr(0, c1));
  const double hi = number(spec.substr(c1 + 1, c2 - c1 - 1));
  const double step = number(spec.substr(c2 + 1));
  if (!(step > 0.0) || hi < lo) throw InputError("threshold grid needs lo <= hi and step > 0");
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> grid;
  grid.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    // Rounded to 12 decimals so 0.1 * 3 prints and compares as 0.3.
    grid.push_back(std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12);
  }
  return grid;
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const Tokens& tokens, std::size_t order) {
  NgramCounts counts;
  if (tokens.size() < order) return counts;
  for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + order))];
  }
  return counts;
}

}  // namespace

double sentence_bleu(std::string_view hypothesis, std::string_view reference) {
  constexpr std::size_t kMaxOrder = 4;
  const auto hyp = tokenize(hypothesis);
  const auto ref = tokenize(reference);
  if (hyp.empty()) return 0.0;

  double log_precision = 0.0;
  for (std::size_t order = 1; order <= kMaxOrder; ++order) {
    const auto hyp_counts = count_ngrams(hyp, order);
    const auto ref_counts = count_ngrams(ref, order);
    std::size_t matched = 0;
    std::size_t total = 0;
    for (const auto& [gram, count] : hyp_counts) {
      total += count;
      const auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matched += std::min(count, it->second);
    }
    double p;
    if (order == 1) {
      if (matched == 0) return 0.0;
      p = static_cast<double>(matched) / static_cast<double>(total);
    } else {
      p = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
    }
    log_precision += std::log(p);
  }
  const double c = static_cast<double>(hyp.size());
  const double r = static_cast<double>(ref.size());
  const double brevity = c < r ? std::exp(1.0 - r / c) : 1.0;
  return 100.0 * brevity * std::exp(log_precision / static_cast<double>(kMaxOrder));
}

std::string_view to_string(QualityBand b) {
  switch (b) {
    case QualityBand::Poor: return "Poor";
    case QualityBand::Fair: return "Fair";
    case QualityBand::Good: return "Good";
    case QualityBand::VeryGood: return "VeryGood";
    case QualityBand::Excellent: return "Excellent";
  }
  return "?";
}

QualityBand quality_band(double bleu) {
  if (bleu >= 50.0) return QualityBand::Excellent;
  if (bleu >= 40.0) return QualityBand::VeryGood;
  if (bleu >= 30.0) return QualityBand::Good;
  if (bleu >= 20.0) return QualityBand::Fair;
  return QualityBand::Poor;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> paired_a,
                                    std::span<const double> paired_b) {
  if (paired_a.size() != paired_b.size() || paired_a.empty()) {
    throw InputError("wilcoxon_signed_rank needs two non-empty lists of equal length");
  }
  std::vector<double> diffs;
  for (std::size_t i = 0; i < paired_a.size(); ++i) {
    const double d = paired_a[i] - paired_b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  WilcoxonResult result;
  result.effective_n = diffs.size();
  if (diffs.empty()) {
    result.degenerate = true;
    return result;
  }

  // Average ranks of |d|, kept doubled so they stay integral.
  std::vector<std::size_t> order(diffs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return std::fabs(diffs[x]) < std::fabs(diffs[y]); });
  std::vector<long long> rank2(diffs.size());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && std::fabs(diffs[order[j]]) == std::fabs(diffs[order[i]])) ++j;
    const auto group = static_cast<long long>(j - i);
    const long long doubled_avg = static_cast<long long>(i + 1 + j);  // 2 * mean(i+1..j)
    for (std::size_t k = i; k < j; ++k) rank2[order[k]] = doubled_avg;
    tie_term += static_cast<double>(group * group * group - group);
    i = j;
  }
  long long w2_plus = 0;
  long long total2 = 0;
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    total2 += rank2[i];
    if (diffs[i] > 0) w2_plus += rank2[i];
  }
  result.w_plus = static_cast<double>(w2_plus) / 2.0;
  const std::size_t n = diffs.size();

  if (n <= kWilcoxonExactLimit) {
    // Count sign assignments by doubled W+ via subset-sum DP.
    std::vector<double> ways(static_cast<std::size_t>(total2) + 1, 0.0);
    ways[0] = 1.0;
    long long reach = 0;
    for (const auto r : rank2) {
      reach += r;
      for (long long s = reach; s >= r; --s) ways[static_cast<std::size_t>(s)] +=
          ways[static_cast<std::size_t>(s - r)];
    }
    double lower = 0.0;
    double upper = 0.0;
    for (long long s = 0; s <= total2; ++s) {
      if (s <= w2_plus) lower += ways[static_cast<std::size_t>(s)];
      if (s >= w2_plus) upper += ways[static_cast<std::size_t>(s)];
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    result.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
    result.exact = true;
    return result;
  }

  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  result.exact = false;
  if (var <= 0.0) {
    result.p_value = 1.0;
    return result;
  }
  const double z = std::max(0.0, std::fabs(result.w_plus - mean) - 0.5) / std::sqrt(var);
  result.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return result;
}

std::size_t FilterStats::stage1_total_f() const {
  std::size_t t = 0;
  for (const auto& [band, s] : bands) t += s.stage1_f;
  return t;
}

std::size_t FilterStats::stage1_total_m() const {
  std::size_t t = 0;
  for (const auto& [band, s] : bands) t += s.stage1_m;
  return t;
}

std::size_t FilterStats::stage2_total() const {
  std::size_t t = 0;
  for (const auto& [band, s] : bands) t += s.stage2;
  return t;
}

GtFilterResult gt_filter(std::span<const GtPair> pairs) {
  GtFilterResult result;
  auto& stats = result.stats;
  stats.input_pairs = pairs.size();
  for (const auto b : kAllBands) stats.bands[b];

  std::map<QualityBand, std::pair<std::vector<double>, std::vector<double>>> band_bleu;
  for (const auto& p : pairs) {
    const double bleu_f = sentence_bleu(p.translation_f, p.reference_f);
    const double bleu_m = sentence_bleu(p.translation_m, p.reference_m);
    const auto band_f = quality_band(bleu_f);
    const auto band_m = quality_band(bleu_m);
    if (p.inflection_ok_f) ++stats.bands[band_f].stage1_f;
    if (p.inflection_ok_m) ++stats.bands[band_m].stage1_m;
    if (!p.inflection_ok_f || !p.inflection_ok_m) {
      ++stats.dropped_inflection;
      continue;
    }
    if (band_f != band_m) {
      ++stats.dropped_band_mismatch;
      continue;
    }
    ++stats.bands[band_f].stage2;
    band_bleu[band_f].first.push_back(bleu_f);
    band_bleu[band_f].second.push_back(bleu_m);
    result.retained.push_back({p, bleu_f, bleu_m, band_f});
  }
  for (const auto& [band, series] : band_bleu) {
    stats.bands[band].wilcoxon_p = wilcoxon_signed_rank(series.first, series.second).p_value;
  }
  return result;
}

RerankChoice rerank(const CandidateSet& set) {
  if (set.candidates.empty()) {
    throw InputError("candidate set '" + set.instance_id + "' is empty");
  }
  if (set.candidates.size() != set.scores.size()) {
    throw InputError("candidate set '" + set.instance_id + "' has " +
                     std::to_string(set.candidates.size()) + " candidates but " +
                     std::to_string(set.scores.size()) + " scores");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < set.scores.size(); ++i) {
    if (set.scores[i] > set.scores[best]) best = i;
  }
  return {best, set.candidates[best]};
}

std::string_view to_string(GenderMatch g) {
  switch (g) {
    case GenderMatch::F: return "F";
    case GenderMatch::M: return "M";
    case GenderMatch::both: return "both";
    case GenderMatch::none: return "none";
  }
  return "?";
}

GenderMatch gender_match(std::string_view hypothesis, const std::set<std::string>& f_unique,
                         const std::set<std::string>& m_unique, bool fold) {
  auto normalize = [fold](const std::set<std::string>& words) {
    if (!fold) return words;
    std::set<std::string> out;
    for (const auto& w : words) out.insert(fold_case(w));
    return out;
  };
  const auto f_words = normalize(f_unique);
  const auto m_words = normalize(m_unique);
  bool has_f = false;
  bool has_m = false;
  for (const auto& token : tokenize(hypothesis)) {
    const auto t = fold ? fold_case(token) : token;
    has_f = has_f || f_words.contains(t);
    has_m = has_m || m_words.contains(t);
  }
  if (has_f && has_m) return GenderMatch::both;
  if (has_f) return GenderMatch::F;
  if (has_m) return GenderMatch::M;
  return GenderMatch::none;
}

DeltaM delta_m(std::span<const GenderMatch> labels) {
  if (labels.empty()) throw InputError("delta_m needs at least one label");
  DeltaM d;
  d.n = labels.size();
  for (const auto l : labels) {
    switch (l) {
      case GenderMatch::F: ++d.count_f; break;
      case GenderMatch::M: ++d.count_m; break;
      case GenderMatch::both: ++d.count_both; break;
      case GenderMatch::none: ++d.count_none; break;
    }
  }
  d.percentage_points = 100.0 * static_cast<double>(d.raw_difference()) / static_cast<double>(d.n);
  return d;
}

UniqueWords unique_word_sets(std::string_view h_f, std::string_view h_m) {
  const auto f_tokens = tokenize(h_f);
  const auto m_tokens = tokenize(h_m);
  const std::set<std::string> f(f_tokens.begin(), f_tokens.end());
  const std::set<std::string> m(m_tokens.begin(), m_tokens.end());
  UniqueWords out;
  std::set_difference(f.begin(), f.end(), m.begin(), m.end(),
                      std::inserter(out.f_unique, out.f_unique.end()));
  std::set_difference(m.begin(), m.end(), f.begin(), f.end(),
                      std::inserter(out.m_unique, out.m_unique.end()));
  return out;
}

std::vector<CandidateSet> load_candidate_sets(std::istream& in) {
  std::vector<CandidateSet> sets;
  std::string line;
  std::size_t n = 0;
  auto fail = [&](const std::string& what) -> void {
    throw InputError("line " + std::to_string(n) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(std::string("malformed record: ") + e.what());
    }
    CandidateSet set;
    try {
      set.instance_id = obj.at("instance_id").get<std::string>();
      set.candidates = obj.at("candidates").get<std::vector<std::string>>();
      const auto h_f = obj.at("h_f").get<std::string>();
      const auto h_m = obj.at("h_m").get<std::string>();
      if (obj.contains("source") && !obj["source"].is_null()) {
        set.source = obj["source"].get<std::string>();
      }
      if (obj.contains("scores")) set.scores = obj["scores"].get<std::vector<double>>();
      if (obj.contains("f_unique") && obj.contains("m_unique")) {
        set.f_unique_words = obj["f_unique"].get<std::set<std::string>>();
        set.m_unique_words = obj["m_unique"].get<std::set<std::string>>();
      } else {
        auto words = unique_word_sets(h_f, h_m);
        set.f_unique_words = std::move(words.f_unique);
        set.m_unique_words = std::move(words.m_unique);
      }
    } catch (const json::exception& e) {
      fail(std::string("bad candidate record: ") + e.what());
    }
    if (set.candidates.empty()) fail("record '" + set.instance_id + "' has no candidates");
    if (!set.scores.empty() && set.scores.size() != set.candidates.size()) {
      fail("record '" + set.instance_id + "' has mismatched scores");
    }
    for (const auto& w : set.f_unique_words) {
      if (set.m_unique_words.contains(w)) {
        fail("record '" + set.instance_id + "': unique word sets overlap on '" + w + "'");
      }
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

}  // namespace qebias
