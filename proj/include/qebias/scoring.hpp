#pragma once
// Scorer and translator clients, context-strategy input construction and
// score normalization.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "qebias/channel.hpp"
#include "qebias/corpus.hpp"

namespace qebias {

struct ScaleDescriptor {
  double min = 0.0;
  double max = 1.0;
  bool higher_is_better = true;

  // "min:max:higher" or "min:max:lower".
  static ScaleDescriptor parse(std::string_view text);
  std::string str() const;
  bool operator==(const ScaleDescriptor&) const = default;
};

inline constexpr ScaleDescriptor kUnitScale{0.0, 1.0, true};
inline constexpr ScaleDescriptor kMetricXScale{0.0, 25.0, false};
inline constexpr ScaleDescriptor kGembaScale{0.0, 100.0, true};

struct NormalizedScore {
  double value;
  bool clamped;
};

// Maps raw onto [0,1] with 1 best: u = (raw - min) / (max - min) clamped,
// then u or 1 - u depending on orientation.
NormalizedScore normalize_score_checked(double raw, const ScaleDescriptor& scale);
double normalize_score(double raw, const ScaleDescriptor& scale);

struct ScoreRequest {
  std::string id;
  std::string source_text;
  std::string hypothesis_text;
  // Only for reference-based scorers; sent when present.
  std::optional<std::string> reference_text;
};

struct ScoreRecord {
  std::string id;
  double raw = 0.0;
  double normalized = 0.0;
  bool clamped = false;
};

struct ScorerInfo {
  std::string name;
  ScaleDescriptor scale;
};

struct EndpointOptions {
  std::chrono::milliseconds timeout{std::chrono::seconds(30)};
  // Unmatched ids are re-sent this many times (0 or 1) before failing.
  int retries = 0;
};

// Client side of the scorer wire protocol. The first line read from the
// channel must be the handshake {name, scale_min, scale_max,
// higher_is_better}; afterwards each request line {id, source, hypothesis}
// is answered by a response line {id, score} in any order.
class ScorerClient {
 public:
  ScorerClient(std::unique_ptr<LineChannel> channel, EndpointOptions options = {});

  const ScorerInfo& info() const { return info_; }

  // One record per request, in request order. Throws EndpointError on
  // timeouts (listing unmatched ids), unknown or duplicate response ids and
  // non-numeric scores; throws InputError on duplicate request ids.
  std::vector<ScoreRecord> score_batch(std::span<const ScoreRequest> requests,
                                       const ScaleDescriptor& scale);

  std::size_t requests_sent() const { return requests_sent_; }

 private:
  std::unique_ptr<LineChannel> channel_;
  EndpointOptions options_;
  ScorerInfo info_;
  std::size_t requests_sent_ = 0;
  std::mutex mutex_;
};

std::vector<ScoreRecord> score_batch(ScorerClient& scorer, std::span<const ScoreRequest> requests,
                                     const ScaleDescriptor& scale);

// Client side of the translator protocol: request {id, text, target_lang},
// response {id, translation}. Results are cached by exact (text, language).
class TranslatorClient {
 public:
  TranslatorClient(std::unique_ptr<LineChannel> channel, EndpointOptions options = {});

  // Positional outputs. Throws EndpointError naming the position of any
  // missing or empty translation.
  std::vector<std::string> translate_batch(std::span<const std::string> texts,
                                           std::string_view target_language);

  std::optional<std::string> cached(std::string_view text, std::string_view target_language) const;

  std::size_t upstream_requests() const { return upstream_requests_; }

 private:
  std::unique_ptr<LineChannel> channel_;
  EndpointOptions options_;
  mutable std::shared_mutex cache_mutex_;
  std::map<std::pair<std::string, std::string>, std::string, std::less<>> cache_;
  std::mutex call_mutex_;
  std::size_t upstream_requests_ = 0;
  std::size_t next_id_ = 0;
};

std::vector<std::string> translate_batch(TranslatorClient& translator,
                                         std::span<const std::string> texts,
                                         std::string_view target_language);

enum class ContextKind { none, concat_source_context, concat_translated_context };

std::string_view to_string(ContextKind k);
// Accepts the CLI spellings none|ctx|ctx-translated and the long names.
ContextKind parse_context_kind(std::string_view text);

struct ContextStrategy {
  ContextKind kind = ContextKind::none;
  std::string separator = " ";
};

// Request id for (instance, variant): "<instance id>/<label>".
std::string request_id(const EvaluationInstance& instance, VariantLabel variant);

// Builds the (source, hypothesis) pair for one variant. The translator is
// only consulted for concat_translated_context and must then be non-null.
ScoreRequest build_scored_inputs(const EvaluationInstance& instance, VariantLabel variant,
                                 const ContextStrategy& strategy,
                                 TranslatorClient* translator = nullptr);

// Persistent raw-score cache keyed by (scorer name, source, hypothesis),
// stored as one JSON record per line.
class ScoreCache {
 public:
  ScoreCache() = default;
  explicit ScoreCache(std::filesystem::path path);

  std::optional<double> lookup(std::string_view scorer, std::string_view source,
                               std::string_view hypothesis) const;
  void insert(std::string_view scorer, std::string_view source, std::string_view hypothesis,
              double raw);
  // Appends entries added since the last save. No-op without a path.
  void save();
  std::size_t size() const;

 private:
  using Key = std::tuple<std::string, std::string, std::string>;
  std::optional<std::filesystem::path> path_;
  mutable std::shared_mutex mutex_;
  std::map<Key, double> entries_;
  std::vector<Key> unsaved_;
};

struct CachedScoring {
  std::vector<ScoreRecord> records;
  std::size_t cache_hits = 0;
  std::size_t scored = 0;
  std::size_t clamped = 0;
};

// Consults the cache first and sends only misses to the scorer.
CachedScoring score_with_cache(ScorerClient& scorer, ScoreCache* cache,
                               std::span<const ScoreRequest> requests,
                               const ScaleDescriptor& scale);

}  // namespace qebias
