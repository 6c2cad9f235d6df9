#include "qebias/scoring.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "qebias/errors.hpp"

namespace qebias {

using nlohmann::json;

namespace {

double parse_double(std::string_view text, std::string_view what) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw InputError("invalid " + std::string(what) + " '" + std::string(text) + "'");
  }
  return value;
}

std::string list_ids(const std::vector<std::string>& ids) {
  constexpr std::size_t kShown = 50;
  std::string out;
  for (std::size_t i = 0; i < ids.size() && i < kShown; ++i) {
    if (i) out += ", ";
    out += ids[i];
  }
  if (ids.size() > kShown) out += ", ... (" + std::to_string(ids.size() - kShown) + " more)";
  return out;
}

}  // namespace

ScaleDescriptor ScaleDescriptor::parse(std::string_view text) {
  const auto c1 = text.find(':');
  const auto c2 = c1 == std::string_view::npos ? c1 : text.find(':', c1 + 1);
  if (c2 == std::string_view::npos) {
    throw InputError("scale must look like 'min:max:higher|lower', got '" + std::string(text) + "'");
  }
  ScaleDescriptor scale;
  scale.min = parse_double(text.substr(0, c1), "scale minimum");
  scale.max = parse_double(text.substr(c1 + 1, c2 - c1 - 1), "scale maximum");
  const auto dir = text.substr(c2 + 1);
  if (dir == "higher" || dir == "up" || dir == "true") {
    scale.higher_is_better = true;
  } else if (dir == "lower" || dir == "down" || dir == "false") {
    scale.higher_is_better = false;
  } else {
    throw InputError("scale direction must be 'higher' or 'lower', got '" + std::string(dir) + "'");
  }
  if (!(scale.min < scale.max)) throw InputError("scale minimum must be below maximum");
  return scale;
}

std::string ScaleDescriptor::str() const {
  std::ostringstream out;
  out << min << ':' << max << ':' << (higher_is_better ? "higher" : "lower");
  return out.str();
}

NormalizedScore normalize_score_checked(double raw, const ScaleDescriptor& scale) {
  double u = (raw - scale.min) / (scale.max - scale.min);
  bool clamped = false;
  if (!(u >= 0.0)) {  // also catches NaN
    u = 0.0;
    clamped = true;
  } else if (u > 1.0) {
    u = 1.0;
    clamped = true;
  }
  return {scale.higher_is_better ? u : 1.0 - u, clamped};
}

double normalize_score(double raw, const ScaleDescriptor& scale) {
  return normalize_score_checked(raw, scale).value;
}

ScorerClient::ScorerClient(std::unique_ptr<LineChannel> channel, EndpointOptions options)
    : channel_(std::move(channel)), options_(options) {
  const auto line = channel_->read_line(options_.timeout);
  if (!line) throw EndpointError("scorer sent no handshake before timeout");
  json hello;
  try {
    hello = json::parse(*line);
    info_.name = hello.at("name").get<std::string>();
    info_.scale.min = hello.at("scale_min").get<double>();
    info_.scale.max = hello.at("scale_max").get<double>();
    info_.scale.higher_is_better = hello.at("higher_is_better").get<bool>();
  } catch (const json::exception& e) {
    throw EndpointError("malformed scorer handshake '" + *line + "': " + e.what());
  }
  if (!(info_.scale.min < info_.scale.max)) {
    throw EndpointError("scorer handshake declares an empty scale");
  }
}

std::vector<ScoreRecord> ScorerClient::score_batch(std::span<const ScoreRequest> requests,
                                                   const ScaleDescriptor& scale) {
  std::lock_guard call_lock(mutex_);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    if (requests[i].source_text.empty() || requests[i].hypothesis_text.empty()) {
      throw InputError("request '" + requests[i].id + "' has empty text");
    }
    if (!index.emplace(requests[i].id, i).second) {
      throw InputError("duplicate request id '" + requests[i].id + "'");
    }
  }
  std::vector<std::optional<ScoreRecord>> slots(requests.size());
  std::size_t matched = 0;
  std::unordered_set<std::string> retried;

  auto encode = [](const ScoreRequest& r) {
    json obj{{"id", r.id}, {"source", r.source_text}, {"hypothesis", r.hypothesis_text}};
    if (r.reference_text) obj["reference"] = *r.reference_text;
    return obj.dump();
  };

  std::vector<std::size_t> outstanding(requests.size());
  for (std::size_t i = 0; i < requests.size(); ++i) outstanding[i] = i;

  for (int attempt = 0;; ++attempt) {
    std::exception_ptr write_error;
    std::jthread writer([&, to_send = outstanding] {
      try {
        for (auto i : to_send) channel_->write_line(encode(requests[i]));
        channel_->flush();
      } catch (...) {
        write_error = std::current_exception();
      }
    });
    requests_sent_ += outstanding.size();

    try {
      while (matched < requests.size()) {
        const auto line = channel_->read_line(options_.timeout);
        if (!line) break;
        if (line->find_first_not_of(" \t\r") == std::string::npos) continue;
        json resp;
        try {
          resp = json::parse(*line);
        } catch (const json::parse_error&) {
          throw EndpointError("malformed response line '" + *line + "'");
        }
        const auto id_it = resp.find("id");
        if (id_it == resp.end() || !id_it->is_string()) {
          throw EndpointError("response without id: '" + *line + "'");
        }
        const auto id = id_it->get<std::string>();
        const auto where = index.find(id);
        if (where == index.end()) throw EndpointError("response for unknown id '" + id + "'");
        if (slots[where->second]) {
          if (retried.contains(id)) continue;  // late answer to a re-sent request
          throw EndpointError("duplicate response for id '" + id + "'");
        }
        if (const auto err = resp.find("error"); err != resp.end()) {
          throw EndpointError("scorer error for id '" + id + "': " + err->dump());
        }
        const auto score_it = resp.find("score");
        if (score_it == resp.end() || !score_it->is_number()) {
          throw EndpointError("non-numeric score for id '" + id + "'");
        }
        const double raw = score_it->get<double>();
        const auto norm = normalize_score_checked(raw, scale);
        slots[where->second] = ScoreRecord{id, raw, norm.value, norm.clamped};
        ++matched;
      }
    } catch (...) {
      channel_->cancel_writes(true);
      writer.join();
      channel_->cancel_writes(false);
      throw;
    }
    if (matched < requests.size()) channel_->cancel_writes(true);
    writer.join();
    channel_->cancel_writes(false);
    if (write_error && matched < requests.size()) {
      try {
        std::rethrow_exception(write_error);
      } catch (const EndpointError& e) {
        if (std::string_view(e.what()) != "write cancelled") throw;
      }
    }
    if (matched == requests.size()) break;

    outstanding.clear();
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (!slots[i]) {
        outstanding.push_back(i);
        missing.push_back(requests[i].id);
      }
    }
    if (attempt >= options_.retries) {
      throw EndpointError("timed out waiting for scores; unmatched ids: " + list_ids(missing));
    }
    retried.insert(missing.begin(), missing.end());
  }

  std::vector<ScoreRecord> records;
  records.reserve(slots.size());
  for (auto& s : slots) records.push_back(std::move(*s));
  return records;
}

std::vector<ScoreRecord> score_batch(ScorerClient& scorer, std::span<const ScoreRequest> requests,
                                     const ScaleDescriptor& scale) {
  return scorer.score_batch(requests, scale);
}

TranslatorClient::TranslatorClient(std::unique_ptr<LineChannel> channel, EndpointOptions options)
    : channel_(std::move(channel)), options_(options) {}

std::optional<std::string> TranslatorClient::cached(std::string_view text,
                                                    std::string_view target_language) const {
  std::shared_lock lock(cache_mutex_);
  const auto it = cache_.find(std::pair{std::string(text), std::string(target_language)});
  if (it == cache_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> TranslatorClient::translate_batch(std::span<const std::string> texts,
                                                           std::string_view target_language) {
  std::lock_guard call_lock(call_mutex_);
  const std::string lang(target_language);

  // Unique cache misses, each remembered with the first position needing it.
  std::unordered_map<std::string, std::string> id_to_text;
  std::unordered_map<std::string, std::size_t> first_position;
  std::vector<std::string> lines;
  for (std::size_t pos = 0; pos < texts.size(); ++pos) {
    const auto& text = texts[pos];
    if (cached(text, lang) || first_position.contains(text)) continue;
    first_position[text] = pos;
    const auto id = "t" + std::to_string(next_id_++);
    id_to_text[id] = text;
    lines.push_back(json{{"id", id}, {"text", text}, {"target_lang", lang}}.dump());
  }

  if (!lines.empty()) {
    upstream_requests_ += lines.size();
    std::exception_ptr write_error;
    std::size_t received = 0;
    {
      std::jthread writer([&] {
        try {
          for (const auto& l : lines) channel_->write_line(l);
          channel_->flush();
        } catch (...) {
          write_error = std::current_exception();
        }
      });
      try {
        std::unordered_set<std::string> done;
        while (received < lines.size()) {
          const auto line = channel_->read_line(options_.timeout);
          if (!line) break;
          json resp;
          try {
            resp = json::parse(*line);
          } catch (const json::parse_error&) {
            throw EndpointError("malformed translator response '" + *line + "'");
          }
          const auto id = resp.value("id", std::string());
          const auto it = id_to_text.find(id);
          if (it == id_to_text.end()) throw EndpointError("translation for unknown id '" + id + "'");
          if (!done.insert(id).second) throw EndpointError("duplicate translation for id '" + id + "'");
          const auto tr = resp.find("translation");
          if (tr == resp.end() || !tr->is_string() || tr->get<std::string>().empty()) {
            throw EndpointError("empty translation at position " +
                                std::to_string(first_position.at(it->second)));
          }
          {
            std::unique_lock lock(cache_mutex_);
            cache_[{it->second, lang}] = tr->get<std::string>();
          }
          ++received;
        }
      } catch (...) {
        channel_->cancel_writes(true);
        writer.join();
        channel_->cancel_writes(false);
        throw;
      }
      if (received < lines.size()) channel_->cancel_writes(true);
    }
    channel_->cancel_writes(false);
    if (received < lines.size() && write_error) {
      try {
        std::rethrow_exception(write_error);
      } catch (const EndpointError& e) {
        if (std::string_view(e.what()) != "write cancelled") throw;
      }
    }
  }

  std::vector<std::string> out;
  out.reserve(texts.size());
  for (std::size_t pos = 0; pos < texts.size(); ++pos) {
    auto hit = cached(texts[pos], lang);
    if (!hit) throw EndpointError("missing translation at position " + std::to_string(pos));
    out.push_back(std::move(*hit));
  }
  return out;
}

std::vector<std::string> translate_batch(TranslatorClient& translator,
                                         std::span<const std::string> texts,
                                         std::string_view target_language) {
  return translator.translate_batch(texts, target_language);
}

std::string_view to_string(ContextKind k) {
  switch (k) {
    case ContextKind::none: return "none";
    case ContextKind::concat_source_context: return "concat_source_context";
    case ContextKind::concat_translated_context: return "concat_translated_context";
  }
  return "?";
}

ContextKind parse_context_kind(std::string_view text) {
  if (text == "none") return ContextKind::none;
  if (text == "ctx" || text == "concat_source_context") return ContextKind::concat_source_context;
  if (text == "ctx-translated" || text == "concat_translated_context") {
    return ContextKind::concat_translated_context;
  }
  throw InputError("unknown context strategy '" + std::string(text) + "'");
}

std::string request_id(const EvaluationInstance& instance, VariantLabel variant) {
  return instance.id + "/" + std::string(to_string(variant));
}

ScoreRequest build_scored_inputs(const EvaluationInstance& instance, VariantLabel variant,
                                 const ContextStrategy& strategy, TranslatorClient* translator) {
  ScoreRequest req;
  req.id = request_id(instance, variant);
  req.source_text = instance.source;
  req.hypothesis_text = instance.variant(variant);
  if (strategy.kind == ContextKind::none) return req;

  if (!instance.context || instance.context->empty()) {
    throw InputError("instance '" + instance.id + "' has no context for strategy " +
                     std::string(to_string(strategy.kind)));
  }
  const auto& ctx = *instance.context;
  req.source_text = ctx + strategy.separator + instance.source;
  if (strategy.kind == ContextKind::concat_source_context) {
    req.hypothesis_text = ctx + strategy.separator + req.hypothesis_text;
    return req;
  }
  if (translator == nullptr) {
    throw InputError("strategy concat_translated_context requires a translator endpoint");
  }
  const std::string texts[] = {ctx};
  std::string translated;
  try {
    translated = translator->translate_batch(texts, instance.language_pair.target).front();
  } catch (const EndpointError& e) {
    throw EndpointError("translating context of '" + instance.id + "': " + e.what());
  }
  req.hypothesis_text = translated + strategy.separator + req.hypothesis_text;
  return req;
}

ScoreCache::ScoreCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(*path_);
  if (!in) return;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto obj = json::parse(line);
      entries_[{obj.at("scorer").get<std::string>(), obj.at("source").get<std::string>(),
                obj.at("hypothesis").get<std::string>()}] = obj.at("raw").get<double>();
    } catch (const json::exception& e) {
      throw InputError("score cache " + path_->string() + " line " + std::to_string(n) + ": " +
                       e.what());
    }
  }
}

std::optional<double> ScoreCache::lookup(std::string_view scorer, std::string_view source,
                                         std::string_view hypothesis) const {
  std::shared_lock lock(mutex_);
  const auto it =
      entries_.find(Key{std::string(scorer), std::string(source), std::string(hypothesis)});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ScoreCache::insert(std::string_view scorer, std::string_view source,
                        std::string_view hypothesis, double raw) {
  std::unique_lock lock(mutex_);
  Key key{std::string(scorer), std::string(source), std::string(hypothesis)};
  const auto [it, fresh] = entries_.insert_or_assign(key, raw);
  (void)it;
  if (fresh) unsaved_.push_back(std::move(key));
}

void ScoreCache::save() {
  std::unique_lock lock(mutex_);
  if (!path_ || unsaved_.empty()) return;
  if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
  std::ofstream out(*path_, std::ios::app);
  if (!out) throw InputError("cannot write score cache " + path_->string());
  for (const auto& key : unsaved_) {
    const auto& [scorer, source, hypothesis] = key;
    out << json{{"scorer", scorer}, {"source", source}, {"hypothesis", hypothesis},
                {"raw", entries_.at(key)}}
               .dump()
        << '\n';
  }
  unsaved_.clear();
}

std::size_t ScoreCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

CachedScoring score_with_cache(ScorerClient& scorer, ScoreCache* cache,
                               std::span<const ScoreRequest> requests,
                               const ScaleDescriptor& scale) {
  CachedScoring out;
  out.records.resize(requests.size());
  std::vector<ScoreRequest> misses;
  std::vector<std::size_t> miss_pos;
  const auto& name = scorer.info().name;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto& r = requests[i];
    std::optional<double> hit;
    if (cache && !r.reference_text) hit = cache->lookup(name, r.source_text, r.hypothesis_text);
    if (hit) {
      const auto norm = normalize_score_checked(*hit, scale);
      out.records[i] = {r.id, *hit, norm.value, norm.clamped};
      ++out.cache_hits;
    } else {
      misses.push_back(r);
      miss_pos.push_back(i);
    }
  }
  if (!misses.empty()) {
    auto scored = scorer.score_batch(misses, scale);
    for (std::size_t k = 0; k < scored.size(); ++k) {
      if (cache && !misses[k].reference_text) {
        cache->insert(name, misses[k].source_text, misses[k].hypothesis_text, scored[k].raw);
      }
      out.records[miss_pos[k]] = std::move(scored[k]);
    }
    out.scored = misses.size();
  }
  for (const auto& r : out.records) out.clamped += r.clamped ? 1 : 0;
  return out;
}

}  // namespace qebias
