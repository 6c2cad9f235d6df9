#include "qebias/mock.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include <json.hpp>

#include "qebias/errors.hpp"
#include "qebias/text.hpp"

namespace qebias {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xCBF29CE484222325ull) {
  for (const char c : data) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

double to_double(std::string_view text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw InputError("invalid number '" + std::string(text) + "' in mock spec");
  }
  return v;
}

std::string format_number(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

}  // namespace

std::string ConstantModel::name() const { return "constant(" + format_number(value_) + ")"; }

std::string HashModel::name() const { return "hash(" + std::to_string(salt_) + ")"; }

double HashModel::score(std::string_view source, std::string_view hypothesis) const {
  std::uint64_t h = fnv1a(source);
  h = fnv1a(std::string_view("\x1f", 1), h);
  h = fnv1a(hypothesis, h);
  h = splitmix64(h ^ splitmix64(salt_));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

BiasedModel::BiasedModel(double base, double penalty, std::set<std::string> markers)
    : base_(base), penalty_(penalty), markers_(std::move(markers)) {}

std::string BiasedModel::name() const {
  std::string words;
  for (const auto& w : markers_) {
    if (!words.empty()) words += ',';
    words += w;
  }
  return "biased(" + format_number(base_) + "," + format_number(penalty_) + "," + words + ")";
}

double BiasedModel::score(std::string_view, std::string_view hypothesis) const {
  for (const auto& token : tokenize(hypothesis)) {
    if (markers_.contains(token)) return base_ - penalty_;
  }
  return base_;
}

std::unique_ptr<ScoreModel> parse_score_model(std::string_view spec) {
  const auto parts = split(spec, ':');
  const auto kind = parts.front();
  if (kind == "constant" && parts.size() == 2) {
    return std::make_unique<ConstantModel>(to_double(parts[1]));
  }
  if (kind == "hash" && parts.size() <= 2) {
    std::uint64_t salt = 0;
    if (parts.size() == 2) {
      const auto [ptr, ec] =
          std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), salt);
      if (ec != std::errc() || ptr != parts[1].data() + parts[1].size()) {
        throw InputError("invalid hash salt '" + std::string(parts[1]) + "'");
      }
    }
    return std::make_unique<HashModel>(salt);
  }
  if (kind == "biased" && parts.size() == 4) {
    std::set<std::string> markers;
    for (const auto w : split(parts[3], ',')) {
      if (!w.empty()) markers.emplace(w);
    }
    return std::make_unique<BiasedModel>(to_double(parts[1]), to_double(parts[2]),
                                         std::move(markers));
  }
  throw InputError("unknown mock scorer spec '" + std::string(spec) + "'");
}

MockScorerServer::MockScorerServer(std::shared_ptr<const ScoreModel> model,
                                   MockServerOptions options)
    : model_(std::move(model)), options_(std::move(options)), rng_(options_.shuffle_seed) {}

std::optional<std::string> MockScorerServer::greeting() {
  const auto scale = model_->scale();
  return json{{"name", model_->name()},
              {"scale_min", scale.min},
              {"scale_max", scale.max},
              {"higher_is_better", scale.higher_is_better}}
      .dump();
}

std::vector<std::string> MockScorerServer::handle(std::string_view line) {
  std::vector<std::string> out;
  json req;
  try {
    req = json::parse(line);
  } catch (const json::parse_error& e) {
    out.push_back(json{{"id", nullptr}, {"error", std::string("malformed request: ") + e.what()}}
                      .dump());
    return out;
  }
  const auto id = req.value("id", std::string());
  const auto source = req.value("source", std::string());
  const auto hypothesis = req.value("hypothesis", std::string());
  ++requests_seen_;
  if (options_.inject_unknown_id && requests_seen_ == 1) {
    out.push_back(json{{"id", "__unknown__" + id}, {"score", 0.5}}.dump());
  }
  if (options_.drop_ids.contains(id)) return out;
  std::string response = json{{"id", id}, {"score", model_->score(source, hypothesis)}}.dump();
  if (options_.order == ResponseOrder::in_order) {
    out.push_back(std::move(response));
  } else {
    held_.push_back(std::move(response));
  }
  return out;
}

std::vector<std::string> MockScorerServer::drain() {
  std::vector<std::string> out;
  out.swap(held_);
  if (options_.order == ResponseOrder::reverse) {
    std::reverse(out.begin(), out.end());
  } else if (options_.order == ResponseOrder::shuffle) {
    std::shuffle(out.begin(), out.end(), rng_);
  }
  return out;
}

MockTranslatorServer::MockTranslatorServer(TranslateFn fn) : fn_(std::move(fn)) {}

std::vector<std::string> MockTranslatorServer::handle(std::string_view line) {
  json req;
  try {
    req = json::parse(line);
  } catch (const json::parse_error& e) {
    return {json{{"id", nullptr}, {"error", e.what()}}.dump()};
  }
  ++requests_seen_;
  const auto id = req.value("id", std::string());
  return {json{{"id", id},
               {"translation", fn_(req.value("text", std::string()),
                                   req.value("target_lang", std::string()))}}
              .dump()};
}

std::unique_ptr<LineChannel> open_scorer_channel(std::string_view spec) {
  if (spec.starts_with("mock:")) {
    std::shared_ptr<const ScoreModel> model = parse_score_model(spec.substr(5));
    return std::make_unique<InProcessChannel>(std::make_shared<MockScorerServer>(model));
  }
  if (spec.starts_with("exec:")) return std::make_unique<ProcessChannel>(std::string(spec.substr(5)));
  if (spec.starts_with("unix:")) return std::make_unique<SocketChannel>(std::string(spec.substr(5)));
  throw InputError("unknown scorer endpoint '" + std::string(spec) +
                   "' (expected mock:, exec: or unix:)");
}

std::unique_ptr<LineChannel> open_translator_channel(std::string_view spec) {
  if (spec == "mock:identity") {
    return std::make_unique<InProcessChannel>(std::make_shared<MockTranslatorServer>(
        [](const std::string& text, const std::string&) { return text; }));
  }
  if (spec.starts_with("mock:prefix:")) {
    std::string prefix(spec.substr(12));
    return std::make_unique<InProcessChannel>(std::make_shared<MockTranslatorServer>(
        [prefix](const std::string& text, const std::string&) { return prefix + text; }));
  }
  if (spec.starts_with("exec:")) return std::make_unique<ProcessChannel>(std::string(spec.substr(5)));
  if (spec.starts_with("unix:")) return std::make_unique<SocketChannel>(std::string(spec.substr(5)));
  throw InputError("unknown translator endpoint '" + std::string(spec) + "'");
}

}  // namespace qebias
