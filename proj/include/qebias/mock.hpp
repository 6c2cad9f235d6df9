#pragma once
// Built-in scorer and translator endpoints for tests, acceptance runs and
// dry runs of the CLI. They speak the same line protocol as external
// endpoints and can be run in-process or served over stdio / a socket.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "qebias/channel.hpp"
#include "qebias/scoring.hpp"

namespace qebias {

class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual std::string name() const = 0;
  virtual ScaleDescriptor scale() const { return kUnitScale; }
  virtual double score(std::string_view source, std::string_view hypothesis) const = 0;
};

class ConstantModel final : public ScoreModel {
 public:
  explicit ConstantModel(double value) : value_(value) {}
  std::string name() const override;
  double score(std::string_view, std::string_view) const override { return value_; }

 private:
  double value_;
};

// Deterministic pseudo-uniform score in [0,1) from a hash of the text pair
// and a salt. Carries no gender signal.
class HashModel final : public ScoreModel {
 public:
  explicit HashModel(std::uint64_t salt = 0) : salt_(salt) {}
  std::string name() const override;
  double score(std::string_view source, std::string_view hypothesis) const override;

 private:
  std::uint64_t salt_;
};

// base, or base - penalty when any hypothesis token is a marker word.
class BiasedModel final : public ScoreModel {
 public:
  BiasedModel(double base, double penalty, std::set<std::string> markers);
  std::string name() const override;
  double score(std::string_view source, std::string_view hypothesis) const override;

 private:
  double base_;
  double penalty_;
  std::set<std::string> markers_;
};

// "constant:<v>", "hash[:<salt>]" or "biased:<base>:<penalty>:<w1,w2,...>".
std::unique_ptr<ScoreModel> parse_score_model(std::string_view spec);

enum class ResponseOrder { in_order, reverse, shuffle };

struct MockServerOptions {
  ResponseOrder order = ResponseOrder::in_order;
  std::uint64_t shuffle_seed = 0;
  // Requests with these ids never get an answer.
  std::set<std::string> drop_ids;
  // Emit one response for an id nobody asked about.
  bool inject_unknown_id = false;
};

// Scorer endpoint around a ScoreModel. Out-of-order modes hold responses
// back until the client flushes (or the stdio input goes idle).
class MockScorerServer final : public LineServer {
 public:
  MockScorerServer(std::shared_ptr<const ScoreModel> model, MockServerOptions options = {});

  std::optional<std::string> greeting() override;
  std::vector<std::string> handle(std::string_view line) override;
  std::vector<std::string> drain() override;

  std::size_t requests_seen() const { return requests_seen_; }

 private:
  std::shared_ptr<const ScoreModel> model_;
  MockServerOptions options_;
  std::vector<std::string> held_;
  std::mt19937_64 rng_;
  std::size_t requests_seen_ = 0;
};

// Translator endpoint applying a function to each text.
class MockTranslatorServer final : public LineServer {
 public:
  using TranslateFn = std::function<std::string(const std::string& text, const std::string& lang)>;
  explicit MockTranslatorServer(TranslateFn fn);

  std::vector<std::string> handle(std::string_view line) override;
  std::size_t requests_seen() const { return requests_seen_; }

 private:
  TranslateFn fn_;
  std::size_t requests_seen_ = 0;
};

// Endpoint specs understood by the CLI:
//   mock:<model spec>      in-process mock scorer
//   exec:<shell command>   child process over stdin/stdout
//   unix:<socket path>     AF_UNIX stream socket
std::unique_ptr<LineChannel> open_scorer_channel(std::string_view spec);

// Translator specs: mock:identity, mock:prefix:<text>, exec:..., unix:...
std::unique_ptr<LineChannel> open_translator_channel(std::string_view spec);

}  // namespace qebias
