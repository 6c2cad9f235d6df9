#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "qebias/errors.hpp"
#include "qebias/mock.hpp"
#include "qebias/scoring.hpp"

using namespace qebias;
using namespace std::chrono_literals;

namespace {

std::unique_ptr<ScorerClient> mock_client(std::shared_ptr<const ScoreModel> model,
                                          MockServerOptions options = {},
                                          std::chrono::milliseconds timeout = 2000ms) {
  auto server = std::make_shared<MockScorerServer>(std::move(model), options);
  EndpointOptions eo;
  eo.timeout = timeout;
  return std::make_unique<ScorerClient>(std::make_unique<InProcessChannel>(server), eo);
}

std::vector<ScoreRequest> requests(std::size_t n) {
  std::vector<ScoreRequest> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"r" + std::to_string(i), "source " + std::to_string(i),
                   "hyp " + std::to_string(i), std::nullopt});
  }
  return out;
}

}  // namespace

TEST(Scale, ParseAndFormat) {
  EXPECT_EQ(ScaleDescriptor::parse("0:25:lower"), kMetricXScale);
  EXPECT_EQ(ScaleDescriptor::parse("0:100:higher"), kGembaScale);
  EXPECT_EQ(kMetricXScale.str(), "0:25:lower");
  EXPECT_THROW(ScaleDescriptor::parse("1:1:higher"), InputError);
  EXPECT_THROW(ScaleDescriptor::parse("0:1:sideways"), InputError);
}

TEST(Normalize, Endpoints) {
  EXPECT_EQ(normalize_score(0.0, kMetricXScale), 1.0);
  EXPECT_EQ(normalize_score(25.0, kMetricXScale), 0.0);
  EXPECT_EQ(normalize_score(50.0, kGembaScale), 0.5);
  const auto c = normalize_score_checked(120.0, kGembaScale);
  EXPECT_EQ(c.value, 1.0);
  EXPECT_TRUE(c.clamped);
  EXPECT_FALSE(normalize_score_checked(100.0, kGembaScale).clamped);
}

TEST(Normalize, MonotoneInRawScore) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-10.0, 40.0);
  for (int i = 0; i < 5000; ++i) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    ASSERT_LE(normalize_score(a, kGembaScale), normalize_score(b, kGembaScale));
    ASSERT_GE(normalize_score(a, kMetricXScale), normalize_score(b, kMetricXScale));
    const double n = normalize_score(a, kMetricXScale);
    ASSERT_GE(n, 0.0);
    ASSERT_LE(n, 1.0);
  }
}

TEST(Mock, ModelSpecs) {
  EXPECT_EQ(parse_score_model("constant:0.5")->score("a", "b"), 0.5);
  const auto h = parse_score_model("hash:4");
  EXPECT_EQ(h->score("a", "b"), h->score("a", "b"));
  EXPECT_NE(h->score("a", "b"), parse_score_model("hash:5")->score("a", "b"));
  const auto b = parse_score_model("biased:0.8:0.05:dottoressa,stanca");
  EXPECT_DOUBLE_EQ(b->score("s", "La dottoressa"), 0.75);
  EXPECT_EQ(b->score("s", "Il dottore"), 0.8);
  EXPECT_THROW(parse_score_model("nope"), InputError);
}

TEST(Mock, HashIsRoughlyUniform) {
  HashModel m(1);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double v = m.score("s" + std::to_string(i), "h");
    ASSERT_GE(v, 0.0);
    ASSERT_LT(v, 1.0);
    sum += v;
  }
  EXPECT_NEAR(sum / 20000.0, 0.5, 0.01);
}

TEST(ScorerClient, HandshakeAndConstantScores) {
  auto client = mock_client(std::make_shared<ConstantModel>(0.5));
  EXPECT_EQ(client->info().name, "constant(0.5)");
  EXPECT_EQ(client->info().scale, kUnitScale);
  const auto reqs = requests(3);
  const auto out = client->score_batch(reqs, client->info().scale);
  ASSERT_EQ(out.size(), 3u);
  for (const auto& r : out) EXPECT_EQ(r.normalized, 0.5);
}

TEST(ScorerClient, ReverseAndShuffledOrderMatchedById) {
  auto model = std::make_shared<HashModel>(3);
  for (auto order : {ResponseOrder::reverse, ResponseOrder::shuffle}) {
    MockServerOptions o;
    o.order = order;
    o.shuffle_seed = 17;
    auto client = mock_client(model, o);
    const auto reqs = requests(200);
    const auto out = client->score_batch(reqs, kUnitScale);
    ASSERT_EQ(out.size(), reqs.size());
    for (std::size_t i = 0; i < reqs.size(); ++i) {
      ASSERT_EQ(out[i].id, reqs[i].id);
      ASSERT_EQ(out[i].raw, model->score(reqs[i].source_text, reqs[i].hypothesis_text));
    }
  }
}

TEST(ScorerClient, DroppedResponseTimesOutNamingId) {
  MockServerOptions o;
  o.drop_ids = {"r7"};
  auto client = mock_client(std::make_shared<ConstantModel>(0.1), o, 200ms);
  try {
    const auto reqs = requests(10);
    client->score_batch(reqs, kUnitScale);
    FAIL();
  } catch (const EndpointError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("r7"), std::string::npos) << msg;
    EXPECT_EQ(msg.find("r6"), std::string::npos) << msg;
  }
}

TEST(ScorerClient, UnknownIdIsProtocolError) {
  MockServerOptions o;
  o.inject_unknown_id = true;
  auto client = mock_client(std::make_shared<ConstantModel>(0.1), o, 500ms);
  const auto reqs = requests(4);
  EXPECT_THROW(client->score_batch(reqs, kUnitScale), EndpointError);
}

TEST(ScorerClient, DuplicateRequestIdsRejected) {
  auto client = mock_client(std::make_shared<ConstantModel>(0.1));
  auto reqs = requests(3);
  reqs[2].id = reqs[0].id;
  EXPECT_THROW(client->score_batch(reqs, kUnitScale), InputError);
}

namespace {

// Serves a fixed handshake and answers with whatever the test supplies.
class ScriptedServer final : public LineServer {
 public:
  explicit ScriptedServer(std::function<std::vector<std::string>(std::string_view)> fn)
      : fn_(std::move(fn)) {}
  std::optional<std::string> greeting() override {
    return R"({"name":"scripted","scale_min":0,"scale_max":100,"higher_is_better":true})";
  }
  std::vector<std::string> handle(std::string_view line) override { return fn_(line); }

 private:
  std::function<std::vector<std::string>(std::string_view)> fn_;
};

std::string id_of(std::string_view line) {
  const auto start = line.find("\"id\":\"") + 6;
  return std::string(line.substr(start, line.find('"', start) - start));
}

ScorerClient scripted(std::function<std::vector<std::string>(std::string_view)> fn) {
  EndpointOptions eo;
  eo.timeout = 500ms;
  return ScorerClient(std::make_unique<InProcessChannel>(std::make_shared<ScriptedServer>(fn)), eo);
}

}  // namespace

TEST(ScorerClient, NonNumericScoreNamesId) {
  auto client = scripted([](std::string_view line) {
    return std::vector<std::string>{R"({"id":")" + id_of(line) + R"(","score":"high"})"};
  });
  try {
    const auto reqs = requests(1);
    client.score_batch(reqs, client.info().scale);
    FAIL();
  } catch (const EndpointError& e) {
    EXPECT_NE(std::string(e.what()).find("r0"), std::string::npos) << e.what();
  }
}

TEST(ScorerClient, DuplicateResponseRejected) {
  auto client = scripted([](std::string_view line) {
    const auto r = R"({"id":")" + id_of(line) + R"(","score":50})";
    return std::vector<std::string>{r, r};
  });
  const auto reqs = requests(2);
  EXPECT_THROW(client.score_batch(reqs, client.info().scale), EndpointError);
}

TEST(ScorerClient, ScorerErrorResponsePropagates) {
  auto client = scripted([](std::string_view line) {
    return std::vector<std::string>{R"({"id":")" + id_of(line) + R"(","error":"model exploded"})"};
  });
  try {
    const auto reqs = requests(1);
    client.score_batch(reqs, client.info().scale);
    FAIL();
  } catch (const EndpointError& e) {
    EXPECT_NE(std::string(e.what()).find("model exploded"), std::string::npos) << e.what();
  }
}

TEST(ScorerClient, ReferenceFieldSentWhenPresent) {
  bool saw_reference = false;
  auto client = scripted([&](std::string_view line) {
    if (line.find("\"reference\"") != std::string_view::npos) saw_reference = true;
    return std::vector<std::string>{R"({"id":")" + id_of(line) + R"(","score":120})"};
  });
  std::vector<ScoreRequest> reqs = {{"x", "s", "h", std::string("ref")}};
  const auto out = client.score_batch(reqs, client.info().scale);
  EXPECT_TRUE(saw_reference);
  EXPECT_EQ(out[0].normalized, 1.0);
  EXPECT_TRUE(out[0].clamped);
}

TEST(ScorerClient, BadHandshakeIsEndpointError) {
  class Silent final : public LineServer {
   public:
    std::optional<std::string> greeting() override { return "not json"; }
    std::vector<std::string> handle(std::string_view) override { return {}; }
  };
  EXPECT_THROW(ScorerClient(std::make_unique<InProcessChannel>(std::make_shared<Silent>())),
               EndpointError);
}

namespace {

EvaluationInstance extra_instance() {
  EvaluationInstance inst;
  inst.id = "e1";
  inst.language_pair = {"en", "it"};
  inst.source = "s";
  inst.context = "Tymoshenko released her autobiography.";
  inst.condition = Condition::unambiguous_extra;
  inst.variants = {{VariantLabel::F, "h_F"}, {VariantLabel::M, "h_M"}};
  inst.correct_variant = VariantLabel::F;
  inst.source_group = Gender::F;
  return inst;
}

}  // namespace

TEST(Strategy, NoneAndSourceContext) {
  const auto inst = extra_instance();
  const auto none = build_scored_inputs(inst, VariantLabel::M, {});
  EXPECT_EQ(none.id, "e1/M");
  EXPECT_EQ(none.source_text, "s");
  EXPECT_EQ(none.hypothesis_text, "h_M");
  const auto ctx = build_scored_inputs(inst, VariantLabel::M, {ContextKind::concat_source_context});
  EXPECT_EQ(ctx.source_text, "Tymoshenko released her autobiography. s");
  EXPECT_EQ(ctx.hypothesis_text, "Tymoshenko released her autobiography. h_M");
}

TEST(Strategy, TranslatedContextUsesTranslator) {
  auto server = std::make_shared<MockTranslatorServer>(
      [](const std::string&, const std::string&) { return std::string("CTX"); });
  TranslatorClient translator(std::make_unique<InProcessChannel>(server));
  const auto inst = extra_instance();
  const ContextStrategy strategy{ContextKind::concat_translated_context, " "};
  const auto f = build_scored_inputs(inst, VariantLabel::F, strategy, &translator);
  const auto m = build_scored_inputs(inst, VariantLabel::M, strategy, &translator);
  EXPECT_EQ(f.hypothesis_text, "CTX h_F");
  EXPECT_EQ(m.hypothesis_text, "CTX h_M");
  EXPECT_EQ(m.source_text, "Tymoshenko released her autobiography. s");
  EXPECT_EQ(translator.upstream_requests(), 1u);
  EXPECT_EQ(server->requests_seen(), 1u);
}

TEST(Strategy, MissingContextAndTranslator) {
  auto inst = extra_instance();
  EXPECT_THROW(build_scored_inputs(inst, VariantLabel::F, {ContextKind::concat_translated_context}),
               InputError);
  inst.context.reset();
  EXPECT_THROW(build_scored_inputs(inst, VariantLabel::F, {ContextKind::concat_source_context}),
               InputError);
}

TEST(Translator, BatchDedupesAndKeepsPositions) {
  auto server = std::make_shared<MockTranslatorServer>(
      [](const std::string& t, const std::string& lang) { return lang + ":" + t; });
  TranslatorClient translator(std::make_unique<InProcessChannel>(server));
  const std::vector<std::string> texts = {"a", "b", "a"};
  EXPECT_EQ(translator.translate_batch(texts, "it"),
            (std::vector<std::string>{"it:a", "it:b", "it:a"}));
  EXPECT_EQ(server->requests_seen(), 2u);
  translator.translate_batch(texts, "it");
  EXPECT_EQ(server->requests_seen(), 2u);
  EXPECT_EQ(translator.cached("b", "it"), "it:b");
  EXPECT_FALSE(translator.cached("b", "de").has_value());
}

TEST(Translator, EmptyTranslationNamesPosition) {
  auto server = std::make_shared<MockTranslatorServer>(
      [](const std::string& t, const std::string&) { return t == "x" ? std::string() : t; });
  TranslatorClient translator(std::make_unique<InProcessChannel>(server));
  const std::vector<std::string> texts = {"a", "x"};
  try {
    translator.translate_batch(texts, "it");
    FAIL();
  } catch (const EndpointError& e) {
    EXPECT_NE(std::string(e.what()).find('1'), std::string::npos) << e.what();
  }
}

TEST(Cache, SkipsRescoringAndPersists) {
  const auto dir = std::filesystem::temp_directory_path() / "qebias_cache_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto path = dir / "scores.jsonl";
  auto model = std::make_shared<HashModel>(8);
  auto server = std::make_shared<MockScorerServer>(model);
  ScorerClient client(std::make_unique<InProcessChannel>(server));
  const auto reqs = requests(20);
  {
    ScoreCache cache(path);
    const auto first = score_with_cache(client, &cache, reqs, kUnitScale);
    EXPECT_EQ(first.scored, 20u);
    EXPECT_EQ(first.cache_hits, 0u);
    cache.save();
  }
  ScoreCache reloaded(path);
  EXPECT_EQ(reloaded.size(), 20u);
  const auto second = score_with_cache(client, &reloaded, reqs, kUnitScale);
  EXPECT_EQ(second.cache_hits, 20u);
  EXPECT_EQ(second.scored, 0u);
  EXPECT_EQ(server->requests_seen(), 20u);
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    EXPECT_EQ(second.records[i].raw, model->score(reqs[i].source_text, reqs[i].hypothesis_text));
  }
  std::filesystem::remove_all(dir);
}

TEST(ScorerClient, RetryStillFailsForPermanentDrop) {
  MockServerOptions o;
  o.drop_ids = {"r3"};
  auto server = std::make_shared<MockScorerServer>(std::make_shared<ConstantModel>(0.4), o);
  EndpointOptions eo;
  eo.timeout = 150ms;
  eo.retries = 1;
  ScorerClient client(std::make_unique<InProcessChannel>(server), eo);
  const auto reqs = requests(5);
  try {
    client.score_batch(reqs, kUnitScale);
    FAIL();
  } catch (const EndpointError& e) {
    EXPECT_NE(std::string(e.what()).find("r3"), std::string::npos) << e.what();
  }
  EXPECT_EQ(server->requests_seen(), 6u);
}
