#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "morphgen/llm_gateway.hpp"
#include "morphgen/prompt_engine.hpp"
#include "test_support.hpp"

using namespace morphgen;
using morphgen::testing::source_path;

namespace {

BackendConfig mock_cfg(int retries = 2) {
  BackendConfig c;
  c.endpoint = "mock";
  c.model_name = "mock";
  c.max_retries = retries;
  return c;
}

Sleeper recording_sleeper(std::vector<std::chrono::milliseconds>& out) {
  return [&out](std::chrono::milliseconds d) { out.push_back(d); };
}

const TemplateRegistry& registry() {
  static const TemplateRegistry reg = TemplateRegistry::load(source_path("templates/v1"));
  return reg;
}

}  // namespace

TEST(MockBackend, KeyedReply) {
  auto mock = MockBackend::from_file(source_path("data/mock/reference_items.json"));
  Gateway gw(mock, mock_cfg());
  auto r = gw.complete("Write an item.\nQuestion type: QT1 (Identify the prefix)");
  EXPECT_NE(r.text.find("miswrote"), std::string::npos);
  EXPECT_EQ(r.attempts, 1);
}

TEST(Complete, RetriesTransientThenSucceeds) {
  auto mock = std::make_shared<MockBackend>();
  mock->add_failure(".*", 503, 2);
  mock->add_chat_rule(".*", "ok");
  std::vector<std::chrono::milliseconds> sleeps;
  Gateway gw(mock, mock_cfg(2), 4, recording_sleeper(sleeps));
  auto r = gw.complete("hello");
  EXPECT_EQ(r.text, "ok");
  EXPECT_EQ(r.attempts, 3);
  ASSERT_EQ(sleeps.size(), 2u);
  EXPECT_EQ(sleeps[0].count(), 500);
  EXPECT_EQ(sleeps[1].count(), 1000);
  EXPECT_EQ(mock->requests().size(), 3u);
}

TEST(Complete, GivesUpAfterRetries) {
  auto mock = std::make_shared<MockBackend>();
  mock->add_failure(".*", 503);
  std::vector<std::chrono::milliseconds> sleeps;
  Gateway gw(mock, mock_cfg(0), 4, recording_sleeper(sleeps));
  EXPECT_THROW(gw.complete("hello"), TransportError);
  EXPECT_TRUE(sleeps.empty());
}

TEST(Complete, RequestErrorsAreNotRetried) {
  auto mock = std::make_shared<MockBackend>();
  mock->add_failure(".*", 400, 1);
  mock->add_chat_rule(".*", "late");
  std::vector<std::chrono::milliseconds> sleeps;
  Gateway gw(mock, mock_cfg(3), 4, recording_sleeper(sleeps));
  EXPECT_THROW(gw.complete("x"), RequestError);
  EXPECT_EQ(mock->requests().size(), 1u);
}

TEST(Backoff, CappedExponential) {
  auto c = mock_cfg();
  EXPECT_EQ(backoff_delay(c, 0).count(), 500);
  EXPECT_EQ(backoff_delay(c, 3).count(), 4000);
  EXPECT_EQ(backoff_delay(c, 10).count(), 8000);
}

TEST(Logprobs, PassThroughInOrder) {
  auto mock = std::make_shared<MockBackend>();
  mock->add_logprob_rule(".*", {-1.0});
  Gateway gw(mock, mock_cfg());
  auto lp = gw.logprobs("a b c d");
  EXPECT_EQ(lp.logprobs, (std::vector<double>{-1.0, -1.0, -1.0, -1.0}));

  auto mixed = std::make_shared<MockBackend>();
  mixed->add_logprob_rule(".*", {-0.5, -1.5});
  Gateway gw2(mixed, mock_cfg());
  EXPECT_EQ(gw2.logprobs("x y").logprobs, (std::vector<double>{-0.5, -1.5}));
}

TEST(Logprobs, EmptyTextAndNoCapability) {
  auto mock = std::make_shared<MockBackend>();
  Gateway gw(mock, mock_cfg());
  EXPECT_THROW(gw.logprobs("  "), ValidationError);
  EXPECT_THROW(gw.logprobs("text"), CapabilityError);
}

TEST(Config, Checks) {
  auto c = mock_cfg();
  c.temperature = -1;
  EXPECT_THROW(c.check(), ConfigError);
  c = mock_cfg();
  c.max_tokens = 0;
  EXPECT_THROW(c.check(), ConfigError);
  c = mock_cfg();
  c.auth_env = "MORPHGEN_TEST_UNSET_VARIABLE";
  EXPECT_THROW(c.credential(), ConfigError);
  setenv("MORPHGEN_TEST_KEY", "k-123", 1);
  c.auth_env = "MORPHGEN_TEST_KEY";
  EXPECT_EQ(c.credential(), "k-123");
  EXPECT_EQ(mock_cfg().digest(), mock_cfg().digest());
  auto hot = mock_cfg();
  hot.temperature = 1.0;
  EXPECT_NE(hot.digest(), mock_cfg().digest());
}

TEST(RunPlan, SingleTurn) {
  auto mock = std::make_shared<MockBackend>();
  mock->add_chat_rule(".*", "QT1. What?\nA. a\nB. b\nC. c\nAnswer: A");
  Gateway gw(mock, mock_cfg());
  GenerationSpec spec;
  auto plan = render(registry(), StrategyId::zero_shot, spec);
  RunLog log;
  auto t = run_plan(plan, gw, &log, "r1");
  EXPECT_EQ(t.status, TranscriptStatus::complete);
  EXPECT_EQ(t.replies.size(), 1u);
  ASSERT_EQ(mock->requests().size(), 1u);
  EXPECT_EQ(mock->requests()[0], plan.turns[0].text);  // sent unmodified
  EXPECT_EQ(log.size(), 1u);
  EXPECT_EQ(log.records()[0]["status"], "complete");
}

TEST(RunPlan, MultiStepThreeCallsInOrder) {
  auto mock = std::make_shared<MockBackend>();
  mock->add_chat_rule("STEP 1 OF 3", "Chosen word: miswrote");
  mock->add_chat_rule("STEP 2 OF 3", "What is the prefix in the word *miswrote*?\nA. mis\nB. misw\nC. ote\nAnswer: A");
  mock->add_chat_rule("STEP 3 OF 3", "Final item:\nWhat is the prefix in the word *miswrote*?\nA. mis\nB. mi\nC. ote\nAnswer: A");
  Gateway gw(mock, mock_cfg());
  GenerationSpec spec;
  auto plan = render(registry(), StrategyId::cot_seq_multistep, spec);
  auto t = run_plan(plan, gw);
  ASSERT_EQ(t.status, TranscriptStatus::complete);
  auto reqs = mock->requests();
  ASSERT_EQ(reqs.size(), 3u);
  EXPECT_NE(reqs[0].find("STEP 1 OF 3"), std::string::npos);
  EXPECT_NE(reqs[1].find("STEP 2 OF 3"), std::string::npos);
  EXPECT_NE(reqs[1].find("miswrote"), std::string::npos);
  EXPECT_NE(reqs[2].find("STEP 3 OF 3"), std::string::npos);
  EXPECT_NE(reqs[2].find("B. misw"), std::string::npos);
  EXPECT_EQ(t.sent, reqs);
}

TEST(RunPlan, EmptyStepOneReplyAborts) {
  auto mock = std::make_shared<MockBackend>();
  mock->add_chat_rule(".*", "");
  Gateway gw(mock, mock_cfg());
  GenerationSpec spec;
  RunLog log;
  auto t = run_plan(render(registry(), StrategyId::cot_seq_multistep, spec), gw, &log);
  EXPECT_EQ(t.status, TranscriptStatus::aborted);
  EXPECT_EQ(t.replies.size(), 1u);
  EXPECT_EQ(mock->requests().size(), 1u);
  EXPECT_EQ(log.size(), 1u);
  EXPECT_EQ(log.records()[0]["status"], "aborted");
}

TEST(RunPlan, TransportFailureAbortsAndLogs) {
  auto mock = std::make_shared<MockBackend>();
  mock->add_failure(".*", 500);
  std::vector<std::chrono::milliseconds> sleeps;
  Gateway gw(mock, mock_cfg(1), 4, recording_sleeper(sleeps));
  GenerationSpec spec;
  RunLog log;
  auto t = run_plan(render(registry(), StrategyId::cot, spec), gw, &log);
  EXPECT_EQ(t.status, TranscriptStatus::aborted);
  EXPECT_TRUE(t.replies.empty());
  EXPECT_FALSE(t.error.empty());
  EXPECT_EQ(log.size(), 1u);
}

namespace {

class SlowBackend : public ChatBackend {
 public:
  ChatReply chat(const std::string&, const BackendConfig&) override {
    int now = ++in_flight;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --in_flight;
    return {"ok", {}};
  }
  std::string name() const override { return "slow"; }
  std::atomic<int> in_flight{0};
  std::atomic<int> peak{0};
};

}  // namespace

TEST(Gateway, BoundsConcurrency) {
  auto slow = std::make_shared<SlowBackend>();
  Gateway gw(slow, mock_cfg(), 2);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) threads.emplace_back([&] { gw.complete("x"); });
  for (auto& t : threads) t.join();
  EXPECT_LE(slow->peak.load(), 2);
  EXPECT_GE(slow->peak.load(), 1);
}
