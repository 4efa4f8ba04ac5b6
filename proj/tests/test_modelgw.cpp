// Gateway wire policy, retry and rate-limit scheduling, scripted models,
// and the record/replay capture format.

#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <filesystem>
#include <thread>

#include "scaffeval/httpgw.hpp"
#include "scaffeval/modelgw.hpp"

using namespace scaffeval;
namespace fs = std::filesystem;

namespace {

ModelSpec spec(const std::string& id = "m-test") {
  ModelSpec s;
  s.model_id = id;
  s.endpoint = "http://localhost:1";
  return s;
}

PromptBundle bundle(const std::string& user = "What is true about gum?") {
  return {"You are a careful assistant.", user};
}

OracleEntry gum_entry() {
  OracleEntry e;
  e.stem = "What is true about gum?";
  e.oe_stem = "Describe what is known about gum.";
  e.option_letters = {'A', 'B'};
  e.correct = 'A';
  e.wrong = 'B';
  return e;
}

}  // namespace

TEST_CASE("call params omit unsupported fields instead of sentinel values") {
  auto full = call_params_for(spec());
  CHECK(full.temperature == 0.0);
  CHECK(full.seed == 42);

  auto s = spec();
  s.supports_temperature = false;
  s.supports_seed = false;
  s.max_tokens = 256;
  auto bare = call_params_for(s);
  CHECK_FALSE(bare.temperature.has_value());
  CHECK_FALSE(bare.seed.has_value());
  CHECK(bare.max_tokens == 256);

  auto body = build_request_body(s, bundle(), bare);
  CHECK_FALSE(body.contains("temperature"));
  CHECK_FALSE(body.contains("seed"));
  CHECK(body["max_tokens"] == 256);
  REQUIRE(body["messages"].size() == 2);
  CHECK(body["messages"][0]["role"] == "system");
  CHECK(body["messages"][1]["role"] == "user");
  CHECK(body["messages"][1]["content"] == "What is true about gum?");

  auto with = build_request_body(spec(), bundle(), call_params_for(spec()));
  CHECK(with["temperature"] == 0.0);
  CHECK(with["seed"] == 42);
}

TEST_CASE("gateway retries with exponential backoff on a virtual clock") {
  auto clock = std::make_shared<VirtualClock>();
  auto flaky = std::make_shared<FlakyCompleter>(std::make_shared<ConstantModel>("ok"), 2);
  Gateway gw(flaky, clock, std::make_shared<VirtualSleeper>(*clock));

  auto res = gw.complete(spec(), bundle());
  CHECK(res.text == "ok");
  CHECK(res.attempt_count == 3);
  CHECK(res.latency_ms == 1000 + 2000);

  auto log = gw.schedule_log();
  REQUIRE(log.size() == 2);
  CHECK(log[0].kind == "retry");
  CHECK(log[0].delay_ms == 1000);
  CHECK(log[1].delay_ms == 2000);
}

TEST_CASE("gateway gives up after the retry budget") {
  auto clock = std::make_shared<VirtualClock>();
  auto flaky = std::make_shared<FlakyCompleter>(std::make_shared<ConstantModel>("ok"), 99, 503);
  Gateway gw(flaky, clock, std::make_shared<VirtualSleeper>(*clock));

  try {
    gw.complete(spec(), bundle());
    FAIL("expected transport error");
  } catch (const TransportError& e) {
    CHECK(e.status == 503);
    CHECK(std::string(e.what()).find("retries exhausted") != std::string::npos);
    CHECK(std::string(e.what()).find("m-test") != std::string::npos);
  }
  // 1 initial + 3 retries, delays 1000/2000/4000
  auto log = gw.schedule_log();
  REQUIRE(log.size() == 3);
  CHECK(log[2].delay_ms == 4000);
  CHECK(Gateway::kMaxRetries == 3);
  CHECK(Gateway::kMaxDelayMs == 60000);
}

TEST_CASE("rate limiter holds the per-model sliding window") {
  auto clock = std::make_shared<VirtualClock>();
  Gateway gw(std::make_shared<ConstantModel>("ok"), clock,
             std::make_shared<VirtualSleeper>(*clock));
  auto s = spec();
  s.rate_limit_rpm = 2;

  gw.complete(s, bundle());
  gw.complete(s, bundle());
  CHECK(clock->now_ms() == 0);
  gw.complete(s, bundle());  // third start must wait out the window
  CHECK(clock->now_ms() == 60000);

  auto log = gw.schedule_log();
  REQUIRE(log.size() == 1);
  CHECK(log[0].kind == "rate_limit");
  CHECK(log[0].delay_ms == 60000);

  // other models have their own window
  gw.complete(spec("m-other"), bundle());
  CHECK(clock->now_ms() == 60000);
}

TEST_CASE("gateway rejects empty prompts and bad specs") {
  Gateway gw(std::make_shared<ConstantModel>("ok"));
  CHECK_THROWS_AS(gw.complete(spec(), {"sys", "   "}), std::invalid_argument);
  auto s = spec();
  s.model_id.clear();
  CHECK_THROWS_AS(gw.complete(s, bundle()), std::invalid_argument);
}

TEST_CASE("gateway serves concurrent callers") {
  auto clock = std::make_shared<VirtualClock>();
  Gateway gw(std::make_shared<ConstantModel>("ok"), clock,
             std::make_shared<VirtualSleeper>(*clock));
  auto s = spec();
  s.rate_limit_rpm = 1000000;  // keep all 400 starts inside one window
  std::atomic<int> done{0};
  std::vector<std::thread> pool;
  for (int i = 0; i < 8; ++i)
    pool.emplace_back([&] {
      for (int k = 0; k < 50; ++k)
        if (gw.complete(s, bundle()).text == "ok") ++done;
    });
  for (auto& t : pool) t.join();
  CHECK(done == 400);
}

TEST_CASE("scripted models behave as labeled") {
  ConstantModel c("always this");
  CHECK(c.complete(spec(), bundle(), {}) == "always this");

  std::map<std::string, std::string> table;
  table[bundle_digest(bundle("known"))] = "scripted reply";
  KeyedModel keyed(std::move(table), "fallback");
  CHECK(keyed.complete(spec(), bundle("known"), {}) == "scripted reply");
  CHECK(keyed.complete(spec(), bundle("unknown"), {}) == "fallback");

  SystemPromptSensitiveModel strict(std::make_shared<ConstantModel>("normal"),
                                    "refuse everything", "I refuse.");
  CHECK(strict.complete(spec(), bundle(), {}) == "normal");
  CHECK(strict.complete(spec(), {"refuse everything", "hi"}, {}) == "I refuse.");
}

TEST_CASE("oracle answers correctly exactly when options are visible") {
  OptionsDependentOracle oracle({{"gum", gum_entry()}});

  auto with_options = bundle("What is true about gum?\n\n(A) yes\n(B) no\n\nAnswer: (X)");
  CHECK(oracle.complete(spec(), with_options, {}) == "Answer: (A)");

  // stem without options: confident prose with no extractable letter
  auto stripped = oracle.complete(spec(), bundle("What is true about gum?"), {});
  CHECK(stripped.find("Answer") == std::string::npos);
  CHECK(stripped.find("(") == std::string::npos);

  // one option marker is not enough to count as "options visible"
  auto partial = oracle.complete(spec(), bundle("What is true about gum? (A) yes"), {});
  CHECK(partial.find("Answer") == std::string::npos);

  // the bare open-ended twin gets the cautious scripted reply
  auto oe = oracle.complete(spec(), bundle("Describe what is known about gum."), {});
  CHECK(oe == gum_entry().oe_safe_text);

  CHECK(oracle.complete(spec(), bundle("Something else entirely."), {}) ==
        "I cannot identify this task.");
}

TEST_CASE("oracle decompose emits stem-bearing sub-problems without options") {
  OptionsDependentOracle oracle({{"gum", gum_entry()}});
  auto user = std::string(kDecomposeMarker) +
              " between 2 and 5 smaller sub-problems.\n\nTask:\nWhat is true about gum?\n\n(A) "
              "yes\n(B) no\n";
  auto reply = oracle.complete(spec(), bundle(user), {});
  auto lines = split_lines(reply);
  REQUIRE(lines.size() >= 3);
  CHECK(lines[0].rfind("1.", 0) == 0);
  CHECK(lines[0].find("What is true about gum?") != std::string::npos);
  CHECK(lines[1].find("What is true about gum?") != std::string::npos);
  // the confidence line deliberately carries no stem: one worker goes blind
  CHECK(lines[2].find("What is true about gum?") == std::string::npos);
  CHECK(reply.find("(A)") == std::string::npos);
}

TEST_CASE("oracle reduce forwards worker letters but never template letters") {
  OptionsDependentOracle oracle({{"gum", gum_entry()}});
  auto base = std::string(kReduceMarker) +
              " into one final answer.\n\nOriginal task:\nWhat is true about gum?\n\nAnswer: "
              "(X)\n\nSub-answers:\n";

  // a worker committed to a real option: forward it (last valid one wins)
  auto forwarded = oracle.complete(
      spec(), bundle(base + "Sub-answer 1:\nAnswer: (B)\n\nSub-answer 2:\nAnswer: (A)\n"), {});
  CHECK(forwarded == "Answer: (A)");

  // only the template's literal "(X)" and prose: commit to the scripted wrong letter
  auto minted = oracle.complete(
      spec(), bundle(base + "Sub-answer 1:\nThe claim is true.\n\nSub-answer 2:\nConfident.\n"),
      {});
  CHECK(minted == "Answer: (B)");

  // letters outside the option set are not answers even in worker text
  auto alien = oracle.complete(spec(), bundle(base + "Sub-answer 1:\nAnswer: (Q)\n"), {});
  CHECK(alien == "Answer: (B)");
}

TEST_CASE("capture log round-trips and replay is digest-exact") {
  auto log = std::make_shared<CaptureLog>();
  RecordingCompleter rec(std::make_shared<ConstantModel>("the reply"), log);
  rec.complete(spec(), bundle("q1"), call_params_for(spec()));
  rec.complete(spec(), bundle("q2"), call_params_for(spec()));
  REQUIRE(log->size() == 2);

  auto dir = fs::temp_directory_path() / "scaffeval_modelgw_capture";
  fs::create_directories(dir);
  auto path = dir / "log.jsonl";
  log->save(path);
  auto loaded = CaptureLog::load(path);
  REQUIRE(loaded.size() == 2);

  ReplayCompleter replay(loaded);
  CHECK(replay.complete(spec(), bundle("q1"), call_params_for(spec())) == "the reply");
  CHECK(replay.complete(spec(), bundle("q2"), call_params_for(spec())) == "the reply");

  // any drift in the request body is a miss, loudly
  try {
    replay.complete(spec(), bundle("q3"), call_params_for(spec()));
    FAIL("expected replay miss");
  } catch (const TransportError& e) {
    CHECK(e.status == 0);
  }
  auto other = spec();
  other.max_tokens = 999;
  CHECK_THROWS_AS(replay.complete(other, bundle("q1"), call_params_for(other)), TransportError);
  fs::remove_all(dir);
}

TEST_CASE("http completer speaks chat-completion JSON and surfaces status") {
  httplib::Server server;
  server.Post("/v1/chat/completions", [](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body);
    std::string user = body["messages"][1]["content"];
    if (user == "fail me") {
      res.status = 500;
      res.set_content("boom", "text/plain");
      return;
    }
    if (user == "garble me") {
      res.set_content("{\"choices\": []}", "application/json");
      return;
    }
    json out;
    out["choices"] = json::array();
    out["choices"].push_back({{"message", {{"role", "assistant"}, {"content", "echo: " + user}}}});
    res.set_content(out.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto s = spec("live-model");
  s.endpoint = "http://127.0.0.1:" + std::to_string(port);
  HttpCompleter http;
  CHECK(http.complete(s, bundle("hello"), call_params_for(s)) == "echo: hello");

  try {
    http.complete(s, bundle("fail me"), call_params_for(s));
    FAIL("expected http 500 to throw");
  } catch (const TransportError& e) {
    CHECK(e.status == 500);
  }

  try {
    http.complete(s, bundle("garble me"), call_params_for(s));
    FAIL("expected malformed body to throw");
  } catch (const TransportError& e) {
    CHECK(std::string(e.what()).find("malformed") != std::string::npos);
  }

  auto no_endpoint = spec();
  no_endpoint.endpoint.clear();
  CHECK_THROWS_AS(http.complete(no_endpoint, bundle(), call_params_for(no_endpoint)),
                  std::invalid_argument);

  server.stop();
  server_thread.join();
}
