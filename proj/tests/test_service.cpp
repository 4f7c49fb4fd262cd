#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <thread>

#include "docrag/errors.hpp"
#include "docrag/remote.hpp"
#include "docrag/serialization.hpp"
#include "docrag/service.hpp"
#include "test_util.hpp"

using namespace docrag;
using nlohmann::json;
using testutil::page;

namespace {

struct Fixture {
  Corpus corpus{{page("d1", "eiffel tower paris"), page("d2", "london bridge"), page("d3", "tower of pisa")}};
  HashedTfRetriever retriever{corpus};
  NormalizedMatchJudge judge;
  std::vector<Query> queries = [] {
    Query q;
    q.id = "q1";
    q.text = "Where is the Eiffel tower?";
    q.reference_answer = "Paris";
    q.golden_doc_ids = {"d1"};
    return std::vector<Query>{q};
  }();
  SessionService service{corpus, retriever, queries, judge, ServiceConfig{}};

  ServiceResponse post(const std::string& path, const json& body) { return service.handle("POST", path, body.dump()); }
};

// Serves `service` on an ephemeral port for the lifetime of the object.
class Running {
 public:
  explicit Running(SessionService& service) : server_(service) {
    port_ = server_.bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_.run(); });
  }
  ~Running() {
    server_.stop();
    thread_.join();
  }
  int port() const { return port_; }

 private:
  ServiceServer server_;
  int port_ = 0;
  std::thread thread_;
};

// A stub HTTP backend on an ephemeral port.
class Stub {
 public:
  Stub() {
    port_ = server.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~Stub() {
    server.stop();
    thread_.join();
  }
  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

  httplib::Server server;

 private:
  int port_ = 0;
  std::thread thread_;
};

RetryPolicy fast_retry() {
  RetryPolicy r;
  r.backoff = std::chrono::milliseconds(1);
  r.timeout = std::chrono::seconds(5);
  return r;
}

}  // namespace

TEST_CASE("create, step to an answer, fetch the trajectory") {
  Fixture f;
  auto created = f.post("/sessions", {{"query_id", "q1"}});
  REQUIRE(created.status == 200);
  auto id = created.body.at("session_id").get<std::string>();
  CHECK(created.body.at("initial_observation").at("role") == "user");

  auto r = f.post("/sessions/" + id + "/step", {{"assistant_text", "<search>eiffel tower</search>"}});
  REQUIRE(r.status == 200);
  CHECK(r.body.at("observation").at("text").get<std::string>().rfind("Image [0]: d1", 0) == 0);
  r = f.post("/sessions/" + id + "/step", {{"assistant_text", "<select>0</select>"}});
  r = f.post("/sessions/" + id + "/step", {{"assistant_text", "<answer>Paris</answer>"}});
  REQUIRE(r.status == 200);
  CHECK(r.body.at("terminated") == true);

  auto t = f.service.handle("GET", "/sessions/" + id + "/trajectory", "");
  REQUIRE(t.status == 200);
  auto traj = trajectory_from_json(t.body);
  CHECK(traj.terminated);
  CHECK(traj.termination_reason == TerminationReason::Answered);
  CHECK(traj.final_answer == "Paris");

  auto again = f.post("/sessions/" + id + "/step", {{"assistant_text", "<answer>x</answer>"}});
  CHECK(again.status == 409);
  CHECK(again.body.contains("error"));

  auto scored = f.post("/score", {{"session_id", id}});
  REQUIRE(scored.status == 200);
  // The script uses no think tags, so r_pat is 0.
  CHECK(reward_from_json(scored.body).total == doctest::Approx(0.9));
  auto by_body = f.post("/score", {{"trajectory", t.body}, {"weights", {0, 0, 0, 0, 1}}});
  REQUIRE(by_body.status == 200);
  CHECK(by_body.body.at("total") == 1.0);

  CHECK(f.service.handle("DELETE", "/sessions/" + id, "").status == 200);
  CHECK(f.service.handle("GET", "/sessions/" + id + "/trajectory", "").status == 404);
  CHECK(f.service.session_count() == 0);
}

TEST_CASE("service error statuses") {
  Fixture f;
  CHECK(f.post("/sessions/nope/step", {{"assistant_text", "x"}}).status == 404);
  CHECK(f.post("/sessions", {{"query_id", "missing"}}).status == 404);
  CHECK(f.service.handle("POST", "/sessions", "{not json").status == 400);
  CHECK(f.post("/sessions", json::object()).status == 400);
  auto id = f.post("/sessions", {{"query_id", "q1"}}).body.at("session_id").get<std::string>();
  CHECK(f.post("/sessions/" + id + "/step", json::object()).status == 400);
  CHECK(f.post("/sessions/" + id + "/step", {{"assistant_text", 5}}).status == 400);
  CHECK(f.service.handle("GET", "/nowhere", "").status == 404);
  CHECK(f.service.handle("PUT", "/sessions", "{}").status == 404);
  CHECK(f.post("/score", {{"session_id", id}, {"weights", {1, 2}}}).status == 400);
  CHECK(f.post("/advantages", {{"rewards", {1.0}}}).status == 400);
  CHECK(f.post("/search", {{"query", "x"}, {"k", 0}}).status == 400);
}

TEST_CASE("advantages, search, health and inline queries") {
  Fixture f;
  auto a = f.post("/advantages", {{"rewards", {1, 0, 0, 0, 0}}});
  REQUIRE(a.status == 200);
  auto adv = a.body.at("advantages").get<std::vector<double>>();
  std::vector<double> want{2.0, -0.5, -0.5, -0.5, -0.5};
  for (std::size_t i = 0; i < 5; ++i) CHECK(adv[i] == doctest::Approx(want[i]).epsilon(1e-7));

  auto s = f.post("/search", {{"query", "london"}, {"k", 2}});
  REQUIRE(s.status == 200);
  CHECK(s.body.at("results").size() == 2);
  CHECK(s.body.at("results")[0].at("doc_id") == "d2");

  CHECK(f.service.handle("GET", "/health", "").status == 200);

  Query q = f.queries[0];
  q.id = "inline";
  auto c = f.post("/sessions", {{"query", to_json(q)}, {"trajectory_id", "mine"}});
  REQUIRE(c.status == 200);
  auto id = c.body.at("session_id").get<std::string>();
  auto t = f.service.handle("GET", "/sessions/" + id + "/trajectory", "");
  CHECK(t.body.at("id") == "mine");
  CHECK(t.body.at("query_id") == "inline");
}

TEST_CASE("HTTP front end matches the in-process engine") {
  Fixture f;
  Running server(f.service);
  httplib::Client cli("127.0.0.1", server.port());

  std::vector<std::string> script{"<think>a</think><search>tower</search>", "<select>0,1</select>",
                                  "<bbox>0,0,500,500</bbox>", "bad", "<answer>Paris</answer>"};
  auto created = cli.Post("/sessions", json{{"query_id", "q1"}}.dump(), "application/json");
  REQUIRE(created);
  REQUIRE(created->status == 200);
  auto id = json::parse(created->body).at("session_id").get<std::string>();

  Session local(f.queries[0], f.corpus, f.retriever, SessionConfig{}, id);
  for (const auto& text : script) {
    auto res = cli.Post("/sessions/" + id + "/step", json{{"assistant_text", text}}.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->body == to_json(local.step(text)).dump());
  }
  auto after = cli.Post("/sessions/" + id + "/step", json{{"assistant_text", "x"}}.dump(), "application/json");
  REQUIRE(after);
  CHECK(after->status == 409);
  auto missing = cli.Get("/sessions/zzz/trajectory");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  auto malformed = cli.Post("/advantages", "[", "application/json");
  REQUIRE(malformed);
  CHECK(malformed->status == 400);

  ServiceServer second(f.service);
  CHECK_THROWS_AS(second.bind("127.0.0.1", server.port()), IoError);
}

TEST_CASE("endpoint parsing") {
  auto ep = Endpoint::parse("http://localhost:8000/v1/chat/completions");
  CHECK(ep.scheme_host_port == "http://localhost:8000");
  CHECK(ep.path == "/v1/chat/completions");
  CHECK(Endpoint::parse("http://h").path == "/");
  CHECK_THROWS_AS(Endpoint::parse("https://h/x"), InvalidArgument);
  CHECK_THROWS_AS(Endpoint::parse("http:///x"), InvalidArgument);
}

TEST_CASE("chat request format") {
  std::vector<Turn> history(2);
  history[0].role = Role::User;
  history[0].text = "question";
  history[1].role = Role::Assistant;
  history[1].text = "<search>x</search>";
  Turn obs;
  obs.role = Role::User;
  obs.text = "Image [0]: d1";
  auto img = page("d1", "", 2, 1);
  img.raster = std::make_shared<const Raster>(2, 1);
  obs.images = {img};
  history.push_back(obs);
  auto j = chat_request(history, "m", 0.5, 64);
  CHECK(j.at("model") == "m");
  CHECK(j.at("temperature") == 0.5);
  CHECK(j.at("max_tokens") == 64);
  REQUIRE(j.at("messages").size() == 3);
  CHECK(j["messages"][0] == json{{"role", "user"}, {"content", "question"}});
  CHECK(j["messages"][1].at("role") == "assistant");
  const auto& parts = j["messages"][2].at("content");
  REQUIRE(parts.size() == 2);
  CHECK(parts[0] == json{{"type", "text"}, {"text", "Image [0]: d1"}});
  CHECK(parts[1].at("type") == "image_url");
  auto url = parts[1].at("image_url").at("url").get<std::string>();
  CHECK(url == "data:image/x-portable-pixmap;base64," + base64_encode(encode_ppm(*img.raster)));
}

TEST_CASE("remote policy, judge and retriever against stub servers") {
  Stub stub;
  std::atomic<int> chat_calls{0}, judge_calls{0};
  stub.server.Post("/chat", [&](const httplib::Request& req, httplib::Response& res) {
    if (chat_calls++ == 0) {
      res.status = 503;
      return;
    }
    auto body = json::parse(req.body);
    auto last = body.at("messages").back().at("content").get<std::string>();
    res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "echo " + last}}}}}}}.dump(),
                    "application/json");
  });
  stub.server.Post("/judge", [&](const httplib::Request& req, httplib::Response& res) {
    ++judge_calls;
    auto body = json::parse(req.body);
    int score = body.at("generated") == body.at("reference") ? 1 : 0;
    if (body.at("generated") == "weird") score = 7;
    res.set_content(json{{"score", score}}.dump(), "application/json");
  });
  stub.server.Post("/search", [&](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body);
    json results = json::array();
    if (body.at("query") == "bogus") results.push_back({{"doc_id", "nope"}, {"score", 1.0}});
    else results.push_back({{"doc_id", "d2"}, {"score", 0.5}});
    res.set_content(json{{"results", results}}.dump(), "application/json");
  });
  stub.server.Post("/reject", [](const httplib::Request&, httplib::Response& res) { res.status = 400; });
  stub.server.Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json", "text/plain");
  });

  RemotePolicy policy(Endpoint::parse(stub.url("/chat")), "m", 0.0, 16, fast_retry());
  std::vector<Turn> history(1);
  history[0].text = "hello";
  CHECK(policy.generate(history) == "echo hello");
  CHECK(chat_calls == 2);  // one 503, then success

  RemoteJudge judge(Endpoint::parse(stub.url("/judge")), 2, fast_retry());
  CHECK(judge.score("a", "a", "q") == 1);
  CHECK(judge.score("a", "b", "q") == 0);
  CHECK_THROWS_AS(judge.score("weird", "b", "q"), TransportError);
  std::vector<std::thread> workers;
  std::atomic<int> ones{0};
  for (int i = 0; i < 8; ++i) workers.emplace_back([&] { ones += judge.score("x", "x", "q"); });
  for (auto& w : workers) w.join();
  CHECK(ones == 8);

  Fixture f;
  RemoteRetriever retriever(Endpoint::parse(stub.url("/search")), f.corpus, fast_retry());
  auto c = retriever.search("anything", 3);
  REQUIRE(c.size() == 1);
  CHECK(c.entries[0].doc_id == "d2");
  CHECK_THROWS_AS(retriever.search("bogus", 3), TransportError);

  CHECK_THROWS_AS(post_json(Endpoint::parse(stub.url("/reject")), json::object(), fast_retry()), TransportError);
  CHECK_THROWS_AS(post_json(Endpoint::parse(stub.url("/garbage")), json::object(), fast_retry()), TransportError);
  // Nothing listens on port 1.
  CHECK_THROWS_AS(post_json(Endpoint::parse("http://127.0.0.1:1/x"), json::object(), fast_retry()), TransportError);
}

TEST_CASE("judge transport failure maps to 502") {
  Stub stub;
  stub.server.Post("/judge", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  RemoteJudge judge(Endpoint::parse(stub.url("/judge")), 1, fast_retry());
  Fixture f;
  SessionService service(f.corpus, f.retriever, f.queries, judge, ServiceConfig{});
  auto id = service.handle("POST", "/sessions", json{{"query_id", "q1"}}.dump()).body.at("session_id").get<std::string>();
  service.handle("POST", "/sessions/" + id + "/step", json{{"assistant_text", "<answer>Paris</answer>"}}.dump());
  CHECK(service.handle("POST", "/score", json{{"session_id", id}}.dump()).status == 502);
}
