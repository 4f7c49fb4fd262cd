#pragma once

#include <chrono>
#include <memory>
#include <semaphore>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "docrag/environment.hpp"
#include "docrag/retrieval.hpp"
#include "docrag/rewards.hpp"

namespace docrag {

/// "http://host:port/path" split for the HTTP client.
struct Endpoint {
  std::string scheme_host_port;  // e.g. "http://127.0.0.1:8080"
  std::string path;              // e.g. "/v1/chat/completions"

  /// Throws InvalidArgument unless the url is http:// with a host.
  static Endpoint parse(const std::string& url);
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds backoff{200};  // doubled after every failed attempt
  std::chrono::seconds timeout{60};
};

/// POSTs `body` as JSON and parses the JSON reply. Connection failures and 5xx
/// replies are retried; anything else that is not 2xx throws TransportError.
nlohmann::json post_json(const Endpoint& ep, const nlohmann::json& body, const RetryPolicy& retry = {});

/// Chat-completion request body: the history as role/content messages with
/// page images inlined as base64 PPM data URLs.
nlohmann::json chat_request(std::span<const Turn> history, const std::string& model, double temperature,
                            std::size_t max_tokens);

/// Policy backed by a chat-completion endpoint (choices[0].message.content).
class RemotePolicy final : public Policy {
 public:
  RemotePolicy(Endpoint ep, std::string model, double temperature = 0.0, std::size_t max_tokens = 1024,
               RetryPolicy retry = {});
  std::string generate(std::span<const Turn> history) override;

 private:
  Endpoint ep_;
  std::string model_;
  double temperature_;
  std::size_t max_tokens_;
  RetryPolicy retry_;
};

/// Judge service: request {question, reference, generated}, reply {score: 0|1}.
/// At most `max_in_flight` requests run at once across threads.
class RemoteJudge final : public Judge {
 public:
  explicit RemoteJudge(Endpoint ep, std::size_t max_in_flight = 4, RetryPolicy retry = {});
  int score(std::string_view generated, std::string_view reference, std::string_view question) const override;

 private:
  Endpoint ep_;
  RetryPolicy retry_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
};

/// Retrieval service: request {query, k}, reply {results: [{doc_id, score}, ...]}
/// in rank order. Results naming documents outside `corpus` are rejected.
class RemoteRetriever final : public Retriever {
 public:
  RemoteRetriever(Endpoint ep, const Corpus& corpus, RetryPolicy retry = {});
  CandidateSet search(std::string_view query, std::size_t k) const override;

 private:
  Endpoint ep_;
  const Corpus& corpus_;
  RetryPolicy retry_;
};

}  // namespace docrag
