#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "docrag/environment.hpp"
#include "docrag/rewards.hpp"
#include "docrag/serialization.hpp"

namespace docrag {

struct ServiceConfig {
  SessionConfig session;
  RewardWeights weights;
  ImageWire wire = ImageWire::Base64;
  const LayoutProvider* layout = nullptr;
};

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

/// Session registry behind the HTTP endpoints. Routes:
///   POST /sessions                 {query_id} | {query} [, trajectory_id]
///   POST /sessions/{id}/step       {assistant_text}
///   GET  /sessions/{id}/trajectory
///   DELETE /sessions/{id}
///   POST /score                    {trajectory} | {session_id} [, weights]
///   POST /advantages               {rewards [, eps]}
///   POST /search                   {query, k}
///   GET  /health
/// Errors reply {"error": message}: 400 bad request, 404 unknown session, query or
/// route, 409 step after termination, 502 judge transport failure, 500 otherwise.
class SessionService {
 public:
  SessionService(const Corpus& corpus, const Retriever& retriever, std::vector<Query> queries, const Judge& judge,
                 ServiceConfig cfg);

  /// Dispatches one request; never throws.
  ServiceResponse handle(const std::string& method, const std::string& path, const std::string& body);

  std::size_t session_count() const;

 private:
  struct Entry {
    std::mutex mu;
    std::unique_ptr<Session> session;
  };

  ServiceResponse create(const nlohmann::json& body);
  ServiceResponse step(const std::string& id, const nlohmann::json& body);
  ServiceResponse trajectory(const std::string& id);
  ServiceResponse remove(const std::string& id);
  ServiceResponse score(const nlohmann::json& body);
  ServiceResponse advantages(const nlohmann::json& body);
  ServiceResponse search(const nlohmann::json& body);
  std::shared_ptr<Entry> lookup(const std::string& id) const;

  const Corpus& corpus_;
  const Retriever& retriever_;
  std::map<std::string, Query, std::less<>> queries_;
  const Judge& judge_;
  ServiceConfig cfg_;

  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Entry>, std::less<>> sessions_;
  std::size_t next_id_ = 0;
};

/// HTTP front end for a SessionService.
class ServiceServer {
 public:
  explicit ServiceServer(SessionService& service);
  ~ServiceServer();
  ServiceServer(const ServiceServer&) = delete;
  ServiceServer& operator=(const ServiceServer&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  /// Throws IoError when the port is taken.
  int bind(const std::string& host, int port);
  /// Serves until stop(); blocks.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace docrag
