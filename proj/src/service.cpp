#include "docrag/service.hpp"

#include <httplib.h>

#include "docrag/errors.hpp"
#include "docrag/grpo.hpp"

namespace docrag {

using nlohmann::json;

namespace {

ServiceResponse error(int status, const std::string& message) { return {status, json{{"error", message}}}; }

class HttpError : public std::runtime_error {
 public:
  HttpError(int status, const std::string& what) : std::runtime_error(what), status(status) {}
  int status;
};

const json& field(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end()) throw HttpError(400, std::string("missing field ") + key);
  return *it;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos < path.size()) {
    auto slash = path.find('/', pos);
    if (slash == std::string::npos) slash = path.size();
    if (slash > pos) parts.push_back(path.substr(pos, slash - pos));
    pos = slash + 1;
  }
  return parts;
}

}  // namespace

SessionService::SessionService(const Corpus& corpus, const Retriever& retriever, std::vector<Query> queries,
                               const Judge& judge, ServiceConfig cfg)
    : corpus_(corpus), retriever_(retriever), judge_(judge), cfg_(std::move(cfg)) {
  cfg_.session.validate();
  cfg_.weights.validate();
  for (auto& q : queries) {
    auto id = q.id;
    if (!queries_.emplace(id, std::move(q)).second) throw InvalidArgument("duplicate query id " + id);
  }
}

std::size_t SessionService::session_count() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

ServiceResponse SessionService::handle(const std::string& method, const std::string& path, const std::string& body) {
  try {
    json parsed = json::object();
    if (method == "POST") {
      try {
        parsed = json::parse(body);
      } catch (const json::exception& e) {
        return error(400, std::string("malformed JSON body: ") + e.what());
      }
      if (!parsed.is_object()) return error(400, "body must be a JSON object");
    }
    auto parts = split_path(path);
    if (method == "GET" && parts == std::vector<std::string>{"health"}) return {200, json{{"status", "ok"}}};
    if (method == "POST" && parts == std::vector<std::string>{"sessions"}) return create(parsed);
    if (method == "POST" && parts == std::vector<std::string>{"score"}) return score(parsed);
    if (method == "POST" && parts == std::vector<std::string>{"advantages"}) return advantages(parsed);
    if (method == "POST" && parts == std::vector<std::string>{"search"}) return search(parsed);
    if (parts.size() >= 2 && parts[0] == "sessions") {
      if (method == "POST" && parts.size() == 3 && parts[2] == "step") return step(parts[1], parsed);
      if (method == "GET" && parts.size() == 3 && parts[2] == "trajectory") return trajectory(parts[1]);
      if (method == "DELETE" && parts.size() == 2) return remove(parts[1]);
    }
    return error(404, "no route for " + method + " " + path);
  } catch (const HttpError& e) {
    return error(e.status, e.what());
  } catch (const StepAfterTermination& e) {
    return error(409, e.what());
  } catch (const TransportError& e) {
    return error(502, e.what());
  } catch (const json::exception& e) {
    return error(400, e.what());
  } catch (const Error& e) {
    return error(400, e.what());
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

std::shared_ptr<SessionService::Entry> SessionService::lookup(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw HttpError(404, "unknown session " + id);
  return it->second;
}

ServiceResponse SessionService::create(const json& body) {
  Query query;
  if (body.contains("query_id")) {
    auto id = body.at("query_id").get<std::string>();
    auto it = queries_.find(id);
    if (it == queries_.end()) throw HttpError(404, "unknown query " + id);
    query = it->second;
  } else {
    query = query_from_json(field(body, "query"));
  }
  auto entry = std::make_shared<Entry>();
  std::string id;
  {
    std::lock_guard lock(mu_);
    id = "s" + std::to_string(next_id_++);
  }
  auto traj_id = body.value("trajectory_id", id);
  entry->session = std::make_unique<Session>(std::move(query), corpus_, retriever_, cfg_.session, traj_id, cfg_.layout);
  json initial = to_json(entry->session->trajectory().turns.front(), cfg_.wire);
  {
    std::lock_guard lock(mu_);
    sessions_.emplace(id, std::move(entry));
  }
  return {200, json{{"session_id", id}, {"initial_observation", std::move(initial)}}};
}

ServiceResponse SessionService::step(const std::string& id, const json& body) {
  auto text = field(body, "assistant_text").get<std::string>();
  auto entry = lookup(id);
  std::lock_guard lock(entry->mu);
  return {200, to_json(entry->session->step(text), cfg_.wire)};
}

ServiceResponse SessionService::trajectory(const std::string& id) {
  auto entry = lookup(id);
  std::lock_guard lock(entry->mu);
  return {200, to_json(entry->session->trajectory(), cfg_.wire)};
}

ServiceResponse SessionService::remove(const std::string& id) {
  std::lock_guard lock(mu_);
  if (sessions_.erase(id) == 0) throw HttpError(404, "unknown session " + id);
  return {200, json{{"deleted", id}}};
}

ServiceResponse SessionService::score(const json& body) {
  RewardWeights w = cfg_.weights;
  if (body.contains("weights")) {
    const auto& arr = body.at("weights");
    if (!arr.is_array() || arr.size() != w.lambdas.size()) throw HttpError(400, "weights must be 5 numbers");
    for (std::size_t i = 0; i < w.lambdas.size(); ++i) w.lambdas[i] = arr[i].get<double>();
  }
  Trajectory t;
  if (body.contains("trajectory")) {
    t = trajectory_from_json(body.at("trajectory"));
  } else {
    auto entry = lookup(field(body, "session_id").get<std::string>());
    std::lock_guard lock(entry->mu);
    t = entry->session->trajectory();
  }
  return {200, to_json(score_trajectory(t, judge_, w))};
}

ServiceResponse SessionService::advantages(const json& body) {
  auto rewards = field(body, "rewards").get<std::vector<double>>();
  double eps = body.value("eps", kDefaultAdvantageEps);
  return {200, json{{"advantages", group_advantages(rewards, eps)}}};
}

ServiceResponse SessionService::search(const json& body) {
  auto query = field(body, "query").get<std::string>();
  auto k = body.value("k", cfg_.session.k);
  auto found = retriever_.search(query, k);
  json results = json::array();
  for (const auto& c : found.entries) results.push_back({{"doc_id", c.doc_id}, {"score", c.score}});
  return {200, json{{"results", std::move(results)}}};
}

struct ServiceServer::Impl {
  SessionService& service;
  httplib::Server server;
};

ServiceServer::ServiceServer(SessionService& service) : impl_(new Impl{service, {}}) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    auto out = impl_->service.handle(req.method, req.path, req.body);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  };
  // SO_REUSEADDR only: the library default adds SO_REUSEPORT, which lets a second
  // server share a port that is already in use.
  impl_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  impl_->server.Get(".*", handler);
  impl_->server.Post(".*", handler);
  impl_->server.Delete(".*", handler);
}

ServiceServer::~ServiceServer() { stop(); }

int ServiceServer::bind(const std::string& host, int port) {
  if (port == 0) {
    int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw IoError("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void ServiceServer::run() { impl_->server.listen_after_bind(); }

void ServiceServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace docrag
