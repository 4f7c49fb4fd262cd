#include "docrag/remote.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "docrag/errors.hpp"
#include "docrag/raster.hpp"

namespace docrag {

using nlohmann::json;

Endpoint Endpoint::parse(const std::string& url) {
  constexpr std::string_view kScheme = "http://";
  if (!std::string_view(url).starts_with(kScheme)) throw InvalidArgument("only http:// endpoints are supported: " + url);
  auto slash = url.find('/', kScheme.size());
  Endpoint ep;
  ep.scheme_host_port = url.substr(0, slash);
  ep.path = slash == std::string::npos ? "/" : url.substr(slash);
  if (ep.scheme_host_port.size() == kScheme.size()) throw InvalidArgument("endpoint has no host: " + url);
  return ep;
}

json post_json(const Endpoint& ep, const json& body, const RetryPolicy& retry) {
  auto payload = body.dump();
  auto backoff = retry.backoff;
  std::string last_error;
  for (int attempt = 0; attempt < std::max(retry.attempts, 1); ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client cli(ep.scheme_host_port);
    cli.set_connection_timeout(retry.timeout);
    cli.set_read_timeout(retry.timeout);
    cli.set_write_timeout(retry.timeout);
    auto res = cli.Post(ep.path, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw TransportError(ep.path + ": HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    try {
      return json::parse(res->body);
    } catch (const json::exception& e) {
      throw TransportError(ep.path + ": malformed JSON reply: " + e.what());
    }
  }
  throw TransportError(ep.scheme_host_port + ep.path + ": " + last_error);
}

namespace {

std::optional<std::string> image_bytes(const PageImage& page) {
  if (page.raster) return encode_ppm(*page.raster);
  if (page.image_path.empty()) return std::nullopt;
  std::ifstream in(page.image_path, std::ios::binary);
  if (!in) throw IoError("cannot read " + page.image_path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

json chat_request(std::span<const Turn> history, const std::string& model, double temperature,
                  std::size_t max_tokens) {
  json messages = json::array();
  for (const auto& turn : history) {
    const auto& text = turn.text;
    if (turn.images.empty()) {
      messages.push_back({{"role", std::string(to_string(turn.role))}, {"content", text}});
      continue;
    }
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", text}});
    for (const auto& img : turn.images) {
      auto bytes = image_bytes(img);
      if (!bytes) {
        content.push_back({{"type", "text"},
                           {"text", "[image " + img.doc_id + " " + std::to_string(img.width) + "x" +
                                        std::to_string(img.height) + " has no pixels]"}});
        continue;
      }
      content.push_back({{"type", "image_url"},
                         {"image_url", {{"url", "data:image/x-portable-pixmap;base64," + base64_encode(*bytes)}}}});
    }
    messages.push_back({{"role", std::string(to_string(turn.role))}, {"content", std::move(content)}});
  }
  return json{{"model", model}, {"messages", std::move(messages)}, {"temperature", temperature},
              {"max_tokens", max_tokens}};
}

RemotePolicy::RemotePolicy(Endpoint ep, std::string model, double temperature, std::size_t max_tokens,
                           RetryPolicy retry)
    : ep_(std::move(ep)),
      model_(std::move(model)),
      temperature_(temperature),
      max_tokens_(max_tokens),
      retry_(retry) {}

std::string RemotePolicy::generate(std::span<const Turn> history) {
  auto reply = post_json(ep_, chat_request(history, model_, temperature_, max_tokens_), retry_);
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("chat reply without choices[0].message.content: ") + e.what());
  }
}

RemoteJudge::RemoteJudge(Endpoint ep, std::size_t max_in_flight, RetryPolicy retry)
    : ep_(std::move(ep)),
      retry_(retry),
      slots_(std::make_unique<std::counting_semaphore<>>(static_cast<std::ptrdiff_t>(std::max<std::size_t>(max_in_flight, 1)))) {}

int RemoteJudge::score(std::string_view generated, std::string_view reference, std::string_view question) const {
  json body{{"question", question}, {"reference", reference}, {"generated", generated}};
  slots_->acquire();
  json reply;
  try {
    reply = post_json(ep_, body, retry_);
  } catch (...) {
    slots_->release();
    throw;
  }
  slots_->release();
  auto it = reply.find("score");
  if (it == reply.end() || !it->is_number_integer() || (*it != 0 && *it != 1)) {
    throw TransportError("judge reply must carry score 0 or 1: " + reply.dump());
  }
  return it->get<int>();
}

RemoteRetriever::RemoteRetriever(Endpoint ep, const Corpus& corpus, RetryPolicy retry)
    : ep_(std::move(ep)), corpus_(corpus), retry_(retry) {}

CandidateSet RemoteRetriever::search(std::string_view query, std::size_t k) const {
  auto reply = post_json(ep_, json{{"query", query}, {"k", k}}, retry_);
  CandidateSet out;
  out.k = k;
  try {
    for (const auto& r : reply.at("results")) {
      auto id = r.at("doc_id").get<std::string>();
      if (!corpus_.find(id)) throw TransportError("retriever returned unknown doc_id " + id);
      out.entries.push_back({id, r.at("score").get<double>()});
    }
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed retriever reply: ") + e.what());
  }
  if (out.entries.size() > k) throw TransportError("retriever returned more than k results");
  return out;
}

}  // namespace docrag
