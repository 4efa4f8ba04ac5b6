#pragma once

// Live HTTP backend for the gateway: chat-completion style POST with
// role-tagged messages. Kept in its own header so scripted-only builds do
// not pull in the HTTP client.
//
// Credentials come from SCAFFEVAL_API_KEY (sent as a bearer token when set);
// the endpoint base URL lives on the ModelSpec.

#include <cstdlib>
#include <string>

#include <httplib.h>

#include "scaffeval/modelgw.hpp"

namespace scaffeval {

class HttpCompleter : public Completer {
 public:
  explicit HttpCompleter(std::string path = "/v1/chat/completions") : path_(std::move(path)) {}

  std::string complete(const ModelSpec& spec, const PromptBundle& bundle,
                       const CallParams& params) override {
    if (spec.endpoint.empty())
      throw std::invalid_argument("http completer: model '" + spec.model_id + "' has no endpoint");
    httplib::Client client(spec.endpoint);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv("SCAFFEVAL_API_KEY"))
      headers.emplace("Authorization", std::string("Bearer ") + key);
    std::string body = build_request_body(spec, bundle, params).dump();
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) throw TransportError(0, "no response from " + spec.endpoint);
    if (res->status != 200)
      throw TransportError(res->status, "http " + std::to_string(res->status) + " from " +
                                            spec.endpoint);
    try {
      json j = json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception& e) {
      throw TransportError(200, std::string("malformed completion body: ") + e.what());
    }
  }

 private:
  std::string path_;
};

}  // namespace scaffeval
