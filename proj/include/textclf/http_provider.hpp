#pragma once

#include <cstdlib>
#include <memory>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "textclf/paraphrase.hpp"

namespace textclf {

// Chat-completion provider speaking the common JSON wire shape: POST with a
// system+user message pair, assistant text comes back in
// choices[0].message.content. Plain http only; point PARA_ENDPOINT at a
// local gateway when the upstream service is https.
class HttpChatProvider : public ParaphraseProvider {
 public:
  struct Options {
    std::string endpoint;  // e.g. http://127.0.0.1:8080/v1/chat/completions
    std::string model;
    std::string api_key;
    int timeout_seconds = 60;
  };

  static Options from_env() {
    Options opt;
    if (const char* e = std::getenv("PARA_ENDPOINT")) opt.endpoint = e;
    if (const char* m = std::getenv("PARA_MODEL")) opt.model = m;
    if (const char* k = std::getenv("PARA_API_KEY")) opt.api_key = k;
    if (opt.endpoint.empty())
      fail("http provider: PARA_ENDPOINT is not set (or configure the stub provider)");
    if (opt.model.empty()) fail("http provider: PARA_MODEL is not set");
    return opt;
  }

  explicit HttpChatProvider(Options options) : options_(std::move(options)) {
    const std::string& url = options_.endpoint;
    const std::string http_prefix = "http://";
    if (url.rfind("https://", 0) == 0)
      fail("http provider: https endpoints are not supported in this build; "
           "use a plain-http gateway");
    if (url.rfind(http_prefix, 0) != 0)
      fail("http provider: endpoint must start with http://, got '", url, "'");
    const auto path_pos = url.find('/', http_prefix.size());
    base_url_ = path_pos == std::string::npos ? url : url.substr(0, path_pos);
    path_ = path_pos == std::string::npos ? "/v1/chat/completions" : url.substr(path_pos);
  }

  std::string tag() const override { return "http:" + options_.model; }

  std::string complete(const std::string& system_message,
                       const std::string& user_message) override {
    httplib::Client client(base_url_);
    client.set_connection_timeout(options_.timeout_seconds);
    client.set_read_timeout(options_.timeout_seconds);

    httplib::Headers headers;
    if (!options_.api_key.empty())
      headers.emplace("Authorization", "Bearer " + options_.api_key);

    nlohmann::json body{
        {"model", options_.model},
        {"messages",
         {{{"role", "system"}, {"content", system_message}},
          {{"role", "user"}, {"content", user_message}}}},
        {"temperature", 0.0}};

    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) fail("http provider: connection to ", base_url_, " failed");
    if (res->status == 401 || res->status == 403)
      throw AuthError("http provider: authentication rejected (status " +
                      std::to_string(res->status) + ")");
    if (res->status != 200)
      fail("http provider: status ", res->status, " from ", path_);

    nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded()) fail("http provider: response is not valid JSON");
    try {
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      fail("http provider: unexpected response shape: ", e.what());
    }
  }

 private:
  Options options_;
  std::string base_url_;
  std::string path_;
};

}  // namespace textclf
