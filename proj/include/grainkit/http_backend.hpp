#pragma once

#include "grainkit/backend.hpp"

#include <memory>
#include <mutex>
#include <set>
#include <string>

namespace grainkit {

struct HttpConfig {
    std::string endpoint = "http://127.0.0.1:8765";
    double timeout_s = 30.0;
    int retries = 2;
    double backoff_s = 0.25; ///< doubled after every failed attempt
    int max_in_flight = 4;

    /// Endpoint from GRAINKIT_HTTP_ENDPOINT when set.
    static HttpConfig from_env(HttpConfig base);
    static HttpConfig from_env();
};

// Wire-format helpers, exposed so the protocol can be tested without sockets.
nlohmann::json make_embed_request(const ImageRef& image);
nlohmann::json make_predict_request(const std::string& image_id, const Prompt& prompt);
/// Parses a request body back into a prompt; throws InvalidPrompt on schema errors.
Prompt prompt_from_predict_request(const nlohmann::json& body);
/// Validates a /v1/predict response against the schema and decodes it.
std::vector<ScoredMask> parse_predict_response(const nlohmann::json& body, int width, int height);

/// Client for the remote inference service.
class HttpBackend : public Backend {
  public:
    explicit HttpBackend(HttpConfig cfg);
    ~HttpBackend() override;

    std::string id() const override { return "http"; }
    std::vector<ScoredMask> predict(const ImageRef& image, const Prompt& prompt) override;

  private:
    struct Transport;

    void ensure_embedded(const ImageRef& image, bool force);

    HttpConfig cfg_;
    std::unique_ptr<Transport> transport_;
    std::mutex embedded_mutex_;
    std::set<std::string> embedded_;
};

} // namespace grainkit
