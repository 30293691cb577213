#include <httplib.h>

#include <chrono>
#include <cstdlib>

#include "refinery/backend.hpp"

namespace refinery {

HttpChatBackend::HttpChatBackend(HttpBackendOptions options) : options_(std::move(options)) {
    if (options_.base_url.empty()) throw Error("http backend needs a base_url");
    if (options_.api_key.empty()) {
        if (const char* env = std::getenv("REFINERY_API_KEY")) options_.api_key = env;
    }
}

ChatResponse HttpChatBackend::complete(const ChatRequest& request) {
    validate_request(request);

    json msgs = json::array();
    for (const auto& m : request.messages)
        msgs.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    json body{{"model", options_.model},
              {"messages", std::move(msgs)},
              {"temperature", request.temperature},
              {"max_tokens", request.max_tokens}};
    if (request.seed) body["seed"] = *request.seed;

    httplib::Client client(options_.base_url);
    client.set_connection_timeout(options_.connect_timeout_s, 0);
    client.set_read_timeout(options_.read_timeout_s, 0);
    httplib::Headers headers;
    if (!options_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + options_.api_key);

    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - start);

    if (!res)
        throw TransportError("request to " + options_.base_url +
                             " failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw HttpStatusError("chat completion returned HTTP " + std::to_string(res->status) +
                                  ": " + res->body.substr(0, 200),
                              res->status);

    json j;
    try {
        j = json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw TransportError(std::string("malformed completion body: ") + e.what());
    }

    ChatResponse out;
    try {
        out.content = j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw TransportError(std::string("completion body missing choices: ") + e.what());
    }
    if (j.contains("usage")) {
        const auto& usage = j.at("usage");
        out.prompt_tokens = usage.value("prompt_tokens", 0);
        out.completion_tokens = usage.value("completion_tokens", 0);
    }
    out.latency_ms = static_cast<int>(elapsed.count());
    return out;
}

}  // namespace refinery
