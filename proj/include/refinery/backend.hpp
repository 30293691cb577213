#pragma once

#include <atomic>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "refinery/core.hpp"

namespace refinery {

// ---------------------------------------------------------------------------
// Chat types
// ---------------------------------------------------------------------------

enum class Role { system, user, assistant };

std::string role_name(Role r);
Role role_from_name(const std::string& name);

struct ChatMessage {
    Role role = Role::user;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::string backend_id;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 2048;
    std::optional<int> seed;

    bool operator==(const ChatRequest&) const = default;
};

struct ChatResponse {
    std::string content;
    int prompt_tokens = 0;
    int completion_tokens = 0;
    bool cached = false;
    int latency_ms = 0;
};

json message_to_json(const ChatMessage& m);
ChatMessage message_from_json(const json& j);
json request_to_json(const ChatRequest& r);
ChatRequest request_from_json(const json& j);
json response_to_json(const ChatResponse& r);
ChatResponse response_from_json(const json& j);

// Throws Error when a request violates the message invariants
// (empty message list, leading assistant message, empty system/user content,
// negative temperature, non-positive max_tokens).
void validate_request(const ChatRequest& r);

// Lowercase SHA-256 hex digest of arbitrary bytes.
std::string sha256_hex(const std::string& data);

// SHA-256 hex digest of the canonical request serialization. Equal requests
// produce equal digests; any field change produces a different digest.
std::string cache_digest(const ChatRequest& r);

// ---------------------------------------------------------------------------
// Backend interface
// ---------------------------------------------------------------------------

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Scripted mock
// ---------------------------------------------------------------------------

// Queue-driven fake backend for tests. Responses are served in push order;
// an exhausted queue falls back to the responder function when one is set,
// otherwise errors. Every request is logged for inspection.
class MockChatBackend : public ChatBackend {
public:
    void push_response(std::string content);
    void push_failure(std::string message);  // simulated transport failure
    void set_responder(std::function<std::string(const ChatRequest&)> fn);

    ChatResponse complete(const ChatRequest& request) override;

    std::vector<ChatRequest> requests() const;
    const ChatRequest& request(std::size_t i) const;
    int call_count() const;

private:
    struct Failure {
        std::string message;
    };
    mutable std::mutex mu_;
    std::deque<std::variant<std::string, Failure>> queue_;
    std::function<std::string(const ChatRequest&)> responder_;
    std::vector<ChatRequest> log_;
};

// ---------------------------------------------------------------------------
// Wrappers: cache, retry, record, replay
// ---------------------------------------------------------------------------

// In-memory response cache. A repeated request is answered from the cache
// with cached=true and identical content.
class CachedBackend : public ChatBackend {
public:
    explicit CachedBackend(std::shared_ptr<ChatBackend> inner);
    ChatResponse complete(const ChatRequest& request) override;
    long hit_count() const { return hits_.load(); }

private:
    std::shared_ptr<ChatBackend> inner_;
    mutable std::mutex mu_;
    std::map<std::string, ChatResponse> store_;
    std::atomic<long> hits_{0};
};

struct RetryPolicy {
    int max_attempts = 3;
    int base_delay_ms = 50;  // doubled after every failed attempt
};

// Retries transport failures with exponential backoff, up to
// policy.max_attempts total attempts per request.
class RetryBackend : public ChatBackend {
public:
    RetryBackend(std::shared_ptr<ChatBackend> inner, RetryPolicy policy);
    ChatResponse complete(const ChatRequest& request) override;
    long attempts_total() const { return attempts_.load(); }

private:
    std::shared_ptr<ChatBackend> inner_;
    RetryPolicy policy_;
    std::atomic<long> attempts_{0};
};

// Proxies to `inner` and appends {digest, request, response} JSONL entries
// to the tape file.
class RecordingBackend : public ChatBackend {
public:
    RecordingBackend(std::shared_ptr<ChatBackend> inner, std::filesystem::path tape_path);
    ChatResponse complete(const ChatRequest& request) override;

private:
    std::shared_ptr<ChatBackend> inner_;
    std::filesystem::path tape_;
    std::mutex mu_;
};

// Serves responses from a tape by request digest, order-free. A miss in
// strict mode raises ReplayMissError; with a fallback backend the request
// is forwarded instead.
class ReplayBackend : public ChatBackend {
public:
    explicit ReplayBackend(const std::filesystem::path& tape_path, bool strict = true,
                           std::shared_ptr<ChatBackend> fallback = nullptr);
    ChatResponse complete(const ChatRequest& request) override;
    std::size_t tape_size() const { return store_.size(); }

private:
    std::map<std::string, ChatResponse> store_;
    bool strict_;
    std::shared_ptr<ChatBackend> fallback_;
};

// ---------------------------------------------------------------------------
// HTTP backend (OpenAI-compatible chat completions)
// ---------------------------------------------------------------------------

struct HttpBackendOptions {
    std::string base_url;  // e.g. "http://127.0.0.1:8089"
    std::string model;
    std::string api_key;  // empty -> read from REFINERY_API_KEY
    int connect_timeout_s = 10;
    int read_timeout_s = 120;
};

// Single-attempt HTTP client; wrap in RetryBackend for the retry budget.
// Failures raise TransportError; 5xx statuses are marked retryable,
// other HTTP errors are not.
class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(HttpBackendOptions options);
    ChatResponse complete(const ChatRequest& request) override;

private:
    HttpBackendOptions options_;
};

// TransportError with retry classification.
class HttpStatusError : public TransportError {
public:
    HttpStatusError(const std::string& msg, int status)
        : TransportError(msg), status_(status) {}
    int status() const { return status_; }
    bool retryable() const { return status_ >= 500; }

private:
    int status_;
};

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

class BackendRegistry {
public:
    void add(const std::string& id, std::shared_ptr<ChatBackend> backend);
    bool has(const std::string& id) const;
    ChatBackend& get(const std::string& id) const;
    std::shared_ptr<ChatBackend> get_shared(const std::string& id) const;
    std::vector<std::string> ids() const;

    // Routes by request.backend_id. Unregistered id -> Error.
    ChatResponse complete(const ChatRequest& request) const;

private:
    std::map<std::string, std::shared_ptr<ChatBackend>> backends_;
};

// ---------------------------------------------------------------------------
// Token counting
// ---------------------------------------------------------------------------

class TokenCounter {
public:
    virtual ~TokenCounter() = default;
    virtual long count(const std::string& text) const = 0;
};

// Whitespace-delimited word count.
class WhitespaceTokenCounter : public TokenCounter {
public:
    long count(const std::string& text) const override;
};

// Approximate subword count: ceil(word count x 1.3). Tokenizer-agnostic
// stand-in; thresholds that consume it are configurable.
class ApproxTokenCounter : public TokenCounter {
public:
    long count(const std::string& text) const override;
};

const TokenCounter& default_token_counter();
long count_tokens(const std::string& text);

}  // namespace refinery
