#include "refinery/backend.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace refinery {

// ---------------------------------------------------------------------------
// Chat type serialization
// ---------------------------------------------------------------------------

std::string role_name(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    throw Error("invalid role value");
}

Role role_from_name(const std::string& name) {
    if (name == "system") return Role::system;
    if (name == "user") return Role::user;
    if (name == "assistant") return Role::assistant;
    throw Error("unknown role: " + name);
}

json message_to_json(const ChatMessage& m) {
    return json{{"role", role_name(m.role)}, {"content", m.content}};
}

ChatMessage message_from_json(const json& j) {
    return ChatMessage{role_from_name(j.at("role").get<std::string>()),
                       j.at("content").get<std::string>()};
}

json request_to_json(const ChatRequest& r) {
    json msgs = json::array();
    for (const auto& m : r.messages) msgs.push_back(message_to_json(m));
    json j{{"backend_id", r.backend_id},
           {"messages", std::move(msgs)},
           {"temperature", r.temperature},
           {"max_tokens", r.max_tokens}};
    if (r.seed)
        j["seed"] = *r.seed;
    else
        j["seed"] = nullptr;
    return j;
}

ChatRequest request_from_json(const json& j) {
    ChatRequest r;
    r.backend_id = j.at("backend_id").get<std::string>();
    for (const auto& m : j.at("messages")) r.messages.push_back(message_from_json(m));
    r.temperature = j.at("temperature").get<double>();
    r.max_tokens = j.at("max_tokens").get<int>();
    if (j.contains("seed") && !j.at("seed").is_null()) r.seed = j.at("seed").get<int>();
    return r;
}

json response_to_json(const ChatResponse& r) {
    return json{{"content", r.content},
                {"prompt_tokens", r.prompt_tokens},
                {"completion_tokens", r.completion_tokens},
                {"cached", r.cached},
                {"latency_ms", r.latency_ms}};
}

ChatResponse response_from_json(const json& j) {
    ChatResponse r;
    r.content = j.at("content").get<std::string>();
    r.prompt_tokens = j.value("prompt_tokens", 0);
    r.completion_tokens = j.value("completion_tokens", 0);
    r.cached = j.value("cached", false);
    r.latency_ms = j.value("latency_ms", 0);
    return r;
}

void validate_request(const ChatRequest& r) {
    if (r.messages.empty()) throw Error("chat request has no messages");
    if (r.messages.front().role == Role::assistant)
        throw Error("chat request must not start with an assistant message");
    for (const auto& m : r.messages) {
        if (m.content.empty() && m.role != Role::assistant)
            throw Error("empty content in " + role_name(m.role) + " message");
    }
    if (r.temperature < 0) throw Error("temperature must be >= 0");
    if (r.max_tokens <= 0) throw Error("max_tokens must be positive");
}

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int md_len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &md_len, EVP_sha256(), nullptr) != 1)
        throw Error("digest computation failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(md_len * 2);
    for (unsigned int i = 0; i < md_len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

std::string cache_digest(const ChatRequest& r) { return sha256_hex(request_to_json(r).dump()); }

// ---------------------------------------------------------------------------
// MockChatBackend
// ---------------------------------------------------------------------------

void MockChatBackend::push_response(std::string content) {
    std::lock_guard<std::mutex> lock(mu_);
    queue_.emplace_back(std::move(content));
}

void MockChatBackend::push_failure(std::string message) {
    std::lock_guard<std::mutex> lock(mu_);
    queue_.emplace_back(Failure{std::move(message)});
}

void MockChatBackend::set_responder(std::function<std::string(const ChatRequest&)> fn) {
    std::lock_guard<std::mutex> lock(mu_);
    responder_ = std::move(fn);
}

ChatResponse MockChatBackend::complete(const ChatRequest& request) {
    validate_request(request);
    std::variant<std::string, Failure> item;
    {
        std::lock_guard<std::mutex> lock(mu_);
        log_.push_back(request);
        if (!queue_.empty()) {
            item = std::move(queue_.front());
            queue_.pop_front();
        } else if (responder_) {
            item = responder_(request);
        } else {
            throw Error("mock backend queue exhausted");
        }
    }
    if (auto* fail = std::get_if<Failure>(&item)) throw TransportError(fail->message);
    ChatResponse resp;
    resp.content = std::get<std::string>(std::move(item));
    resp.completion_tokens = static_cast<int>(count_tokens(resp.content));
    long prompt_total = 0;
    for (const auto& m : request.messages) prompt_total += count_tokens(m.content);
    resp.prompt_tokens = static_cast<int>(prompt_total);
    return resp;
}

std::vector<ChatRequest> MockChatBackend::requests() const {
    std::lock_guard<std::mutex> lock(mu_);
    return log_;
}

const ChatRequest& MockChatBackend::request(std::size_t i) const {
    std::lock_guard<std::mutex> lock(mu_);
    if (i >= log_.size()) throw Error("mock request index out of range");
    return log_[i];
}

int MockChatBackend::call_count() const {
    std::lock_guard<std::mutex> lock(mu_);
    return static_cast<int>(log_.size());
}

// ---------------------------------------------------------------------------
// CachedBackend
// ---------------------------------------------------------------------------

CachedBackend::CachedBackend(std::shared_ptr<ChatBackend> inner) : inner_(std::move(inner)) {}

ChatResponse CachedBackend::complete(const ChatRequest& request) {
    const std::string key = cache_digest(request);
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = store_.find(key);
        if (it != store_.end()) {
            ++hits_;
            ChatResponse resp = it->second;
            resp.cached = true;
            return resp;
        }
    }
    ChatResponse resp = inner_->complete(request);
    {
        std::lock_guard<std::mutex> lock(mu_);
        store_.emplace(key, resp);
    }
    return resp;
}

// ---------------------------------------------------------------------------
// RetryBackend
// ---------------------------------------------------------------------------

RetryBackend::RetryBackend(std::shared_ptr<ChatBackend> inner, RetryPolicy policy)
    : inner_(std::move(inner)), policy_(policy) {
    if (policy_.max_attempts < 1) throw Error("retry budget must be at least 1 attempt");
}

ChatResponse RetryBackend::complete(const ChatRequest& request) {
    int delay = policy_.base_delay_ms;
    for (int attempt = 1;; ++attempt) {
        ++attempts_;
        try {
            return inner_->complete(request);
        } catch (const HttpStatusError& e) {
            if (!e.retryable() || attempt >= policy_.max_attempts) throw;
        } catch (const TransportError&) {
            if (attempt >= policy_.max_attempts) throw;
        }
        if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        delay *= 2;
    }
}

// ---------------------------------------------------------------------------
// RecordingBackend
// ---------------------------------------------------------------------------

RecordingBackend::RecordingBackend(std::shared_ptr<ChatBackend> inner,
                                   std::filesystem::path tape_path)
    : inner_(std::move(inner)), tape_(std::move(tape_path)) {
    if (tape_.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(tape_.parent_path(), ec);
    }
}

ChatResponse RecordingBackend::complete(const ChatRequest& request) {
    ChatResponse resp = inner_->complete(request);
    json entry{{"digest", cache_digest(request)},
               {"request", request_to_json(request)},
               {"response", response_to_json(resp)}};
    {
        std::lock_guard<std::mutex> lock(mu_);
        std::ofstream out(tape_, std::ios::app);
        if (!out) throw Error("cannot append to tape: " + tape_.string());
        out << entry.dump() << "\n";
    }
    return resp;
}

// ---------------------------------------------------------------------------
// ReplayBackend
// ---------------------------------------------------------------------------

ReplayBackend::ReplayBackend(const std::filesystem::path& tape_path, bool strict,
                             std::shared_ptr<ChatBackend> fallback)
    : strict_(strict), fallback_(std::move(fallback)) {
    std::ifstream in(tape_path);
    if (!in) throw Error("cannot open tape: " + tape_path.string());
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw TapeError(std::string("invalid tape entry: ") + e.what(), lineno);
        }
        if (!j.contains("digest") || !j.contains("response"))
            throw TapeError("tape entry missing digest or response", lineno);
        store_[j.at("digest").get<std::string>()] = response_from_json(j.at("response"));
    }
}

ChatResponse ReplayBackend::complete(const ChatRequest& request) {
    const std::string key = cache_digest(request);
    auto it = store_.find(key);
    if (it != store_.end()) return it->second;
    if (!strict_ && fallback_) return fallback_->complete(request);
    throw ReplayMissError(key);
}

// ---------------------------------------------------------------------------
// BackendRegistry
// ---------------------------------------------------------------------------

void BackendRegistry::add(const std::string& id, std::shared_ptr<ChatBackend> backend) {
    if (backends_.count(id)) throw Error("backend id already registered: " + id);
    backends_[id] = std::move(backend);
}

bool BackendRegistry::has(const std::string& id) const { return backends_.count(id) > 0; }

ChatBackend& BackendRegistry::get(const std::string& id) const {
    auto it = backends_.find(id);
    if (it == backends_.end()) throw Error("unknown backend id: " + id);
    return *it->second;
}

std::shared_ptr<ChatBackend> BackendRegistry::get_shared(const std::string& id) const {
    auto it = backends_.find(id);
    if (it == backends_.end()) throw Error("unknown backend id: " + id);
    return it->second;
}

std::vector<std::string> BackendRegistry::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : backends_) out.push_back(id);
    return out;
}

ChatResponse BackendRegistry::complete(const ChatRequest& request) const {
    return get(request.backend_id).complete(request);
}

// ---------------------------------------------------------------------------
// Token counting
// ---------------------------------------------------------------------------

namespace {

long word_count(const std::string& text) {
    long words = 0;
    bool in_word = false;
    for (char c : text) {
        const bool space = (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
                            c == '\v');
        if (!space && !in_word) ++words;
        in_word = !space;
    }
    return words;
}

}  // namespace

long WhitespaceTokenCounter::count(const std::string& text) const { return word_count(text); }

long ApproxTokenCounter::count(const std::string& text) const {
    return static_cast<long>(std::ceil(static_cast<double>(word_count(text)) * 1.3));
}

const TokenCounter& default_token_counter() {
    static const ApproxTokenCounter counter;
    return counter;
}

long count_tokens(const std::string& text) { return default_token_counter().count(text); }

}  // namespace refinery
