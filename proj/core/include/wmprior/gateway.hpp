#pragma once

#include "wmprior/prompt.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace wmprior {

struct ChatRequest {
    MessageSequence messages;
    std::string model_id;
    double temperature = 0.0;
    bool want_logprobs = true;
    int max_output_tokens = 1024;

    // Stable content hash over all fields; the caching/replay key.
    std::string digest() const;
};

struct TokenLogprob {
    std::string token;
    double logprob = 0.0;  // <= 0
};

struct Usage {
    long long input_tokens = 0;
    long long output_tokens = 0;
};

struct ChatResponse {
    std::string text;
    std::optional<std::vector<TokenLogprob>> token_logprobs;
    std::string backend_id;
    std::chrono::milliseconds latency{0};
    Usage usage;

    std::string canonical_json() const;
    static ChatResponse from_canonical_json(const std::string& json_text);
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
    virtual std::string id() const = 0;
};

/// Append-only digest -> response store, JSON-lines with per-line checksum.
class ReplayStore {
public:
    ReplayStore() = default;

    // Loads an existing store; missing file yields an empty store that
    // will be created on first append.
    static std::shared_ptr<ReplayStore> open(const std::filesystem::path& path);

    std::optional<ChatResponse> get(const std::string& digest) const;
    void put(const std::string& digest, const ChatResponse& response);
    size_t size() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, ChatResponse> entries_;
    std::filesystem::path path_;  // empty for in-memory stores
};

/// Serves responses only from a store; misses are fatal.
class ReplayBackend : public ChatBackend {
public:
    explicit ReplayBackend(std::shared_ptr<ReplayStore> store, std::string id = "replay")
        : store_(std::move(store)), id_(std::move(id)) {}

    ChatResponse complete(const ChatRequest& request) override;
    std::string id() const override { return id_; }

private:
    std::shared_ptr<ReplayStore> store_;
    std::string id_;
};

/// Forwards to an inner backend and tees every (digest, response) pair.
class RecordingBackend : public ChatBackend {
public:
    RecordingBackend(std::shared_ptr<ChatBackend> inner, std::shared_ptr<ReplayStore> store)
        : inner_(std::move(inner)), store_(std::move(store)) {}

    ChatResponse complete(const ChatRequest& request) override;
    std::string id() const override { return inner_->id(); }

private:
    std::shared_ptr<ChatBackend> inner_;
    std::shared_ptr<ReplayStore> store_;
};

/// OpenAI-style chat-completions wire format over HTTP. The auth token is
/// read from an environment variable, never from configuration files.
class HttpBackend : public ChatBackend {
public:
    HttpBackend(std::string endpoint_url, std::string auth_env_var,
                std::string backend_id = "http");

    ChatResponse complete(const ChatRequest& request) override;
    std::string id() const override { return id_; }

private:
    std::string endpoint_;
    std::string auth_env_;
    std::string id_;
};

struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds backoff_base{250};  // doubles per attempt
};

// Retries retryable_error (transport, rate limit) with exponential backoff.
ChatResponse complete_with_retry(ChatBackend& backend, const ChatRequest& request,
                                 const RetryPolicy& policy, int* attempts_out = nullptr);

}  // namespace wmprior
