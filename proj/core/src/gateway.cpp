#include "wmprior/gateway.hpp"

#include "wmprior/digest.hpp"
#include "wmprior/errors.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT_DISABLED
#include <httplib.h>

namespace wmprior {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

ordered_json response_to_json(const ChatResponse& r) {
    ordered_json j;
    j["text"] = r.text;
    if (r.token_logprobs) {
        ordered_json arr = ordered_json::array();
        for (const TokenLogprob& t : *r.token_logprobs)
            arr.push_back({{"token", t.token}, {"logprob", t.logprob}});
        j["token_logprobs"] = arr;
    } else {
        j["token_logprobs"] = nullptr;
    }
    j["backend_id"] = r.backend_id;
    j["latency_ms"] = r.latency.count();
    j["usage"] = {{"input_tokens", r.usage.input_tokens},
                  {"output_tokens", r.usage.output_tokens}};
    return j;
}

ChatResponse response_from_json(const json& j) {
    ChatResponse r;
    r.text = j.at("text").get<std::string>();
    if (!j.at("token_logprobs").is_null()) {
        std::vector<TokenLogprob> lps;
        for (const auto& t : j.at("token_logprobs")) {
            TokenLogprob lp{t.at("token").get<std::string>(), t.at("logprob").get<double>()};
            if (lp.logprob > 0)
                throw data_error("token logprob must be <= 0");
            lps.push_back(std::move(lp));
        }
        r.token_logprobs = std::move(lps);
    }
    r.backend_id = j.at("backend_id").get<std::string>();
    r.latency = std::chrono::milliseconds(j.value("latency_ms", 0LL));
    if (j.contains("usage")) {
        r.usage.input_tokens = j["usage"].value("input_tokens", 0LL);
        r.usage.output_tokens = j["usage"].value("output_tokens", 0LL);
    }
    return r;
}

std::string line_checksum(const std::string& digest, const std::string& response_json) {
    return content_digest(digest + "\n" + response_json);
}

}  // namespace

std::string ChatRequest::digest() const {
    ordered_json j;
    j["model_id"] = model_id;
    j["temperature"] = format_double(temperature);
    j["want_logprobs"] = want_logprobs;
    j["max_output_tokens"] = max_output_tokens;
    ordered_json msgs = ordered_json::array();
    for (const Message& m : messages)
        msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    j["messages"] = msgs;
    return content_digest(j.dump());
}

std::string ChatResponse::canonical_json() const { return response_to_json(*this).dump(); }

ChatResponse ChatResponse::from_canonical_json(const std::string& json_text) {
    return response_from_json(json::parse(json_text));
}

std::shared_ptr<ReplayStore> ReplayStore::open(const std::filesystem::path& path) {
    auto store = std::make_shared<ReplayStore>();
    store->path_ = path;
    std::ifstream in(path);
    if (!in) return store;  // created on first append
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw store_corruption_error("replay store " + path.string() + " line " +
                                         std::to_string(lineno) + ": " + e.what());
        }
        std::string digest = j.at("digest").get<std::string>();
        std::string response_json = j.at("response").dump();
        // Checksum covers the canonical re-serialization of the response.
        ChatResponse resp = response_from_json(j.at("response"));
        std::string canonical = resp.canonical_json();
        if (j.at("checksum").get<std::string>() != line_checksum(digest, canonical))
            throw store_corruption_error("replay store checksum mismatch at " + path.string() +
                                         " line " + std::to_string(lineno));
        store->entries_[digest] = std::move(resp);
    }
    return store;
}

std::optional<ChatResponse> ReplayStore::get(const std::string& digest) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(digest);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void ReplayStore::put(const std::string& digest, const ChatResponse& response) {
    std::lock_guard lock(mutex_);
    if (entries_.count(digest)) return;  // append-only, first write wins
    entries_[digest] = response;
    if (!path_.empty()) {
        std::ofstream out(path_, std::ios::app);
        if (!out) throw data_error("cannot append to replay store: " + path_.string());
        std::string canonical = response.canonical_json();
        ordered_json line;
        line["digest"] = digest;
        line["response"] = json::parse(canonical);
        line["checksum"] = line_checksum(digest, canonical);
        out << line.dump() << '\n';
    }
}

size_t ReplayStore::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

ChatResponse ReplayBackend::complete(const ChatRequest& request) {
    if (auto r = store_->get(request.digest())) return *r;
    throw replay_miss_error("no replay entry for digest " + request.digest());
}

ChatResponse RecordingBackend::complete(const ChatRequest& request) {
    ChatResponse r = inner_->complete(request);
    store_->put(request.digest(), r);
    return r;
}

HttpBackend::HttpBackend(std::string endpoint_url, std::string auth_env_var,
                         std::string backend_id)
    : endpoint_(std::move(endpoint_url)),
      auth_env_(std::move(auth_env_var)),
      id_(std::move(backend_id)) {}

ChatResponse HttpBackend::complete(const ChatRequest& request) {
    // Split scheme://host[:port]/path.
    size_t scheme_end = endpoint_.find("://");
    if (scheme_end == std::string::npos)
        throw config_error("endpoint URL missing scheme: " + endpoint_);
    size_t path_start = endpoint_.find('/', scheme_end + 3);
    std::string base = path_start == std::string::npos ? endpoint_ : endpoint_.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/v1/chat/completions"
                                                       : endpoint_.substr(path_start);

    const char* token = auth_env_.empty() ? nullptr : std::getenv(auth_env_.c_str());
    if (!auth_env_.empty() && !token)
        throw config_error("credentials environment variable not set: " + auth_env_);

    json body;
    body["model"] = request.model_id;
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_output_tokens;
    if (request.want_logprobs) body["logprobs"] = true;
    json msgs = json::array();
    for (const Message& m : request.messages)
        msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    body["messages"] = msgs;

    httplib::Client client(base);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (token) headers.emplace("Authorization", std::string("Bearer ") + token);

    auto start = std::chrono::steady_clock::now();
    auto res = client.Post(path, headers, body.dump(), "application/json");
    auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - start);

    if (!res) throw transport_error("HTTP request failed: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status == 503)
        throw rate_limit_error("backend rate limit (HTTP " + std::to_string(res->status) + ")");
    if (res->status < 200 || res->status >= 300)
        throw transport_error("backend returned HTTP " + std::to_string(res->status) + ": " +
                              res->body);

    json j;
    try {
        j = json::parse(res->body);
    } catch (const json::exception& e) {
        throw transport_error(std::string("malformed backend response: ") + e.what());
    }

    ChatResponse out;
    out.backend_id = id_;
    out.latency = elapsed;
    const json& choice = j.at("choices").at(0);
    out.text = choice.at("message").at("content").get<std::string>();
    if (choice.contains("logprobs") && !choice["logprobs"].is_null() &&
        choice["logprobs"].contains("content")) {
        std::vector<TokenLogprob> lps;
        for (const auto& t : choice["logprobs"]["content"])
            lps.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
        out.token_logprobs = std::move(lps);
    }
    if (j.contains("usage")) {
        out.usage.input_tokens = j["usage"].value("prompt_tokens", 0LL);
        out.usage.output_tokens = j["usage"].value("completion_tokens", 0LL);
    }
    return out;
}

ChatResponse complete_with_retry(ChatBackend& backend, const ChatRequest& request,
                                 const RetryPolicy& policy, int* attempts_out) {
    auto backoff = policy.backoff_base;
    for (int attempt = 1;; ++attempt) {
        try {
            ChatResponse r = backend.complete(request);
            if (attempts_out) *attempts_out = attempt;
            return r;
        } catch (const retryable_error&) {
            if (attempt >= policy.max_attempts) throw;
            if (backoff.count() > 0) std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
}

}  // namespace wmprior
