#pragma once

#include "wmprior/gateway.hpp"
#include "wmprior/prior.hpp"
#include "wmprior/prompt.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace wmprior {

struct BatchPlan {
    std::vector<RegionPair> pairs;
    PromptStrategy strategy;
    std::vector<Ordering> orderings = {Ordering::Forward};
    int repeats_per_ordering = 1;
    int concurrency_limit = 4;
    RetryPolicy retry;

    std::string model_id = "replay";
    double temperature = 0.0;
    bool want_logprobs = true;
    int max_output_tokens = 1024;

    // Optional per-pair system context (region-context grounding).
    std::function<std::optional<std::string>(const RegionPair&)> system_context;
};

struct SessionResult {
    ChatResponse final_response;
    std::string final_digest;
    std::vector<std::string> assistant_turns;
    Usage total_usage;
};

// Executes scripted user turns against the backend in one session,
// carrying the conversation history between turns. No state is shared
// between sessions.
SessionResult run_session(const MessageSequence& scripted, ChatBackend& backend,
                          const std::string& model_id, double temperature, bool want_logprobs,
                          int max_output_tokens, const RetryPolicy& retry);

struct BatchResult {
    std::vector<PriorRecord> records;            // task order, deterministic
    std::vector<std::string> failures;           // per-record error descriptions
    size_t backend_sessions = 0;                 // sessions actually sent to the backend
    size_t cache_hits = 0;
};

// One PriorRecord per (pair x ordering x repeat), at most concurrency_limit
// sessions in flight. When records_path is given, completed records are
// appended as they finish and prior contents are reused, so interrupted
// runs resume without re-querying. Throws only if every task fails.
BatchResult run_batch(const BatchPlan& plan, const PromptEngine& engine, ChatBackend& backend,
                      const std::optional<std::filesystem::path>& records_path = std::nullopt);

}  // namespace wmprior
