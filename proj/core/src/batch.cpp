#include "wmprior/batch.hpp"

#include "wmprior/errors.hpp"

#include <atomic>
#include <fstream>
#include <map>
#include <thread>
#include <tuple>

namespace wmprior {

namespace {

struct Task {
    size_t index;
    RegionPair pair;
    Ordering ordering;
    int repeat;
};

using TaskKey = std::tuple<std::string, std::string, int, std::string>;

TaskKey key_of(const RegionPair& pair, Ordering ordering, int repeat,
               const PromptStrategy& strategy) {
    return {pair.key(), to_string(ordering), repeat, to_string(strategy)};
}

}  // namespace

SessionResult run_session(const MessageSequence& scripted, ChatBackend& backend,
                          const std::string& model_id, double temperature, bool want_logprobs,
                          int max_output_tokens, const RetryPolicy& retry) {
    SessionResult out;
    MessageSequence history;
    bool any_user = false;
    for (size_t i = 0; i < scripted.size(); ++i) {
        const Message& m = scripted[i];
        history.push_back(m);
        if (m.role != Role::User) continue;
        any_user = true;
        ChatRequest req{history, model_id, temperature, want_logprobs, max_output_tokens};
        ChatResponse resp = complete_with_retry(backend, req, retry);
        out.total_usage.input_tokens += resp.usage.input_tokens;
        out.total_usage.output_tokens += resp.usage.output_tokens;
        out.assistant_turns.push_back(resp.text);
        out.final_digest = req.digest();
        out.final_response = resp;
        history.push_back({Role::Assistant, resp.text});
    }
    if (!any_user) throw config_error("scripted session contains no user turns");
    return out;
}

BatchResult run_batch(const BatchPlan& plan, const PromptEngine& engine, ChatBackend& backend,
                      const std::optional<std::filesystem::path>& records_path) {
    if (plan.concurrency_limit < 1) throw config_error("concurrency_limit must be >= 1");
    if (plan.repeats_per_ordering < 1) throw config_error("repeats_per_ordering must be >= 1");
    if (plan.orderings.empty()) throw config_error("batch plan needs at least one ordering");

    std::vector<Task> tasks;
    for (const RegionPair& pair : plan.pairs)
        for (Ordering ordering : plan.orderings)
            for (int repeat = 1; repeat <= plan.repeats_per_ordering; ++repeat)
                tasks.push_back({tasks.size(), pair, ordering, repeat});

    // Warm cache: records already on disk are reused verbatim.
    std::map<TaskKey, PriorRecord> cache;
    if (records_path && std::filesystem::exists(*records_path))
        for (PriorRecord& r : load_records_jsonl(*records_path))
            cache.emplace(key_of(r.pair, r.ordering, r.repeat, r.strategy), std::move(r));

    BatchResult result;
    std::vector<std::optional<PriorRecord>> slots(tasks.size());
    std::vector<std::string> errors(tasks.size());
    std::atomic<size_t> next{0};
    std::atomic<size_t> sessions{0};
    std::atomic<size_t> hits{0};
    std::vector<bool> fresh(tasks.size(), false);

    auto worker = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const Task& task = tasks[i];
            if (auto it = cache.find(key_of(task.pair, task.ordering, task.repeat, plan.strategy));
                it != cache.end()) {
                slots[i] = it->second;
                hits.fetch_add(1);
                continue;
            }
            try {
                std::optional<std::string> context;
                if (plan.system_context) context = plan.system_context(task.pair);
                MessageSequence scripted =
                    engine.render(plan.strategy, task.pair, task.ordering, context);
                SessionResult session =
                    run_session(scripted, backend, plan.model_id, plan.temperature,
                                plan.want_logprobs, plan.max_output_tokens, plan.retry);
                sessions.fetch_add(1);

                PriorRecord rec;
                rec.pair = task.pair;
                rec.ordering = task.ordering;
                rec.repeat = task.repeat;
                rec.strategy = plan.strategy;
                rec.classification = parse_classification(session.final_response.text,
                                                          plan.strategy.uncertainty_variant);
                ConfidenceResult conf =
                    confidence_from_response(session.final_response, rec.classification);
                rec.confidence_connected = conf.confidence_connected;
                rec.verdict_token_logprob = conf.verdict_token_logprob;
                rec.abstained = conf.abstained;
                rec.no_logprobs = conf.no_logprobs;
                if (session.assistant_turns.size() > 1) {
                    std::string reasoning;
                    for (size_t t = 0; t + 1 < session.assistant_turns.size(); ++t) {
                        if (t) reasoning += "\n\n";
                        reasoning += session.assistant_turns[t];
                    }
                    rec.reasoning_text = reasoning;
                }
                rec.raw_response_digest = session.final_digest;
                rec.model_id = plan.model_id;
                rec.usage = session.total_usage;

                fresh[i] = true;
                slots[i] = std::move(rec);
            } catch (const std::exception& e) {
                errors[i] = to_string(plan.strategy) + " " + task.pair.key() + " " +
                            to_string(task.ordering) + " repeat " + std::to_string(task.repeat) +
                            ": " + e.what();
            }
        }
    };

    size_t n_threads = std::min<size_t>(static_cast<size_t>(plan.concurrency_limit), tasks.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_threads);
        for (size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
        for (std::thread& t : threads) t.join();
    }

    // New records are appended in plan order so reruns are byte-identical.
    std::ofstream sink;
    if (records_path) sink.open(*records_path, std::ios::app);
    for (size_t i = 0; i < tasks.size(); ++i) {
        if (slots[i]) {
            if (fresh[i] && sink.is_open()) sink << slots[i]->to_json_line() << '\n';
            result.records.push_back(std::move(*slots[i]));
        } else if (!errors[i].empty()) {
            result.failures.push_back(errors[i]);
        }
    }
    result.backend_sessions = sessions.load();
    result.cache_hits = hits.load();
    if (result.records.empty() && !tasks.empty())
        throw error("batch failed for every task; first error: " +
                    (result.failures.empty() ? std::string("unknown") : result.failures.front()));
    return result;
}

}  // namespace wmprior
