#pragma once

#include "wmprior/connectome.hpp"
#include "wmprior/gateway.hpp"
#include "wmprior/prompt.hpp"

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace wmprior {

struct CitationRecord {
    std::string title;
    std::string pmcid;
    std::string quote;
    bool verified = false;

    friend bool operator==(const CitationRecord&, const CitationRecord&) = default;
};

/// One LLM verdict for one (pair, ordering, repeat).
struct PriorRecord {
    RegionPair pair;
    Ordering ordering = Ordering::Forward;
    int repeat = 0;
    PromptStrategy strategy;
    Verdict classification = Verdict::False;
    std::optional<double> verdict_token_logprob;
    double confidence_connected = 0.0;  // in [0,1]
    bool abstained = false;
    std::optional<std::string> reasoning_text;
    std::vector<CitationRecord> citations;
    std::string raw_response_digest;

    // Extra bookkeeping beyond the core schema.
    bool no_logprobs = false;
    bool parse_failure = false;
    std::string model_id;
    Usage usage;

    // Probability the model placed on its own verdict token
    // (exp of the verdict logprob regardless of polarity).
    double confidence_in_verdict() const;

    std::string to_json_line() const;
    static PriorRecord from_json_line(const std::string& line);
};

std::vector<PriorRecord> load_records_jsonl(const std::filesystem::path& path);
void save_records_jsonl(const std::filesystem::path& path, const std::vector<PriorRecord>& records);

struct ConfidenceResult {
    double confidence_connected = 0.0;
    std::optional<double> verdict_token_logprob;
    bool abstained = false;
    bool no_logprobs = false;
};

// p = exp(logprob of the final verdict token). True -> p, False -> 1-p,
// DontKnow -> 0 with the abstained flag. Absent logprobs degrade to hard
// 0/1 with the no_logprobs flag. Throws data_error when logprobs are
// present but no verdict token is found.
ConfidenceResult confidence_from_response(const ChatResponse& resp, Verdict cls);

/// Aggregated symmetric edge-confidence matrix; pairs without records are
/// tracked as missing, not stored as zero.
struct PriorMatrix {
    Connectome confidence;           // kind PriorConfidence
    std::set<RegionPair> recorded;   // pairs backed by >= 1 record
    std::vector<RegionPair> missing_pairs;  // requested but unrecorded, for the manifest
    PromptStrategy strategy;

    bool has(const RegionPair& pair) const { return recorded.count(pair) > 0; }
    double mean_confidence(const RegionPair& pair) const { return confidence.at(pair); }
};

// Arithmetic mean of confidence_connected per canonical pair across
// orderings and repeats. All records must share one strategy, and every
// pair must resolve in the parcellation.
PriorMatrix aggregate(const std::vector<PriorRecord>& records, const Parcellation& p);

// Binary connectome: edge 1 iff the pair is recorded and mean confidence
// >= cutoff.
Connectome classify(const PriorMatrix& matrix, double cutoff);

}  // namespace wmprior
