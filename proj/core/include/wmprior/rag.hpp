#pragma once

#include "wmprior/batch.hpp"
#include "wmprior/gateway.hpp"
#include "wmprior/prior.hpp"
#include "wmprior/prompt.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace wmprior {

// Lowercased alphanumeric tokens, split on everything else. No stemming,
// so region names survive intact.
std::vector<std::string> tokenize(const std::string& text);

// Splits text into chunks of at most `chunk_size` characters with
// `overlap` characters repeated between consecutive chunks, preferring
// paragraph, then sentence, then word boundaries.
std::vector<std::string> split_with_overlap(const std::string& text, size_t chunk_size,
                                            size_t overlap);

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<double> embed(const std::string& text) const = 0;
    virtual int dim() const = 0;
    virtual std::string id() const = 0;
};

/// Deterministic test embedder: hashed bag-of-words, L2-normalized.
class HashedBowEmbedder : public Embedder {
public:
    explicit HashedBowEmbedder(int dim = 256) : dim_(dim) {}
    std::vector<double> embed(const std::string& text) const override;
    int dim() const override { return dim_; }
    std::string id() const override { return "hashed-bow-" + std::to_string(dim_); }

private:
    int dim_;
};

struct Document {
    std::string pmcid;
    std::string title;
    std::vector<std::string> keywords;
    std::string text;
};

// Reads a directory of JSON documents {pmcid, title, keywords[], text}.
std::vector<Document> load_corpus_dir(const std::filesystem::path& dir);

struct DocumentChunk {
    std::string chunk_id;
    std::string text;
    std::string title;
    std::string pmcid;
    std::vector<std::string> keywords;
    std::vector<double> embedding;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct RetrievalHit {
    int chunk_index = -1;
    std::string chunk_id;
    std::optional<int> bm25_rank;    // 1-based
    std::optional<int> vector_rank;  // 1-based
    double score = 0.0;              // BM25 score when produced by bm25_search
    double fused_score = 0.0;        // reciprocal-rank fusion score
    std::optional<double> rerank_score;
};

/// Immutable chunk index with BM25 statistics and an exact-scan vector store.
class CorpusIndex {
public:
    // Recursive character chunking (paragraph -> sentence -> word).
    static CorpusIndex build(const std::vector<Document>& documents, size_t chunk_size,
                             size_t overlap, const Embedder& embedder, Bm25Params params = {});

    // Sentence-boundary chunking that merges adjacent sentences while their
    // embeddings stay similar; approximates semantic chunking.
    static CorpusIndex build_semantic(const std::vector<Document>& documents,
                                      const Embedder& embedder, double similarity_threshold = 0.8,
                                      Bm25Params params = {});

    const std::vector<DocumentChunk>& chunks() const { return chunks_; }
    const DocumentChunk& chunk(int index) const { return chunks_.at(static_cast<size_t>(index)); }
    size_t size() const { return chunks_.size(); }
    const Bm25Params& params() const { return params_; }
    const std::string& embedder_id() const { return embedder_id_; }

    // Standard BM25 over query tokens; only nonzero scores are returned,
    // ties broken by chunk_id ascending.
    std::vector<RetrievalHit> bm25_search(const std::string& query, size_t k) const;

    // Exact cosine scan over stored embeddings.
    std::vector<RetrievalHit> cosine_ranking(const std::vector<double>& query_embedding,
                                             size_t k) const;

    // Stored title for a PMCID, if the index holds chunks of that article.
    std::optional<std::string> title_of(const std::string& pmcid) const;

    void save(const std::filesystem::path& dir) const;
    static CorpusIndex load(const std::filesystem::path& dir);

private:
    CorpusIndex() = default;
    static CorpusIndex from_chunks(std::vector<DocumentChunk> chunks, Bm25Params params,
                                   std::string embedder_id);

    std::vector<DocumentChunk> chunks_;
    Bm25Params params_;
    std::string embedder_id_;

    // BM25 statistics, rebuilt deterministically from the chunks.
    std::map<std::string, std::vector<std::pair<int, int>>> postings_;  // token -> (chunk, tf)
    std::vector<int> doc_lengths_;
    double avg_doc_length_ = 0.0;
};

struct HybridResult {
    std::vector<RetrievalHit> hits;
    bool bm25_only_fallback = false;  // embedder failed; keyword ranking only
};

inline constexpr int kRrfConstant = 60;

// BM25 and cosine rankings fused by reciprocal rank:
// fused_score = sum over lists of 1/(rrf_k + rank).
HybridResult hybrid_search(const CorpusIndex& index, const Embedder& embedder,
                           const std::string& query, size_t k_candidates = 20,
                           int rrf_k = kRrfConstant);

class Reranker {
public:
    virtual ~Reranker() = default;
    virtual double score(const std::string& query, const DocumentChunk& chunk) const = 0;
    virtual std::string id() const = 0;
};

/// Deterministic fallback: cosine similarity of query and chunk embeddings.
class CosineReranker : public Reranker {
public:
    explicit CosineReranker(const Embedder& embedder) : embedder_(&embedder) {}
    double score(const std::string& query, const DocumentChunk& chunk) const override;
    std::string id() const override { return "cosine"; }

private:
    const Embedder* embedder_;
};

struct RerankResult {
    std::vector<RetrievalHit> hits;  // at most `keep`, rerank_score descending
    bool used_fallback = false;
};

RerankResult rerank(const CorpusIndex& index, std::vector<RetrievalHit> hits,
                    const std::string& query, const Reranker& reranker,
                    const Reranker* fallback = nullptr, size_t keep = 5);

// verified=true iff the pmcid exists in the index and the title matches the
// stored title case-insensitively.
std::vector<CitationRecord> verify_citations(const std::vector<CitationRecord>& citations,
                                             const CorpusIndex& index);

struct RegionContext {
    std::string summary;
    bool empty_context = false;  // no matching chunks; query proceeds ungrounded
};

struct BackendParams {
    std::string model_id = "replay";
    double temperature = 0.0;
    bool want_logprobs = true;
    int max_output_tokens = 1024;
    RetryPolicy retry;
};

// Top-3 BM25 chunks for the region name, summarized by the backend into a
// short location description for system-prompt assembly.
RegionContext region_context(const CorpusIndex& index, const Region& region,
                             ChatBackend& backend, const PromptEngine& engine,
                             const BackendParams& params);

struct GroundedParams {
    BackendParams backend;
    size_t k_candidates = 20;
    int rrf_k = kRrfConstant;
    size_t keep = 5;
    Ordering ordering = Ordering::Forward;
    int repeat = 1;
};

// Citation-grounded connection query: hybrid search -> rerank -> prompt ->
// JSON verdict with verified citations.
PriorRecord grounded_query(const CorpusIndex& index, const RegionPair& pair,
                           const Embedder& embedder, const Reranker& reranker,
                           ChatBackend& backend, const PromptEngine& engine,
                           const GroundedParams& params);

}  // namespace wmprior
