#include "wmprior/rag.hpp"

#include "wmprior/digest.hpp"
#include "wmprior/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace wmprior {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

namespace {

bool is_sentence_end(const std::string& text, size_t i) {
    char c = text[i];
    if (c != '.' && c != '?' && c != '!') return false;
    return i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]));
}

// Largest break position in (start, limit], by boundary kind.
size_t best_break(const std::string& text, size_t start, size_t limit) {
    size_t best_paragraph = 0, best_sentence = 0, best_word = 0;
    for (size_t i = start; i < limit; ++i) {
        if (text[i] == '\n' && i + 1 < text.size() && text[i + 1] == '\n' && i + 2 <= limit)
            best_paragraph = i + 2;
        if (is_sentence_end(text, i) && i + 1 <= limit) best_sentence = i + 1;
        if (std::isspace(static_cast<unsigned char>(text[i])) && i + 1 <= limit)
            best_word = i + 1;
    }
    if (best_paragraph > start) return best_paragraph;
    if (best_sentence > start) return best_sentence;
    if (best_word > start) return best_word;
    return limit;  // hard cut
}

}  // namespace

std::vector<std::string> split_with_overlap(const std::string& text, size_t chunk_size,
                                            size_t overlap) {
    if (chunk_size == 0 || overlap >= chunk_size)
        throw config_error("chunking requires chunk_size > overlap >= 0");
    std::vector<std::string> chunks;
    if (text.empty()) return chunks;
    size_t start = 0;
    for (;;) {
        size_t end;
        if (text.size() - start <= chunk_size) {
            end = text.size();
        } else {
            end = best_break(text, start, start + chunk_size);
        }
        chunks.push_back(text.substr(start, end - start));
        if (end == text.size()) break;
        start = std::max(start + 1, end - std::min(overlap, end - start));
    }
    return chunks;
}

std::vector<double> HashedBowEmbedder::embed(const std::string& text) const {
    std::vector<double> v(static_cast<size_t>(dim_), 0.0);
    for (const std::string& token : tokenize(text))
        v[fnv1a64(token) % static_cast<std::uint64_t>(dim_)] += 1.0;
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0)
        for (double& x : v) x /= norm;
    return v;
}

std::vector<Document> load_corpus_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw data_error("corpus directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<Document> docs;
    for (const auto& file : files) {
        std::ifstream in(file);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw data_error("malformed corpus document " + file.string() + ": " + e.what());
        }
        Document d;
        d.pmcid = j.at("pmcid").get<std::string>();
        d.title = j.at("title").get<std::string>();
        d.text = j.at("text").get<std::string>();
        for (const auto& k : j.value("keywords", json::array()))
            d.keywords.push_back(k.get<std::string>());
        docs.push_back(std::move(d));
    }
    return docs;
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) return 0.0;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::string chunk_id_for(const std::string& pmcid, size_t seq) {
    std::ostringstream os;
    os << pmcid << ':';
    os.width(5);
    os.fill('0');
    os << seq;
    return os.str();
}

// Sentences with trailing separators attached, never empty.
std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> out;
    size_t start = 0;
    for (size_t i = 0; i < text.size(); ++i) {
        if (is_sentence_end(text, i) || (text[i] == '\n' && i + 1 < text.size() && text[i + 1] == '\n')) {
            size_t end = i + 1;
            while (end < text.size() && std::isspace(static_cast<unsigned char>(text[end]))) ++end;
            out.push_back(text.substr(start, end - start));
            start = end;
            i = end - 1;
        }
    }
    if (start < text.size()) out.push_back(text.substr(start));
    return out;
}

}  // namespace

CorpusIndex CorpusIndex::from_chunks(std::vector<DocumentChunk> chunks, Bm25Params params,
                                     std::string embedder_id) {
    if (chunks.empty()) throw data_error("corpus produced no chunks");
    size_t dim = chunks.front().embedding.size();
    for (const DocumentChunk& c : chunks)
        if (c.embedding.size() != dim)
            throw data_error("inconsistent embedding dimensions in index");
    CorpusIndex index;
    index.chunks_ = std::move(chunks);
    index.params_ = params;
    index.embedder_id_ = std::move(embedder_id);
    long long total = 0;
    index.doc_lengths_.resize(index.chunks_.size());
    for (size_t i = 0; i < index.chunks_.size(); ++i) {
        auto tokens = tokenize(index.chunks_[i].text);
        index.doc_lengths_[i] = static_cast<int>(tokens.size());
        total += static_cast<long long>(tokens.size());
        std::map<std::string, int> tf;
        for (const std::string& t : tokens) ++tf[t];
        for (const auto& [token, count] : tf)
            index.postings_[token].emplace_back(static_cast<int>(i), count);
    }
    index.avg_doc_length_ =
        index.chunks_.empty() ? 0.0 : static_cast<double>(total) / index.chunks_.size();
    return index;
}

CorpusIndex CorpusIndex::build(const std::vector<Document>& documents, size_t chunk_size,
                               size_t overlap, const Embedder& embedder, Bm25Params params) {
    if (documents.empty()) throw data_error("cannot build an index from an empty corpus");
    std::vector<DocumentChunk> chunks;
    for (const Document& doc : documents) {
        auto pieces = split_with_overlap(doc.text, chunk_size, overlap);
        for (size_t s = 0; s < pieces.size(); ++s) {
            DocumentChunk c;
            c.chunk_id = chunk_id_for(doc.pmcid, s);
            c.text = pieces[s];
            c.title = doc.title;
            c.pmcid = doc.pmcid;
            c.keywords = doc.keywords;
            c.embedding = embedder.embed(c.text);
            chunks.push_back(std::move(c));
        }
    }
    return from_chunks(std::move(chunks), params, embedder.id());
}

CorpusIndex CorpusIndex::build_semantic(const std::vector<Document>& documents,
                                        const Embedder& embedder, double similarity_threshold,
                                        Bm25Params params) {
    if (documents.empty()) throw data_error("cannot build an index from an empty corpus");
    std::vector<DocumentChunk> chunks;
    for (const Document& doc : documents) {
        auto sentences = split_sentences(doc.text);
        std::vector<std::string> merged;
        std::string current;
        std::vector<double> current_embedding;
        for (const std::string& sentence : sentences) {
            auto e = embedder.embed(sentence);
            if (current.empty()) {
                current = sentence;
                current_embedding = e;
                continue;
            }
            if (cosine(current_embedding, e) >= similarity_threshold) {
                current += sentence;
                current_embedding = embedder.embed(current);
            } else {
                merged.push_back(current);
                current = sentence;
                current_embedding = e;
            }
        }
        if (!current.empty()) merged.push_back(current);
        for (size_t s = 0; s < merged.size(); ++s) {
            DocumentChunk c;
            c.chunk_id = chunk_id_for(doc.pmcid, s);
            c.text = merged[s];
            c.title = doc.title;
            c.pmcid = doc.pmcid;
            c.keywords = doc.keywords;
            c.embedding = embedder.embed(c.text);
            chunks.push_back(std::move(c));
        }
    }
    return from_chunks(std::move(chunks), params, embedder.id());
}

std::vector<RetrievalHit> CorpusIndex::bm25_search(const std::string& query, size_t k) const {
    std::vector<std::string> terms = tokenize(query);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

    const double n_docs = static_cast<double>(chunks_.size());
    std::map<int, double> scores;
    for (const std::string& term : terms) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        const auto& posting = it->second;
        double df = static_cast<double>(posting.size());
        double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        for (const auto& [doc, tf] : posting) {
            double norm_len = doc_lengths_[static_cast<size_t>(doc)] / avg_doc_length_;
            double tf_part = tf * (params_.k1 + 1.0) /
                             (tf + params_.k1 * (1.0 - params_.b + params_.b * norm_len));
            scores[doc] += idf * tf_part;
        }
    }

    std::vector<RetrievalHit> hits;
    for (const auto& [doc, score] : scores) {
        if (score <= 0.0) continue;
        RetrievalHit h;
        h.chunk_index = doc;
        h.chunk_id = chunks_[static_cast<size_t>(doc)].chunk_id;
        h.score = score;
        hits.push_back(std::move(h));
    }
    std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.chunk_id < b.chunk_id;
    });
    if (hits.size() > k) hits.resize(k);
    for (size_t i = 0; i < hits.size(); ++i) hits[i].bm25_rank = static_cast<int>(i + 1);
    return hits;
}

std::vector<RetrievalHit> CorpusIndex::cosine_ranking(const std::vector<double>& query_embedding,
                                                      size_t k) const {
    std::vector<RetrievalHit> hits;
    for (size_t i = 0; i < chunks_.size(); ++i) {
        RetrievalHit h;
        h.chunk_index = static_cast<int>(i);
        h.chunk_id = chunks_[i].chunk_id;
        h.score = cosine(query_embedding, chunks_[i].embedding);
        hits.push_back(std::move(h));
    }
    std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.chunk_id < b.chunk_id;
    });
    if (hits.size() > k) hits.resize(k);
    for (size_t i = 0; i < hits.size(); ++i) hits[i].vector_rank = static_cast<int>(i + 1);
    return hits;
}

std::optional<std::string> CorpusIndex::title_of(const std::string& pmcid) const {
    for (const DocumentChunk& c : chunks_)
        if (c.pmcid == pmcid) return c.title;
    return std::nullopt;
}

void CorpusIndex::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "chunks.jsonl");
        if (!out) throw data_error("cannot write index chunks: " + dir.string());
        for (const DocumentChunk& c : chunks_) {
            ordered_json j;
            j["chunk_id"] = c.chunk_id;
            j["text"] = c.text;
            j["title"] = c.title;
            j["pmcid"] = c.pmcid;
            j["keywords"] = c.keywords;
            j["embedding"] = c.embedding;
            out << j.dump() << '\n';
        }
    }
    ordered_json stats;
    stats["k1"] = params_.k1;
    stats["b"] = params_.b;
    stats["embedder_id"] = embedder_id_;
    stats["n_chunks"] = chunks_.size();
    std::ofstream out(dir / "stats.json");
    out << stats.dump(2) << '\n';
}

CorpusIndex CorpusIndex::load(const std::filesystem::path& dir) {
    std::ifstream stats_in(dir / "stats.json");
    if (!stats_in) throw data_error("index stats not found in " + dir.string());
    json stats;
    stats_in >> stats;
    Bm25Params params{stats.at("k1").get<double>(), stats.at("b").get<double>()};

    std::ifstream in(dir / "chunks.jsonl");
    if (!in) throw data_error("index chunks not found in " + dir.string());
    std::vector<DocumentChunk> chunks;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        DocumentChunk c;
        c.chunk_id = j.at("chunk_id").get<std::string>();
        c.text = j.at("text").get<std::string>();
        c.title = j.at("title").get<std::string>();
        c.pmcid = j.at("pmcid").get<std::string>();
        for (const auto& k : j.value("keywords", json::array()))
            c.keywords.push_back(k.get<std::string>());
        for (const auto& x : j.at("embedding")) c.embedding.push_back(x.get<double>());
        chunks.push_back(std::move(c));
    }
    return from_chunks(std::move(chunks), params, stats.at("embedder_id").get<std::string>());
}

HybridResult hybrid_search(const CorpusIndex& index, const Embedder& embedder,
                           const std::string& query, size_t k_candidates, int rrf_k) {
    HybridResult result;
    std::vector<RetrievalHit> bm25 = index.bm25_search(query, k_candidates);

    std::vector<RetrievalHit> vector_hits;
    try {
        vector_hits = index.cosine_ranking(embedder.embed(query), k_candidates);
    } catch (const std::exception&) {
        result.bm25_only_fallback = true;
    }

    std::map<int, RetrievalHit> fused;
    for (const RetrievalHit& h : bm25) {
        RetrievalHit& f = fused.emplace(h.chunk_index, h).first->second;
        f.bm25_rank = h.bm25_rank;
        f.fused_score += 1.0 / (rrf_k + *h.bm25_rank);
    }
    for (const RetrievalHit& h : vector_hits) {
        auto [it, inserted] = fused.emplace(h.chunk_index, h);
        it->second.vector_rank = h.vector_rank;
        it->second.fused_score += 1.0 / (rrf_k + *h.vector_rank);
    }

    for (auto& [idx, hit] : fused) result.hits.push_back(hit);
    std::sort(result.hits.begin(), result.hits.end(),
              [](const RetrievalHit& a, const RetrievalHit& b) {
                  if (a.fused_score != b.fused_score) return a.fused_score > b.fused_score;
                  return a.chunk_id < b.chunk_id;
              });
    if (result.hits.size() > k_candidates) result.hits.resize(k_candidates);
    return result;
}

double CosineReranker::score(const std::string& query, const DocumentChunk& chunk) const {
    return cosine(embedder_->embed(query), chunk.embedding);
}

RerankResult rerank(const CorpusIndex& index, std::vector<RetrievalHit> hits,
                    const std::string& query, const Reranker& reranker, const Reranker* fallback,
                    size_t keep) {
    RerankResult result;
    for (RetrievalHit& h : hits) {
        const DocumentChunk& chunk = index.chunk(h.chunk_index);
        try {
            h.rerank_score = reranker.score(query, chunk);
        } catch (const std::exception&) {
            if (!fallback) throw;
            result.used_fallback = true;
            h.rerank_score = fallback->score(query, chunk);
        }
    }
    std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
        if (*a.rerank_score != *b.rerank_score) return *a.rerank_score > *b.rerank_score;
        return a.chunk_id < b.chunk_id;
    });
    if (hits.size() > keep) hits.resize(keep);
    result.hits = std::move(hits);
    return result;
}

std::vector<CitationRecord> verify_citations(const std::vector<CitationRecord>& citations,
                                             const CorpusIndex& index) {
    auto lower = [](std::string s) {
        std::transform(s.begin(), s.end(), s.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        return s;
    };
    std::vector<CitationRecord> out = citations;
    for (CitationRecord& c : out) {
        auto stored = index.title_of(c.pmcid);
        c.verified = stored && lower(*stored) == lower(c.title);
    }
    return out;
}

RegionContext region_context(const CorpusIndex& index, const Region& region,
                             ChatBackend& backend, const PromptEngine& engine,
                             const BackendParams& params) {
    auto hits = index.bm25_search(region.name, 3);
    if (hits.empty()) return RegionContext{"", true};
    std::vector<std::string> texts;
    for (const RetrievalHit& h : hits) texts.push_back(index.chunk(h.chunk_index).text);
    MessageSequence scripted = engine.render_region_summary(region.name, texts);
    SessionResult session = run_session(scripted, backend, params.model_id, params.temperature,
                                        /*want_logprobs=*/false, params.max_output_tokens,
                                        params.retry);
    return RegionContext{session.final_response.text, false};
}

namespace {

// Pulls the outermost JSON object out of model text (code fences and
// surrounding prose tolerated).
json extract_json_object(const std::string& text) {
    size_t start = text.find('{');
    size_t end = text.rfind('}');
    if (start == std::string::npos || end == std::string::npos || end < start)
        throw parse_error("no JSON object in model output");
    return json::parse(text.substr(start, end - start + 1));
}

Verdict verdict_from_connection_value(const std::string& value) {
    std::string t;
    for (char c : value)
        if (std::isalpha(static_cast<unsigned char>(c)))
            t += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (t == "true") return Verdict::True;
    if (t == "false") return Verdict::False;
    if (t.find("know") != std::string::npos) return Verdict::DontKnow;
    throw parse_error("unrecognized connection value: '" + value + "'");
}

}  // namespace

PriorRecord grounded_query(const CorpusIndex& index, const RegionPair& pair,
                           const Embedder& embedder, const Reranker& reranker,
                           ChatBackend& backend, const PromptEngine& engine,
                           const GroundedParams& params) {
    const std::string query =
        "white matter connection between " + pair.a + " and " + pair.b;
    HybridResult hybrid = hybrid_search(index, embedder, query, params.k_candidates, params.rrf_k);
    CosineReranker fallback(embedder);
    RerankResult top = rerank(index, hybrid.hits, query, reranker, &fallback, params.keep);
    if (top.hits.empty()) throw data_error("no candidate chunks for pair " + pair.key());

    std::vector<ContextChunk> context;
    for (const RetrievalHit& h : top.hits) {
        const DocumentChunk& c = index.chunk(h.chunk_index);
        context.push_back({c.text, c.title, c.pmcid});
    }
    MessageSequence scripted = engine.render_rag_citation(pair, context);

    PriorRecord rec;
    rec.pair = pair;
    rec.ordering = params.ordering;
    rec.repeat = params.repeat;
    rec.strategy = PromptStrategy{BasePrompt::RagCitation, false};
    rec.model_id = params.backend.model_id;

    SessionResult session;
    json payload;
    bool parsed = false;
    for (int attempt = 0; attempt < 2 && !parsed; ++attempt) {
        session = run_session(scripted, backend, params.backend.model_id,
                              params.backend.temperature, params.backend.want_logprobs,
                              params.backend.max_output_tokens, params.backend.retry);
        try {
            payload = extract_json_object(session.final_response.text);
            parsed = payload.contains("connection");
        } catch (const std::exception&) {
            parsed = false;
        }
    }
    rec.raw_response_digest = session.final_digest;
    rec.usage = session.total_usage;
    if (!parsed) {
        rec.parse_failure = true;
        rec.classification = Verdict::DontKnow;
        rec.abstained = true;
        rec.confidence_connected = 0.0;
        return rec;
    }

    rec.classification = verdict_from_connection_value(
        payload["connection"].is_string() ? payload["connection"].get<std::string>()
                                          : payload["connection"].dump());
    try {
        ConfidenceResult conf = confidence_from_response(session.final_response, rec.classification);
        rec.confidence_connected = conf.confidence_connected;
        rec.verdict_token_logprob = conf.verdict_token_logprob;
        rec.abstained = conf.abstained;
        rec.no_logprobs = conf.no_logprobs;
    } catch (const data_error&) {
        // Verdict token split across JSON tokens; degrade to a hard verdict.
        rec.no_logprobs = true;
        rec.confidence_connected = rec.classification == Verdict::True ? 1.0 : 0.0;
    }

    std::string evidence;
    if (payload.contains("evidence")) {
        if (payload["evidence"].is_string()) evidence = payload["evidence"].get<std::string>();
        else evidence = payload["evidence"].dump();
    }
    rec.reasoning_text = evidence.empty() ? std::nullopt : std::optional<std::string>(evidence);

    std::vector<CitationRecord> citations;
    if (payload.contains("citations") && payload["citations"].is_array()) {
        for (const auto& c : payload["citations"]) {
            if (!c.is_object()) continue;
            citations.push_back(
                {c.value("title", ""), c.value("pmcid", ""), c.value("quote", ""), false});
        }
    }
    rec.citations = verify_citations(citations, index);
    return rec;
}

}  // namespace wmprior
