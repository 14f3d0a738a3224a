// wmprior: command-line front end for the connectome-prior pipeline.
//
// Subcommands: priors, evaluate, ingest, ground, filter, ndm, permute.
// Each run reads a JSON config file, writes its artifacts under --out with
// fixed filenames, and drops a manifest.json recording config and input
// digests. Credentials are only ever read from environment variables.

#include <CLI11.hpp>
#include <json.hpp>

#include "wmprior/batch.hpp"
#include "wmprior/connectome.hpp"
#include "wmprior/digest.hpp"
#include "wmprior/errors.hpp"
#include "wmprior/evaluation.hpp"
#include "wmprior/filter.hpp"
#include "wmprior/gateway.hpp"
#include "wmprior/ndm.hpp"
#include "wmprior/prior.hpp"
#include "wmprior/prompt.hpp"
#include "wmprior/rag.hpp"

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
using namespace wmprior;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// Exit codes, one per error class so scripts can branch on failures.
enum ExitCode : int {
    kOk = 0,
    kUsageError = 1,
    kConfigError = 2,
    kDataError = 3,
    kParseError = 4,
    kReplayMiss = 5,
    kStoreCorruption = 6,
    kBackendError = 7,
    kDegenerateFit = 8,
    kOtherError = 10,
};

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string replay_path;
    std::string record_path;
    std::optional<std::uint64_t> seed;
};

// ---------------------------------------------------------------------------
// Config parsing with unknown-key rejection.

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key))
            throw config_error("unknown config key '" + key + "' in " + where);
}

struct BackendConfig {
    std::string model_id = "replay";
    std::string endpoint;
    std::string credentials_env;
    double temperature = 0.0;
    int max_output_tokens = 1024;
    bool want_logprobs = true;
};

struct RetrievalConfig {
    std::string corpus_dir;
    std::string index_dir;
    size_t chunk_size = 2500;
    size_t overlap = 200;
    size_t k_candidates = 20;
    int rrf_k = kRrfConstant;
    size_t keep = 5;
    int embedder_dim = 256;
    Bm25Params bm25;
};

struct EvaluationConfig {
    std::string eval_set;
    std::string records;
    double cutoff = 0.5;
    std::string prices;
    double consistency = 1.0;
};

struct FilteringConfig {
    std::string weights;
    std::string records;
    std::string unfiltered_counts;
    double cutoff = 0.5;
};

struct NdmConnectomeEntry {
    std::string name;
    std::string path;
    double binarize_threshold = 0.0;
};

struct NdmConfig {
    std::string seed_region;
    std::string target;
    std::string laplacian = "unnormalized";
    double grid_lo = 1e-3;
    double grid_hi = 1e2;
    int grid_points = 200;
    int trials = 1000;
    std::uint64_t rng_seed = 0;
    std::vector<NdmConnectomeEntry> connectomes;
};

struct RunConfig {
    std::string parcellation;
    std::string strategy = "minimal";
    std::string pairs;  // optional evaluation-set path restricting the pair list
    BackendConfig backend;
    std::vector<std::string> orderings = {"forward"};
    int repeats = 1;
    int concurrency_limit = 4;
    RetrievalConfig retrieval;
    EvaluationConfig evaluation;
    FilteringConfig filtering;
    NdmConfig ndm;
    std::string output_dir;
    std::string prompt_dir;  // optional template overrides
};

RunConfig parse_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw config_error("config " + path.string() + " is not valid JSON: " + e.what());
    }
    reject_unknown_keys(j, {"parcellation", "strategy", "pairs", "backend", "orderings", "repeats",
                            "concurrency_limit", "retrieval", "evaluation", "filtering", "ndm",
                            "output_dir", "prompt_dir"},
                        "top level");
    RunConfig c;
    c.parcellation = j.value("parcellation", "");
    c.strategy = j.value("strategy", "minimal");
    c.pairs = j.value("pairs", "");
    c.output_dir = j.value("output_dir", "");
    c.prompt_dir = j.value("prompt_dir", "");
    c.repeats = j.value("repeats", 1);
    c.concurrency_limit = j.value("concurrency_limit", 4);
    if (j.contains("orderings")) c.orderings = j["orderings"].get<std::vector<std::string>>();

    if (j.contains("backend")) {
        const json& b = j["backend"];
        reject_unknown_keys(b, {"model_id", "endpoint", "credentials_env", "temperature",
                                "max_output_tokens", "want_logprobs"},
                            "backend");
        if (b.contains("credentials") || b.contains("api_key") || b.contains("token"))
            throw config_error("credentials belong in the environment, not the config file");
        c.backend.model_id = b.value("model_id", c.backend.model_id);
        c.backend.endpoint = b.value("endpoint", "");
        c.backend.credentials_env = b.value("credentials_env", "");
        c.backend.temperature = b.value("temperature", 0.0);
        c.backend.max_output_tokens = b.value("max_output_tokens", 1024);
        c.backend.want_logprobs = b.value("want_logprobs", true);
    }
    if (j.contains("retrieval")) {
        const json& r = j["retrieval"];
        reject_unknown_keys(r, {"corpus_dir", "index_dir", "chunk_size", "overlap", "k_candidates",
                                "rrf_k", "keep", "embedder_dim", "bm25_k1", "bm25_b"},
                            "retrieval");
        c.retrieval.corpus_dir = r.value("corpus_dir", "");
        c.retrieval.index_dir = r.value("index_dir", "");
        c.retrieval.chunk_size = r.value("chunk_size", size_t{2500});
        c.retrieval.overlap = r.value("overlap", size_t{200});
        c.retrieval.k_candidates = r.value("k_candidates", size_t{20});
        c.retrieval.rrf_k = r.value("rrf_k", kRrfConstant);
        c.retrieval.keep = r.value("keep", size_t{5});
        c.retrieval.embedder_dim = r.value("embedder_dim", 256);
        c.retrieval.bm25.k1 = r.value("bm25_k1", 1.2);
        c.retrieval.bm25.b = r.value("bm25_b", 0.75);
    }
    if (j.contains("evaluation")) {
        const json& e = j["evaluation"];
        reject_unknown_keys(e, {"eval_set", "records", "cutoff", "prices", "consistency"},
                            "evaluation");
        c.evaluation.eval_set = e.value("eval_set", "");
        c.evaluation.records = e.value("records", "");
        c.evaluation.cutoff = e.value("cutoff", 0.5);
        c.evaluation.prices = e.value("prices", "");
        c.evaluation.consistency = e.value("consistency", 1.0);
    }
    if (j.contains("filtering")) {
        const json& f = j["filtering"];
        reject_unknown_keys(f, {"weights", "records", "unfiltered_counts", "cutoff"}, "filtering");
        c.filtering.weights = f.value("weights", "");
        c.filtering.records = f.value("records", "");
        c.filtering.unfiltered_counts = f.value("unfiltered_counts", "");
        c.filtering.cutoff = f.value("cutoff", 0.5);
    }
    if (j.contains("ndm")) {
        const json& n = j["ndm"];
        reject_unknown_keys(n, {"seed_region", "target", "laplacian", "grid_lo", "grid_hi",
                                "grid_points", "trials", "rng_seed", "connectomes"},
                            "ndm");
        c.ndm.seed_region = n.value("seed_region", "");
        c.ndm.target = n.value("target", "");
        c.ndm.laplacian = n.value("laplacian", "unnormalized");
        c.ndm.grid_lo = n.value("grid_lo", 1e-3);
        c.ndm.grid_hi = n.value("grid_hi", 1e2);
        c.ndm.grid_points = n.value("grid_points", 200);
        c.ndm.trials = n.value("trials", 1000);
        c.ndm.rng_seed = n.value("rng_seed", std::uint64_t{0});
        if (n.contains("connectomes")) {
            for (const json& entry : n["connectomes"]) {
                reject_unknown_keys(entry, {"name", "path", "binarize_threshold"},
                                    "ndm.connectomes");
                NdmConnectomeEntry e;
                e.name = entry.at("name").get<std::string>();
                e.path = entry.at("path").get<std::string>();
                e.binarize_threshold = entry.value("binarize_threshold", 0.0);
                c.ndm.connectomes.push_back(e);
            }
        }
    }
    return c;
}

// ---------------------------------------------------------------------------
// Shared plumbing.

std::string file_digest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open input file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return content_digest(buf.str());
}

std::string iso8601_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

struct ManifestBuilder {
    ordered_json doc;

    ManifestBuilder(const std::string& command, const CommonArgs& args) {
        doc["tool"] = "wmprior";
        doc["tool_version"] = kToolVersion;
        doc["command"] = command;
        doc["created_at"] = iso8601_now();
        doc["config_path"] = args.config_path;
        doc["config_digest"] = file_digest(args.config_path);
        if (args.seed) doc["seed"] = *args.seed;
        doc["inputs"] = ordered_json::object();
        doc["outputs"] = ordered_json::array();
    }

    void add_input(const fs::path& path) {
        if (!path.empty()) doc["inputs"][path.string()] = file_digest(path);
    }
    void add_output(const std::string& name) { doc["outputs"].push_back(name); }

    void write(const fs::path& out_dir) {
        std::ofstream out(out_dir / "manifest.json");
        out << doc.dump(2) << "\n";
    }
};

fs::path require_out_dir(const CommonArgs& args, const RunConfig& config) {
    std::string dir = !args.out_dir.empty() ? args.out_dir : config.output_dir;
    if (dir.empty()) throw config_error("no output directory: pass --out or set output_dir");
    fs::create_directories(dir);
    return dir;
}

Parcellation require_parcellation(const RunConfig& config) {
    if (config.parcellation.empty()) throw config_error("config is missing 'parcellation'");
    return load_parcellation(config.parcellation);
}

std::vector<RegionPair> resolve_pairs(const RunConfig& config, const Parcellation& p) {
    if (!config.pairs.empty()) {
        EvaluationSet set = EvaluationSet::load_json(config.pairs);
        auto pairs = set.all_pairs();
        for (const auto& pair : pairs) {
            p.require(pair.a);
            p.require(pair.b);
        }
        return pairs;
    }
    return enumerate_pairs(p, PairScope::WithinHemisphere);
}

// Backend selection: --replay wins, --record wraps the live backend, and a
// live backend needs an endpoint plus a credentials env var.
std::shared_ptr<ChatBackend> make_backend(const CommonArgs& args, const RunConfig& config) {
    if (!args.replay_path.empty()) {
        auto store = ReplayStore::open(args.replay_path);
        std::shared_ptr<ChatBackend> replay = std::make_shared<ReplayBackend>(store);
        if (!args.record_path.empty()) {
            auto sink = ReplayStore::open(args.record_path);
            return std::make_shared<RecordingBackend>(replay, sink);
        }
        return replay;
    }
    if (config.backend.endpoint.empty())
        throw config_error("no backend: pass --replay or configure backend.endpoint");
    if (config.backend.credentials_env.empty())
        throw config_error("live backend needs backend.credentials_env naming a token variable");
    std::shared_ptr<ChatBackend> live = std::make_shared<HttpBackend>(
        config.backend.endpoint, config.backend.credentials_env, config.backend.model_id);
    if (!args.record_path.empty()) {
        auto sink = ReplayStore::open(args.record_path);
        return std::make_shared<RecordingBackend>(live, sink);
    }
    return live;
}

PromptEngine make_engine(const RunConfig& config) {
    if (!config.prompt_dir.empty()) return PromptEngine(TemplateSet::load(config.prompt_dir));
    return PromptEngine();
}

std::vector<Ordering> parse_orderings(const std::vector<std::string>& names) {
    std::vector<Ordering> orderings;
    for (const auto& name : names) orderings.push_back(ordering_from_string(name));
    if (orderings.empty()) throw config_error("orderings must not be empty");
    return orderings;
}

void save_priors_csv(const fs::path& path, const PriorMatrix& matrix) {
    std::ofstream out(path);
    out << "region_a,region_b,mean_confidence\n";
    out.setf(std::ios::fmtflags(0), std::ios::floatfield);
    out.precision(17);
    for (const auto& pair : matrix.recorded)
        out << pair.a << "," << pair.b << "," << matrix.mean_confidence(pair) << "\n";
}

LaplacianKind laplacian_from_string(const std::string& name) {
    if (name == "unnormalized") return LaplacianKind::Unnormalized;
    if (name == "symmetric") return LaplacianKind::Symmetric;
    throw config_error("unknown laplacian kind '" + name + "'");
}

// ---------------------------------------------------------------------------
// Subcommands.

int cmd_priors(const CommonArgs& args, const RunConfig& config) {
    Parcellation p = require_parcellation(config);
    fs::path out_dir = require_out_dir(args, config);
    auto backend = make_backend(args, config);

    BatchPlan plan;
    plan.pairs = resolve_pairs(config, p);
    plan.strategy = strategy_from_string(config.strategy);
    plan.orderings = parse_orderings(config.orderings);
    plan.repeats_per_ordering = config.repeats;
    plan.concurrency_limit = config.concurrency_limit;
    plan.model_id = config.backend.model_id;
    plan.temperature = config.backend.temperature;
    plan.want_logprobs = config.backend.want_logprobs;
    plan.max_output_tokens = config.backend.max_output_tokens;

    ManifestBuilder manifest("priors", args);
    manifest.add_input(config.parcellation);
    if (!config.pairs.empty()) manifest.add_input(config.pairs);
    if (!args.replay_path.empty()) manifest.add_input(args.replay_path);

    BatchResult result = run_batch(plan, make_engine(config), *backend,
                                   out_dir / "records.jsonl");
    PriorMatrix matrix = aggregate(result.records, p);
    save_priors_csv(out_dir / "priors.csv", matrix);

    manifest.doc["records"] = result.records.size();
    manifest.doc["failures"] = result.failures;
    manifest.doc["backend_sessions"] = result.backend_sessions;
    manifest.doc["cache_hits"] = result.cache_hits;
    ordered_json missing = ordered_json::array();
    for (const auto& pair : matrix.missing_pairs) missing.push_back(pair.key());
    manifest.doc["missing_pairs"] = missing;
    manifest.doc["records_digest"] = file_digest(out_dir / "records.jsonl");
    manifest.add_output("records.jsonl");
    manifest.add_output("priors.csv");
    manifest.write(out_dir);
    std::cout << "priors: " << result.records.size() << " records, "
              << matrix.recorded.size() << " pairs -> " << out_dir.string() << "\n";
    return result.failures.empty() ? kOk : kBackendError;
}

ordered_json score_to_json(const RunScore& score) {
    ordered_json s;
    s["accuracy"] = score.accuracy;
    s["fp_rate"] = score.fp_rate;
    s["fn_rate"] = score.fn_rate;
    s["tp"] = score.tp;
    s["tn"] = score.tn;
    s["fp"] = score.fp;
    s["fn"] = score.fn;
    s["per_repeat_accuracy"] = score.per_repeat_accuracy;
    s["repeat_mean"] = score.repeat_mean;
    s["repeat_std"] = score.repeat_std;
    return s;
}

int cmd_evaluate(const CommonArgs& args, const RunConfig& config) {
    fs::path out_dir = require_out_dir(args, config);
    if (config.evaluation.records.empty())
        throw config_error("evaluate needs evaluation.records");
    if (config.evaluation.eval_set.empty())
        throw config_error("evaluate needs evaluation.eval_set");
    auto records = load_records_jsonl(config.evaluation.records);
    EvaluationSet eval_set = EvaluationSet::load_json(config.evaluation.eval_set);

    ManifestBuilder manifest("evaluate", args);
    manifest.add_input(config.evaluation.records);
    manifest.add_input(config.evaluation.eval_set);

    RunScore score = score_run(records, eval_set, config.evaluation.cutoff);

    ordered_json out;
    out["cutoff"] = config.evaluation.cutoff;
    out["score"] = score_to_json(score);
    try {
        StabilityReport stability = stability_report(records, eval_set);
        ordered_json stab;
        stab["n_pairs"] = stability.n_pairs;
        stab["n_consistent"] = stability.n_consistent;
        stab["accuracy_min"] = stability.accuracy_min;
        stab["accuracy_max"] = stability.accuracy_max;
        ordered_json flips = ordered_json::array();
        for (const auto& pair : stability.ordering_determined) flips.push_back(pair.key());
        stab["ordering_determined"] = flips;
        out["stability"] = stab;
    } catch (const data_error&) {
        out["stability"] = nullptr;  // single-repeat runs have no stability signal
    }

    try {
        MannWhitneyResult sep = confidence_separation(records, eval_set);
        out["confidence_separation"] = {{"U", sep.U},
                                        {"p_two_sided", sep.p_two_sided},
                                        {"n_agree", sep.n1},
                                        {"n_diverge", sep.n2}};
    } catch (const data_error&) {
        out["confidence_separation"] = nullptr;  // one of the groups is empty
    }

    ordered_json rows = ordered_json::array();
    for (const auto& row : disagreement_report(records, eval_set, config.evaluation.consistency)) {
        rows.push_back({{"pair", row.pair.key()},
                        {"atlas_connected", row.atlas_connected},
                        {"mean_confidence", row.mean_confidence}});
    }
    out["disagreements"] = rows;

    if (!config.evaluation.prices.empty()) {
        manifest.add_input(config.evaluation.prices);
        CostReport cost = cost_report(records, load_price_table(config.evaluation.prices));
        ordered_json cost_rows = ordered_json::array();
        for (const auto& row : cost.rows)
            cost_rows.push_back({{"strategy", row.strategy},
                                 {"model_id", row.model_id},
                                 {"input_tokens", row.input_tokens},
                                 {"output_tokens", row.output_tokens},
                                 {"cost", row.cost}});
        out["cost"] = {{"rows", cost_rows}, {"total", cost.total}};
    }

    {
        std::ofstream scores(out_dir / "scores.json");
        scores << out.dump(2) << "\n";
    }
    {
        std::ofstream md(out_dir / "tables.md");
        md << "| metric | value |\n|---|---|\n";
        md << "| accuracy | " << score.accuracy << " |\n";
        md << "| fp_rate | " << score.fp_rate << " |\n";
        md << "| fn_rate | " << score.fn_rate << " |\n";
        md << "| repeat_mean | " << score.repeat_mean << " |\n";
        md << "| repeat_std | " << score.repeat_std << " |\n";
        md << "\n| pair | atlas | confidence |\n|---|---|---|\n";
        for (const auto& row : disagreement_report(records, eval_set, config.evaluation.consistency))
            md << "| " << row.pair.key() << " | " << (row.atlas_connected ? "connected" : "absent")
               << " | " << row.mean_confidence << " |\n";
    }

    manifest.add_output("scores.json");
    manifest.add_output("tables.md");
    manifest.write(out_dir);
    std::cout << "evaluate: accuracy " << score.accuracy << " over "
              << (score.tp + score.tn + score.fp + score.fn) << " pairs\n";
    return kOk;
}

int cmd_ingest(const CommonArgs& args, const RunConfig& config) {
    if (config.retrieval.corpus_dir.empty())
        throw config_error("ingest needs retrieval.corpus_dir");
    fs::path out_dir = require_out_dir(args, config);
    auto docs = load_corpus_dir(config.retrieval.corpus_dir);

    ManifestBuilder manifest("ingest", args);
    for (const auto& entry : fs::directory_iterator(config.retrieval.corpus_dir))
        if (entry.path().extension() == ".json") manifest.add_input(entry.path());

    HashedBowEmbedder embedder(config.retrieval.embedder_dim);
    CorpusIndex index = CorpusIndex::build(docs, config.retrieval.chunk_size,
                                           config.retrieval.overlap, embedder,
                                           config.retrieval.bm25);
    fs::path index_dir = out_dir / "index";
    fs::create_directories(index_dir);
    index.save(index_dir);
    manifest.doc["documents"] = docs.size();
    manifest.doc["chunks"] = index.size();
    manifest.add_output("index/chunks.jsonl");
    manifest.add_output("index/stats.json");
    manifest.write(out_dir);
    std::cout << "ingest: " << docs.size() << " documents -> " << index.size() << " chunks\n";
    return kOk;
}

int cmd_ground(const CommonArgs& args, const RunConfig& config) {
    Parcellation p = require_parcellation(config);
    if (config.retrieval.index_dir.empty()) throw config_error("ground needs retrieval.index_dir");
    fs::path out_dir = require_out_dir(args, config);
    CorpusIndex index = CorpusIndex::load(config.retrieval.index_dir);
    auto backend = make_backend(args, config);
    HashedBowEmbedder embedder(config.retrieval.embedder_dim);
    CosineReranker reranker(embedder);
    PromptEngine engine = make_engine(config);

    GroundedParams params;
    params.backend.model_id = config.backend.model_id;
    params.backend.temperature = config.backend.temperature;
    params.backend.want_logprobs = config.backend.want_logprobs;
    params.backend.max_output_tokens = config.backend.max_output_tokens;
    params.k_candidates = config.retrieval.k_candidates;
    params.rrf_k = config.retrieval.rrf_k;
    params.keep = config.retrieval.keep;

    ManifestBuilder manifest("ground", args);
    manifest.add_input(config.parcellation);
    if (!config.pairs.empty()) manifest.add_input(config.pairs);
    if (!args.replay_path.empty()) manifest.add_input(args.replay_path);

    std::vector<PriorRecord> records;
    for (const auto& pair : resolve_pairs(config, p))
        records.push_back(
            grounded_query(index, pair, embedder, reranker, *backend, engine, params));
    save_records_jsonl(out_dir / "records.jsonl", records);

    manifest.doc["records"] = records.size();
    manifest.doc["records_digest"] = file_digest(out_dir / "records.jsonl");
    manifest.add_output("records.jsonl");
    manifest.write(out_dir);
    std::cout << "ground: " << records.size() << " grounded records\n";
    return kOk;
}

int cmd_filter(const CommonArgs& args, const RunConfig& config) {
    Parcellation p = require_parcellation(config);
    if (config.filtering.weights.empty()) throw config_error("filter needs filtering.weights");
    if (config.filtering.records.empty()) throw config_error("filter needs filtering.records");
    fs::path out_dir = require_out_dir(args, config);

    Connectome weights =
        load_connectome_csv(config.filtering.weights, p, ConnectomeKind::Commit2WeightSum);
    auto records = load_records_jsonl(config.filtering.records);
    PriorMatrix priors = aggregate(records, p);

    std::optional<Connectome> unfiltered;
    if (!config.filtering.unfiltered_counts.empty())
        unfiltered = load_connectome_csv(config.filtering.unfiltered_counts, p,
                                         ConnectomeKind::StreamlineCount);

    ManifestBuilder manifest("filter", args);
    manifest.add_input(config.parcellation);
    manifest.add_input(config.filtering.weights);
    manifest.add_input(config.filtering.records);
    if (unfiltered) manifest.add_input(config.filtering.unfiltered_counts);

    FilterOutcome outcome = augment_filter(weights, priors, config.filtering.cutoff,
                                           unfiltered ? &*unfiltered : nullptr);
    outcome.filtered.save_csv(out_dir / "filtered.csv");
    outcome.save_provenance_csv(out_dir / "provenance.csv");

    manifest.doc["cutoff"] = config.filtering.cutoff;
    manifest.doc["n_added_by_llm"] = outcome.n_added_by_llm;
    ordered_json added = ordered_json::array();
    for (const auto& pair : added_edges(outcome)) added.push_back(pair.key());
    manifest.doc["added_edges"] = added;
    manifest.add_output("filtered.csv");
    manifest.add_output("provenance.csv");
    manifest.write(out_dir);
    std::cout << "filter: " << outcome.n_added_by_llm << " edges added by priors\n";
    return kOk;
}

int cmd_ndm(const CommonArgs& args, const RunConfig& config) {
    Parcellation p = require_parcellation(config);
    if (config.ndm.connectomes.empty()) throw config_error("ndm needs ndm.connectomes");
    if (config.ndm.target.empty()) throw config_error("ndm needs ndm.target");
    if (config.ndm.seed_region.empty()) throw config_error("ndm needs ndm.seed_region");
    fs::path out_dir = require_out_dir(args, config);

    RegionalVector target = RegionalVector::load_csv(config.ndm.target, p);
    int seed_index = p.require(config.ndm.seed_region);
    auto grid = log_time_grid(config.ndm.grid_lo, config.ndm.grid_hi, config.ndm.grid_points);
    LaplacianKind kind = laplacian_from_string(config.ndm.laplacian);

    ManifestBuilder manifest("ndm", args);
    manifest.add_input(config.parcellation);
    manifest.add_input(config.ndm.target);

    ordered_json rows = ordered_json::array();
    for (const auto& entry : config.ndm.connectomes) {
        manifest.add_input(entry.path);
        Connectome weighted =
            load_connectome_csv(entry.path, p, ConnectomeKind::Commit2WeightSum);
        Connectome binary = binarize(weighted, entry.binarize_threshold);
        DiffusionFit result = fit(binary, seed_index, target, grid, kind);
        rows.push_back({{"connectome", entry.name},
                        {"r", result.r},
                        {"sse", result.sse},
                        {"t_star", result.t_star},
                        {"scale", result.scale}});
        std::cout << "ndm: " << entry.name << " r=" << result.r << " sse=" << result.sse << "\n";
    }
    ordered_json out;
    out["seed_region"] = config.ndm.seed_region;
    out["laplacian"] = config.ndm.laplacian;
    out["fits"] = rows;
    std::ofstream fit_out(out_dir / "fit.json");
    fit_out << out.dump(2) << "\n";
    fit_out.close();

    manifest.add_output("fit.json");
    manifest.write(out_dir);
    return kOk;
}

int cmd_permute(const CommonArgs& args, const RunConfig& config) {
    Parcellation p = require_parcellation(config);
    if (config.filtering.weights.empty()) throw config_error("permute needs filtering.weights");
    if (config.filtering.records.empty()) throw config_error("permute needs filtering.records");
    if (config.ndm.target.empty()) throw config_error("permute needs ndm.target");
    if (config.ndm.seed_region.empty()) throw config_error("permute needs ndm.seed_region");
    fs::path out_dir = require_out_dir(args, config);

    Connectome weights =
        load_connectome_csv(config.filtering.weights, p, ConnectomeKind::Commit2WeightSum);
    Connectome base = binarize(weights, 0.0);
    auto records = load_records_jsonl(config.filtering.records);
    PriorMatrix priors = aggregate(records, p);
    FilterOutcome candidate = augment_filter(weights, priors, config.filtering.cutoff);

    RegionalVector target = RegionalVector::load_csv(config.ndm.target, p);
    int seed_index = p.require(config.ndm.seed_region);
    auto grid = log_time_grid(config.ndm.grid_lo, config.ndm.grid_hi, config.ndm.grid_points);
    std::uint64_t rng_seed = args.seed ? *args.seed : config.ndm.rng_seed;

    ManifestBuilder manifest("permute", args);
    manifest.add_input(config.parcellation);
    manifest.add_input(config.filtering.weights);
    manifest.add_input(config.filtering.records);
    manifest.add_input(config.ndm.target);

    PermutationResult result =
        permutation_test(base, candidate, target, seed_index, config.ndm.trials, rng_seed, grid,
                         laplacian_from_string(config.ndm.laplacian));
    result.save_null_csv(out_dir / "null.csv");

    ordered_json out;
    out["n_added"] = result.n_added;
    out["trials"] = result.trials;
    out["rng_seed"] = rng_seed;
    out["observed_r"] = result.observed_r;
    out["observed_sse"] = result.observed_sse;
    out["p_r"] = result.p_r;
    out["p_sse"] = result.p_sse;
    std::ofstream fit_out(out_dir / "fit.json");
    fit_out << out.dump(2) << "\n";
    fit_out.close();

    manifest.doc["n_added"] = result.n_added;
    manifest.doc["p_r"] = result.p_r;
    manifest.doc["p_sse"] = result.p_sse;
    manifest.add_output("null.csv");
    manifest.add_output("fit.json");
    manifest.write(out_dir);
    std::cout << "permute: n_added=" << result.n_added << " p_r=" << result.p_r
              << " p_sse=" << result.p_sse << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LLM-derived white-matter connectome priors pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    std::uint64_t seed_value = 0;

    std::map<std::string, std::function<int(const CommonArgs&, const RunConfig&)>> handlers = {
        {"priors", cmd_priors},     {"evaluate", cmd_evaluate}, {"ingest", cmd_ingest},
        {"ground", cmd_ground},     {"filter", cmd_filter},     {"ndm", cmd_ndm},
        {"permute", cmd_permute},
    };
    std::map<std::string, std::string> descriptions = {
        {"priors", "query the backend for connection priors over region pairs"},
        {"evaluate", "score prior records against an atlas-derived evaluation set"},
        {"ingest", "chunk and index a document corpus for retrieval"},
        {"ground", "run citation-grounded connection queries against an index"},
        {"filter", "augment a microstructure-filtered connectome with priors"},
        {"ndm", "fit the network diffusion model on one or more connectomes"},
        {"permute", "permutation-test the LLM-added edges against random ones"},
    };

    for (auto& [name, handler] : handlers) {
        CLI::App* sub = app.add_subcommand(name, descriptions[name]);
        sub->add_option("--config", args.config_path, "run configuration file (JSON)")
            ->required();
        sub->add_option("--out", args.out_dir, "output run directory");
        sub->add_option("--replay", args.replay_path, "replay store to serve responses from");
        sub->add_option("--record", args.record_path, "replay store to record responses into");
        sub->add_option("--seed", seed_value, "override the configured RNG seed");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--seed") > 0) args.seed = seed_value;

    try {
        RunConfig config = parse_config(args.config_path);
        return handlers[sub->get_name()](args, config);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const parse_error& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kParseError;
    } catch (const replay_miss_error& e) {
        std::cerr << "replay miss: " << e.what() << "\n";
        return kReplayMiss;
    } catch (const store_corruption_error& e) {
        std::cerr << "store corruption: " << e.what() << "\n";
        return kStoreCorruption;
    } catch (const retryable_error& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kBackendError;
    } catch (const degenerate_fit_error& e) {
        std::cerr << "degenerate fit: " << e.what() << "\n";
        return kDegenerateFit;
    } catch (const data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kDataError;
    } catch (const wmprior::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kOtherError;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return kUsageError;
    }
}
