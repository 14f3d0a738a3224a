// Generates the deterministic test fixtures checked in under tests/fixtures.
//
// The replay stores are authored with the same prompt engine and request
// digests the pipeline uses, so a replay run reproduces the authored
// verdicts exactly: 91 of the 100 evaluation pairs answered correctly.

#include "wmprior/batch.hpp"
#include "wmprior/connectome.hpp"
#include "wmprior/evaluation.hpp"
#include "wmprior/gateway.hpp"
#include "wmprior/ndm.hpp"
#include "wmprior/prior.hpp"
#include "wmprior/prompt.hpp"
#include "wmprior/rag.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace wmprior;

namespace {

constexpr const char* kModelId = "fixture-model";
constexpr std::uint64_t kEvalSeed = 20240901;

std::vector<std::string> region_names() {
    static const char* stems[] = {
        "bankssts",        "caudalanteriorcingulate", "caudalmiddlefrontal",
        "cuneus",          "entorhinal",              "fusiform",
        "inferiorparietal", "inferiortemporal",       "isthmuscingulate",
        "lateraloccipital", "lateralorbitofrontal",   "lingual",
        "medialorbitofrontal", "middletemporal",      "parahippocampal",
        "paracentral",     "parsopercularis",         "parsorbitalis",
        "parstriangularis", "pericalcarine",          "postcentral",
        "posteriorcingulate", "precentral",           "precuneus",
        "rostralanteriorcingulate", "rostralmiddlefrontal", "superiorfrontal",
        "superiorparietal", "superiortemporal",       "supramarginal"};
    std::vector<std::string> names;
    for (const char* stem : stems) names.push_back(std::string("lh_") + stem);
    for (const char* stem : stems) names.push_back(std::string("rh_") + stem);
    return names;
}

ChatResponse verdict_response(bool connected) {
    ChatResponse resp;
    resp.text = connected ? "true" : "false";
    resp.backend_id = kModelId;
    resp.token_logprobs = std::vector<TokenLogprob>{{resp.text, -0.05}};
    resp.usage = {24, 1};
    return resp;
}

ChatRequest minimal_request(const PromptEngine& engine, const RegionPair& pair) {
    ChatRequest req;
    req.messages = engine.render({BasePrompt::Minimal, false}, pair, Ordering::Forward);
    req.model_id = kModelId;
    req.temperature = 0.0;
    req.want_logprobs = true;
    req.max_output_tokens = 1024;
    return req;
}

void write_config(const fs::path& dir) {
    json config;
    config["parcellation"] = "parcellation.csv";
    config["strategy"] = "minimal";
    config["pairs"] = "eval_set.json";
    config["backend"] = {{"model_id", kModelId}, {"temperature", 0.0}};
    config["orderings"] = {"forward"};
    config["repeats"] = 1;
    config["concurrency_limit"] = 4;
    config["evaluation"] = {{"eval_set", "eval_set.json"},
                            {"records", "run/records.jsonl"},
                            {"cutoff", 0.5}};
    std::ofstream out(dir / "config.json");
    out << config.dump(2) << "\n";
}

void write_corpus(const fs::path& dir) {
    fs::create_directories(dir);
    struct Doc {
        const char* file;
        const char* pmcid;
        const char* title;
        const char* text;
    };
    const Doc docs[] = {
        {"cingulum.json", "PMC7000001", "The cingulum bundle: anatomy and function",
         "The cingulum bundle is a prominent white matter tract running along the medial "
         "surface of the hemisphere. It connects the cingulate cortex with the precuneus, "
         "the entorhinal cortex and the parahippocampal gyrus.\n\nTracer studies in primates "
         "confirm dense projections between the posterior cingulate and the precuneus."},
        {"arcuate.json", "PMC7000002", "Arcuate fasciculus connectivity of language cortex",
         "The arcuate fasciculus links the superior temporal cortex with the inferior "
         "frontal gyrus, including the pars opercularis and pars triangularis.\n\nNo direct "
         "fibres between the cuneus and the entorhinal cortex were observed in dissection."},
        {"visual.json", "PMC7000003", "Occipital white matter organisation",
         "Short association fibres connect the cuneus, the lingual gyrus and the "
         "pericalcarine cortex. The lateral occipital cortex communicates with the fusiform "
         "gyrus through the inferior longitudinal fasciculus."},
    };
    for (const auto& d : docs) {
        json doc;
        doc["pmcid"] = d.pmcid;
        doc["title"] = d.title;
        doc["keywords"] = json::array({"white matter", "tract"});
        doc["text"] = d.text;
        std::ofstream out(dir / d.file);
        out << doc.dump(2) << "\n";
    }
}

// Deterministic grounded-query responses for the ground fixture: a JSON
// verdict citing the top retrieved article.
class GroundScript : public ChatBackend {
public:
    explicit GroundScript(const CorpusIndex* index) : index_(index) {}

    ChatResponse complete(const ChatRequest& request) override {
        // Cite the first PMCID mentioned in the rendered prompt.
        std::string pmcid = "PMC7000001";
        const std::string& prompt = request.messages.back().content;
        auto pos = prompt.find("PMC7");
        if (pos != std::string::npos) pmcid = prompt.substr(pos, 10);
        std::string title = index_->title_of(pmcid).value_or("Unknown");
        json payload;
        payload["connection"] = true;
        payload["citations"] = json::array(
            {{{"title", title}, {"pmcid", pmcid}, {"quote", "connects"}}});
        ChatResponse resp;
        resp.text = payload.dump();
        resp.backend_id = kModelId;
        resp.usage = {128, 32};
        return resp;
    }

    std::string id() const override { return kModelId; }

private:
    const CorpusIndex* index_;
};

}  // namespace

int main(int argc, char** argv) {
    fs::path out_dir = argc > 1 ? fs::path(argv[1]) : fs::path("tests/fixtures");
    fs::create_directories(out_dir);

    // Parcellation: 30 regions per hemisphere.
    auto names = region_names();
    {
        std::ofstream out(out_dir / "parcellation.csv");
        out << "name,hemisphere\n";
        for (const auto& name : names)
            out << name << "," << (name[0] == 'l' ? "left" : "right") << "\n";
    }
    std::vector<Region> regions;
    for (size_t i = 0; i < names.size(); ++i)
        regions.push_back({names[i], names[i][0] == 'l' ? Hemisphere::Left : Hemisphere::Right,
                           static_cast<int>(i)});
    Parcellation parc("fixture-dkt", regions);

    // Atlas: 50 left-hemisphere pairs with distinct descending counts, a
    // simple ring-plus-chords pattern so the graph is connected.
    EndpointTable endpoints;
    {
        int count = 100;
        std::set<std::pair<int, int>> used;
        auto add = [&](int a, int b) {
            if (a == b) return;
            int lo = std::min(a, b), hi = std::max(a, b);
            if (!used.insert({lo, hi}).second) return;
            endpoints.push_back({names[size_t(lo)], names[size_t(hi)], count--});
        };
        for (int i = 0; i < 30 && endpoints.size() < 50; ++i) add(i, (i + 1) % 30);
        for (int stride = 2; stride <= 7 && endpoints.size() < 50; ++stride)
            for (int i = 0; i < 30 && endpoints.size() < 50; i += stride + 1)
                add(i, (i + stride) % 30);
        std::ofstream out(out_dir / "endpoints.csv");
        out << "region_a,region_b,count\n";
        for (const auto& row : endpoints)
            out << row.region_a << "," << row.region_b << "," << row.count << "\n";
    }
    Connectome atlas = connectome_from_endpoints(endpoints, parc);
    atlas.save_csv(out_dir / "counts.csv");

    // Evaluation set: the 50 positives plus 50 seeded zero-count negatives.
    EvaluationSet eval_set = build_eval_set(atlas, 50, 50, kEvalSeed);
    eval_set.save_json(out_dir / "eval_set.json");

    // Replay store authored to 91 correct verdicts: the answer is wrong
    // for 5 positives and 4 negatives, chosen deterministically.
    {
        PromptEngine engine;
        fs::remove(out_dir / "replay.jsonl");
        auto store = ReplayStore::open(out_dir / "replay.jsonl");
        for (size_t i = 0; i < eval_set.positives.size(); ++i) {
            bool correct = i % 10 != 3 || i / 10 >= 5;  // 5 wrong positives
            store->put(minimal_request(engine, eval_set.positives[i]).digest(),
                       verdict_response(correct));
        }
        for (size_t i = 0; i < eval_set.negatives.size(); ++i) {
            bool correct = i % 12 != 5 || i / 12 >= 4;  // 4 wrong negatives
            store->put(minimal_request(engine, eval_set.negatives[i]).digest(),
                       verdict_response(!correct));
        }
    }

    write_config(out_dir);
    write_corpus(out_dir / "corpus");

    // COMMIT2-style weights: the atlas with ten positive edges zeroed out,
    // so the union filter has something to restore.
    {
        Eigen::MatrixXd w = atlas.weights();
        int removed = 0;
        for (size_t i = 0; i < eval_set.positives.size() && removed < 10; i += 5, ++removed) {
            int a = parc.require(eval_set.positives[i].a);
            int b = parc.require(eval_set.positives[i].b);
            w(a, b) = w(b, a) = 0.0;
        }
        Connectome weights(parc, w, ConnectomeKind::Commit2WeightSum);
        weights.save_csv(out_dir / "weights.csv");
    }

    // Diffusion target: heat spread on the full atlas from a fixed seed.
    {
        Connectome binary = binarize(atlas, 0.0);
        Eigen::MatrixXd L = laplacian(binary, LaplacianKind::Unnormalized);
        Eigen::VectorXd x0 = Eigen::VectorXd::Zero(parc.size());
        int seed_index = parc.require("lh_precuneus");
        x0(seed_index) = 1.0;
        Eigen::VectorXd xt = simulate(L, x0, 1.5);
        std::ofstream out(out_dir / "suvr.csv");
        out.precision(17);
        out << "region,value\n";
        for (int i = 0; i < parc.size(); ++i)
            out << parc.region(i).name << "," << xt(i) << "\n";
    }

    // Grounded-query fixture: a tiny pair list and a replay store captured
    // from a deterministic scripted backend over the ingested corpus.
    {
        EvaluationSet ground_pairs;
        ground_pairs.positives = {RegionPair("lh_posteriorcingulate", "lh_precuneus"),
                                  RegionPair("lh_parsopercularis", "lh_superiortemporal")};
        ground_pairs.negatives = {RegionPair("lh_cuneus", "lh_entorhinal")};
        ground_pairs.source_connectome = "fixture-corpus";
        ground_pairs.rng_seed = 0;
        ground_pairs.save_json(out_dir / "ground_pairs.json");

        auto docs = load_corpus_dir(out_dir / "corpus");
        HashedBowEmbedder embedder(256);
        CorpusIndex index = CorpusIndex::build(docs, 400, 50, embedder);
        fs::remove(out_dir / "replay_ground.jsonl");
        auto store = ReplayStore::open(out_dir / "replay_ground.jsonl");
        auto script = std::make_shared<GroundScript>(&index);
        RecordingBackend recorder(script, store);
        CosineReranker reranker(embedder);
        GroundedParams params;
        params.backend.model_id = kModelId;
        for (const auto& pair : ground_pairs.all_pairs())
            grounded_query(index, pair, embedder, reranker, recorder, PromptEngine{}, params);
    }

    std::cout << "fixtures written to " << out_dir.string() << "\n";
    return 0;
}
