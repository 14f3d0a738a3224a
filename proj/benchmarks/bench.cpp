// Microbenchmarks for the retrieval and diffusion hot paths.

#include "wmprior/connectome.hpp"
#include "wmprior/ndm.hpp"
#include "wmprior/rag.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace wmprior;

const std::vector<std::string> kVocab = {
    "cingulum", "fornix",  "uncinate", "fasciculus", "tract",    "cortex",  "precuneus",
    "fibres",   "bundle",  "white",    "matter",     "callosum", "arcuate", "splenium",
    "genu",     "thalamus", "lingual",  "cuneus",     "insula",   "stria"};

std::vector<Document> make_corpus(int n_docs, int words_per_doc, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<size_t> word(0, kVocab.size() - 1);
    std::vector<Document> docs;
    for (int i = 0; i < n_docs; ++i) {
        std::ostringstream text;
        for (int w = 0; w < words_per_doc; ++w) text << (w ? " " : "") << kVocab[word(rng)];
        docs.push_back(
            {"PMC" + std::to_string(100000 + i), "Title " + std::to_string(i), {}, text.str()});
    }
    return docs;
}

Connectome make_graph(int n, unsigned seed) {
    std::vector<Region> regions;
    for (int i = 0; i < n; ++i)
        regions.push_back({"lh_" + std::to_string(i), Hemisphere::Left, i});
    Parcellation p("bench", regions);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (unit(rng) < 0.2) w(i, j) = w(j, i) = 1.0;
    return Connectome(p, w, ConnectomeKind::Binary);
}

void bm_bm25_search(benchmark::State& state) {
    HashedBowEmbedder embedder(256);
    auto docs = make_corpus(static_cast<int>(state.range(0)), 120, 42);
    CorpusIndex index = CorpusIndex::build(docs, 400, 50, embedder);
    std::string query = "cingulum bundle white matter tract";
    for (auto _ : state) benchmark::DoNotOptimize(index.bm25_search(query, 20));
    state.SetItemsProcessed(state.iterations() * index.size());
}

void bm_hybrid_search(benchmark::State& state) {
    HashedBowEmbedder embedder(256);
    auto docs = make_corpus(static_cast<int>(state.range(0)), 120, 42);
    CorpusIndex index = CorpusIndex::build(docs, 400, 50, embedder);
    std::string query = "arcuate fasciculus cortex connectivity";
    for (auto _ : state) benchmark::DoNotOptimize(hybrid_search(index, embedder, query, 20));
    state.SetItemsProcessed(state.iterations() * index.size());
}

void bm_ndm_simulate(benchmark::State& state) {
    int n = static_cast<int>(state.range(0));
    Connectome g = make_graph(n, 7);
    Eigen::MatrixXd L = laplacian(g, LaplacianKind::Unnormalized);
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
    x0(0) = 1.0;
    for (auto _ : state) benchmark::DoNotOptimize(simulate(L, x0, 1.5));
}

void bm_ndm_fit(benchmark::State& state) {
    int n = static_cast<int>(state.range(0));
    Connectome g = make_graph(n, 7);
    Eigen::MatrixXd L = laplacian(g, LaplacianKind::Unnormalized);
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
    x0(0) = 1.0;
    Eigen::VectorXd truth = simulate(L, x0, 1.5);
    RegionalVector target;
    target.values.assign(truth.data(), truth.data() + truth.size());
    target.mask.assign(static_cast<size_t>(n), true);
    auto grid = log_time_grid();
    for (auto _ : state) benchmark::DoNotOptimize(fit(g, 0, target, grid));
}

BENCHMARK(bm_bm25_search)->Arg(100)->Arg(1000);
BENCHMARK(bm_hybrid_search)->Arg(100)->Arg(1000);
BENCHMARK(bm_ndm_simulate)->Arg(68)->Arg(200);
BENCHMARK(bm_ndm_fit)->Arg(68)->Arg(200);

}  // namespace

BENCHMARK_MAIN();
