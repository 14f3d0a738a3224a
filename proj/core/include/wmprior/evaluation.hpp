#pragma once

#include "wmprior/connectome.hpp"
#include "wmprior/prior.hpp"
#include "wmprior/stats.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace wmprior {

/// Balanced atlas-derived evaluation set: strongest within-hemisphere
/// pairs as positives, seeded random zero-weight pairs as negatives.
struct EvaluationSet {
    std::vector<RegionPair> positives;
    std::vector<RegionPair> negatives;
    std::string source_connectome;
    std::uint64_t rng_seed = 0;

    bool contains(const RegionPair& pair) const;
    bool label(const RegionPair& pair) const;  // true = connected; throws if absent
    std::vector<RegionPair> all_pairs() const;

    void save_json(const std::filesystem::path& path) const;
    static EvaluationSet load_json(const std::filesystem::path& path);
};

// Positives: top n_pos within-hemisphere pairs by streamline count, ties
// broken by canonical pair name. Negatives: uniform sample without
// replacement from zero-count within-hemisphere pairs, deterministic for
// a fixed seed.
EvaluationSet build_eval_set(const Connectome& atlas, int n_pos, int n_neg, std::uint64_t seed);

struct RunScore {
    double accuracy = 0.0;
    double fp_rate = 0.0;
    double fn_rate = 0.0;
    int tp = 0, tn = 0, fp = 0, fn = 0;
    std::vector<double> per_repeat_accuracy;  // one per (ordering, repeat) slice
    double repeat_mean = 0.0;
    double repeat_std = 0.0;  // population std across slices
};

// Confusion matrix of aggregated verdicts (mean confidence >= cutoff)
// against the evaluation labels, plus per-slice accuracies.
RunScore score_run(const std::vector<PriorRecord>& records, const EvaluationSet& eval_set,
                   double cutoff);
RunScore score_run(const PriorMatrix& matrix, const EvaluationSet& eval_set, double cutoff);

struct StabilityReport {
    int n_pairs = 0;
    int n_consistent = 0;  // identical verdicts across all repeats
    double accuracy_min = 0.0;
    double accuracy_max = 0.0;
    // Pairs whose verdict flips strictly with prompt ordering.
    std::vector<RegionPair> ordering_determined;
    std::vector<RegionPair> inconsistent;
};

StabilityReport stability_report(const std::vector<PriorRecord>& records,
                                 const EvaluationSet& eval_set);

// Mann-Whitney U between the model's confidence in its own verdict for
// records agreeing vs diverging from the atlas label.
MannWhitneyResult confidence_separation(const std::vector<PriorRecord>& records,
                                        const EvaluationSet& eval_set);

struct DisagreementRow {
    RegionPair pair;
    bool atlas_connected = false;
    double mean_confidence = 0.0;  // confidence in the model's own verdict
};

// Pairs whose verdict disagrees with the atlas in at least
// `consistency` of the repeats (1.0 = every repeat), confidence ascending.
std::vector<DisagreementRow> disagreement_report(const std::vector<PriorRecord>& records,
                                                 const EvaluationSet& eval_set,
                                                 double consistency = 1.0);

struct PriceEntry {
    double input_per_1k = 0.0;
    double output_per_1k = 0.0;
};

using PriceTable = std::map<std::string, PriceEntry>;

// CSV `model_id,input_per_1k,output_per_1k`.
PriceTable load_price_table(const std::filesystem::path& path);

struct CostRow {
    std::string strategy;
    std::string model_id;
    long long input_tokens = 0;
    long long output_tokens = 0;
    double cost = 0.0;
};

struct CostReport {
    std::vector<CostRow> rows;
    double total = 0.0;
};

CostReport cost_report(const std::vector<PriorRecord>& records, const PriceTable& prices);

}  // namespace wmprior
