#include "wmprior/evaluation.hpp"

#include "wmprior/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace wmprior {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

bool EvaluationSet::contains(const RegionPair& pair) const {
    return std::find(positives.begin(), positives.end(), pair) != positives.end() ||
           std::find(negatives.begin(), negatives.end(), pair) != negatives.end();
}

bool EvaluationSet::label(const RegionPair& pair) const {
    if (std::find(positives.begin(), positives.end(), pair) != positives.end()) return true;
    if (std::find(negatives.begin(), negatives.end(), pair) != negatives.end()) return false;
    throw data_error("pair not in evaluation set: " + pair.key());
}

std::vector<RegionPair> EvaluationSet::all_pairs() const {
    std::vector<RegionPair> out = positives;
    out.insert(out.end(), negatives.begin(), negatives.end());
    return out;
}

void EvaluationSet::save_json(const std::filesystem::path& path) const {
    ordered_json j;
    auto dump_pairs = [](const std::vector<RegionPair>& pairs) {
        ordered_json arr = ordered_json::array();
        for (const RegionPair& p : pairs) arr.push_back({p.a, p.b});
        return arr;
    };
    j["positives"] = dump_pairs(positives);
    j["negatives"] = dump_pairs(negatives);
    j["source_connectome"] = source_connectome;
    j["rng_seed"] = rng_seed;
    std::ofstream out(path);
    if (!out) throw data_error("cannot write evaluation set: " + path.string());
    out << j.dump(2) << '\n';
}

EvaluationSet EvaluationSet::load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open evaluation set: " + path.string());
    json j;
    in >> j;
    EvaluationSet set;
    for (const auto& p : j.at("positives"))
        set.positives.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
    for (const auto& p : j.at("negatives"))
        set.negatives.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
    set.source_connectome = j.value("source_connectome", "");
    set.rng_seed = j.value("rng_seed", 0ULL);
    return set;
}

EvaluationSet build_eval_set(const Connectome& atlas, int n_pos, int n_neg, std::uint64_t seed) {
    const Parcellation& p = atlas.parcellation();
    std::vector<RegionPair> candidates = enumerate_pairs(p, PairScope::WithinHemisphere);

    struct Scored {
        RegionPair pair;
        double count;
    };
    std::vector<Scored> nonzero;
    std::vector<RegionPair> zero;
    for (const RegionPair& pair : candidates) {
        double w = atlas.at(pair);
        if (w > 0.0) nonzero.push_back({pair, w});
        else zero.push_back(pair);
    }
    if (static_cast<int>(nonzero.size()) < n_pos)
        throw data_error("atlas has too few nonzero within-hemisphere pairs for n_pos");
    if (static_cast<int>(zero.size()) < n_neg)
        throw data_error("atlas has too few zero-weight pairs for n_neg");

    std::sort(nonzero.begin(), nonzero.end(), [](const Scored& a, const Scored& b) {
        if (a.count != b.count) return a.count > b.count;
        return a.pair < b.pair;
    });

    EvaluationSet set;
    set.source_connectome = p.id();
    set.rng_seed = seed;
    for (int i = 0; i < n_pos; ++i) set.positives.push_back(nonzero[static_cast<size_t>(i)].pair);

    // Partial Fisher-Yates; candidates are in canonical order, so the draw
    // depends only on the seed.
    std::mt19937_64 rng(seed);
    for (int i = 0; i < n_neg; ++i) {
        std::uniform_int_distribution<size_t> pick(static_cast<size_t>(i), zero.size() - 1);
        std::swap(zero[static_cast<size_t>(i)], zero[pick(rng)]);
    }
    set.negatives.assign(zero.begin(), zero.begin() + n_neg);
    std::sort(set.negatives.begin(), set.negatives.end());
    return set;
}

namespace {

bool verdict_connected(const PriorRecord& r) { return r.classification == Verdict::True; }

// One accuracy per (ordering, repeat) slice, keys sorted.
std::vector<double> per_slice_accuracies(const std::vector<PriorRecord>& records,
                                         const EvaluationSet& eval_set, double cutoff) {
    std::map<std::pair<std::string, int>, std::pair<int, int>> slices;  // (correct, total)
    for (const PriorRecord& r : records) {
        if (!eval_set.contains(r.pair)) continue;
        bool predicted = r.confidence_connected >= cutoff;
        auto& [correct, total] = slices[{to_string(r.ordering), r.repeat}];
        correct += predicted == eval_set.label(r.pair) ? 1 : 0;
        total += 1;
    }
    std::vector<double> out;
    for (const auto& [slice, counts] : slices)
        if (counts.second > 0)
            out.push_back(static_cast<double>(counts.first) / counts.second);
    return out;
}

}  // namespace

RunScore score_run(const PriorMatrix& matrix, const EvaluationSet& eval_set, double cutoff) {
    RunScore s;
    for (const RegionPair& pair : eval_set.all_pairs()) {
        if (!matrix.has(pair)) throw data_error("missing verdict for eval pair " + pair.key());
        bool predicted = matrix.mean_confidence(pair) >= cutoff;
        bool actual = eval_set.label(pair);
        if (predicted && actual) ++s.tp;
        else if (!predicted && !actual) ++s.tn;
        else if (predicted && !actual) ++s.fp;
        else ++s.fn;
    }
    const int pos = s.tp + s.fn;
    const int neg = s.tn + s.fp;
    s.accuracy = static_cast<double>(s.tp + s.tn) / (pos + neg);
    s.fp_rate = neg > 0 ? static_cast<double>(s.fp) / neg : 0.0;
    s.fn_rate = pos > 0 ? static_cast<double>(s.fn) / pos : 0.0;
    return s;
}

RunScore score_run(const std::vector<PriorRecord>& records, const EvaluationSet& eval_set,
                   double cutoff) {
    if (records.empty()) throw data_error("score_run requires records");
    std::vector<PriorRecord> in_set;
    for (const PriorRecord& r : records)
        if (eval_set.contains(r.pair)) in_set.push_back(r);
    if (in_set.empty()) throw data_error("no records cover the evaluation set");

    // Aggregate over a parcellation spanning just the eval pairs' regions.
    std::set<std::string> names;
    for (const PriorRecord& r : in_set) {
        names.insert(r.pair.a);
        names.insert(r.pair.b);
    }
    std::vector<Region> regions;
    for (const std::string& name : names) regions.push_back({name, Hemisphere::Left, 0});
    Parcellation scratch("eval", std::move(regions));
    PriorMatrix matrix = aggregate(in_set, scratch);

    RunScore s = score_run(matrix, eval_set, cutoff);
    s.per_repeat_accuracy = per_slice_accuracies(in_set, eval_set, cutoff);
    if (!s.per_repeat_accuracy.empty()) {
        double mean = 0.0;
        for (double a : s.per_repeat_accuracy) mean += a;
        mean /= static_cast<double>(s.per_repeat_accuracy.size());
        double var = 0.0;
        for (double a : s.per_repeat_accuracy) var += (a - mean) * (a - mean);
        var /= static_cast<double>(s.per_repeat_accuracy.size());
        s.repeat_mean = mean;
        s.repeat_std = std::sqrt(var);
    }
    return s;
}

StabilityReport stability_report(const std::vector<PriorRecord>& records,
                                 const EvaluationSet& eval_set) {
    std::map<RegionPair, std::vector<const PriorRecord*>> by_pair;
    int max_slices = 0;
    std::set<std::pair<std::string, int>> slices;
    for (const PriorRecord& r : records) {
        if (!eval_set.contains(r.pair)) continue;
        by_pair[r.pair].push_back(&r);
        slices.insert({to_string(r.ordering), r.repeat});
    }
    max_slices = static_cast<int>(slices.size());
    if (max_slices < 2) throw data_error("stability report needs at least 2 repeats");

    StabilityReport report;
    report.n_pairs = static_cast<int>(by_pair.size());
    for (const auto& [pair, recs] : by_pair) {
        bool first = verdict_connected(*recs.front());
        bool consistent = std::all_of(recs.begin(), recs.end(), [&](const PriorRecord* r) {
            return verdict_connected(*r) == first;
        });
        if (consistent) {
            ++report.n_consistent;
            continue;
        }
        report.inconsistent.push_back(pair);

        std::optional<bool> fwd, rev;
        bool fwd_uniform = true, rev_uniform = true;
        for (const PriorRecord* r : recs) {
            bool v = verdict_connected(*r);
            auto& slot = r->ordering == Ordering::Forward ? fwd : rev;
            auto& uniform = r->ordering == Ordering::Forward ? fwd_uniform : rev_uniform;
            if (!slot) slot = v;
            else if (*slot != v) uniform = false;
        }
        if (fwd && rev && fwd_uniform && rev_uniform && *fwd != *rev)
            report.ordering_determined.push_back(pair);
    }

    auto accs = per_slice_accuracies(records, eval_set, 0.5);
    if (!accs.empty()) {
        report.accuracy_min = *std::min_element(accs.begin(), accs.end());
        report.accuracy_max = *std::max_element(accs.begin(), accs.end());
    }
    return report;
}

MannWhitneyResult confidence_separation(const std::vector<PriorRecord>& records,
                                        const EvaluationSet& eval_set) {
    std::vector<double> agree, diverge;
    for (const PriorRecord& r : records) {
        if (!eval_set.contains(r.pair)) continue;
        bool verdict = verdict_connected(r);
        (verdict == eval_set.label(r.pair) ? agree : diverge).push_back(r.confidence_in_verdict());
    }
    if (agree.empty() || diverge.empty())
        throw data_error("confidence separation needs both agreeing and diverging records");
    return mann_whitney_u(agree, diverge);
}

std::vector<DisagreementRow> disagreement_report(const std::vector<PriorRecord>& records,
                                                 const EvaluationSet& eval_set,
                                                 double consistency) {
    std::map<RegionPair, std::vector<const PriorRecord*>> by_pair;
    for (const PriorRecord& r : records)
        if (eval_set.contains(r.pair)) by_pair[r.pair].push_back(&r);

    std::vector<DisagreementRow> rows;
    for (const auto& [pair, recs] : by_pair) {
        bool label = eval_set.label(pair);
        int disagreeing = 0;
        double conf_sum = 0.0;
        for (const PriorRecord* r : recs) {
            if (verdict_connected(*r) != label) ++disagreeing;
            conf_sum += r->confidence_in_verdict();
        }
        double fraction = static_cast<double>(disagreeing) / recs.size();
        if (fraction >= consistency) {
            rows.push_back({pair, label, conf_sum / recs.size()});
        }
    }
    std::sort(rows.begin(), rows.end(), [](const DisagreementRow& a, const DisagreementRow& b) {
        if (a.mean_confidence != b.mean_confidence) return a.mean_confidence < b.mean_confidence;
        return a.pair < b.pair;
    });
    return rows;
}

PriceTable load_price_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open price table: " + path.string());
    PriceTable table;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string model, in_price, out_price;
        if (!std::getline(ss, model, ',') || !std::getline(ss, in_price, ',') ||
            !std::getline(ss, out_price))
            throw data_error("expected `model_id,input_per_1k,output_per_1k`: '" + line + "'");
        if (model == "model_id") continue;  // header
        table[model] = {std::stod(in_price), std::stod(out_price)};
    }
    return table;
}

CostReport cost_report(const std::vector<PriorRecord>& records, const PriceTable& prices) {
    std::map<std::pair<std::string, std::string>, CostRow> rows;
    for (const PriorRecord& r : records) {
        auto price = prices.find(r.model_id);
        if (price == prices.end())
            throw data_error("no price entry for model '" + r.model_id + "'");
        CostRow& row = rows[{to_string(r.strategy), r.model_id}];
        row.strategy = to_string(r.strategy);
        row.model_id = r.model_id;
        row.input_tokens += r.usage.input_tokens;
        row.output_tokens += r.usage.output_tokens;
    }
    CostReport report;
    for (auto& [key, row] : rows) {
        const PriceEntry& price = prices.at(row.model_id);
        row.cost = row.input_tokens * price.input_per_1k / 1000.0 +
                   row.output_tokens * price.output_per_1k / 1000.0;
        report.total += row.cost;
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace wmprior
