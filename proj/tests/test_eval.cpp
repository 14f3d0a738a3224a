#include <doctest.h>

#include "wmprior/errors.hpp"
#include "wmprior/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace wmprior;
namespace fs = std::filesystem;

namespace {

// 12 left-hemisphere regions; counts descend so the top pairs are known.
Connectome synthetic_atlas() {
    std::vector<Region> regions;
    for (int i = 0; i < 12; ++i)
        regions.push_back({"lh_r" + std::string(1, static_cast<char>('a' + i)), Hemisphere::Left, i});
    Parcellation p("synth", regions);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(12, 12);
    // Ten nonzero pairs with distinct descending counts.
    int count = 100;
    for (int i = 0; i < 10; ++i) {
        int a = i % 11;
        int b = 11 - (i % 5);
        if (a == b) b = (b + 1) % 12;
        int lo = std::min(a, b), hi = std::max(a, b);
        if (w(lo, hi) != 0) continue;
        w(lo, hi) = w(hi, lo) = count--;
    }
    return Connectome(p, w, ConnectomeKind::StreamlineCount);
}

PriorRecord make_record(const RegionPair& pair, Verdict v, double lp, Ordering o = Ordering::Forward,
                        int repeat = 1) {
    PriorRecord rec;
    rec.pair = pair;
    rec.ordering = o;
    rec.repeat = repeat;
    rec.strategy = {BasePrompt::Minimal, false};
    rec.classification = v;
    rec.verdict_token_logprob = lp;
    double p = std::exp(lp);
    rec.confidence_connected = v == Verdict::True ? p : (v == Verdict::False ? 1.0 - p : 0.0);
    rec.abstained = v == Verdict::DontKnow;
    if (rec.abstained) rec.confidence_connected = 0.0;
    return rec;
}

}  // namespace

TEST_CASE("eval set is deterministic, balanced and disjoint") {
    Connectome atlas = synthetic_atlas();
    EvaluationSet a = build_eval_set(atlas, 5, 5, 17);
    EvaluationSet b = build_eval_set(atlas, 5, 5, 17);
    CHECK(a.positives == b.positives);
    CHECK(a.negatives == b.negatives);
    CHECK(a.positives.size() == 5);
    CHECK(a.negatives.size() == 5);

    std::set<RegionPair> seen(a.positives.begin(), a.positives.end());
    for (const auto& n : a.negatives) {
        CHECK(seen.count(n) == 0);
        CHECK(atlas.at(n) == 0.0);
    }
    for (const auto& pos : a.positives) CHECK(atlas.at(pos) > 0.0);

    EvaluationSet c = build_eval_set(atlas, 5, 5, 18);
    CHECK(c.negatives != a.negatives);  // seed-sensitive sampling
    CHECK(c.positives == a.positives);  // positives are deterministic
}

TEST_CASE("positives are exactly the strongest pairs in descending count order") {
    Connectome atlas = synthetic_atlas();
    auto pairs = enumerate_pairs(atlas.parcellation(), PairScope::WithinHemisphere);
    std::vector<std::pair<double, RegionPair>> nonzero;
    for (const auto& pr : pairs)
        if (atlas.at(pr) > 0) nonzero.emplace_back(atlas.at(pr), pr);
    std::sort(nonzero.begin(), nonzero.end(), [](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first > y.first;
        return x.second < y.second;
    });
    EvaluationSet set = build_eval_set(atlas, 4, 4, 1);
    REQUIRE(set.positives.size() == 4);
    for (size_t i = 0; i < 4; ++i) CHECK(set.positives[i] == nonzero[i].second);
}

TEST_CASE("eval set json round trip") {
    Connectome atlas = synthetic_atlas();
    EvaluationSet set = build_eval_set(atlas, 3, 3, 5);
    auto dir = fs::temp_directory_path() / "wmprior_test_eval";
    fs::create_directories(dir);
    auto path = dir / "eval_set.json";
    set.save_json(path);
    EvaluationSet back = EvaluationSet::load_json(path);
    CHECK(back.positives == set.positives);
    CHECK(back.negatives == set.negatives);
    CHECK(back.rng_seed == set.rng_seed);
    CHECK(back.label(set.positives[0]));
    CHECK_FALSE(back.label(set.negatives[0]));
    CHECK_THROWS_AS(back.label(RegionPair("nope_a", "nope_b")), data_error);
}

TEST_CASE("score_run computes the confusion matrix at the cutoff") {
    Connectome atlas = synthetic_atlas();
    EvaluationSet set = build_eval_set(atlas, 4, 4, 9);
    std::vector<PriorRecord> records;
    // 3 of 4 positives called True confidently, one called False;
    // all negatives called False except one False-positive.
    for (size_t i = 0; i < set.positives.size(); ++i)
        records.push_back(make_record(set.positives[i], i < 3 ? Verdict::True : Verdict::False,
                                      -0.05));
    for (size_t i = 0; i < set.negatives.size(); ++i)
        records.push_back(make_record(set.negatives[i], i == 0 ? Verdict::True : Verdict::False,
                                      -0.05));
    RunScore score = score_run(records, set, 0.5);
    CHECK(score.tp == 3);
    CHECK(score.fn == 1);
    CHECK(score.fp == 1);
    CHECK(score.tn == 3);
    CHECK(score.accuracy == doctest::Approx(6.0 / 8.0).epsilon(1e-12));
    CHECK(score.fp_rate == doctest::Approx(1.0 / 4.0).epsilon(1e-12));
    CHECK(score.fn_rate == doctest::Approx(1.0 / 4.0).epsilon(1e-12));
}

TEST_CASE("per-slice accuracies cover each ordering and repeat") {
    Connectome atlas = synthetic_atlas();
    EvaluationSet set = build_eval_set(atlas, 2, 2, 3);
    std::vector<PriorRecord> records;
    for (Ordering o : {Ordering::Forward, Ordering::Reverse}) {
        for (int rep = 1; rep <= 2; ++rep) {
            for (const auto& pos : set.positives) {
                // Reverse ordering gets every positive wrong.
                records.push_back(make_record(
                    pos, o == Ordering::Forward ? Verdict::True : Verdict::False, -0.01, o, rep));
            }
            for (const auto& neg : set.negatives)
                records.push_back(make_record(neg, Verdict::False, -0.01, o, rep));
        }
    }
    RunScore score = score_run(records, set, 0.5);
    REQUIRE(score.per_repeat_accuracy.size() == 4);
    std::vector<double> sorted = score.per_repeat_accuracy;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted[0] == doctest::Approx(0.5));
    CHECK(sorted[3] == doctest::Approx(1.0));
    CHECK(score.repeat_mean == doctest::Approx(0.75));
    CHECK(score.repeat_std == doctest::Approx(0.25));
}

TEST_CASE("stability report flags ordering-determined pairs") {
    Connectome atlas = synthetic_atlas();
    EvaluationSet set = build_eval_set(atlas, 2, 2, 11);
    std::vector<PriorRecord> records;
    const auto& flipper = set.positives[0];
    const auto& steady = set.positives[1];
    for (Ordering o : {Ordering::Forward, Ordering::Reverse})
        for (int rep = 1; rep <= 2; ++rep) {
            records.push_back(make_record(
                flipper, o == Ordering::Forward ? Verdict::True : Verdict::False, -0.01, o, rep));
            records.push_back(make_record(steady, Verdict::True, -0.01, o, rep));
        }
    StabilityReport report = stability_report(records, set);
    CHECK(report.n_pairs == 2);
    CHECK(report.n_consistent == 1);
    REQUIRE(report.ordering_determined.size() == 1);
    CHECK(report.ordering_determined[0] == flipper);
    REQUIRE(report.inconsistent.size() == 1);
    CHECK(report.inconsistent[0] == flipper);
}

TEST_CASE("confidence separation runs a rank test between agree and diverge") {
    Connectome atlas = synthetic_atlas();
    EvaluationSet set = build_eval_set(atlas, 3, 3, 13);
    std::vector<PriorRecord> records;
    // Correct verdicts carry high confidence, wrong ones low.
    for (const auto& pos : set.positives) records.push_back(make_record(pos, Verdict::True, -0.01));
    for (size_t i = 0; i < set.negatives.size(); ++i)
        records.push_back(
            make_record(set.negatives[i], i == 0 ? Verdict::True : Verdict::False, -2.5));
    auto result = confidence_separation(records, set);
    CHECK(result.n1 + result.n2 == 6);
    CHECK(result.p_two_sided > 0.0);
    CHECK(result.p_two_sided <= 1.0);

    // All-agree input has an empty diverging group.
    std::vector<PriorRecord> agreeing;
    for (const auto& pos : set.positives) agreeing.push_back(make_record(pos, Verdict::True, -0.01));
    CHECK_THROWS_AS(confidence_separation(agreeing, set), data_error);
}

TEST_CASE("disagreement report sorts by confidence ascending") {
    Connectome atlas = synthetic_atlas();
    EvaluationSet set = build_eval_set(atlas, 3, 3, 21);
    std::vector<PriorRecord> records;
    records.push_back(make_record(set.positives[0], Verdict::False, -0.2));  // wrong, lower conf
    records.push_back(make_record(set.positives[1], Verdict::False, -0.05));  // wrong, higher conf
    records.push_back(make_record(set.positives[2], Verdict::True, -0.05));   // right
    for (const auto& neg : set.negatives) records.push_back(make_record(neg, Verdict::False, -0.1));
    auto rows = disagreement_report(records, set);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].pair == set.positives[0]);
    CHECK(rows[1].pair == set.positives[1]);
    CHECK(rows[0].mean_confidence <= rows[1].mean_confidence);
    CHECK(rows[0].atlas_connected);
}

TEST_CASE("cost report groups by strategy and model") {
    auto dir = fs::temp_directory_path() / "wmprior_test_eval";
    fs::create_directories(dir);
    auto price_path = dir / "prices.csv";
    std::ofstream(price_path) << "model_id,input_per_1k,output_per_1k\n"
                              << "paid,0.01,0.03\nfree,0.0,0.0\n";
    PriceTable prices = load_price_table(price_path);
    REQUIRE(prices.count("paid"));
    CHECK(prices["paid"].output_per_1k == doctest::Approx(0.03));

    std::vector<PriorRecord> records;
    PriorRecord r = make_record(RegionPair("a", "b"), Verdict::True, -0.1);
    r.model_id = "paid";
    r.usage = {1000, 1000};
    records.push_back(r);
    r.model_id = "free";
    records.push_back(r);
    CostReport report = cost_report(records, prices);
    REQUIRE(report.rows.size() == 2);
    double paid_cost = 0.0;
    for (const auto& row : report.rows) {
        if (row.model_id == "paid") paid_cost = row.cost;
        if (row.model_id == "free") CHECK(row.cost == 0.0);
    }
    CHECK(paid_cost == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(report.total == doctest::Approx(0.04).epsilon(1e-12));

    r.model_id = "unknown";
    records.push_back(r);
    CHECK_THROWS_AS(cost_report(records, prices), data_error);
}
