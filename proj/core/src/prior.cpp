#include "wmprior/prior.hpp"

#include "wmprior/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>

namespace wmprior {

using ordered_json = nlohmann::ordered_json;
using nlohmann::json;

namespace {

std::string normalize_token(const std::string& token) {
    std::string out;
    for (char c : token)
        if (std::isalnum(static_cast<unsigned char>(c)))
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

double PriorRecord::confidence_in_verdict() const {
    if (verdict_token_logprob) return std::exp(*verdict_token_logprob);
    return classification == Verdict::True ? confidence_connected : 1.0 - confidence_connected;
}

std::string PriorRecord::to_json_line() const {
    ordered_json j;
    j["pair"] = {pair.a, pair.b};
    j["ordering"] = to_string(ordering);
    j["repeat"] = repeat;
    j["strategy"] = to_string(strategy);
    j["classification"] = to_string(classification);
    if (verdict_token_logprob) j["verdict_token_logprob"] = *verdict_token_logprob;
    else j["verdict_token_logprob"] = nullptr;
    j["confidence_connected"] = confidence_connected;
    j["abstained"] = abstained;
    if (reasoning_text) j["reasoning_text"] = *reasoning_text;
    else j["reasoning_text"] = nullptr;
    ordered_json cits = ordered_json::array();
    for (const CitationRecord& c : citations)
        cits.push_back({{"title", c.title},
                        {"pmcid", c.pmcid},
                        {"quote", c.quote},
                        {"verified", c.verified}});
    j["citations"] = cits;
    j["raw_response_digest"] = raw_response_digest;
    j["no_logprobs"] = no_logprobs;
    j["parse_failure"] = parse_failure;
    j["model_id"] = model_id;
    j["usage"] = {{"input_tokens", usage.input_tokens}, {"output_tokens", usage.output_tokens}};
    return j.dump();
}

PriorRecord PriorRecord::from_json_line(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw data_error(std::string("malformed prior record: ") + e.what());
    }
    PriorRecord r;
    r.pair = RegionPair(j.at("pair").at(0).get<std::string>(),
                        j.at("pair").at(1).get<std::string>());
    r.ordering = ordering_from_string(j.at("ordering").get<std::string>());
    r.repeat = j.at("repeat").get<int>();
    r.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    r.classification = verdict_from_string(j.at("classification").get<std::string>());
    if (!j.at("verdict_token_logprob").is_null())
        r.verdict_token_logprob = j["verdict_token_logprob"].get<double>();
    r.confidence_connected = j.at("confidence_connected").get<double>();
    r.abstained = j.at("abstained").get<bool>();
    if (j.contains("reasoning_text") && !j["reasoning_text"].is_null())
        r.reasoning_text = j["reasoning_text"].get<std::string>();
    for (const auto& c : j.value("citations", json::array()))
        r.citations.push_back({c.at("title").get<std::string>(), c.at("pmcid").get<std::string>(),
                               c.value("quote", ""), c.value("verified", false)});
    r.raw_response_digest = j.value("raw_response_digest", "");
    r.no_logprobs = j.value("no_logprobs", false);
    r.parse_failure = j.value("parse_failure", false);
    r.model_id = j.value("model_id", "");
    if (j.contains("usage")) {
        r.usage.input_tokens = j["usage"].value("input_tokens", 0LL);
        r.usage.output_tokens = j["usage"].value("output_tokens", 0LL);
    }
    return r;
}

std::vector<PriorRecord> load_records_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open records file: " + path.string());
    std::vector<PriorRecord> records;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) records.push_back(PriorRecord::from_json_line(line));
    return records;
}

void save_records_jsonl(const std::filesystem::path& path,
                        const std::vector<PriorRecord>& records) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write records file: " + path.string());
    for (const PriorRecord& r : records) out << r.to_json_line() << '\n';
}

ConfidenceResult confidence_from_response(const ChatResponse& resp, Verdict cls) {
    ConfidenceResult out;
    if (cls == Verdict::DontKnow) {
        out.abstained = true;
        out.confidence_connected = 0.0;
        return out;
    }
    if (!resp.token_logprobs) {
        out.no_logprobs = true;
        out.confidence_connected = cls == Verdict::True ? 1.0 : 0.0;
        return out;
    }
    const std::string want = cls == Verdict::True ? "true" : "false";
    const auto& lps = *resp.token_logprobs;
    for (auto it = lps.rbegin(); it != lps.rend(); ++it) {
        if (normalize_token(it->token) == want) {
            double p = std::exp(it->logprob);
            out.verdict_token_logprob = it->logprob;
            out.confidence_connected = cls == Verdict::True ? p : 1.0 - p;
            return out;
        }
    }
    throw data_error("verdict token '" + want + "' not found in token logprobs");
}

PriorMatrix aggregate(const std::vector<PriorRecord>& records, const Parcellation& p) {
    if (records.empty()) throw data_error("aggregate requires at least one record");
    const PromptStrategy strategy = records.front().strategy;
    std::map<RegionPair, std::pair<double, int>> sums;
    for (const PriorRecord& r : records) {
        if (!(r.strategy == strategy))
            throw data_error("aggregate received records from mixed strategies");
        p.require(r.pair.a);
        p.require(r.pair.b);
        auto& [sum, n] = sums[r.pair];
        sum += r.confidence_connected;
        n += 1;
    }
    const int n = p.size();
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    std::set<RegionPair> recorded;
    for (const auto& [pair, acc] : sums) {
        double mean = acc.first / acc.second;
        int i = p.require(pair.a);
        int j = p.require(pair.b);
        w(i, j) = mean;
        w(j, i) = mean;
        recorded.insert(pair);
    }
    return PriorMatrix{Connectome(p, std::move(w), ConnectomeKind::PriorConfidence),
                       std::move(recorded),
                       {},
                       strategy};
}

Connectome classify(const PriorMatrix& matrix, double cutoff) {
    if (cutoff < 0.0 || cutoff > 1.0) throw data_error("cutoff must lie in [0,1]");
    const Parcellation& p = matrix.confidence.parcellation();
    const int n = p.size();
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (const RegionPair& pair : matrix.recorded) {
        if (matrix.confidence.at(pair) >= cutoff) {
            int i = p.require(pair.a);
            int j = p.require(pair.b);
            w(i, j) = 1.0;
            w(j, i) = 1.0;
        }
    }
    return Connectome(p, std::move(w), ConnectomeKind::Binary);
}

}  // namespace wmprior
