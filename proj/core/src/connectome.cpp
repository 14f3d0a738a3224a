#include "wmprior/connectome.hpp"

#include "wmprior/errors.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace wmprior {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(trim(field));
    return fields;
}

// Yields trimmed non-empty, non-comment lines.
std::vector<std::string> read_data_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open file: " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        lines.push_back(t);
    }
    return lines;
}

}  // namespace

std::string to_string(Hemisphere h) {
    switch (h) {
        case Hemisphere::Left: return "Left";
        case Hemisphere::Right: return "Right";
        case Hemisphere::Midline: return "Midline";
    }
    return "Left";
}

Hemisphere hemisphere_from_string(const std::string& token) {
    std::string t = lower(trim(token));
    if (t == "left" || t == "l" || t == "lh") return Hemisphere::Left;
    if (t == "right" || t == "r" || t == "rh") return Hemisphere::Right;
    if (t == "midline" || t == "m" || t == "both") return Hemisphere::Midline;
    throw data_error("unknown hemisphere token: '" + token + "'");
}

Parcellation::Parcellation(std::string id, std::vector<Region> regions)
    : id_(std::move(id)), regions_(std::move(regions)) {
    if (regions_.size() < 2) throw data_error("parcellation needs at least 2 regions");
    std::unordered_set<std::string> seen;
    for (size_t i = 0; i < regions_.size(); ++i) {
        Region& r = regions_[i];
        if (r.name.empty()) throw data_error("empty region name at index " + std::to_string(i));
        if (!seen.insert(r.name).second)
            throw data_error("duplicate region name: " + r.name);
        r.index = static_cast<int>(i);
    }
}

std::optional<int> Parcellation::find(const std::string& name) const {
    for (const Region& r : regions_)
        if (r.name == name) return r.index;
    return std::nullopt;
}

int Parcellation::require(const std::string& name) const {
    if (auto i = find(name)) return *i;
    throw data_error("region '" + name + "' not in parcellation '" + id_ + "'");
}

Parcellation load_parcellation(const std::filesystem::path& path) {
    auto lines = read_data_lines(path);
    if (lines.empty()) throw data_error("empty parcellation file: " + path.string());
    std::vector<Region> regions;
    for (const std::string& line : lines) {
        auto fields = split_csv_line(line);
        if (fields.size() != 2)
            throw data_error("expected `name,hemisphere`: '" + line + "'");
        if (lower(fields[0]) == "name" && lower(fields[1]) == "hemisphere") continue;  // header
        regions.push_back({fields[0], hemisphere_from_string(fields[1]), 0});
    }
    if (regions.empty()) throw data_error("no regions in parcellation file: " + path.string());
    return Parcellation(path.stem().string(), std::move(regions));
}

RegionPair::RegionPair(std::string first, std::string second) {
    if (first == second) throw data_error("region pair must name two distinct regions: " + first);
    if (first < second) {
        a = std::move(first);
        b = std::move(second);
    } else {
        a = std::move(second);
        b = std::move(first);
    }
}

std::vector<RegionPair> enumerate_pairs(const Parcellation& p, PairScope scope) {
    auto compatible = [](Hemisphere x, Hemisphere y) {
        return x == y || x == Hemisphere::Midline || y == Hemisphere::Midline;
    };
    std::vector<RegionPair> pairs;
    const auto& regions = p.regions();
    for (size_t i = 0; i < regions.size(); ++i) {
        for (size_t j = i + 1; j < regions.size(); ++j) {
            if (scope == PairScope::WithinHemisphere &&
                !compatible(regions[i].hemisphere, regions[j].hemisphere))
                continue;
            pairs.emplace_back(regions[i].name, regions[j].name);
        }
    }
    std::sort(pairs.begin(), pairs.end());
    return pairs;
}

std::string to_string(ConnectomeKind k) {
    switch (k) {
        case ConnectomeKind::StreamlineCount: return "streamline_count";
        case ConnectomeKind::Commit2WeightSum: return "commit2_weight_sum";
        case ConnectomeKind::Binary: return "binary";
        case ConnectomeKind::PriorConfidence: return "prior_confidence";
    }
    return "streamline_count";
}

ConnectomeKind connectome_kind_from_string(const std::string& token) {
    std::string t = lower(trim(token));
    if (t == "streamline_count") return ConnectomeKind::StreamlineCount;
    if (t == "commit2_weight_sum") return ConnectomeKind::Commit2WeightSum;
    if (t == "binary") return ConnectomeKind::Binary;
    if (t == "prior_confidence") return ConnectomeKind::PriorConfidence;
    throw data_error("unknown connectome kind: '" + token + "'");
}

Connectome::Connectome(Parcellation parcellation, Eigen::MatrixXd weights, ConnectomeKind kind)
    : parc_(std::move(parcellation)), w_(std::move(weights)), kind_(kind) {
    const int n = parc_.size();
    if (w_.rows() != n || w_.cols() != n)
        throw data_error("connectome dimensions do not match parcellation size");
    for (int i = 0; i < n; ++i) {
        if (w_(i, i) != 0.0) throw data_error("connectome diagonal must be zero");
        for (int j = 0; j < n; ++j) {
            double v = w_(i, j);
            if (!std::isfinite(v) || v < 0.0)
                throw data_error("connectome weights must be finite and non-negative");
            if (std::abs(v - w_(j, i)) > 1e-12)
                throw data_error("connectome matrix is not symmetric");
            if (kind_ == ConnectomeKind::Binary && v != 0.0 && v != 1.0)
                throw data_error("binary connectome holds values other than {0,1}");
        }
    }
}

double Connectome::at(const RegionPair& pair) const {
    return w_(parc_.require(pair.a), parc_.require(pair.b));
}

void Connectome::save_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write connectome CSV: " + path.string());
    out << "region";
    for (const Region& r : parc_.regions()) out << ',' << r.name;
    out << '\n';
    out.precision(17);
    for (int i = 0; i < size(); ++i) {
        out << parc_.region(i).name;
        for (int j = 0; j < size(); ++j) out << ',' << w_(i, j);
        out << '\n';
    }
}

Connectome load_connectome_csv(const std::filesystem::path& path, const Parcellation& p,
                               ConnectomeKind kind) {
    auto lines = read_data_lines(path);
    if (lines.empty()) throw data_error("empty connectome CSV: " + path.string());
    auto header = split_csv_line(lines[0]);
    const int n = p.size();
    if (static_cast<int>(header.size()) != n + 1)
        throw data_error("connectome CSV header has wrong width: " + path.string());
    for (int j = 0; j < n; ++j)
        if (header[static_cast<size_t>(j + 1)] != p.region(j).name)
            throw data_error("connectome CSV header does not match parcellation order");
    if (static_cast<int>(lines.size()) != n + 1)
        throw data_error("connectome CSV has wrong number of rows");
    Eigen::MatrixXd w(n, n);
    for (int i = 0; i < n; ++i) {
        auto fields = split_csv_line(lines[static_cast<size_t>(i + 1)]);
        if (static_cast<int>(fields.size()) != n + 1 || fields[0] != p.region(i).name)
            throw data_error("connectome CSV row mismatch at " + p.region(i).name);
        for (int j = 0; j < n; ++j) w(i, j) = std::stod(fields[static_cast<size_t>(j + 1)]);
    }
    return Connectome(p, std::move(w), kind);
}

EndpointTable load_endpoint_table(const std::filesystem::path& path) {
    EndpointTable rows;
    for (const std::string& line : read_data_lines(path)) {
        auto fields = split_csv_line(line);
        if (fields.size() != 3)
            throw data_error("expected `region_a,region_b,count`: '" + line + "'");
        if (lower(fields[0]) == "region_a") continue;  // header
        long long count = std::stoll(fields[2]);
        if (count < 0) throw data_error("negative streamline count: '" + line + "'");
        rows.push_back({fields[0], fields[1], count});
    }
    return rows;
}

Connectome connectome_from_endpoints(const EndpointTable& table, const Parcellation& p) {
    const int n = p.size();
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (const EndpointRow& row : table) {
        int i = p.require(row.region_a);
        int j = p.require(row.region_b);
        if (i == j) throw data_error("self-connection in endpoint table: " + row.region_a);
        w(i, j) += static_cast<double>(row.count);
        if (i != j) w(j, i) += static_cast<double>(row.count);
    }
    return Connectome(p, std::move(w), ConnectomeKind::StreamlineCount);
}

Connectome binarize(const Connectome& c, double threshold) {
    if (threshold < 0) throw data_error("binarize threshold must be >= 0");
    const int n = c.size();
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && c.at(i, j) > threshold) w(i, j) = 1.0;
    return Connectome(c.parcellation(), std::move(w), ConnectomeKind::Binary);
}

}  // namespace wmprior
