#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace wmprior {

enum class Hemisphere { Left, Right, Midline };

std::string to_string(Hemisphere h);
Hemisphere hemisphere_from_string(const std::string& token);

struct Region {
    std::string name;
    Hemisphere hemisphere = Hemisphere::Left;
    int index = 0;  // position in the parcellation, contiguous from 0
};

/// Ordered list of named grey-matter regions; the pipeline's input vocabulary.
class Parcellation {
public:
    Parcellation(std::string id, std::vector<Region> regions);

    const std::string& id() const { return id_; }
    const std::vector<Region>& regions() const { return regions_; }
    int size() const { return static_cast<int>(regions_.size()); }
    const Region& region(int index) const { return regions_.at(static_cast<size_t>(index)); }

    std::optional<int> find(const std::string& name) const;
    int require(const std::string& name) const;  // throws data_error

private:
    std::string id_;
    std::vector<Region> regions_;
};

// One region per line, `name,hemisphere`. `#` comments and a
// `name,hemisphere` header line are skipped.
Parcellation load_parcellation(const std::filesystem::path& path);

/// Unordered region pair, canonically ordered by name ascending.
struct RegionPair {
    std::string a;
    std::string b;

    RegionPair() = default;
    RegionPair(std::string first, std::string second);

    std::string key() const { return a + "|" + b; }

    friend bool operator==(const RegionPair&, const RegionPair&) = default;
    friend auto operator<=>(const RegionPair& l, const RegionPair& r) {
        return l.key() <=> r.key();
    }
};

enum class PairScope { WithinHemisphere, All };

// All unique pairs in canonical order. WithinHemisphere keeps pairs that
// share a hemisphere; Midline regions pair with both hemispheres.
std::vector<RegionPair> enumerate_pairs(const Parcellation& p, PairScope scope);

enum class ConnectomeKind { StreamlineCount, Commit2WeightSum, Binary, PriorConfidence };

std::string to_string(ConnectomeKind k);
ConnectomeKind connectome_kind_from_string(const std::string& token);

/// Symmetric non-negative edge-weight matrix over a parcellation.
/// Immutable after construction; zero diagonal enforced.
class Connectome {
public:
    Connectome(Parcellation parcellation, Eigen::MatrixXd weights, ConnectomeKind kind);

    const Parcellation& parcellation() const { return parc_; }
    const Eigen::MatrixXd& weights() const { return w_; }
    ConnectomeKind kind() const { return kind_; }
    int size() const { return static_cast<int>(w_.rows()); }

    double at(int i, int j) const { return w_(i, j); }
    double at(const RegionPair& pair) const;

    void save_csv(const std::filesystem::path& path) const;

private:
    Parcellation parc_;
    Eigen::MatrixXd w_;
    ConnectomeKind kind_;
};

// Dense CSV with a region-name header row and leading name column;
// checked against `p` on load.
Connectome load_connectome_csv(const std::filesystem::path& path, const Parcellation& p,
                               ConnectomeKind kind);

struct EndpointRow {
    std::string region_a;
    std::string region_b;
    long long count = 0;
};

using EndpointTable = std::vector<EndpointRow>;

EndpointTable load_endpoint_table(const std::filesystem::path& path);

// Symmetric StreamlineCount matrix; repeated rows accumulate.
Connectome connectome_from_endpoints(const EndpointTable& table, const Parcellation& p);

// Binary matrix with entry 1 iff weight > threshold.
Connectome binarize(const Connectome& c, double threshold);

}  // namespace wmprior
