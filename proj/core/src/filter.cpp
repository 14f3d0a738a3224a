#include "wmprior/filter.hpp"

#include "wmprior/errors.hpp"

#include <algorithm>
#include <fstream>

namespace wmprior {

namespace {

size_t tri_index(int i, int j, int n) {
    // upper triangle (i < j), row-major
    return static_cast<size_t>(i) * n - static_cast<size_t>(i) * (i + 1) / 2 +
           static_cast<size_t>(j - i - 1);
}

}  // namespace

EdgeProvenance FilterOutcome::provenance_at(int i, int j) const {
    if (i == j) return EdgeProvenance::Absent;
    if (i > j) std::swap(i, j);
    return provenance.at(tri_index(i, j, filtered.size()));
}

void FilterOutcome::save_provenance_csv(const std::filesystem::path& path) const {
    static const char* labels[] = {"absent", "microstructure_only", "llm_only", "both"};
    std::ofstream out(path);
    if (!out) throw data_error("cannot write provenance CSV: " + path.string());
    const Parcellation& p = filtered.parcellation();
    out << "region";
    for (const Region& r : p.regions()) out << ',' << r.name;
    out << '\n';
    for (int i = 0; i < filtered.size(); ++i) {
        out << p.region(i).name;
        for (int j = 0; j < filtered.size(); ++j)
            out << ',' << labels[static_cast<int>(provenance_at(i, j))];
        out << '\n';
    }
}

FilterOutcome augment_filter(const Connectome& weights, const PriorMatrix& priors, double cutoff,
                             const Connectome* unfiltered_counts) {
    const Parcellation& p = weights.parcellation();
    if (priors.confidence.parcellation().id() != p.id() ||
        priors.confidence.size() != weights.size())
        throw data_error("weights and priors use different parcellations");
    if (unfiltered_counts && unfiltered_counts->size() != weights.size())
        throw data_error("unfiltered counts use a different parcellation");

    const int n = weights.size();
    Eigen::MatrixXd filtered = Eigen::MatrixXd::Zero(n, n);
    std::vector<EdgeProvenance> provenance(static_cast<size_t>(n) * (n - 1) / 2,
                                           EdgeProvenance::Absent);
    int added = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            bool micro = weights.at(i, j) > 0.0;
            RegionPair pair(p.region(i).name, p.region(j).name);
            bool llm = priors.has(pair) && priors.mean_confidence(pair) >= cutoff;
            if (llm && !micro && unfiltered_counts && unfiltered_counts->at(i, j) <= 0.0)
                llm = false;  // tractogram had nothing; do not invent the edge
            EdgeProvenance label = EdgeProvenance::Absent;
            if (micro && llm) label = EdgeProvenance::Both;
            else if (micro) label = EdgeProvenance::MicrostructureOnly;
            else if (llm) label = EdgeProvenance::LlmOnly;
            if (label != EdgeProvenance::Absent) {
                filtered(i, j) = 1.0;
                filtered(j, i) = 1.0;
            }
            if (label == EdgeProvenance::LlmOnly) ++added;
            provenance[tri_index(i, j, n)] = label;
        }
    }
    return FilterOutcome{Connectome(p, std::move(filtered), ConnectomeKind::Binary), added,
                         std::move(provenance)};
}

std::vector<RegionPair> added_edges(const FilterOutcome& outcome) {
    const Parcellation& p = outcome.filtered.parcellation();
    std::vector<RegionPair> out;
    const int n = outcome.filtered.size();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (outcome.provenance_at(i, j) == EdgeProvenance::LlmOnly)
                out.emplace_back(p.region(i).name, p.region(j).name);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace wmprior
