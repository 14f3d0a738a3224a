#pragma once

#include "wmprior/connectome.hpp"
#include "wmprior/prior.hpp"

#include <filesystem>
#include <vector>

namespace wmprior {

enum class EdgeProvenance { Absent, MicrostructureOnly, LlmOnly, Both };

struct FilterOutcome {
    Connectome filtered;  // Binary
    int n_added_by_llm = 0;
    // Upper-triangle provenance, row-major over (i < j).
    std::vector<EdgeProvenance> provenance;

    EdgeProvenance provenance_at(int i, int j) const;

    void save_provenance_csv(const std::filesystem::path& path) const;
};

// Union rule: an edge is retained iff its microstructure weight is > 0 OR
// the prior clears the cutoff. Prior-only edges additionally require a
// nonzero entry in `unfiltered_counts` when provided, so the priors never
// introduce edges absent from the tractogram.
FilterOutcome augment_filter(const Connectome& weights, const PriorMatrix& priors,
                             double cutoff = 0.5, const Connectome* unfiltered_counts = nullptr);

// Edges retained by the priors alone, canonical order.
std::vector<RegionPair> added_edges(const FilterOutcome& outcome);

}  // namespace wmprior
