#pragma once

#include "wmprior/connectome.hpp"
#include "wmprior/filter.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace wmprior {

/// One real value per region (e.g. tau-PET SUVR) plus a fitting mask.
struct RegionalVector {
    std::vector<double> values;   // parcellation order
    std::vector<bool> mask;       // regions included in fitting

    static RegionalVector load_csv(const std::filesystem::path& path, const Parcellation& p);
};

enum class LaplacianKind { Unnormalized, Symmetric };

// Unnormalized: L = D - A. Symmetric: L = I - D^{-1/2} A D^{-1/2}, with
// isolated nodes given zero rows.
Eigen::MatrixXd laplacian(const Connectome& binary, LaplacianKind kind);

/// Heat-kernel propagator exp(-Lt) via one spectral decomposition.
class HeatKernel {
public:
    explicit HeatKernel(const Eigen::MatrixXd& L);

    Eigen::VectorXd propagate(const Eigen::VectorXd& x0, double t) const;

private:
    Eigen::MatrixXd eigenvectors_;
    Eigen::VectorXd eigenvalues_;
};

// x(t) = exp(-Lt) x0. Throws data_error for non-symmetric L.
Eigen::VectorXd simulate(const Eigen::MatrixXd& L, const Eigen::VectorXd& x0, double t);

std::vector<double> log_time_grid(double lo = 1e-3, double hi = 1e2, int points = 200);

struct DiffusionFit {
    int seed_index = -1;
    double t_star = 0.0;
    double r = 0.0;
    double sse = 0.0;
    Eigen::VectorXd prediction;  // at t_star, before rescaling
    double scale = 1.0;          // least-squares factor applied for the SSE
};

// Unit seed mass diffused over the grid; t_star maximizes Pearson r over
// masked regions, ties broken by smaller t. SSE is computed after
// least-squares scalar rescaling of the prediction. Grid points with a
// constant masked prediction are skipped; all skipped -> degenerate_fit_error.
DiffusionFit fit(const Connectome& binary, int seed_index, const RegionalVector& target,
                 const std::vector<double>& t_grid, LaplacianKind kind = LaplacianKind::Unnormalized);

struct PermutationResult {
    int n_added = 0;
    int trials = 0;
    double observed_r = 0.0;
    double observed_sse = 0.0;
    std::vector<double> null_r;
    std::vector<double> null_sse;
    double p_r = 1.0;
    double p_sse = 1.0;

    void save_null_csv(const std::filesystem::path& path) const;
};

// Null model: per trial, add n_added distinct uniformly chosen absent
// edges to `base`, refit, and compare. Add-one p estimator:
// p = (1 + #{null at least as good}) / (trials + 1). Trials use
// independent substreams of `seed` and run in parallel.
PermutationResult permutation_test(const Connectome& base, const FilterOutcome& candidate,
                                   const RegionalVector& target, int seed_index, int trials,
                                   std::uint64_t seed, const std::vector<double>& t_grid,
                                   LaplacianKind kind = LaplacianKind::Unnormalized);

}  // namespace wmprior
