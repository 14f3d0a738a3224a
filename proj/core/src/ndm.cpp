#include "wmprior/ndm.hpp"

#include "wmprior/digest.hpp"
#include "wmprior/errors.hpp"
#include "wmprior/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

namespace wmprior {

RegionalVector RegionalVector::load_csv(const std::filesystem::path& path,
                                        const Parcellation& p) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open regional vector CSV: " + path.string());
    RegionalVector v;
    v.values.assign(static_cast<size_t>(p.size()), 0.0);
    v.mask.assign(static_cast<size_t>(p.size()), false);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string region, value;
        if (!std::getline(ss, region, ',') || !std::getline(ss, value))
            throw data_error("expected `region,value`: '" + line + "'");
        if (region == "region") continue;  // header
        int idx = p.require(region);
        double x = std::stod(value);
        if (!std::isfinite(x)) throw data_error("non-finite value for region " + region);
        v.values[static_cast<size_t>(idx)] = x;
        v.mask[static_cast<size_t>(idx)] = true;
    }
    if (std::none_of(v.mask.begin(), v.mask.end(), [](bool b) { return b; }))
        throw data_error("regional vector has an empty mask");
    return v;
}

Eigen::MatrixXd laplacian(const Connectome& binary, LaplacianKind kind) {
    if (binary.kind() != ConnectomeKind::Binary)
        throw data_error("laplacian expects a binary connectome");
    const Eigen::MatrixXd& a = binary.weights();
    const Eigen::Index n = a.rows();
    Eigen::VectorXd degree = a.rowwise().sum();
    if (kind == LaplacianKind::Unnormalized) {
        Eigen::MatrixXd l = -a;
        for (Eigen::Index i = 0; i < n; ++i) l(i, i) = degree(i);
        return l;
    }
    // Symmetric normalized; isolated nodes get zero rows.
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd inv_sqrt(n);
    for (Eigen::Index i = 0; i < n; ++i)
        inv_sqrt(i) = degree(i) > 0.0 ? 1.0 / std::sqrt(degree(i)) : 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (degree(i) <= 0.0) continue;
        l(i, i) = 1.0;
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j && a(i, j) != 0.0) l(i, j) = -inv_sqrt(i) * a(i, j) * inv_sqrt(j);
    }
    return l;
}

HeatKernel::HeatKernel(const Eigen::MatrixXd& L) {
    if (L.rows() != L.cols() || !L.isApprox(L.transpose(), 1e-10))
        throw data_error("heat kernel requires a symmetric operator");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(L);
    if (solver.info() != Eigen::Success) throw data_error("eigendecomposition failed");
    eigenvectors_ = solver.eigenvectors();
    eigenvalues_ = solver.eigenvalues();
}

Eigen::VectorXd HeatKernel::propagate(const Eigen::VectorXd& x0, double t) const {
    if (x0.size() != eigenvalues_.size())
        throw data_error("state dimension does not match the operator");
    if (t < 0.0) throw data_error("diffusion time must be >= 0");
    Eigen::VectorXd coeffs = eigenvectors_.transpose() * x0;
    for (Eigen::Index i = 0; i < coeffs.size(); ++i)
        coeffs(i) *= std::exp(-eigenvalues_(i) * t);
    return eigenvectors_ * coeffs;
}

Eigen::VectorXd simulate(const Eigen::MatrixXd& L, const Eigen::VectorXd& x0, double t) {
    return HeatKernel(L).propagate(x0, t);
}

std::vector<double> log_time_grid(double lo, double hi, int points) {
    if (lo <= 0.0 || hi <= lo || points < 2) throw config_error("invalid time grid");
    std::vector<double> grid(static_cast<size_t>(points));
    const double step = (std::log(hi) - std::log(lo)) / (points - 1);
    for (int i = 0; i < points; ++i) grid[static_cast<size_t>(i)] = std::exp(std::log(lo) + i * step);
    return grid;
}

namespace {

struct MaskedFit {
    double t_star = 0.0;
    double r = -2.0;
    double sse = 0.0;
    double scale = 1.0;
    int best_index = -1;
};

MaskedFit fit_kernel(const HeatKernel& kernel, const Eigen::VectorXd& x0,
                     const RegionalVector& target, const std::vector<double>& t_grid) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < target.mask.size(); ++i)
        if (target.mask[i]) idx.push_back(i);
    std::vector<double> t_masked(idx.size());
    for (size_t k = 0; k < idx.size(); ++k) t_masked[k] = target.values[idx[k]];

    MaskedFit best;
    std::vector<double> p_masked(idx.size());
    for (size_t g = 0; g < t_grid.size(); ++g) {
        Eigen::VectorXd pred = kernel.propagate(x0, t_grid[g]);
        for (size_t k = 0; k < idx.size(); ++k)
            p_masked[k] = pred(static_cast<Eigen::Index>(idx[k]));
        auto r = pearson(p_masked, t_masked);
        if (!r) continue;  // constant prediction at this t
        if (*r > best.r) {
            best.r = *r;
            best.t_star = t_grid[g];
            best.best_index = static_cast<int>(g);
            double pt = 0.0, pp = 0.0;
            for (size_t k = 0; k < idx.size(); ++k) {
                pt += p_masked[k] * t_masked[k];
                pp += p_masked[k] * p_masked[k];
            }
            best.scale = pp > 0.0 ? pt / pp : 1.0;
            double sse = 0.0;
            for (size_t k = 0; k < idx.size(); ++k) {
                double e = best.scale * p_masked[k] - t_masked[k];
                sse += e * e;
            }
            best.sse = sse;
        }
    }
    if (best.best_index < 0)
        throw degenerate_fit_error("prediction is constant over the mask for every grid time");
    return best;
}

}  // namespace

DiffusionFit fit(const Connectome& binary, int seed_index, const RegionalVector& target,
                 const std::vector<double>& t_grid, LaplacianKind kind) {
    const int n = binary.size();
    if (seed_index < 0 || seed_index >= n) throw data_error("seed region outside parcellation");
    if (static_cast<int>(target.values.size()) != n)
        throw data_error("target dimension does not match parcellation");
    HeatKernel kernel(laplacian(binary, kind));
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
    x0(seed_index) = 1.0;
    MaskedFit best = fit_kernel(kernel, x0, target, t_grid);

    DiffusionFit out;
    out.seed_index = seed_index;
    out.t_star = best.t_star;
    out.r = best.r;
    out.sse = best.sse;
    out.scale = best.scale;
    out.prediction = kernel.propagate(x0, best.t_star);
    return out;
}

void PermutationResult::save_null_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write null distribution CSV: " + path.string());
    out << "trial,r,sse\n";
    out.precision(17);
    for (size_t i = 0; i < null_r.size(); ++i)
        out << i + 1 << ',' << null_r[i] << ',' << null_sse[i] << '\n';
}

PermutationResult permutation_test(const Connectome& base, const FilterOutcome& candidate,
                                   const RegionalVector& target, int seed_index, int trials,
                                   std::uint64_t seed, const std::vector<double>& t_grid,
                                   LaplacianKind kind) {
    if (trials < 1) throw config_error("permutation test needs at least one trial");
    const int n = base.size();
    const int n_added = candidate.n_added_by_llm;

    std::vector<std::pair<int, int>> absent;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (base.at(i, j) == 0.0) absent.emplace_back(i, j);
    if (n_added > static_cast<int>(absent.size()))
        throw data_error("more LLM edges than absent edges in the base connectome");

    DiffusionFit observed = fit(candidate.filtered, seed_index, target, t_grid, kind);

    PermutationResult result;
    result.n_added = n_added;
    result.trials = trials;
    result.observed_r = observed.r;
    result.observed_sse = observed.sse;
    result.null_r.assign(static_cast<size_t>(trials), 0.0);
    result.null_sse.assign(static_cast<size_t>(trials), 0.0);

    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
    x0(seed_index) = 1.0;
    const Eigen::MatrixXd& base_w = base.weights();

    auto run_trial = [&](int trial) {
        std::mt19937_64 rng(mix64(seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(trial)));
        std::vector<std::pair<int, int>> pool = absent;
        for (int k = 0; k < n_added; ++k) {
            std::uniform_int_distribution<size_t> pick(static_cast<size_t>(k), pool.size() - 1);
            std::swap(pool[static_cast<size_t>(k)], pool[pick(rng)]);
        }
        Eigen::MatrixXd w = base_w;
        for (int k = 0; k < n_added; ++k) {
            auto [i, j] = pool[static_cast<size_t>(k)];
            w(i, j) = 1.0;
            w(j, i) = 1.0;
        }
        HeatKernel kernel(laplacian(Connectome(base.parcellation(), std::move(w),
                                               ConnectomeKind::Binary),
                                    kind));
        MaskedFit trial_fit = fit_kernel(kernel, x0, target, t_grid);
        result.null_r[static_cast<size_t>(trial)] = trial_fit.r;
        result.null_sse[static_cast<size_t>(trial)] = trial_fit.sse;
    };

    unsigned n_threads = std::max(1u, std::thread::hardware_concurrency());
    if (n_threads <= 1 || trials < 8) {
        for (int t = 0; t < trials; ++t) run_trial(t);
    } else {
        std::vector<std::thread> workers;
        std::atomic<int> next{0};
        for (unsigned w = 0; w < n_threads; ++w)
            workers.emplace_back([&] {
                for (;;) {
                    int t = next.fetch_add(1);
                    if (t >= trials) return;
                    run_trial(t);
                }
            });
        for (std::thread& w : workers) w.join();
    }

    int ge_r = 0, le_sse = 0;
    for (int t = 0; t < trials; ++t) {
        if (result.null_r[static_cast<size_t>(t)] >= result.observed_r) ++ge_r;
        if (result.null_sse[static_cast<size_t>(t)] <= result.observed_sse) ++le_sse;
    }
    result.p_r = (1.0 + ge_r) / (trials + 1.0);
    result.p_sse = (1.0 + le_sse) / (trials + 1.0);
    return result;
}

}  // namespace wmprior
