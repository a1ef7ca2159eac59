#pragma once

#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "ustat/common.hpp"
#include "ustat/kernels.hpp"
#include "ustat/marginals.hpp"

namespace ustat {

enum class Form { U, V };

struct ReconstructResult {
    double linear_part = 0.0;
    double quadratic_part = 0.0;
    double residual = 0.0;
    double residual_se = 0.0;  // 0 in exact mode (the identity is algebraic there)
};

// Evaluates Hoeffding projections pi1, pi2, pi1_v and the contraction
// integral over the i-th argument, plus the moment pieces (E[J2], projection
// covariances) the statistic and bound layers need.
//
// Three integration paths, chosen automatically:
//   exact    scalar observations + polynomial kernels: moment algebra.
//   analytic structural families whose inner integrals have closed forms
//            (mean-zero additive parts, degenerate or closed-form cores).
//   mc       cached per-class quadrature nodes with common random numbers.
class ProjectionOracle {
public:
    enum class Mode { exact, analytic, mc };

    struct Options {
        int budget = 20000;       // nodes per quadrature set
        std::uint64_t seed = 0;   // node stream seed
        std::optional<Mode> force_mode;
    };

    ProjectionOracle(const KernelFamily& family, std::shared_ptr<const MarginalSet> marginals,
                     Options opts);
    ProjectionOracle(const KernelFamily& family, std::shared_ptr<const MarginalSet> marginals)
        : ProjectionOracle(family, std::move(marginals), Options{}) {}

    Mode mode() const { return mode_; }
    const KernelFamily& family() const { return fam_; }
    const MarginalSet& marginals() const { return *marg_; }
    int n() const { return marg_->n(); }
    int p() const { return fam_.p; }

    // P_m psi_j(x, .) — the one-argument inner integral.
    double inner_mean(int j, int i, int m, ObsRef x) const;
    // P_i P_m psi_j — the full double integral (cached).
    double double_mean(int j, int i, int m) const;

    double pi1(int j, int i, ObsRef x) const;
    double pi2(int j, int i, int m, ObsRef x, ObsRef y) const;
    double pi1_v(int j, int i, ObsRef x) const;

    // int psi_j(x, y_m) psi_k(x, y_l) dP_i(x); requires m != i and l != i.
    double contract(int j, int k, int i, int m, int l, ObsRef ym, ObsRef yl) const;

    // Covariances of same-index projections (exact or node MC).
    double cov_pi1(int j, int k, int i) const;
    double cov_pi2(int j, int k, int i, int m) const;
    double cov_pi1v(int j, int k, int i) const;

    double mean_j2(int j) const;
    double mean_j2v(int j) const;
    double mean_diag(int j, int i) const;  // E[psi_{j,(i,i)}(X_i, X_i)]

    // Hoeffding-variance sigma_j = sd of J2 (or of J2^V).
    double sigma(int j, Form form) const;

    ReconstructResult reconstruct(const IndexedSample& sample, int j, Form form) const;

    // Quadrature nodes of one marginal class (set 0 or 1; independent sets).
    const std::vector<Obs>& class_nodes(int class_id, int set = 0) const;

private:
    double gamma_mean(int j, int c) const;
    // i and m are observation indices; integration runs over index m's class.
    double q_mean(int j, int i, int m, ObsRef x) const;
    double q_mean2(int j, int i, int m) const;
    double generic_inner(int j, int i, int m, ObsRef x) const;
    ReconstructResult reconstruct_core(const IndexedSample& sample, int j, Form form) const;

    const KernelFamily fam_;
    std::shared_ptr<const MarginalSet> marg_;
    Options opts_;
    Mode mode_;

    // class id per index as the *marginal* grouping used for node caches
    std::vector<int> mclass_;
    int num_mclass_ = 0;

    // core fast path: row sums of w grouped by kernel class, excluding self
    Eigen::MatrixXd row_class_w_;  // n x num_kernel_classes

    mutable std::mutex mu_;
    mutable std::unordered_map<std::uint64_t, std::shared_ptr<std::vector<Obs>>> nodes_;
    mutable std::unordered_map<std::uint64_t, double> scalar_cache_;
};

}  // namespace ustat
