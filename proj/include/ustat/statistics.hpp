#pragma once

#include <vector>

#include "ustat/common.hpp"
#include "ustat/hoeffding.hpp"
#include "ustat/kernels.hpp"
#include "ustat/marginals.hpp"

namespace ustat {

struct StatVector {
    Eigen::VectorXd w;      // centered statistic values
    Eigen::VectorXd sigma;  // sd of each coordinate, strictly positive
    Form form = Form::U;

    Eigen::VectorXd studentized() const { return w.cwiseQuotient(sigma); }
};

// J2(psi_j) = sum over unordered pairs i < m. Pairs are reduced in fixed
// lexicographic chunks so the result is identical at any worker count.
double j2(const IndexedSample& sample, const KernelFamily& kernels, int j);
// All coordinates in one pass over the pairs.
Eigen::VectorXd j2_all(const IndexedSample& sample, const KernelFamily& kernels);

// V form: 2 * J2 + sum of diagonal values.
double j2_v(const IndexedSample& sample, const KernelFamily& kernels, int j);
Eigen::VectorXd j2_v_all(const IndexedSample& sample, const KernelFamily& kernels);

// Order-r statistic for audits, r in {1,2,3}: sum over i1 < ... < ir of
// psi_j; r = 2 coincides with j2 on a shared family.
struct OrderRKernels {
    int r = 1;
    int p = 1;
    int n = 0;
    // xs has r entries ordered consistently with idx (idx strictly increasing)
    std::function<double(int j, const std::vector<int>& idx, const std::vector<const Obs*>& xs)>
        eval;
};
double j_r(const IndexedSample& sample, const OrderRKernels& kernels, int j);

enum class SigmaSource { hoeffding_formula, replication };

struct ComputeWOptions {
    Form form = Form::U;
    SigmaSource sigma_source = SigmaSource::hoeffding_formula;
    // replication sd needs draws of the statistic; supplied by the caller
    const Eigen::MatrixXd* replication_w = nullptr;  // R x p, centered draws
};

// W_j = J2(psi_j) - E[J2(psi_j)] with sigma_j from the Hoeffding variance
// formula (exact/analytic oracles) or the replication SD.
StatVector compute_w(const IndexedSample& sample, const KernelFamily& kernels,
                     const ProjectionOracle& oracle, const ComputeWOptions& opts = {});

struct ExchangeablePairDraw {
    int alpha = 0;
    Obs x_star;
    Eigen::VectorXd d1;  // sum of pi1 differences (only index alpha moves)
    Eigen::VectorXd d2;  // sum of pi2 differences over pairs containing alpha
    Eigen::VectorXd g;   // n d1 + (n/2) d2
};

// One draw of (alpha, X*_alpha) on top of a fixed sample.
ExchangeablePairDraw sample_exchangeable_pair(const IndexedSample& sample,
                                              const KernelFamily& kernels,
                                              const ProjectionOracle& oracle, std::uint64_t seed,
                                              std::uint64_t draw_id = 0);

struct DriftReport {
    Eigen::VectorXd deviation;  // |avg G + W| per coordinate
    Eigen::VectorXd se;         // Monte Carlo SE of avg G
    double max_ratio = 0.0;     // max_j deviation / se
};

// Checks E[G | X] = -W by averaging G over `draws` independent (alpha, X*).
DriftReport verify_drift(const IndexedSample& sample, const KernelFamily& kernels,
                         const ProjectionOracle& oracle, int draws, std::uint64_t seed);

struct SecondMomentReport {
    Eigen::MatrixXd lhs;   // (1/2) E[G_j D_k]
    Eigen::MatrixXd rhs;   // Cov(W_j, W_k) = E[W_j W_k]
    Eigen::MatrixXd se;    // entrywise SE of the difference
    double max_ratio = 0.0;
};

// Checks E[W_j W_k] = (1/2) E[G_j D_k] over fresh (X, alpha, X*) draws.
// The sampler draws a new sample per rep; E[J2] must be available from the
// oracle (exact or analytic).
SecondMomentReport verify_second_moment_identity(
    const std::function<IndexedSample(int rep)>& sampler, const KernelFamily& kernels,
    const ProjectionOracle& oracle, int reps, std::uint64_t seed);

}  // namespace ustat
