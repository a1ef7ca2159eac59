#pragma once

#include <optional>
#include <vector>

#include "ustat/common.hpp"
#include "ustat/hoeffding.hpp"

namespace ustat {

enum class CovSource { hoeffding_formula, replication };

struct CovarianceEstimate {
    Eigen::MatrixXd sigma;             // p x p, symmetric, clipped to PSD
    CovSource source = CovSource::replication;
    int replications = 0;
    std::optional<Eigen::MatrixXd> se;  // entrywise SE (replication mode)
    bool rank_deficient = false;        // some eigenvalues were clipped hard

    int p() const { return static_cast<int>(sigma.rows()); }
};

// Sample covariance of centered draws (rows = replications).
CovarianceEstimate covariance_replication(const Eigen::MatrixXd& draws);

// Hoeffding-formula covariance: sum_i Cov(pi1_i psi_j, pi1_i psi_k)
// + sum_{i<m} Cov(pi2_im psi_j, pi2_im psi_k); V form swaps pi1 for pi1_v
// and carries the factor 4 of the V scaling.
CovarianceEstimate covariance_formula(const ProjectionOracle& oracle, Form form = Form::U);

// count x p Gaussian draws via symmetric eigen factorization; deterministic
// in (seed, row).
Eigen::MatrixXd sample_gaussian(const CovarianceEstimate& cov, int count, std::uint64_t seed);

struct RectClass {
    int grid = 24;         // one-sided quantile-level grid size
    int random_rects = 256;
    std::uint64_t seed = 1;
};

struct RectDistanceEstimate {
    double value = 0.0;
    double se = 0.0;
    int grid = 0;
    int random_rects = 0;
    int r_w = 0, r_z = 0;
};

// Largest empirical probability gap over a nested sub-class of axis-aligned
// rectangles: (a) one-sided rectangles {v: v_j <= t_j for all j} with t_j at
// a common pooled-quantile level (levels follow the base-2 van der Corput
// sequence, so enlarging the grid only adds rectangles), and (b) counter-
// indexed random rectangles with per-coordinate pooled-quantile corners.
// Both pieces depend on the draws only through coordinatewise ranks, so the
// estimate is invariant under strictly increasing per-coordinate rescaling.
// This is a lower bound of the full-rectangle-class distance.
RectDistanceEstimate rectangle_distance(const Eigen::MatrixXd& w_draws,
                                        const Eigen::MatrixXd& z_draws, const RectClass& cls);

// Triangle-inequality combination of a conditional approximation error, a
// Gaussian comparison error, and an unconditional approximation error.
double glue_bounds(double delta1, double delta2, double delta3);

}  // namespace ustat
