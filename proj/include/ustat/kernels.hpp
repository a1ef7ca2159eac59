#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ustat/common.hpp"
#include "ustat/marginals.hpp"
#include "ustat/poly.hpp"

namespace ustat {

// Index-free symmetric bivariate kernel.
struct BivKernel {
    std::function<double(ObsRef, ObsRef)> f;
    double operator()(ObsRef x, ObsRef y) const { return f(x, y); }
};

// phi_h(x, y) = h^{-d} K((x-y)/h) with K the standard Gaussian density;
// equals the product of d one-dimensional N(0, h^2) densities of x-y.
BivKernel make_gaussian_smoother(double h, int d);
double gaussian_smoother_eval(double h, int d, ObsRef x, ObsRef y);

struct WeightMatrix {
    Eigen::MatrixXd w;
    bool has_diagonal = false;

    static WeightMatrix symmetric(Eigen::MatrixXd w, bool has_diagonal = false);
    int n() const { return static_cast<int>(w.rows()); }
    double operator()(int i, int m) const { return w(i, m); }
};

// Structural form shared by every built-in family:
//   psi_j(x_i, x_m) = s_i gamma_j(c_i, x_i) + s_m gamma_j(c_m, x_m)
//                     + w(i, m) q_j(c_i, c_m, x_i, x_m)
// with c_i the kernel class of index i (two-sample block, or 0). The bound
// and projection machinery exploits this: integrals depend on indices only
// through (class, scalar weight), which makes caches small.
struct WeightedCore {
    Eigen::MatrixXd w;
    bool w_has_diagonal = false;
    std::vector<double> s;     // empty: no additive part
    std::vector<int> kclass;   // empty: single class
    int num_classes = 1;

    std::function<double(int j, int c, ObsRef)> gamma;
    std::function<double(int j, int ca, int cb, ObsRef, ObsRef)> q;

    bool gamma_mean_zero = false;  // E_c[gamma_j] = 0 for every class
    bool q_degenerate = false;     // E_{y~cb}[q_j(ca,cb,x,y)] = 0 for every x

    // Closed forms, used when q is not degenerate. q_mean(j, ca, cb, x) is
    // E_{y~cb} q_j(ca, cb, x, y); q_mean2 integrates both arguments.
    std::function<double(int j, int ca, int cb, ObsRef)> q_mean;
    std::function<double(int j, int ca, int cb)> q_mean2;

    int class_of(int i) const {
        return kclass.empty() ? 0 : kclass[static_cast<std::size_t>(i)];
    }
    double scale(int i) const { return s.empty() ? 0.0 : s[static_cast<std::size_t>(i)]; }
    bool has_additive() const { return !s.empty(); }
};

// Scalar-observation polynomial structure: enables exact-moment projections.
// psi_j(x, y) = w(i,m) q_j(x, y) with q_j a symmetric bivariate polynomial.
struct PolyCore {
    std::vector<Poly2> q;
};

class KernelFamily {
public:
    int p = 0;
    int n = 0;

    std::function<double(int j, int i, int m, ObsRef, ObsRef)> eval_fn;
    std::function<double(int j, int i, ObsRef)> diag_fn;  // psi_{j,(i,i)}(x, x)
    std::vector<bool> declared_degenerate;
    std::optional<std::pair<int, int>> two_sample_split;
    std::shared_ptr<const WeightedCore> core;
    std::shared_ptr<const PolyCore> poly;

    double eval(int j, int i, int m, ObsRef x, ObsRef y) const;
    // Evaluates all p kernels at one argument pair (out must hold p values).
    void eval_all(int i, int m, ObsRef x, ObsRef y, double* out) const;

    bool has_diag() const { return static_cast<bool>(diag_fn) || core_has_diag(); }
    double diag(int j, int i, ObsRef x) const;

    int kclass(int i) const { return core ? core->class_of(i) : 0; }
    int num_classes() const { return core ? core->num_classes : 1; }
    bool degenerate_flag(int j) const {
        return !declared_degenerate.empty() && declared_degenerate[static_cast<std::size_t>(j)];
    }

private:
    bool core_has_diag() const { return core && core->w_has_diagonal; }
};

// psi_{j,(i,m)} = w(i,m) * phi_j; symmetry inherited from w and phi.
KernelFamily make_weighted(const WeightMatrix& w, std::vector<BivKernel> phi);
// Polynomial variant; keeps the coefficients for exact-moment projections.
KernelFamily make_weighted_poly(const WeightMatrix& w, std::vector<Poly2> phi);

// Two-sample family on pooled indices {1..n1} + {n1+1..n1+n2}:
// c1 phi1 within the first block, c2 phi2 within the second, c3 phi3 across.
KernelFamily make_two_sample(int n1, int n2, double c1, double c2, double c3, BivKernel phi1,
                             BivKernel phi2, BivKernel phi3);
// Same block weights for each of p kernels (one per coordinate).
KernelFamily make_two_sample_grid(int n1, int n2, double c1, double c2, double c3,
                                  std::vector<BivKernel> phis);

struct SymmetryReport {
    bool pass = true;
    int trials = 0;
    int j = -1, i = -1, m = -1;
    double forward = 0.0, backward = 0.0;
};

// Randomized check of psi_{j,(i,m)}(x,y) = psi_{j,(m,i)}(y,x); points drawn
// from the sample's marginals.
SymmetryReport audit_symmetry(const KernelFamily& k, const MarginalSet& marginals, int trials,
                              std::uint64_t seed, double tol = 1e-9);

}  // namespace ustat
