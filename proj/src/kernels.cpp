#include "ustat/kernels.hpp"

#include <cmath>

namespace ustat {

namespace {
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}

double gaussian_smoother_eval(double h, int d, ObsRef x, ObsRef y) {
    double quad = 0.0;
    for (int t = 0; t < d; ++t) quad += sq((x[t] - y[t]) / h);
    return std::pow(kInvSqrt2Pi / h, d) * std::exp(-0.5 * quad);
}

BivKernel make_gaussian_smoother(double h, int d) {
    if (!(h > 0.0)) throw ConfigError("gaussian smoother requires h > 0");
    require(d >= 1, "gaussian smoother requires d >= 1");
    return BivKernel{[h, d](ObsRef x, ObsRef y) { return gaussian_smoother_eval(h, d, x, y); }};
}

WeightMatrix WeightMatrix::symmetric(Eigen::MatrixXd w, bool has_diagonal) {
    require(w.rows() == w.cols(), "weight matrix must be square");
    for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index m = 0; m < i; ++m)
            if (w(i, m) != w(m, i))
                throw ConfigError("asymmetric weight at (" + std::to_string(i) + "," +
                                  std::to_string(m) + ")");
    if (!w.allFinite()) throw ConfigError("weight matrix has non-finite entries");
    WeightMatrix out;
    out.w = std::move(w);
    out.has_diagonal = has_diagonal;
    return out;
}

double KernelFamily::eval(int j, int i, int m, ObsRef x, ObsRef y) const {
    if (core) {
        const int ci = core->class_of(i), cm = core->class_of(m);
        double v = core->w(i, m) * core->q(j, ci, cm, x, y);
        if (core->has_additive())
            v += core->scale(i) * core->gamma(j, ci, x) + core->scale(m) * core->gamma(j, cm, y);
        return v;
    }
    return eval_fn(j, i, m, x, y);
}

void KernelFamily::eval_all(int i, int m, ObsRef x, ObsRef y, double* out) const {
    for (int j = 0; j < p; ++j) out[j] = eval(j, i, m, x, y);
}

double KernelFamily::diag(int j, int i, ObsRef x) const {
    if (diag_fn) return diag_fn(j, i, x);
    if (core && core->w_has_diagonal) {
        const int c = core->class_of(i);
        double v = core->w(i, i) * core->q(j, c, c, x, x);
        if (core->has_additive()) v += 2.0 * core->scale(i) * core->gamma(j, c, x);
        return v;
    }
    throw UsageError("kernel family has no diagonal values (V-statistics need diag_eval)");
}

namespace {

std::shared_ptr<WeightedCore> weighted_core(const WeightMatrix& w) {
    auto core = std::make_shared<WeightedCore>();
    core->w = w.w;
    core->w_has_diagonal = w.has_diagonal;
    return core;
}

}  // namespace

KernelFamily make_weighted(const WeightMatrix& w, std::vector<BivKernel> phi) {
    require(!phi.empty(), "weighted family needs at least one kernel");
    KernelFamily fam;
    fam.n = w.n();
    fam.p = static_cast<int>(phi.size());
    auto core = weighted_core(w);
    auto phis = std::make_shared<std::vector<BivKernel>>(std::move(phi));
    core->q = [phis](int j, int, int, ObsRef x, ObsRef y) {
        return (*phis)[static_cast<std::size_t>(j)](x, y);
    };
    fam.core = core;
    return fam;
}

KernelFamily make_weighted_poly(const WeightMatrix& w, std::vector<Poly2> phi) {
    require(!phi.empty(), "weighted family needs at least one kernel");
    for (const auto& q : phi)
        require(q.symmetric(0.0), "polynomial kernel coefficients must be symmetric");
    KernelFamily fam;
    fam.n = w.n();
    fam.p = static_cast<int>(phi.size());
    auto pc = std::make_shared<PolyCore>();
    pc->q = std::move(phi);
    auto core = weighted_core(w);
    auto qs = pc->q;
    core->q = [qs](int j, int, int, ObsRef x, ObsRef y) {
        return qs[static_cast<std::size_t>(j)].eval(x[0], y[0]);
    };
    fam.core = core;
    fam.poly = pc;
    return fam;
}

KernelFamily make_two_sample(int n1, int n2, double c1, double c2, double c3, BivKernel phi1,
                             BivKernel phi2, BivKernel phi3) {
    std::vector<BivKernel> ks = {std::move(phi1), std::move(phi2), std::move(phi3)};
    auto shared = std::make_shared<std::vector<BivKernel>>(std::move(ks));
    KernelFamily fam;
    fam.n = n1 + n2;
    fam.p = 1;
    fam.two_sample_split = {n1, n2};
    auto core = std::make_shared<WeightedCore>();
    core->num_classes = 2;
    core->kclass.assign(static_cast<std::size_t>(n1), 0);
    core->kclass.insert(core->kclass.end(), static_cast<std::size_t>(n2), 1);
    Eigen::MatrixXd w(fam.n, fam.n);
    for (int a = 0; a < fam.n; ++a)
        for (int b = 0; b < fam.n; ++b) {
            const bool ai = a < n1, bi = b < n1;
            w(a, b) = (ai && bi) ? c1 : (!ai && !bi) ? c2 : c3;
        }
    core->w = std::move(w);
    core->q = [shared](int, int ca, int cb, ObsRef x, ObsRef y) {
        const int which = (ca == 0 && cb == 0) ? 0 : (ca == 1 && cb == 1) ? 1 : 2;
        return (*shared)[static_cast<std::size_t>(which)](x, y);
    };
    fam.core = core;
    return fam;
}

KernelFamily make_two_sample_grid(int n1, int n2, double c1, double c2, double c3,
                                  std::vector<BivKernel> phis) {
    require(!phis.empty(), "two-sample grid needs at least one kernel");
    KernelFamily fam;
    fam.n = n1 + n2;
    fam.p = static_cast<int>(phis.size());
    fam.two_sample_split = {n1, n2};
    auto shared = std::make_shared<std::vector<BivKernel>>(std::move(phis));
    auto core = std::make_shared<WeightedCore>();
    core->num_classes = 2;
    core->kclass.assign(static_cast<std::size_t>(n1), 0);
    core->kclass.insert(core->kclass.end(), static_cast<std::size_t>(n2), 1);
    Eigen::MatrixXd w(fam.n, fam.n);
    for (int a = 0; a < fam.n; ++a)
        for (int b = 0; b < fam.n; ++b) {
            const bool ai = a < n1, bi = b < n1;
            w(a, b) = (ai && bi) ? c1 : (!ai && !bi) ? c2 : c3;
        }
    core->w = std::move(w);
    core->q = [shared](int j, int, int, ObsRef x, ObsRef y) {
        return (*shared)[static_cast<std::size_t>(j)](x, y);
    };
    fam.core = core;
    return fam;
}

SymmetryReport audit_symmetry(const KernelFamily& k, const MarginalSet& marginals, int trials,
                              std::uint64_t seed, double tol) {
    require(trials >= 1, "symmetry audit needs trials >= 1");
    SymmetryReport rep;
    rep.trials = trials;
    CounterRng pick(seed, Stream::eval);
    for (int t = 0; t < trials; ++t) {
        const int j = static_cast<int>(pick.next_below(static_cast<std::uint64_t>(k.p)));
        const int i = static_cast<int>(pick.next_below(static_cast<std::uint64_t>(k.n)));
        int m = static_cast<int>(pick.next_below(static_cast<std::uint64_t>(k.n - 1)));
        if (m >= i) ++m;
        CounterRng draw(seed, Stream::data, static_cast<std::uint64_t>(t), 0);
        const Obs x = marginals.model(i).sample(draw);
        const Obs y = marginals.model(m).sample(draw);
        const double fwd = k.eval(j, i, m, x, y);
        const double bwd = k.eval(j, m, i, y, x);
        if (!(std::abs(fwd - bwd) <= tol * (1.0 + std::abs(fwd)))) {
            rep.pass = false;
            rep.j = j;
            rep.i = i;
            rep.m = m;
            rep.forward = fwd;
            rep.backward = bwd;
            return rep;
        }
    }
    return rep;
}

}  // namespace ustat
