#include "ustat/hoeffding.hpp"

#include <cmath>

namespace ustat {

namespace {

constexpr std::uint64_t kTagNodes = 1, kTagQm2 = 2, kTagGm = 3, kTagCovG = 4, kTagCovQ2 = 5,
                        kTagDm = 6, kTagDiagM = 7, kTagCovP1 = 8, kTagCovP1V = 9, kTagMu = 10,
                        kTagCovP2 = 11;

std::uint64_t pack(std::uint64_t tag, std::uint64_t j, std::uint64_t k, std::uint64_t a,
                   std::uint64_t b) {
    // 12-bit fields; the library caps p and class counts well below 4096.
    return (tag << 48) | (j << 36) | (k << 24) | (a << 12) | b;
}

}  // namespace

ProjectionOracle::ProjectionOracle(const KernelFamily& family,
                                   std::shared_ptr<const MarginalSet> marginals, Options opts)
    : fam_(family), marg_(std::move(marginals)), opts_(opts) {
    require(marg_ != nullptr, "oracle needs marginals");
    require(fam_.n == marg_->n(), "kernel family and marginals disagree on n");
    require(opts_.budget >= 100 || opts_.force_mode == Mode::exact,
            "mc mode needs budget >= 100");
    require(fam_.p < 4096 && marg_->num_classes() < 4096, "cache keys cap p and classes at 4095");

    mclass_.resize(static_cast<std::size_t>(marg_->n()));
    for (int i = 0; i < marg_->n(); ++i) mclass_[static_cast<std::size_t>(i)] = marg_->class_of(i);
    num_mclass_ = marg_->num_classes();

    bool all_scalar = true;
    for (const auto& m : marg_->models) all_scalar = all_scalar && m.is_scalar();

    if (opts_.force_mode) {
        mode_ = *opts_.force_mode;
        if (mode_ == Mode::exact)
            require(fam_.poly && all_scalar, "exact mode needs polynomial kernels and scalar marginals");
    } else if (fam_.poly && all_scalar) {
        mode_ = Mode::exact;
    } else if (fam_.core && (!fam_.core->has_additive() || fam_.core->gamma_mean_zero) &&
               (fam_.core->q_degenerate || (fam_.core->q_mean && fam_.core->q_mean2))) {
        mode_ = Mode::analytic;
    } else {
        mode_ = Mode::mc;
    }

    // Row sums of w over m != i grouped by (kernel class, marginal class) of m.
    if (fam_.core) {
        const int kc = fam_.num_classes();
        const int pairs = kc * num_mclass_;
        row_class_w_ = Eigen::MatrixXd::Zero(fam_.n, pairs);
        for (int i = 0; i < fam_.n; ++i)
            for (int m = 0; m < fam_.n; ++m) {
                if (m == i) continue;
                const int pid = fam_.kclass(m) * num_mclass_ + mclass_[static_cast<std::size_t>(m)];
                row_class_w_(i, pid) += fam_.core->w(i, m);
            }
    }
}

const std::vector<Obs>& ProjectionOracle::class_nodes(int class_id, int set) const {
    const auto key = pack(kTagNodes, 0, 0, static_cast<std::uint64_t>(class_id),
                          static_cast<std::uint64_t>(set));
    std::lock_guard<std::mutex> lock(mu_);
    auto it = nodes_.find(key);
    if (it == nodes_.end()) {
        auto v = std::make_shared<std::vector<Obs>>();
        v->reserve(static_cast<std::size_t>(opts_.budget));
        CounterRng rng(opts_.seed, Stream::quad, static_cast<std::uint64_t>(class_id),
                       static_cast<std::uint64_t>(set));
        const auto& model = marg_->models[static_cast<std::size_t>(class_id)];
        for (int s = 0; s < opts_.budget; ++s) v->push_back(model.sample(rng));
        it = nodes_.emplace(key, std::move(v)).first;
    }
    return *it->second;
}

double ProjectionOracle::gamma_mean(int j, int c) const {
    const auto& core = *fam_.core;
    if (!core.has_additive() || core.gamma_mean_zero) return 0.0;
    const auto key = pack(kTagGm, static_cast<std::uint64_t>(j), 0, static_cast<std::uint64_t>(c), 0);
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = scalar_cache_.find(key);
        if (it != scalar_cache_.end()) return it->second;
    }
    // representative marginal class: first index with this kernel class
    int mc = 0;
    for (int i = 0; i < fam_.n; ++i)
        if (fam_.kclass(i) == c) { mc = mclass_[static_cast<std::size_t>(i)]; break; }
    const auto& nodes = class_nodes(mc, 0);
    double acc = 0.0;
    for (const auto& x : nodes) acc += core.gamma(j, c, x);
    acc /= static_cast<double>(nodes.size());
    std::lock_guard<std::mutex> lock(mu_);
    scalar_cache_[key] = acc;
    return acc;
}

double ProjectionOracle::q_mean(int j, int i, int m, ObsRef x) const {
    const auto& core = *fam_.core;
    if (core.q_degenerate) return 0.0;
    if (core.q_mean) return core.q_mean(j, fam_.kclass(i), fam_.kclass(m), x);
    const auto& nodes = class_nodes(mclass_[static_cast<std::size_t>(m)], 0);
    double acc = 0.0;
    for (const auto& y : nodes) acc += core.q(j, fam_.kclass(i), fam_.kclass(m), x, y);
    return acc / static_cast<double>(nodes.size());
}

double ProjectionOracle::q_mean2(int j, int i, int m) const {
    const auto& core = *fam_.core;
    if (core.q_degenerate) return 0.0;
    if (core.q_mean2) return core.q_mean2(j, fam_.kclass(i), fam_.kclass(m));
    const int kci = fam_.kclass(i), kcm = fam_.kclass(m);
    const int mci = mclass_[static_cast<std::size_t>(i)], mcm = mclass_[static_cast<std::size_t>(m)];
    const auto key = pack(kTagQm2, static_cast<std::uint64_t>(j),
                          static_cast<std::uint64_t>(kci * fam_.num_classes() + kcm),
                          static_cast<std::uint64_t>(mci), static_cast<std::uint64_t>(mcm));
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = scalar_cache_.find(key);
        if (it != scalar_cache_.end()) return it->second;
    }
    const auto& a = class_nodes(mci, 0);
    const auto& b = class_nodes(mcm, 1);
    double acc = 0.0;
    for (std::size_t s = 0; s < a.size(); ++s) acc += core.q(j, kci, kcm, a[s], b[s]);
    acc /= static_cast<double>(a.size());
    std::lock_guard<std::mutex> lock(mu_);
    scalar_cache_[key] = acc;
    return acc;
}

double ProjectionOracle::generic_inner(int j, int i, int m, ObsRef x) const {
    const auto& nodes = class_nodes(mclass_[static_cast<std::size_t>(m)], 0);
    double acc = 0.0;
    for (const auto& y : nodes) acc += fam_.eval(j, i, m, x, y);
    acc /= static_cast<double>(nodes.size());
    if (!is_finite(acc))
        throw NumericalError("divergent inner integral at (j=" + std::to_string(j) +
                             ",i=" + std::to_string(i) + ",m=" + std::to_string(m) + ")");
    return acc;
}

double ProjectionOracle::inner_mean(int j, int i, int m, ObsRef x) const {
    if (mode_ == Mode::exact) {
        const auto& q = fam_.poly->q[static_cast<std::size_t>(j)];
        const auto muM =
            marg_->models[static_cast<std::size_t>(mclass_[static_cast<std::size_t>(m)])]
                .raw_moments(q.deg_y());
        return fam_.core->w(i, m) * q.integrate_y(muM).eval(x[0]);
    }
    if (fam_.core) {
        const auto& core = *fam_.core;
        double v = core.w(i, m) * q_mean(j, i, m, x);
        if (core.has_additive())
            v += core.scale(i) * core.gamma(j, fam_.kclass(i), x) +
                 core.scale(m) * gamma_mean(j, fam_.kclass(m));
        return v;
    }
    return generic_inner(j, i, m, x);
}

double ProjectionOracle::double_mean(int j, int i, int m) const {
    if (mode_ == Mode::exact) {
        const auto& q = fam_.poly->q[static_cast<std::size_t>(j)];
        const auto muI =
            marg_->models[static_cast<std::size_t>(mclass_[static_cast<std::size_t>(i)])]
                .raw_moments(q.deg_x());
        const auto muM =
            marg_->models[static_cast<std::size_t>(mclass_[static_cast<std::size_t>(m)])]
                .raw_moments(q.deg_y());
        return fam_.core->w(i, m) * q.integrate_xy(muI, muM);
    }
    if (fam_.core) {
        const auto& core = *fam_.core;
        double v = core.w(i, m) * q_mean2(j, i, m);
        if (core.has_additive())
            v += core.scale(i) * gamma_mean(j, fam_.kclass(i)) +
                 core.scale(m) * gamma_mean(j, fam_.kclass(m));
        return v;
    }
    const auto key = pack(kTagDm, static_cast<std::uint64_t>(j), 0, static_cast<std::uint64_t>(i),
                          static_cast<std::uint64_t>(m));
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = scalar_cache_.find(key);
        if (it != scalar_cache_.end()) return it->second;
    }
    const auto& a = class_nodes(mclass_[static_cast<std::size_t>(i)], 0);
    const auto& b = class_nodes(mclass_[static_cast<std::size_t>(m)], 1);
    double acc = 0.0;
    for (std::size_t s = 0; s < a.size(); ++s) acc += fam_.eval(j, i, m, a[s], b[s]);
    acc /= static_cast<double>(a.size());
    std::lock_guard<std::mutex> lock(mu_);
    scalar_cache_[key] = acc;
    return acc;
}

double ProjectionOracle::pi1(int j, int i, ObsRef x) const {
    if (mode_ == Mode::exact) {
        const auto& q = fam_.poly->q[static_cast<std::size_t>(j)];
        double acc = 0.0;
        for (int c = 0; c < num_mclass_; ++c) {
            const double wsum = row_class_w_(i, c);  // kernel class is 0 for poly families
            if (wsum == 0.0) continue;
            const auto muC = marg_->models[static_cast<std::size_t>(c)].raw_moments(
                std::max(q.deg_x(), q.deg_y()));
            const auto muI =
                marg_->models[static_cast<std::size_t>(mclass_[static_cast<std::size_t>(i)])]
                    .raw_moments(std::max(q.deg_x(), q.deg_y()));
            const Poly1 inner = q.integrate_y(muC);
            acc += wsum * (inner.eval(x[0]) - inner.moment_integral(muI));
        }
        return acc;
    }
    if (fam_.core) {
        const auto& core = *fam_.core;
        double acc = 0.0;
        if (core.has_additive())
            acc += (fam_.n - 1) * core.scale(i) *
                   (core.gamma(j, fam_.kclass(i), x) - gamma_mean(j, fam_.kclass(i)));
        if (!core.q_degenerate) {
            // group m != i by (kernel class, marginal class)
            for (int kc = 0; kc < fam_.num_classes(); ++kc)
                for (int mc = 0; mc < num_mclass_; ++mc) {
                    const double wsum = row_class_w_(i, kc * num_mclass_ + mc);
                    if (wsum == 0.0) continue;
                    int rep = -1;
                    for (int m = 0; m < fam_.n; ++m)
                        if (m != i && fam_.kclass(m) == kc &&
                            mclass_[static_cast<std::size_t>(m)] == mc) {
                            rep = m;
                            break;
                        }
                    if (rep < 0) continue;
                    acc += wsum * (q_mean(j, i, rep, x) - q_mean2(j, i, rep));
                }
        }
        if (!is_finite(acc)) throw NumericalError("divergent pi1 value");
        return acc;
    }
    double acc = 0.0;
    for (int m = 0; m < fam_.n; ++m) {
        if (m == i) continue;
        acc += generic_inner(j, i, m, x) - double_mean(j, i, m);
    }
    return acc;
}

double ProjectionOracle::pi2(int j, int i, int m, ObsRef x, ObsRef y) const {
    if (i == m) throw UsageError("pi2 requires i != m (diagonals belong to the V form)");
    return fam_.eval(j, i, m, x, y) - inner_mean(j, i, m, x) - inner_mean(j, m, i, y) +
           double_mean(j, i, m);
}

double ProjectionOracle::mean_diag(int j, int i) const {
    const int mc = mclass_[static_cast<std::size_t>(i)];
    if (mode_ == Mode::exact) {
        const auto& q = fam_.poly->q[static_cast<std::size_t>(j)];
        require(fam_.core->w_has_diagonal, "V form needs diagonal weights");
        const Poly1 d = q.diagonal();
        const auto mu = marg_->models[static_cast<std::size_t>(mc)].raw_moments(d.degree());
        return fam_.core->w(i, i) * d.moment_integral(mu);
    }
    const auto key =
        pack(kTagDiagM, static_cast<std::uint64_t>(j), 0, static_cast<std::uint64_t>(i), 0);
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = scalar_cache_.find(key);
        if (it != scalar_cache_.end()) return it->second;
    }
    const auto& nodes = class_nodes(mc, 0);
    double acc = 0.0;
    for (const auto& v : nodes) acc += fam_.diag(j, i, v);
    acc /= static_cast<double>(nodes.size());
    std::lock_guard<std::mutex> lock(mu_);
    scalar_cache_[key] = acc;
    return acc;
}

double ProjectionOracle::pi1_v(int j, int i, ObsRef x) const {
    if (!fam_.has_diag()) throw UsageError("pi1_v needs diagonal kernel values (diag_eval)");
    return pi1(j, i, x) + 0.5 * (fam_.diag(j, i, x) - mean_diag(j, i));
}

double ProjectionOracle::contract(int j, int k, int i, int m, int l, ObsRef ym, ObsRef yl) const {
    if (m == i || l == i) throw UsageError("contract requires m != i and l != i");
    if (mode_ == Mode::exact) {
        const auto& qj = fam_.poly->q[static_cast<std::size_t>(j)];
        const auto& qk = fam_.poly->q[static_cast<std::size_t>(k)];
        // psi_j(x, ym) as polynomial in x, coefficients evaluated at ym
        auto coeffs = [](const Poly2& q, double y) {
            std::vector<double> c(static_cast<std::size_t>(q.deg_x()) + 1, 0.0);
            for (Eigen::Index a = 0; a < q.m.rows(); ++a) {
                double row = 0.0;
                for (Eigen::Index b = q.m.cols(); b-- > 0;) row = row * y + q.m(a, b);
                c[static_cast<std::size_t>(a)] = row;
            }
            return c;
        };
        const auto cj = coeffs(qj, ym[0]);
        const auto ck = coeffs(qk, yl[0]);
        const auto mu =
            marg_->models[static_cast<std::size_t>(mclass_[static_cast<std::size_t>(i)])]
                .raw_moments(qj.deg_x() + qk.deg_x());
        double acc = 0.0;
        for (std::size_t a = 0; a < cj.size(); ++a)
            for (std::size_t b = 0; b < ck.size(); ++b) acc += cj[a] * ck[b] * mu[a + b];
        return fam_.core->w(i, m) * fam_.core->w(i, l) * acc;
    }
    const auto& nodes = class_nodes(mclass_[static_cast<std::size_t>(i)], 0);
    double acc = 0.0;
    for (const auto& x : nodes) acc += fam_.eval(j, i, m, x, ym) * fam_.eval(k, i, l, x, yl);
    acc /= static_cast<double>(nodes.size());
    if (!is_finite(acc)) throw NumericalError("divergent contraction integral");
    return acc;
}

double ProjectionOracle::cov_pi1(int j, int k, int i) const {
    if (mode_ == Mode::exact) {
        const auto& qj = fam_.poly->q[static_cast<std::size_t>(j)];
        const auto& qk = fam_.poly->q[static_cast<std::size_t>(k)];
        const int maxdeg = std::max(qj.deg_x(), qj.deg_y()) + std::max(qk.deg_x(), qk.deg_y());
        const auto muI =
            marg_->models[static_cast<std::size_t>(mclass_[static_cast<std::size_t>(i)])]
                .raw_moments(maxdeg);
        auto centered_pi1 = [&](const Poly2& q) {
            Poly1 total;
            for (int c = 0; c < num_mclass_; ++c) {
                const double wsum = row_class_w_(i, c);
                if (wsum == 0.0) continue;
                const auto muC =
                    marg_->models[static_cast<std::size_t>(c)].raw_moments(q.deg_y());
                Poly1 inner = q.integrate_y(muC);
                inner = inner - Poly1::constant(inner.moment_integral(muI));
                total += inner * wsum;
            }
            return total;
        };
        const Poly1 pj = centered_pi1(qj), pk = centered_pi1(qk);
        return (pj * pk).moment_integral(muI);
    }
    const auto& core = fam_.core;
    if (core && core->q_degenerate) {
        // pi1 reduces to (n-1) s_i gamma_j
        if (!core->has_additive()) return 0.0;
        const int kc = fam_.kclass(i);
        const int mc = mclass_[static_cast<std::size_t>(i)];
        const auto key = pack(kTagCovG, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(k),
                              static_cast<std::uint64_t>(kc), static_cast<std::uint64_t>(mc));
        double egg;
        bool found = false;
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = scalar_cache_.find(key);
            if (it != scalar_cache_.end()) { egg = it->second; found = true; }
        }
        if (!found) {
            const auto& nodes = class_nodes(mc, 0);
            double acc = 0.0;
            for (const auto& x : nodes) acc += core->gamma(j, kc, x) * core->gamma(k, kc, x);
            egg = acc / static_cast<double>(nodes.size());
            std::lock_guard<std::mutex> lock(mu_);
            scalar_cache_[key] = egg;
        }
        return sq(static_cast<double>(fam_.n - 1) * core->scale(i)) * egg;
    }
    // node estimate of E[pi1_j pi1_k] (pi1 is centered)
    const auto key = pack(kTagCovP1, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(k),
                          static_cast<std::uint64_t>(i), 0);
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = scalar_cache_.find(key);
        if (it != scalar_cache_.end()) return it->second;
    }
    const auto& nodes = class_nodes(mclass_[static_cast<std::size_t>(i)], 1);
    double acc = 0.0, accj = 0.0, acck = 0.0;
    for (const auto& x : nodes) {
        const double a = pi1(j, i, x);
        const double b = (k == j) ? a : pi1(k, i, x);
        acc += a * b;
        accj += a;
        acck += b;
    }
    const double s = static_cast<double>(nodes.size());
    const double val = acc / s - (accj / s) * (acck / s);
    std::lock_guard<std::mutex> lock(mu_);
    scalar_cache_[key] = val;
    return val;
}

double ProjectionOracle::cov_pi2(int j, int k, int i, int m) const {
    if (i == m) throw UsageError("cov_pi2 requires i != m");
    if (mode_ == Mode::exact) {
        const auto& qj = fam_.poly->q[static_cast<std::size_t>(j)];
        const auto& qk = fam_.poly->q[static_cast<std::size_t>(k)];
        const int mi = mclass_[static_cast<std::size_t>(i)], mm = mclass_[static_cast<std::size_t>(m)];
        const int maxd = qj.deg_x() + qk.deg_x() + qj.deg_y() + qk.deg_y();
        const auto muI = marg_->models[static_cast<std::size_t>(mi)].raw_moments(maxd);
        const auto muM = marg_->models[static_cast<std::size_t>(mm)].raw_moments(maxd);
        auto pi2_poly = [&](const Poly2& q) {
            const Poly1 iy = q.integrate_y(muM);
            const Poly1 ix = q.integrate_x(muI);
            const double both = q.integrate_xy(muI, muM);
            return q - Poly2::from_x(iy) - Poly2::from_y(ix) + Poly2::from_x(Poly1::constant(both));
        };
        const Poly2 a = pi2_poly(qj), b = pi2_poly(qk);
        return fam_.core->w(i, m) * fam_.core->w(i, m) * (a * b).integrate_xy(muI, muM);
    }
    const auto& core = fam_.core;
    if (core) {
        const int kci = fam_.kclass(i), kcm = fam_.kclass(m);
        const int mci = mclass_[static_cast<std::size_t>(i)], mcm = mclass_[static_cast<std::size_t>(m)];
        const auto key = pack(kTagCovQ2, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(k),
                              static_cast<std::uint64_t>(kci * fam_.num_classes() + kcm),
                              static_cast<std::uint64_t>(mci * num_mclass_ + mcm));
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = scalar_cache_.find(key);
            if (it != scalar_cache_.end()) return sq(core->w(i, m)) * it->second;
        }
        const auto& a = class_nodes(mci, 0);
        const auto& b = class_nodes(mcm, 1);
        auto centered_q = [&](int jj, ObsRef x, ObsRef y) {
            double v = core->q(jj, kci, kcm, x, y);
            if (!core->q_degenerate)
                // P_i q(., y) = q_mean with the argument roles swapped (symmetry)
                v += -q_mean(jj, i, m, x) - q_mean(jj, m, i, y) + q_mean2(jj, i, m);
            return v;
        };
        // node-fallback q_mean inside the loop is quadratic; cap pairs there
        const bool slow_inner = !core->q_degenerate && !core->q_mean;
        const std::size_t cap = slow_inner ? std::min<std::size_t>(a.size(), 512) : a.size();
        double acc = 0.0;
        for (std::size_t s = 0; s < cap; ++s) {
            const double va = centered_q(j, a[s], b[s]);
            const double vb = (k == j) ? va : centered_q(k, a[s], b[s]);
            acc += va * vb;
        }
        const double val = acc / static_cast<double>(cap);
        {
            std::lock_guard<std::mutex> lock(mu_);
            scalar_cache_[key] = val;
        }
        return sq(core->w(i, m)) * val;
    }
    // generic: paired nodes, full pi2 per node (small-n paths only)
    const auto key = pack(kTagCovP2, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(k),
                          static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(m));
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = scalar_cache_.find(key);
        if (it != scalar_cache_.end()) return it->second;
    }
    const auto& a = class_nodes(mclass_[static_cast<std::size_t>(i)], 0);
    const auto& b = class_nodes(mclass_[static_cast<std::size_t>(m)], 1);
    const std::size_t cap = std::min<std::size_t>(a.size(), 512);
    double acc = 0.0;
    for (std::size_t s = 0; s < cap; ++s) {
        const double va = pi2(j, i, m, a[s], b[s]);
        const double vb = (k == j) ? va : pi2(k, i, m, a[s], b[s]);
        acc += va * vb;
    }
    const double val = acc / static_cast<double>(cap);
    std::lock_guard<std::mutex> lock(mu_);
    scalar_cache_[key] = val;
    return val;
}

double ProjectionOracle::cov_pi1v(int j, int k, int i) const {
    if (!fam_.has_diag()) throw UsageError("cov_pi1v needs diagonal kernel values");
    if (mode_ == Mode::exact) {
        const auto& qj = fam_.poly->q[static_cast<std::size_t>(j)];
        const auto& qk = fam_.poly->q[static_cast<std::size_t>(k)];
        const int mi = mclass_[static_cast<std::size_t>(i)];
        const int maxd = 2 * std::max({qj.deg_x() + qj.deg_y(), qk.deg_x() + qk.deg_y()});
        const auto muI = marg_->models[static_cast<std::size_t>(mi)].raw_moments(maxd);
        auto pi1v_poly = [&](const Poly2& q) {
            Poly1 total;
            for (int c = 0; c < num_mclass_; ++c) {
                const double wsum = row_class_w_(i, c);
                if (wsum == 0.0) continue;
                const auto muC = marg_->models[static_cast<std::size_t>(c)].raw_moments(q.deg_y());
                Poly1 inner = q.integrate_y(muC);
                inner = inner - Poly1::constant(inner.moment_integral(muI));
                total += inner * wsum;
            }
            Poly1 d = q.diagonal() * fam_.core->w(i, i);
            d = d - Poly1::constant(d.moment_integral(muI));
            total += d * 0.5;
            return total;
        };
        const Poly1 pj = pi1v_poly(qj), pk = pi1v_poly(qk);
        return (pj * pk).moment_integral(muI);
    }
    const auto key = pack(kTagCovP1V, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(k),
                          static_cast<std::uint64_t>(i), 0);
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = scalar_cache_.find(key);
        if (it != scalar_cache_.end()) return it->second;
    }
    const auto& nodes = class_nodes(mclass_[static_cast<std::size_t>(i)], 1);
    double acc = 0.0, accj = 0.0, acck = 0.0;
    for (const auto& x : nodes) {
        const double a = pi1_v(j, i, x);
        const double b = (k == j) ? a : pi1_v(k, i, x);
        acc += a * b;
        accj += a;
        acck += b;
    }
    const double s = static_cast<double>(nodes.size());
    const double val = acc / s - (accj / s) * (acck / s);
    std::lock_guard<std::mutex> lock(mu_);
    scalar_cache_[key] = val;
    return val;
}

double ProjectionOracle::mean_j2(int j) const {
    double acc = 0.0;
    for (int i = 0; i < fam_.n; ++i)
        for (int m = i + 1; m < fam_.n; ++m) acc += double_mean(j, i, m);
    return acc;
}

double ProjectionOracle::mean_j2v(int j) const {
    if (!fam_.has_diag()) throw UsageError("mean_j2v needs diagonal kernel values");
    double acc = 2.0 * mean_j2(j);
    for (int i = 0; i < fam_.n; ++i) acc += mean_diag(j, i);
    return acc;
}

double ProjectionOracle::sigma(int j, Form form) const {
    double var = 0.0;
    for (int i = 0; i < fam_.n; ++i)
        var += (form == Form::U) ? cov_pi1(j, j, i) : cov_pi1v(j, j, i);
    for (int i = 0; i < fam_.n; ++i)
        for (int m = i + 1; m < fam_.n; ++m) var += cov_pi2(j, j, i, m);
    if (form == Form::V) var *= 4.0;
    if (!(var > 0.0) || !is_finite(var))
        throw DegeneracyError("sigma_j vanished for j=" + std::to_string(j));
    return std::sqrt(var);
}

ReconstructResult ProjectionOracle::reconstruct_core(const IndexedSample& sample, int j,
                                                     Form form) const {
    require(sample.n() == fam_.n, "sample size does not match kernel family");
    ReconstructResult out;
    const int n = fam_.n;
    double lin = 0.0;
    for (int i = 0; i < n; ++i)
        lin += (form == Form::U) ? pi1(j, i, sample[i]) : 2.0 * pi1_v(j, i, sample[i]);
    double quad = 0.0;
    for (int i = 0; i < n; ++i)
        for (int m = i + 1; m < n; ++m) quad += pi2(j, i, m, sample[i], sample[m]);
    if (form == Form::V) quad *= 2.0;

    double stat = 0.0;
    for (int i = 0; i < n; ++i)
        for (int m = i + 1; m < n; ++m) stat += fam_.eval(j, i, m, sample[i], sample[m]);
    double mean;
    if (form == Form::U) {
        mean = mean_j2(j);
    } else {
        stat *= 2.0;
        for (int i = 0; i < n; ++i) stat += fam_.diag(j, i, sample[i]);
        mean = mean_j2v(j);
    }
    out.linear_part = lin;
    out.quadratic_part = quad;
    out.residual = (stat - mean) - (lin + quad);
    return out;
}

ReconstructResult ProjectionOracle::reconstruct(const IndexedSample& sample, int j,
                                                Form form) const {
    ReconstructResult out = reconstruct_core(sample, j, form);
    if (mode_ == Mode::mc) {
        // spread estimate: recompute with two half-budget node sets
        Options half = opts_;
        half.budget = std::max(100, opts_.budget / 2);
        half.seed = opts_.seed * 2 + 1;
        ProjectionOracle o1(fam_, marg_, half);
        half.seed = opts_.seed * 2 + 2;
        ProjectionOracle o2(fam_, marg_, half);
        const double r1 = o1.reconstruct_core(sample, j, form).residual;
        const double r2 = o2.reconstruct_core(sample, j, form).residual;
        out.residual_se = 0.5 * std::abs(r1 - r2) + 1e-15;
    }
    return out;
}

}  // namespace ustat
