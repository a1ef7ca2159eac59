#include "ustat/statistics.hpp"

#include <cmath>

namespace ustat {

namespace {
constexpr std::int64_t kPairChunk = 4096;

void check_finite(double v, int j, int i, int m) {
    if (!is_finite(v))
        throw NumericalError("non-finite kernel value at (j=" + std::to_string(j) +
                             ",i=" + std::to_string(i) + ",m=" + std::to_string(m) + ")");
}

// pair index -> (i, m), lexicographic over i < m
std::pair<int, int> unrank_pair(std::int64_t t, int n) {
    // row lengths n-1, n-2, ...
    int i = 0;
    std::int64_t left = t;
    while (left >= n - 1 - i) {
        left -= n - 1 - i;
        ++i;
    }
    return {i, i + 1 + static_cast<int>(left)};
}

}  // namespace

double j2(const IndexedSample& sample, const KernelFamily& kernels, int j) {
    const int n = sample.n();
    require(n >= 2, "J2 needs n >= 2");
    const std::int64_t pairs = static_cast<std::int64_t>(n) * (n - 1) / 2;
    return ordered_chunk_sum(pairs, kPairChunk, [&](std::int64_t t) {
        const auto [i, m] = unrank_pair(t, n);
        const double v = kernels.eval(j, i, m, sample[i], sample[m]);
        check_finite(v, j, i, m);
        return v;
    });
}

Eigen::VectorXd j2_all(const IndexedSample& sample, const KernelFamily& kernels) {
    const int n = sample.n();
    require(n >= 2, "J2 needs n >= 2");
    Eigen::VectorXd total = Eigen::VectorXd::Zero(kernels.p);
    Eigen::VectorXd part = Eigen::VectorXd::Zero(kernels.p);
    std::vector<double> buf(static_cast<std::size_t>(kernels.p));
    const std::int64_t pairs = static_cast<std::int64_t>(n) * (n - 1) / 2;
    std::int64_t in_chunk = 0;
    for (std::int64_t t = 0; t < pairs; ++t) {
        const auto [i, m] = unrank_pair(t, n);
        kernels.eval_all(i, m, sample[i], sample[m], buf.data());
        for (int j = 0; j < kernels.p; ++j) {
            check_finite(buf[static_cast<std::size_t>(j)], j, i, m);
            part[j] += buf[static_cast<std::size_t>(j)];
        }
        if (++in_chunk == kPairChunk || t + 1 == pairs) {
            total += part;
            part.setZero();
            in_chunk = 0;
        }
    }
    return total;
}

double j2_v(const IndexedSample& sample, const KernelFamily& kernels, int j) {
    if (!kernels.has_diag())
        throw UsageError("j2_v needs diagonal kernel values (diag_eval)");
    double acc = 2.0 * j2(sample, kernels, j);
    for (int i = 0; i < sample.n(); ++i) {
        const double v = kernels.diag(j, i, sample[i]);
        check_finite(v, j, i, i);
        acc += v;
    }
    return acc;
}

Eigen::VectorXd j2_v_all(const IndexedSample& sample, const KernelFamily& kernels) {
    Eigen::VectorXd out = 2.0 * j2_all(sample, kernels);
    for (int j = 0; j < kernels.p; ++j)
        for (int i = 0; i < sample.n(); ++i) out[j] += kernels.diag(j, i, sample[i]);
    return out;
}

double j_r(const IndexedSample& sample, const OrderRKernels& kernels, int j) {
    const int n = sample.n();
    const int r = kernels.r;
    if (r > 3) throw UsageError("j_r supports r <= 3 (audit scale)");
    require(r >= 1 && r <= n, "j_r needs 1 <= r <= n");
    double total = 0.0;
    std::vector<int> idx(static_cast<std::size_t>(r));
    std::vector<const Obs*> xs(static_cast<std::size_t>(r));
    if (r == 1) {
        for (int i = 0; i < n; ++i) {
            idx[0] = i;
            xs[0] = &sample[i];
            total += kernels.eval(j, idx, xs);
        }
    } else if (r == 2) {
        for (int i = 0; i < n; ++i)
            for (int m = i + 1; m < n; ++m) {
                idx[0] = i;
                idx[1] = m;
                xs[0] = &sample[i];
                xs[1] = &sample[m];
                total += kernels.eval(j, idx, xs);
            }
    } else {
        for (int i = 0; i < n; ++i)
            for (int m = i + 1; m < n; ++m)
                for (int l = m + 1; l < n; ++l) {
                    idx[0] = i;
                    idx[1] = m;
                    idx[2] = l;
                    xs[0] = &sample[i];
                    xs[1] = &sample[m];
                    xs[2] = &sample[l];
                    total += kernels.eval(j, idx, xs);
                }
    }
    return total;
}

StatVector compute_w(const IndexedSample& sample, const KernelFamily& kernels,
                     const ProjectionOracle& oracle, const ComputeWOptions& opts) {
    StatVector out;
    out.form = opts.form;
    const int p = kernels.p;
    out.w.resize(p);
    out.sigma.resize(p);
    const Eigen::VectorXd stat =
        (opts.form == Form::U) ? j2_all(sample, kernels) : j2_v_all(sample, kernels);
    for (int j = 0; j < p; ++j) {
        const double mean = (opts.form == Form::U) ? oracle.mean_j2(j) : oracle.mean_j2v(j);
        out.w[j] = stat[j] - mean;
    }
    if (opts.sigma_source == SigmaSource::hoeffding_formula) {
        for (int j = 0; j < p; ++j) out.sigma[j] = oracle.sigma(j, opts.form);
    } else {
        require(opts.replication_w != nullptr && opts.replication_w->rows() >= 2,
                "replication sigma needs draws of W");
        const auto& draws = *opts.replication_w;
        require(draws.cols() == p, "replication draws have wrong width");
        for (int j = 0; j < p; ++j) {
            const double mean = draws.col(j).mean();
            const double var =
                (draws.col(j).array() - mean).square().sum() / (draws.rows() - 1.0);
            out.sigma[j] = std::sqrt(var);
        }
    }
    const double scale = out.w.cwiseAbs().maxCoeff() + 1.0;
    for (int j = 0; j < p; ++j)
        if (!(out.sigma[j] > 1e-14 * scale))
            throw DegeneracyError("sigma_" + std::to_string(j) + " is numerically zero");
    return out;
}

ExchangeablePairDraw sample_exchangeable_pair(const IndexedSample& sample,
                                              const KernelFamily& kernels,
                                              const ProjectionOracle& oracle, std::uint64_t seed,
                                              std::uint64_t draw_id) {
    const int n = sample.n();
    const int p = kernels.p;
    ExchangeablePairDraw out;
    CounterRng pick(seed, Stream::pair_alpha, draw_id);
    out.alpha = static_cast<int>(pick.next_below(static_cast<std::uint64_t>(n)));
    CounterRng copy(seed, Stream::pair_copy, draw_id, static_cast<std::uint64_t>(out.alpha));
    out.x_star = sample.model(out.alpha).sample(copy);

    out.d1.resize(p);
    out.d2.resize(p);
    out.g.resize(p);
    const int a = out.alpha;
    for (int j = 0; j < p; ++j) {
        out.d1[j] = oracle.pi1(j, a, out.x_star) - oracle.pi1(j, a, sample[a]);
        double d2 = 0.0;
        for (int m = 0; m < n; ++m) {
            if (m == a) continue;
            d2 += oracle.pi2(j, a, m, out.x_star, sample[m]) -
                  oracle.pi2(j, a, m, sample[a], sample[m]);
        }
        out.d2[j] = d2;
        out.g[j] = n * out.d1[j] + 0.5 * n * out.d2[j];
    }
    return out;
}

DriftReport verify_drift(const IndexedSample& sample, const KernelFamily& kernels,
                         const ProjectionOracle& oracle, int draws, std::uint64_t seed) {
    require(draws >= 1000, "drift check needs draws >= 1e3");
    const int p = kernels.p;
    Eigen::VectorXd w(p);
    {
        const Eigen::VectorXd stat = j2_all(sample, kernels);
        for (int j = 0; j < p; ++j) w[j] = stat[j] - oracle.mean_j2(j);
    }
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(p);
    for (int d = 0; d < draws; ++d) {
        const auto pair = sample_exchangeable_pair(sample, kernels, oracle, seed,
                                                   static_cast<std::uint64_t>(d));
        for (int j = 0; j < p; ++j) {
            const double delta = pair.g[j] - mean[j];
            mean[j] += delta / (d + 1);
            m2[j] += delta * (pair.g[j] - mean[j]);
        }
    }
    DriftReport rep;
    rep.deviation.resize(p);
    rep.se.resize(p);
    for (int j = 0; j < p; ++j) {
        rep.deviation[j] = std::abs(mean[j] + w[j]);
        rep.se[j] = std::sqrt(m2[j] / (draws - 1.0) / draws) + 1e-300;
    }
    rep.max_ratio = (rep.deviation.array() / rep.se.array()).maxCoeff();
    return rep;
}

SecondMomentReport verify_second_moment_identity(
    const std::function<IndexedSample(int rep)>& sampler, const KernelFamily& kernels,
    const ProjectionOracle& oracle, int reps, std::uint64_t seed) {
    require(reps >= 1000, "second-moment check needs reps >= 1e3");
    const int p = kernels.p;
    Eigen::MatrixXd mean_gd = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd mean_ww = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd m2_diff = Eigen::MatrixXd::Zero(p, p);
    for (int r = 0; r < reps; ++r) {
        const IndexedSample sample = sampler(r);
        Eigen::VectorXd w(p);
        const Eigen::VectorXd stat = j2_all(sample, kernels);
        for (int j = 0; j < p; ++j) w[j] = stat[j] - oracle.mean_j2(j);
        const auto pair = sample_exchangeable_pair(sample, kernels, oracle,
                                                   seed ^ 0x5ca1ab1eull,
                                                   static_cast<std::uint64_t>(r));
        const Eigen::VectorXd d = pair.d1 + pair.d2;
        for (int j = 0; j < p; ++j)
            for (int k = 0; k < p; ++k) {
                const double gd = 0.5 * pair.g[j] * d[k];
                const double ww = w[j] * w[k];
                const double diff = gd - ww;
                const double delta = diff - (mean_gd(j, k) - mean_ww(j, k));
                mean_gd(j, k) += (gd - mean_gd(j, k)) / (r + 1);
                mean_ww(j, k) += (ww - mean_ww(j, k)) / (r + 1);
                m2_diff(j, k) += delta * (diff - (mean_gd(j, k) - mean_ww(j, k)));
            }
    }
    SecondMomentReport rep;
    rep.lhs = mean_gd;
    rep.rhs = mean_ww;
    rep.se = (m2_diff / (reps - 1.0) / reps).cwiseSqrt().array() + 1e-300;
    rep.max_ratio = ((mean_gd - mean_ww).cwiseAbs().array() / rep.se.array()).maxCoeff();
    return rep;
}

}  // namespace ustat
