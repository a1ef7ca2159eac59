#include "ustat/marginals.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace ustat {

namespace {

std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
    return detail::mix64(h ^ detail::mix64(v));
}

std::uint64_t hash_double(double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    return bits;
}

// E[X^k] for X ~ N(mean, sd^2), via the binomial expansion over central moments.
double normal_raw_moment(double mean, double sd, int k) {
    // central moments: 0 for odd, sd^j (j-1)!! for even
    double acc = 0.0;
    double binom = 1.0;
    for (int j = 0; j <= k; ++j) {
        if (j % 2 == 0) {
            double central = 1.0;
            for (int t = j - 1; t >= 1; t -= 2) central *= t;
            central *= std::pow(sd, j);
            acc += binom * central * std::pow(mean, k - j);
        }
        binom = binom * (k - j) / (j + 1);
    }
    return acc;
}

}  // namespace

ScalarDist ScalarDist::normal(double mean, double sd) {
    ScalarDist d;
    d.kind = DistKind::normal;
    d.p1 = mean;
    d.p2 = sd;
    d.validate();
    return d;
}

ScalarDist ScalarDist::uniform(double a, double b) {
    ScalarDist d;
    d.kind = DistKind::uniform;
    d.p1 = a;
    d.p2 = b;
    d.validate();
    return d;
}

ScalarDist ScalarDist::bernoulli(double q) {
    ScalarDist d;
    d.kind = DistKind::bernoulli;
    d.p1 = q;
    d.validate();
    return d;
}

ScalarDist ScalarDist::mixture(std::vector<double> weights, std::vector<ScalarDist> components) {
    ScalarDist d;
    d.kind = DistKind::mixture;
    d.weights = std::move(weights);
    d.components = std::move(components);
    d.validate();
    return d;
}

void ScalarDist::validate() const {
    switch (kind) {
        case DistKind::normal:
            require(is_finite(p1) && is_finite(p2) && p2 > 0.0, "normal requires sd > 0");
            break;
        case DistKind::uniform:
            require(is_finite(p1) && is_finite(p2) && p1 < p2, "uniform requires a < b");
            break;
        case DistKind::bernoulli:
            require(p1 >= 0.0 && p1 <= 1.0, "bernoulli requires 0 <= q <= 1");
            break;
        case DistKind::mixture: {
            require(!components.empty() && weights.size() == components.size(),
                    "mixture requires matching weights/components");
            double total = 0.0;
            for (double w : weights) {
                require(w >= 0.0, "mixture weights must be nonnegative");
                total += w;
            }
            require(std::abs(total - 1.0) <= 1e-12, "mixture weights must sum to 1");
            for (const auto& c : components) c.validate();
            break;
        }
    }
}

double ScalarDist::sample(CounterRng& rng) const {
    switch (kind) {
        case DistKind::normal:
            return p1 + p2 * rng.next_normal();
        case DistKind::uniform:
            return rng.next_uniform(p1, p2);
        case DistKind::bernoulli:
            return rng.next_unit() < p1 ? 1.0 : 0.0;
        case DistKind::mixture: {
            const double u = rng.next_unit();
            double acc = 0.0;
            for (std::size_t c = 0; c < weights.size(); ++c) {
                acc += weights[c];
                if (u <= acc || c + 1 == weights.size()) return components[c].sample(rng);
            }
            return components.back().sample(rng);
        }
    }
    return 0.0;
}

double ScalarDist::raw_moment(int order) const {
    if (order == 0) return 1.0;
    switch (kind) {
        case DistKind::normal:
            return normal_raw_moment(p1, p2, order);
        case DistKind::uniform: {
            // (b^{k+1} - a^{k+1}) / ((k+1)(b-a))
            const int k = order;
            return (std::pow(p2, k + 1) - std::pow(p1, k + 1)) / ((k + 1) * (p2 - p1));
        }
        case DistKind::bernoulli:
            return p1;
        case DistKind::mixture: {
            double acc = 0.0;
            for (std::size_t c = 0; c < weights.size(); ++c)
                acc += weights[c] * components[c].raw_moment(order);
            return acc;
        }
    }
    return 0.0;
}

bool ScalarDist::in_support(double v) const {
    switch (kind) {
        case DistKind::normal:
            return is_finite(v);
        case DistKind::uniform:
            return v >= p1 && v <= p2;
        case DistKind::bernoulli:
            return v == 0.0 || v == 1.0;
        case DistKind::mixture:
            for (const auto& c : components)
                if (c.in_support(v)) return true;
            return false;
    }
    return false;
}

std::uint64_t ScalarDist::structural_hash() const {
    std::uint64_t h = hash_combine(0x5d15, static_cast<std::uint64_t>(kind));
    h = hash_combine(h, hash_double(p1));
    h = hash_combine(h, hash_double(p2));
    for (std::size_t c = 0; c < components.size(); ++c) {
        h = hash_combine(h, hash_double(weights[c]));
        h = hash_combine(h, components[c].structural_hash());
    }
    return h;
}

MarginalModel MarginalModel::scalar(int index, ScalarDist dist) {
    MarginalModel m;
    m.index = index;
    m.components = {std::move(dist)};
    m.exact_moments = m.raw_moments(8);
    return m;
}

MarginalModel MarginalModel::scalar_with_moments(int index, ScalarDist dist,
                                                 std::vector<double> moments) {
    MarginalModel m = scalar(index, std::move(dist));
    require(moments.size() <= 9, "exact_moments covers orders 0..8");
    for (std::size_t k = 0; k < moments.size(); ++k) {
        const double analytic = m.raw_moment(static_cast<int>(k));
        require(std::abs(moments[k] - analytic) <= 1e-9 * (1.0 + std::abs(analytic)),
                "supplied moment of order " + std::to_string(k) +
                    " does not match the distribution");
    }
    // Monte Carlo cross-check of the analytic table itself.
    CounterRng rng(m.components[0].structural_hash(), Stream::moments);
    const int budget = 4000;
    std::vector<double> draws(budget);
    for (auto& d : draws) d = m.components[0].sample(rng);
    for (std::size_t k = 1; k < moments.size(); ++k) {
        std::vector<double> pw(draws.size());
        for (std::size_t s = 0; s < draws.size(); ++s)
            pw[s] = std::pow(draws[s], static_cast<double>(k));
        const auto est = mean_se(pw);
        const double tol = 8.0 * est.se + 1e-9 * (1.0 + std::abs(moments[k]));
        require(std::abs(est.value - moments[k]) <= tol,
                "moment cross-check failed at order " + std::to_string(k));
    }
    m.exact_moments = std::move(moments);
    return m;
}

MarginalModel MarginalModel::vector(int index, std::vector<ScalarDist> components,
                                    std::optional<Eigen::MatrixXd> mixing) {
    MarginalModel m;
    m.index = index;
    m.components = std::move(components);
    if (mixing) {
        require(mixing->cols() == static_cast<Eigen::Index>(m.components.size()),
                "mixing matrix columns must match component count");
        m.mixing = std::move(mixing);
    }
    for (const auto& c : m.components) c.validate();
    return m;
}

double MarginalModel::raw_moment(int order) const {
    require(is_scalar(), "raw moments are defined for scalar marginals only");
    if (exact_moments && order < static_cast<int>(exact_moments->size()))
        return (*exact_moments)[static_cast<std::size_t>(order)];
    return components[0].raw_moment(order);
}

std::vector<double> MarginalModel::raw_moments(int order) const {
    std::vector<double> mu(static_cast<std::size_t>(order) + 1);
    for (int k = 0; k <= order; ++k) mu[static_cast<std::size_t>(k)] = raw_moment(k);
    return mu;
}

Obs MarginalModel::sample(CounterRng& rng) const {
    Obs xi(static_cast<Eigen::Index>(components.size()));
    for (std::size_t c = 0; c < components.size(); ++c)
        xi[static_cast<Eigen::Index>(c)] = components[c].sample(rng);
    if (mixing) return (*mixing) * xi;
    return xi;
}

bool MarginalModel::in_support(ObsRef v) const {
    if (mixing) return v.allFinite();
    if (v.size() != static_cast<Eigen::Index>(components.size())) return false;
    for (std::size_t c = 0; c < components.size(); ++c)
        if (!components[c].in_support(v[static_cast<Eigen::Index>(c)])) return false;
    return true;
}

std::uint64_t MarginalModel::structural_hash() const {
    std::uint64_t h = 0x4d61;
    for (const auto& c : components) h = hash_combine(h, c.structural_hash());
    if (mixing)
        for (Eigen::Index k = 0; k < mixing->size(); ++k)
            h = hash_combine(h, hash_double(mixing->data()[k]));
    return h;
}

void MarginalSet::validate() const {
    require(!models.empty(), "marginal set has no models");
    for (int id : of_index)
        require(id >= 0 && id < num_classes(), "marginal index map out of range");
}

std::shared_ptr<const MarginalSet> MarginalSet::iid(int n, MarginalModel model) {
    auto set = std::make_shared<MarginalSet>();
    set->models = {std::move(model)};
    set->of_index.assign(static_cast<std::size_t>(n), 0);
    return set;
}

std::shared_ptr<const MarginalSet> MarginalSet::per_index(std::vector<MarginalModel> models) {
    auto set = std::make_shared<MarginalSet>();
    set->of_index.resize(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) set->of_index[i] = static_cast<int>(i);
    set->models = std::move(models);
    return set;
}

std::shared_ptr<const MarginalSet> MarginalSet::two_block(int n1, int n2, MarginalModel first,
                                                          MarginalModel second) {
    auto set = std::make_shared<MarginalSet>();
    set->models = {std::move(first), std::move(second)};
    set->of_index.assign(static_cast<std::size_t>(n1), 0);
    set->of_index.insert(set->of_index.end(), static_cast<std::size_t>(n2), 1);
    return set;
}

void IndexedSample::validate() const {
    require(marginals != nullptr, "sample has no marginal set");
    require(static_cast<int>(x.size()) == marginals->n(), "sample/marginal length mismatch");
    for (int i = 0; i < n(); ++i)
        if (!model(i).in_support(x[static_cast<std::size_t>(i)]))
            throw NumericalError("observation " + std::to_string(i) +
                                 " outside the support of its marginal");
}

IndexedSample draw_sample(std::shared_ptr<const MarginalSet> marginals, std::uint64_t seed,
                          std::uint64_t rep) {
    IndexedSample s;
    s.marginals = std::move(marginals);
    const int n = s.marginals->n();
    s.x.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        CounterRng rng(seed, Stream::data, rep, static_cast<std::uint64_t>(i));
        s.x[static_cast<std::size_t>(i)] = s.marginals->model(i).sample(rng);
    }
    return s;
}

std::string to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::product_kernel: return "product-kernel";
        case ScenarioKind::weak_iv: return "weak-iv";
        case ScenarioKind::plm: return "plm";
        case ScenarioKind::two_sample: return "two-sample";
        case ScenarioKind::sep_exchangeable: return "sep-exchangeable";
    }
    return "?";
}

ScenarioKind scenario_kind_from_string(const std::string& s) {
    if (s == "product-kernel") return ScenarioKind::product_kernel;
    if (s == "weak-iv") return ScenarioKind::weak_iv;
    if (s == "plm") return ScenarioKind::plm;
    if (s == "two-sample") return ScenarioKind::two_sample;
    if (s == "sep-exchangeable") return ScenarioKind::sep_exchangeable;
    throw ConfigError("unsupported scenario_kind: " + s);
}

void ScenarioConfig::validate() const {
    require(n >= 2, "scenario requires n >= 2");
    require(p >= 3, "scenario requires p >= 3 (log p > 1)");
    require(replications >= 1, "scenario requires replications >= 1");
    require(quadrature_budget >= 1, "scenario requires quadrature_budget >= 1");
}

nlohmann::json ScenarioConfig::to_json() const {
    return nlohmann::json{{"scenario_kind", to_string(scenario_kind)},
                          {"n", n},
                          {"p", p},
                          {"seed", seed},
                          {"replications", replications},
                          {"quadrature_budget", quadrature_budget},
                          {"params", params}};
}

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j) {
    ScenarioConfig c;
    try {
        c.scenario_kind = scenario_kind_from_string(j.at("scenario_kind").get<std::string>());
        c.n = j.at("n").get<int>();
        c.p = j.at("p").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.replications = j.at("replications").get<int>();
        c.quadrature_budget = j.at("quadrature_budget").get<int>();
        if (j.contains("params")) c.params = j.at("params");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad scenario config: ") + e.what());
    }
    c.validate();
    return c;
}

IntegralResult exact_integral(const MarginalModel& m, const Poly1& f, int /*budget*/) {
    require(m.is_scalar(), "polynomial integrals need a scalar marginal");
    const auto mu = m.raw_moments(std::max(0, f.degree()));
    return {f.moment_integral(mu), 0.0, true};
}

IntegralResult exact_integral(const MarginalModel& m, const std::function<double(double)>& f,
                              int budget, std::uint64_t seed) {
    require(m.is_scalar(), "scalar integrand needs a scalar marginal");
    require(budget >= 1, "budget must be positive");
    CounterRng rng(seed ^ m.structural_hash(), Stream::eval);
    double mean = 0.0, m2 = 0.0;
    for (int s = 0; s < budget; ++s) {
        const double v = f(m.components[0].sample(rng));
        if (!is_finite(v))
            throw NumericalError("non-finite integrand value at draw " + std::to_string(s));
        const double delta = v - mean;
        mean += delta / (s + 1);
        m2 += delta * (v - mean);
    }
    const double sd = budget > 1 ? std::sqrt(m2 / (budget - 1)) : 0.0;
    return {mean, sd / std::sqrt(static_cast<double>(budget)), false};
}

}  // namespace ustat
