#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ustat/common.hpp"
#include "ustat/poly.hpp"
#include "ustat/rng.hpp"

namespace ustat {

enum class DistKind { normal, uniform, bernoulli, mixture };

// Scalar distribution with analytic raw moments of every order.
struct ScalarDist {
    DistKind kind = DistKind::normal;
    double p1 = 0.0;  // normal: mean, uniform: a, bernoulli: q
    double p2 = 1.0;  // normal: sd,   uniform: b
    std::vector<double> weights;          // mixture only
    std::vector<ScalarDist> components;   // mixture only

    static ScalarDist normal(double mean, double sd);
    static ScalarDist uniform(double a, double b);
    static ScalarDist bernoulli(double q);
    static ScalarDist mixture(std::vector<double> weights, std::vector<ScalarDist> components);

    void validate() const;
    double sample(CounterRng& rng) const;
    double raw_moment(int order) const;
    double mean() const { return raw_moment(1); }
    double variance() const { return raw_moment(2) - sq(raw_moment(1)); }
    bool in_support(double v) const;
    std::uint64_t structural_hash() const;
};

// Marginal law of one observation index: a product of scalar components,
// optionally pushed through a linear map (obs = mixing * xi) to induce
// cross-component correlation. Exact moments are only tracked for plain
// scalar models (dim 1, no mixing); everything else runs through Monte Carlo.
struct MarginalModel {
    int index = 0;
    std::vector<ScalarDist> components;
    std::optional<Eigen::MatrixXd> mixing;
    std::optional<std::vector<double>> exact_moments;  // raw moments, order 0..8

    static MarginalModel scalar(int index, ScalarDist dist);
    // Attaches caller-supplied moments; they are checked against the analytic
    // values and cross-checked by a short Monte Carlo run.
    static MarginalModel scalar_with_moments(int index, ScalarDist dist,
                                             std::vector<double> moments);
    static MarginalModel vector(int index, std::vector<ScalarDist> components,
                                std::optional<Eigen::MatrixXd> mixing = std::nullopt);

    int dim() const {
        return mixing ? static_cast<int>(mixing->rows()) : static_cast<int>(components.size());
    }
    bool is_scalar() const { return dim() == 1 && !mixing; }
    bool has_exact_moments() const { return is_scalar(); }

    // Raw moment E[X^k] of the (scalar) observation; any order.
    double raw_moment(int order) const;
    // Raw moments 0..order as a vector, for polynomial integration.
    std::vector<double> raw_moments(int order) const;

    Obs sample(CounterRng& rng) const;
    bool in_support(ObsRef v) const;
    std::uint64_t structural_hash() const;
};

// The marginal structure of a sample: distinct models plus the index -> model
// map. Shared across replications; also provides the class grouping used by
// caches (indices with the same model id are exchangeable for integration).
struct MarginalSet {
    std::vector<MarginalModel> models;
    std::vector<int> of_index;

    int n() const { return static_cast<int>(of_index.size()); }
    int num_classes() const { return static_cast<int>(models.size()); }
    int class_of(int i) const { return of_index[static_cast<std::size_t>(i)]; }
    const MarginalModel& model(int i) const {
        return models[static_cast<std::size_t>(class_of(i))];
    }
    void validate() const;

    static std::shared_ptr<const MarginalSet> iid(int n, MarginalModel model);
    static std::shared_ptr<const MarginalSet> per_index(std::vector<MarginalModel> models);
    static std::shared_ptr<const MarginalSet> two_block(int n1, int n2, MarginalModel first,
                                                        MarginalModel second);
};

struct IndexedSample {
    std::shared_ptr<const MarginalSet> marginals;
    std::vector<Obs> x;

    int n() const { return static_cast<int>(x.size()); }
    ObsRef operator[](int i) const { return x[static_cast<std::size_t>(i)]; }
    int class_of(int i) const { return marginals->class_of(i); }
    const MarginalModel& model(int i) const { return marginals->model(i); }
    void validate() const;
};

// Draws observation i from stream (seed, data, rep, i); bit-reproducible and
// independent across rep.
IndexedSample draw_sample(std::shared_ptr<const MarginalSet> marginals, std::uint64_t seed,
                          std::uint64_t rep);

enum class ScenarioKind { product_kernel, weak_iv, plm, two_sample, sep_exchangeable };

std::string to_string(ScenarioKind k);
ScenarioKind scenario_kind_from_string(const std::string& s);

struct ScenarioConfig {
    ScenarioKind scenario_kind = ScenarioKind::product_kernel;
    int n = 0;
    int p = 0;
    std::uint64_t seed = 0;
    int replications = 1;
    int quadrature_budget = 20000;
    nlohmann::json params = nlohmann::json::object();

    void validate() const;
    nlohmann::json to_json() const;
    static ScenarioConfig from_json(const nlohmann::json& j);
};

// Scenario realization (defined in scenarios.cpp): deterministic in
// (config.seed, rep_id), independent across rep_id.
IndexedSample sample(const ScenarioConfig& config, int rep_id);

struct IntegralResult {
    double value = 0.0;
    double se = 0.0;
    bool exact = false;
};

// P_i f for polynomial f: exact through stored moments.
IntegralResult exact_integral(const MarginalModel& m, const Poly1& f, int budget = 0);
// General f: Monte Carlo average of `budget` draws, SE = sd/sqrt(budget).
IntegralResult exact_integral(const MarginalModel& m, const std::function<double(double)>& f,
                              int budget, std::uint64_t seed = 0);

}  // namespace ustat
