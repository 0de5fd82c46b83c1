#pragma once

// Power-study driver: repeated synthetic cohorts, tested under several
// measures and multivariate parametrizations across a gamma grid, plus a
// cost benchmark contrasting dispersion-based and mean-based tests.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "spdperm/errors.hpp"
#include "spdperm/multivariate.hpp"
#include "spdperm/permutation.hpp"
#include "spdperm/similarity.hpp"
#include "spdperm/synth.hpp"

namespace spdperm {

inline std::string measure_label(const SimilarityMeasure& m) {
    if (m.kind != MeasureKind::SpectralQuaternion || m.k0 == 1.0) return measure_name(m.kind);
    char buf[64];
    std::snprintf(buf, sizeof buf, "sq(k0=%g)", m.k0);
    return buf;
}

struct StudyConfig {
    Regime regime = Regime::Low;
    DeformationSpec deformation = DeformationSpec::simple(DeformationKind::CO, 0.0);
    std::vector<double> gammas = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::vector<SimilarityMeasure> measures = {
        SimilarityMeasure::euclidean(), SimilarityMeasure::log_euclidean(),
        SimilarityMeasure::spectral_quaternion(1.0), SimilarityMeasure::fractional_anisotropy()};
    std::vector<Parametrization> parametrizations;
    Combiner combiner = Combiner::Fisher;
    GroupWeights weights = GroupWeights::proportional();
    double alpha = 0.05;
    std::size_t n_per_group = 10;
    std::size_t n_permutations = 2000;
    std::size_t n_tests = 200;
    int wishart_df = 30;
    std::uint64_t seed = 1;
    unsigned threads = 1;

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
        if (gammas.empty()) throw InvalidArgument("gamma grid is empty");
        for (double g : gammas) {
            if (!(g >= 0.0 && g <= 1.0)) throw InvalidArgument("gamma grid must lie in [0, 1]");
        }
        if (n_tests < 1) throw InvalidArgument("n_tests must be >= 1");
        if (n_per_group < 2) throw InvalidArgument("n_per_group must be >= 2");
        if (wishart_df < 4) throw InvalidArgument("wishart_df must be >= 4");
        if (measures.empty() && parametrizations.empty()) {
            throw InvalidArgument("study has no test variants");
        }
    }

    /// Full protocol: 20 000 permutations, 500 tests per point.
    void apply_full_scale() {
        n_permutations = 20000;
        n_tests = 500;
    }

    /// Curve names in output order: measures first, then for each
    /// parametrization its six partial tests and the combined test.
    std::vector<std::string> variant_names() const {
        std::vector<std::string> names;
        for (const auto& m : measures) names.push_back(measure_label(m));
        for (auto p : parametrizations) {
            for (const auto& v : variable_names(p)) names.push_back(parametrization_name(p) + ":" + v);
            names.push_back(parametrization_name(p) + ":combined");
        }
        return names;
    }
};

struct PowerRow {
    double gamma = 0.0;
    std::size_t rejections = 0;
    std::size_t n_tests = 0;

    double power() const { return static_cast<double>(rejections) / static_cast<double>(n_tests); }
    double standard_error() const { const double p = power(); return std::sqrt(p * (1.0 - p) / static_cast<double>(n_tests)); }
};

struct PowerCurve {
    std::string variant;
    std::vector<PowerRow> rows;  // one per gamma, config order

    double power_at(double gamma) const {
        for (const auto& r : rows) {
            if (std::abs(r.gamma - gamma) < 1e-12) return r.power();
        }
        throw InvalidArgument("gamma not on the curve grid");
    }
    double standard_error_at(double gamma) const {
        for (const auto& r : rows) {
            if (std::abs(r.gamma - gamma) < 1e-12) return r.standard_error();
        }
        throw InvalidArgument("gamma not on the curve grid");
    }
};

/// Rejection flags of every variant for one synthetic cohort.
inline std::vector<char> run_single_trial(const StudyConfig& cfg, double gamma,
                                          std::size_t test_index) {
    DeformationSpec spec = cfg.deformation;
    spec.gamma = gamma;
    const Cohort cohort = make_cohort(cfg.regime, spec, cfg.n_per_group,
                                      {cfg.wishart_df, derive_seed(cfg.seed, {test_index, 0})});
    const auto scheme =
        PermutationScheme::monte_carlo(cfg.n_permutations, derive_seed(cfg.seed, {test_index, 1}));

    std::vector<char> flags;
    if (!cfg.measures.empty()) {
        // Measures share the permutation log and the per-tensor features.
        const PermutationLog log = make_permutation_log(cohort.labels, scheme);
        const auto features = compute_features(cohort.tensors);
        const auto w = cfg.weights.resolve(group_sizes(cohort.labels));
        for (const auto& m : cfg.measures) {
            const SimilarityMatrix s = build_similarity_matrix(
                cohort.size(),
                [&](std::size_t i, std::size_t j) { return distance(features[i], features[j], m); });
            const MrppStatistic stat(s, cohort.labels, w);
            const TestResult r = evaluate_permutation_test(stat, cohort.labels, log, Tail::Lower);
            flags.push_back(r.p_value <= cfg.alpha);
        }
    }
    for (auto p : cfg.parametrizations) {
        const PartialTestReport rep =
            multivariate_test(cohort, p, cfg.combiner, scheme, {cfg.weights, 1});
        for (double xi : rep.partial_p) flags.push_back(xi <= cfg.alpha);
        flags.push_back(rep.combined_p <= cfg.alpha);
    }
    return flags;
}

/// Power per variant per gamma. Test t at every gamma uses cohort seed
/// derive_seed(seed, {t, 0}) and permutation seed derive_seed(seed, {t, 1}),
/// so results do not depend on the thread count. `on_gamma` fires after each
/// grid point with the curves completed so far.
inline std::vector<PowerCurve> run_power_study(
    const StudyConfig& cfg,
    const std::function<void(const std::vector<PowerCurve>&, std::size_t gamma_index)>& on_gamma = {}) {
    cfg.validate();
    const auto names = cfg.variant_names();
    std::vector<PowerCurve> curves(names.size());
    for (std::size_t v = 0; v < names.size(); ++v) curves[v].variant = names[v];

    for (std::size_t gi = 0; gi < cfg.gammas.size(); ++gi) {
        const double gamma = cfg.gammas[gi];
        std::vector<std::vector<char>> flags(cfg.n_tests);
        parallel_for(cfg.n_tests, cfg.threads, [&](std::size_t b, std::size_t e) {
            for (std::size_t t = b; t < e; ++t) flags[t] = run_single_trial(cfg, gamma, t);
        });
        for (std::size_t v = 0; v < names.size(); ++v) {
            PowerRow row{gamma, 0, cfg.n_tests};
            for (const auto& f : flags) row.rejections += static_cast<std::size_t>(f[v]);
            curves[v].rows.push_back(row);
        }
        if (on_gamma) on_gamma(curves, gi);
    }
    return curves;
}

// --- config / CSV I/O --------------------------------------------------------

inline nlohmann::json measure_to_json(const SimilarityMeasure& m) {
    if (m.kind == MeasureKind::SpectralQuaternion) return {{"kind", "sq"}, {"k0", m.k0}};
    return measure_name(m.kind);
}

inline SimilarityMeasure measure_from_json(const nlohmann::json& j) {
    if (j.is_string()) {
        const MeasureKind k = parse_measure_kind(j.get<std::string>());
        return k == MeasureKind::SpectralQuaternion ? SimilarityMeasure::spectral_quaternion(1.0)
                                                    : SimilarityMeasure{k, 1.0};
    }
    const MeasureKind k = parse_measure_kind(j.at("kind").get<std::string>());
    if (k == MeasureKind::SpectralQuaternion) {
        return SimilarityMeasure::spectral_quaternion(j.value("k0", 1.0));
    }
    return {k, 1.0};
}

inline nlohmann::json config_to_json(const StudyConfig& c) {
    nlohmann::json j;
    j["regime"] = regime_name(c.regime);
    j["deformation"] = deformation_name(c.deformation);
    j["rotation_axis"] = c.deformation.rotation_axis;
    j["gammas"] = c.gammas;
    j["measures"] = nlohmann::json::array();
    for (const auto& m : c.measures) j["measures"].push_back(measure_to_json(m));
    j["parametrizations"] = nlohmann::json::array();
    for (auto p : c.parametrizations) j["parametrizations"].push_back(parametrization_name(p));
    j["combiner"] = combiner_name(c.combiner);
    j["weights"] = c.weights.scheme == WeightScheme::Equal ? "equal" : "proportional";
    j["alpha"] = c.alpha;
    j["n_per_group"] = c.n_per_group;
    j["n_permutations"] = c.n_permutations;
    j["n_tests"] = c.n_tests;
    j["wishart_df"] = c.wishart_df;
    j["seed"] = c.seed;
    return j;
}

/// Missing keys keep their defaults.
inline StudyConfig config_from_json(const nlohmann::json& j) {
    StudyConfig c;
    try {
        if (j.contains("regime")) c.regime = parse_regime(j["regime"].get<std::string>());
        if (j.contains("deformation")) c.deformation = parse_deformation(j["deformation"].get<std::string>());
        if (j.contains("rotation_axis")) c.deformation.rotation_axis = j["rotation_axis"].get<int>();
        if (j.contains("gammas")) c.gammas = j["gammas"].get<std::vector<double>>();
        if (j.contains("measures")) {
            c.measures.clear();
            for (const auto& m : j["measures"]) c.measures.push_back(measure_from_json(m));
        }
        if (j.contains("parametrizations")) {
            c.parametrizations.clear();
            for (const auto& p : j["parametrizations"]) c.parametrizations.push_back(parse_parametrization(p.get<std::string>()));
        }
        if (j.contains("combiner")) c.combiner = parse_combiner(j["combiner"].get<std::string>());
        if (j.contains("weights")) {
            c.weights = parse_weight_scheme(j["weights"].get<std::string>()) == WeightScheme::Equal
                            ? GroupWeights::equal()
                            : GroupWeights::proportional();
        }
        if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
        if (j.contains("n_per_group")) c.n_per_group = j["n_per_group"].get<std::size_t>();
        if (j.contains("n_permutations")) c.n_permutations = j["n_permutations"].get<std::size_t>();
        if (j.contains("n_tests")) c.n_tests = j["n_tests"].get<std::size_t>();
        if (j.contains("wishart_df")) c.wishart_df = j["wishart_df"].get<int>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("threads")) c.threads = j["threads"].get<unsigned>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("study config: ") + e.what());
    }
    c.validate();
    return c;
}

inline void write_power_header(std::ostream& os, const StudyConfig& c) {
    os << "# config: " << config_to_json(c).dump() << "\n";
    os << "gamma,variant,power,stderr,n_tests,n_permutations\n";
}

inline void write_power_rows(std::ostream& os, const StudyConfig& c,
                             const std::vector<PowerCurve>& curves, std::size_t gamma_index) {
    char buf[256];
    for (const auto& curve : curves) {
        const PowerRow& r = curve.rows.at(gamma_index);
        std::snprintf(buf, sizeof buf, "%.6g,%s,%.6f,%.6f,%zu,%zu\n", r.gamma,
                      curve.variant.c_str(), r.power(), r.standard_error(), r.n_tests, c.n_permutations);
        os << buf;
    }
}

inline void write_power_csv(std::ostream& os, const StudyConfig& c,
                            const std::vector<PowerCurve>& curves) {
    write_power_header(os, c);
    for (std::size_t gi = 0; gi < c.gammas.size(); ++gi) write_power_rows(os, c, curves, gi);
}

// --- cost benchmark ----------------------------------------------------------

struct CostRow {
    std::size_t n = 0;                     // cohort size (two equal groups)
    std::uint64_t assignments = 0;         // M = N! / (n1! n2!)
    std::size_t similarity_evaluations = 0;
    double mrpp_seconds = 0.0;
    bool mean_executed = false;
    std::size_t mean_evaluations = 0;      // statistic evaluations = M when executed
    double mean_seconds = std::numeric_limits<double>::quiet_NaN();
};

struct BenchmarkOptions {
    std::size_t n_permutations = 2000;  // MRPP Monte-Carlo draws
    std::size_t max_enumerated_n = 12;  // mean-based test enumerated only up to here
    int wishart_df = 30;
    std::uint64_t seed = 7;
};

/// For each cohort size N (even, >= 4), times an MRPP test and, for small N,
/// a fully enumerated mean-based test; counts similarity evaluations and
/// assignment space size.
inline std::vector<CostRow> benchmark_costs(std::span<const std::size_t> sizes,
                                            const SimilarityMeasure& measure, const MeanKind& mean,
                                            const BenchmarkOptions& opts = {}) {
    using clock = std::chrono::steady_clock;
    std::vector<CostRow> rows;
    for (std::size_t n : sizes) {
        if (n < 4 || n % 2 != 0) throw InvalidArgument("benchmark sizes must be even and >= 4");
        const Cohort cohort = make_cohort(Regime::High, DeformationSpec::simple(DeformationKind::CO, 0.5),
                                          n / 2, {opts.wishart_df, derive_seed(opts.seed, {n})});
        CostRow row;
        row.n = n;
        const std::size_t half[2] = {n / 2, n / 2};
        row.assignments = count_assignments(half);

        const auto features = compute_features(cohort.tensors);
        std::size_t evals = 0;
        auto t0 = clock::now();
        mrpp_test(
            cohort,
            [&](std::size_t i, std::size_t j) {
                ++evals;
                return distance(features[i], features[j], measure);
            },
            GroupWeights::proportional(), PermutationScheme::monte_carlo(opts.n_permutations, opts.seed));
        row.mrpp_seconds = std::chrono::duration<double>(clock::now() - t0).count();
        row.similarity_evaluations = evals;

        if (n <= opts.max_enumerated_n) {
            std::atomic<std::size_t> mean_evals{0};
            auto stat = [&](std::span<const int> labels) {
                ++mean_evals;
                return mean_based_statistic(cohort.tensors, labels, mean, measure.k0);
            };
            t0 = clock::now();
            run_permutation_test(stat, cohort.labels, PermutationScheme::full_enumeration(),
                                 Tail::Upper);
            row.mean_seconds = std::chrono::duration<double>(clock::now() - t0).count();
            row.mean_executed = true;
            row.mean_evaluations = mean_evals.load();
        }
        rows.push_back(row);
    }
    return rows;
}

/// Least-squares slope of log(y) against log(x).
inline double fit_loglog_exponent(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("fit needs >= 2 paired points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

}  // namespace spdperm
