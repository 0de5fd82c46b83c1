#pragma once

// Multivariate permutation tests: one univariate MRPP partial test per tensor
// variable, all driven by a single shared set of relabelings, combined into
// one p-value by a combining function.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spdperm/errors.hpp"
#include "spdperm/means.hpp"
#include "spdperm/permutation.hpp"
#include "spdperm/similarity.hpp"
#include "spdperm/spd_tensor.hpp"

namespace spdperm {

/// Geometric: (lambda1, lambda2, lambda3, qx, qy, qz); Euclidean: the six
/// stored tensor components.
enum class Parametrization { Geometric, Euclidean };

enum class Combiner { Fisher, Tippett };

inline constexpr std::size_t kTensorVariables = 6;

inline Parametrization parse_parametrization(std::string_view s) {
    if (s == "geometric") return Parametrization::Geometric;
    if (s == "euclidean") return Parametrization::Euclidean;
    throw ParseError("unknown parametrization '" + std::string(s) + "'");
}

inline std::string parametrization_name(Parametrization p) {
    return p == Parametrization::Geometric ? "geometric" : "euclidean";
}

inline Combiner parse_combiner(std::string_view s) {
    if (s == "fisher") return Combiner::Fisher;
    if (s == "tippett") return Combiner::Tippett;
    throw ParseError("unknown combiner '" + std::string(s) + "'");
}

inline std::string combiner_name(Combiner c) { return c == Combiner::Fisher ? "fisher" : "tippett"; }

inline std::array<std::string, kTensorVariables> variable_names(Parametrization p) {
    if (p == Parametrization::Geometric) return {"lambda1", "lambda2", "lambda3", "qx", "qy", "qz"};
    return {"xx", "yy", "zz", "xy", "xz", "yz"};
}

using VariableRow = std::array<double, kTensorVariables>;

struct VariableTable {
    Parametrization parametrization = Parametrization::Geometric;
    std::vector<VariableRow> rows;

    std::size_t size() const noexcept { return rows.size(); }
    std::vector<double> column(std::size_t v) const {
        std::vector<double> c(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) c[i] = rows[i][v];
        return c;
    }
};

/// Per-sample variables. Geometric quaternions are sign-aligned to the
/// cohort chordal mean before their vector part is read off, so q and -q
/// encodings of one frame give identical rows.
inline VariableTable parametrize(std::span<const SpdTensor> tensors, Parametrization p) {
    detail::require_nonempty(tensors.size(), "parametrize");
    VariableTable table{p, {}};
    table.rows.reserve(tensors.size());
    if (p == Parametrization::Euclidean) {
        for (const auto& t : tensors) table.rows.push_back(t.components());
        return table;
    }
    std::vector<SpectralDecomposition> dec;
    std::vector<UnitQuaternion> qs;
    dec.reserve(tensors.size());
    qs.reserve(tensors.size());
    for (const auto& t : tensors) {
        dec.push_back(spectral_decompose(t));
        qs.push_back(dec.back().quaternion);
    }
    const Eigen::Vector4d ref = chordal_mean_quaternions(qs).vector();
    for (const auto& d : dec) {
        const Eigen::Vector4d q = align_to(d.quaternion, ref);
        table.rows.push_back(
            {d.eigenvalues[0], d.eigenvalues[1], d.eigenvalues[2], q(1), q(2), q(3)});
    }
    return table;
}

enum class VariableMetric { LogRatio, AbsDifference };

/// Eigenvalue slots of the geometric parametrization compare by log ratio;
/// everything else by absolute difference.
inline VariableMetric partial_variable_similarity(std::size_t variable, Parametrization p) {
    if (variable >= kTensorVariables) throw InvalidArgument("variable index out of range");
    return (p == Parametrization::Geometric && variable < 3) ? VariableMetric::LogRatio
                                                             : VariableMetric::AbsDifference;
}

inline double variable_dissimilarity(VariableMetric m, double a, double b) {
    return m == VariableMetric::LogRatio ? eigenvalue_log_similarity(a, b) : std::abs(a - b);
}

inline SimilarityMatrix variable_similarity_matrix(const VariableTable& table, std::size_t v) {
    const VariableMetric m = partial_variable_similarity(v, table.parametrization);
    return build_similarity_matrix(table.size(), [&](std::size_t i, std::size_t j) {
        return variable_dissimilarity(m, table.rows[i][v], table.rows[j][v]);
    });
}

struct PartialTestReport {
    std::vector<std::string> variables;
    std::vector<double> observed;         // per-variable MRPP delta
    std::vector<double> partial_p;        // xi_i
    std::vector<bool> degenerate;         // per variable
    Combiner combiner = Combiner::Fisher;
    double combined_statistic = 0.0;      // T_o
    double combined_p = 1.0;
    std::size_t n_permutations = 0;
    std::uint64_t seed = 0;
};

inline double combine(Combiner c, std::span<const double> xi) {
    if (c == Combiner::Fisher) {
        double t = 0.0;
        for (double x : xi) t += -2.0 * std::log(x);
        return t;
    }
    return *std::min_element(xi.begin(), xi.end());
}

inline Tail combiner_tail(Combiner c) { return c == Combiner::Fisher ? Tail::Upper : Tail::Lower; }

/// Partial tests on arbitrary per-variable similarity matrices sharing one
/// permutation log. For each variable the observed value and its permuted
/// values form one pooled sample of size 1 + N_p; any member x gets the
/// pseudo p-value #{pooled <= x} / (1 + N_p). The observed member's value is
/// the partial p-value xi_i; permuted members give xi*_{i,k}.
inline PartialTestReport combine_partial_tests(std::span<const SimilarityMatrix> matrices,
                                               std::span<const int> labels,
                                               const PermutationLog& log, Combiner combiner,
                                               const GroupWeights& weights = {},
                                               unsigned threads = 1) {
    if (matrices.empty()) throw EmptyInput("combine_partial_tests: no variables");
    const std::size_t nv = matrices.size();
    const std::size_t np = log.count();
    const auto w = weights.resolve(group_sizes(labels));
    const double denom = static_cast<double>(1 + np);

    PartialTestReport rep;
    rep.combiner = combiner;
    rep.n_permutations = np;
    rep.observed.resize(nv);
    rep.partial_p.resize(nv);
    rep.degenerate.resize(nv);
    // pseudo[v * np + k] = xi*_{v,k}
    std::vector<double> pseudo(nv * np);

    parallel_for(nv, threads, [&](std::size_t vb, std::size_t ve) {
        std::vector<double> null(np), pooled(np + 1);
        for (std::size_t v = vb; v < ve; ++v) {
            const MrppStatistic stat(matrices[v], labels, w);
            const double obs = stat(labels);
            for (std::size_t k = 0; k < np; ++k) null[k] = stat(log[k]);
            std::copy(null.begin(), null.end(), pooled.begin());
            pooled[np] = obs;
            std::sort(pooled.begin(), pooled.end());
            auto rank = [&](double x) {
                return static_cast<double>(std::upper_bound(pooled.begin(), pooled.end(), x) -
                                           pooled.begin()) / denom;
            };
            rep.observed[v] = obs;
            rep.partial_p[v] = rank(obs);
            rep.degenerate[v] =
                np > 0 && std::all_of(null.begin(), null.end(), [&](double x) { return x == obs; });
            for (std::size_t k = 0; k < np; ++k) pseudo[v * np + k] = rank(null[k]);
        }
    });

    rep.combined_statistic = combine(combiner, rep.partial_p);
    const Tail tail = combiner_tail(combiner);
    std::size_t beats = 0;
    std::vector<double> xi(nv);
    for (std::size_t k = 0; k < np; ++k) {
        for (std::size_t v = 0; v < nv; ++v) xi[v] = pseudo[v * np + k];
        const double t = combine(combiner, xi);
        if (tail == Tail::Upper ? t >= rep.combined_statistic : t <= rep.combined_statistic) ++beats;
    }
    rep.combined_p = static_cast<double>(1 + beats) / denom;
    return rep;
}

struct MultivariateOptions {
    GroupWeights weights = GroupWeights::proportional();
    unsigned threads = 1;
};

/// Six partial MRPP tests on the chosen parametrization, combined.
inline PartialTestReport multivariate_test(const Cohort& cohort, Parametrization p,
                                           Combiner combiner, const PermutationScheme& scheme,
                                           const MultivariateOptions& opts = {}) {
    cohort.validate();
    const VariableTable table = parametrize(cohort.tensors, p);
    std::vector<SimilarityMatrix> matrices;
    matrices.reserve(kTensorVariables);
    for (std::size_t v = 0; v < kTensorVariables; ++v) {
        matrices.push_back(variable_similarity_matrix(table, v));
    }
    const PermutationLog log = make_permutation_log(cohort.labels, scheme);
    PartialTestReport rep =
        combine_partial_tests(matrices, cohort.labels, log, combiner, opts.weights, opts.threads);
    const auto names = variable_names(p);
    rep.variables.assign(names.begin(), names.end());
    rep.seed = scheme.seed;
    return rep;
}

}  // namespace spdperm
