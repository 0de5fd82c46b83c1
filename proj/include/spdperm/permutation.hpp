#pragma once

// Permutation engine plus the two group statistics built on it: the MRPP
// within-group dispersion and the distance between group means.

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "spdperm/errors.hpp"
#include "spdperm/means.hpp"
#include "spdperm/rng.hpp"
#include "spdperm/similarity.hpp"
#include "spdperm/spd_tensor.hpp"

namespace spdperm {

/// Group label per sample; labels are dense indices 0..g-1.
using Labels = std::vector<int>;

/// Sizes of groups 0..g-1. Every label must be in range and every group
/// nonempty.
inline std::vector<std::size_t> group_sizes(std::span<const int> labels) {
    if (labels.empty()) throw EmptyInput("group_sizes: no labels");
    const int g = *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::size_t> sizes(static_cast<std::size_t>(std::max(g, 0)), 0);
    for (int l : labels) {
        if (l < 0) throw InvalidArgument("group labels must be nonnegative");
        ++sizes[static_cast<std::size_t>(l)];
    }
    for (std::size_t s : sizes) {
        if (s == 0) throw InvalidArgument("group labels must be dense (0..g-1, none empty)");
    }
    return sizes;
}

struct Cohort {
    std::vector<SpdTensor> tensors;
    Labels labels;

    std::size_t size() const noexcept { return tensors.size(); }
    std::size_t group_count() const { return group_sizes(labels).size(); }
    std::vector<std::size_t> sizes() const { return group_sizes(labels); }

    void validate() const {
        if (tensors.size() != labels.size()) {
            throw InvalidArgument("Cohort: tensors and labels differ in length");
        }
        group_sizes(labels);
    }

    /// Tensors carrying `label`, in cohort order.
    std::vector<SpdTensor> group(int label) const {
        std::vector<SpdTensor> out;
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            if (labels[i] == label) out.push_back(tensors[i]);
        }
        return out;
    }
};

/// Number of distinct group assignments N! / prod n_i!, saturating at
/// UINT64_MAX.
inline std::uint64_t count_assignments(std::span<const std::size_t> sizes) {
    constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t total = 1;
    std::uint64_t placed = 0;
    for (std::size_t n : sizes) {
        // multiply by C(placed + n, n) incrementally: C(m, k) = prod (m-k+i)/i
        for (std::uint64_t i = 1; i <= n; ++i) {
            const unsigned __int128 next =
                static_cast<unsigned __int128>(total) * (placed + i) / i;
            if (next > kMax) return kMax;
            total = static_cast<std::uint64_t>(next);
        }
        placed += n;
    }
    return total;
}

enum class Tail { Lower, Upper };

inline std::string tail_name(Tail t) { return t == Tail::Lower ? "lower" : "upper"; }

enum class PermutationMode { FullEnumeration, MonteCarlo };

struct PermutationScheme {
    PermutationMode mode = PermutationMode::MonteCarlo;
    std::size_t n_permutations = 20000;
    std::uint64_t seed = 0;
    std::uint64_t enumeration_cap = 200000;

    static PermutationScheme monte_carlo(std::size_t n_permutations, std::uint64_t seed) {
        return {PermutationMode::MonteCarlo, n_permutations, seed, 200000};
    }
    static PermutationScheme full_enumeration(std::uint64_t cap = 200000) {
        return {PermutationMode::FullEnumeration, 0, 0, cap};
    }
};

/// Flat list of relabelings, each a group-size-preserving permutation of the
/// observed labels.
class PermutationLog {
public:
    PermutationLog(std::size_t n_samples) : n_(n_samples) {}

    std::size_t count() const noexcept { return n_ ? data_.size() / n_ : 0; }
    std::size_t samples() const noexcept { return n_; }

    std::span<const int> operator[](std::size_t k) const noexcept {
        return {data_.data() + k * n_, n_};
    }

    void push(std::span<const int> labels) { data_.insert(data_.end(), labels.begin(), labels.end()); }

    void reserve(std::size_t count) { data_.reserve(count * n_); }

    friend bool operator==(const PermutationLog&, const PermutationLog&) = default;

private:
    std::size_t n_;
    std::vector<int> data_;
};

// Monte-Carlo draws are generated in fixed-size blocks, each from its own
// stream derive_seed(seed, {block}); the log is identical however blocks are
// later distributed over workers.
inline constexpr std::size_t kPermutationBlock = 512;

/// Monte Carlo: n_permutations independent uniform shuffles of `observed`.
/// Full enumeration: every distinct assignment except the observed one, so a
/// run over the log plus the observed value covers all M assignments.
inline PermutationLog make_permutation_log(std::span<const int> observed,
                                           const PermutationScheme& scheme) {
    const auto sizes = group_sizes(observed);
    PermutationLog log(observed.size());
    if (scheme.mode == PermutationMode::FullEnumeration) {
        const std::uint64_t m = count_assignments(sizes);
        if (m > scheme.enumeration_cap) {
            throw EnumerationTooLarge("full enumeration of " + std::to_string(m) +
                                      " assignments exceeds cap " +
                                      std::to_string(scheme.enumeration_cap));
        }
        log.reserve(static_cast<std::size_t>(m) - 1);
        Labels cur(observed.begin(), observed.end());
        std::sort(cur.begin(), cur.end());
        do {
            if (!std::equal(cur.begin(), cur.end(), observed.begin())) log.push(cur);
        } while (std::next_permutation(cur.begin(), cur.end()));
        return log;
    }

    log.reserve(scheme.n_permutations);
    Labels cur(observed.size());
    Rng rng;
    for (std::size_t k = 0; k < scheme.n_permutations; ++k) {
        if (k % kPermutationBlock == 0) rng.seed(derive_seed(scheme.seed, {k / kPermutationBlock}));
        std::copy(observed.begin(), observed.end(), cur.begin());
        shuffle(std::span<int>(cur), rng);
        log.push(cur);
    }
    return log;
}

struct RunOptions {
    unsigned threads = 1;  // 0 = hardware concurrency
    bool retain_null = false;
};

struct TestResult {
    double observed = 0.0;
    double p_value = 1.0;
    Tail tail = Tail::Lower;
    std::size_t n_permutations = 0;
    // Every permuted value equalled the observed one; p is 1 by construction.
    bool degenerate = false;
    std::vector<double> null_distribution;  // filled when retain_null
};

/// Runs fn(begin, end) over contiguous chunks of [0, n) on up to `threads`
/// workers. Callers write results by index, so output does not depend on the
/// worker count.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers = std::min<std::size_t>(threads, std::max<std::size_t>(n, 1));
    if (workers <= 1) {
        fn(std::size_t{0}, n);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t b = w * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
}

/// (1 + #{permuted beats observed}) / (1 + #permuted); ties count as beats.
inline double permutation_p_value(double observed, std::span<const double> null, Tail tail) {
    std::size_t beats = 0;
    for (double v : null) {
        if (tail == Tail::Lower ? v <= observed : v >= observed) ++beats;
    }
    return static_cast<double>(1 + beats) / static_cast<double>(1 + null.size());
}

/// Evaluates `statistic` on the observed labels and on every entry of `log`.
template <class Statistic>
    requires std::invocable<const Statistic&, std::span<const int>>
TestResult evaluate_permutation_test(const Statistic& statistic, std::span<const int> observed,
                                     const PermutationLog& log, Tail tail,
                                     const RunOptions& opts = {}) {
    TestResult r;
    r.tail = tail;
    r.observed = statistic(observed);
    r.n_permutations = log.count();
    std::vector<double> null(log.count());
    parallel_for(log.count(), opts.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k) null[k] = statistic(log[k]);
    });
    r.p_value = permutation_p_value(r.observed, null, tail);
    r.degenerate = !null.empty() &&
                   std::all_of(null.begin(), null.end(), [&](double v) { return v == r.observed; });
    if (opts.retain_null) r.null_distribution = std::move(null);
    return r;
}

template <class Statistic>
    requires std::invocable<const Statistic&, std::span<const int>>
TestResult run_permutation_test(const Statistic& statistic, std::span<const int> observed,
                                const PermutationScheme& scheme, Tail tail,
                                const RunOptions& opts = {}) {
    return evaluate_permutation_test(statistic, observed, make_permutation_log(observed, scheme),
                                     tail, opts);
}

// --- MRPP --------------------------------------------------------------------

/// The dispersion coefficient 2 (n-2)! / n!, i.e. 1 / C(n, 2).
inline double mrpp_coefficient(std::size_t n) {
    if (n < 2) throw GroupTooSmall("MRPP needs groups of at least 2 samples");
    return 2.0 / (static_cast<double>(n) * static_cast<double>(n - 1));
}

/// Mean pairwise dissimilarity within one group.
inline double mrpp_group_dispersion(const SimilarityMatrix& s,
                                    std::span<const std::size_t> members) {
    const double c = mrpp_coefficient(members.size());
    double sum = 0.0;
    for (std::size_t a = 0; a < members.size(); ++a) {
        for (std::size_t b = a + 1; b < members.size(); ++b) sum += s(members[a], members[b]);
    }
    return c * sum;
}

enum class WeightScheme { Proportional, Equal, Explicit };

inline WeightScheme parse_weight_scheme(std::string_view name) {
    if (name == "proportional") return WeightScheme::Proportional;
    if (name == "equal") return WeightScheme::Equal;
    throw ParseError("unknown weight scheme '" + std::string(name) + "'");
}

inline void validate_weights(std::span<const double> w, std::size_t groups) {
    if (w.size() != groups) throw BadWeights("MRPP weights: one weight per group required");
    double sum = 0.0;
    for (double v : w) {
        if (!(v > 0.0)) throw BadWeights("MRPP weights must be positive");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw BadWeights("MRPP weights must sum to 1");
}

struct GroupWeights {
    WeightScheme scheme = WeightScheme::Proportional;
    std::vector<double> values;  // Explicit only

    static GroupWeights proportional() { return {WeightScheme::Proportional, {}}; }
    static GroupWeights equal() { return {WeightScheme::Equal, {}}; }
    static GroupWeights explicit_weights(std::vector<double> w) {
        return {WeightScheme::Explicit, std::move(w)};
    }

    std::vector<double> resolve(std::span<const std::size_t> sizes) const {
        std::vector<double> w(sizes.size());
        const double total = std::accumulate(sizes.begin(), sizes.end(), 0.0);
        switch (scheme) {
            case WeightScheme::Proportional:
                for (std::size_t i = 0; i < sizes.size(); ++i) w[i] = static_cast<double>(sizes[i]) / total;
                break;
            case WeightScheme::Equal:
                std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(sizes.size()));
                break;
            case WeightScheme::Explicit: w = values; break;
        }
        validate_weights(w, sizes.size());
        return w;
    }
};

/// Weighted MRPP dispersion delta = sum_g C_g delta_g under `labels`.
/// Precomputes C_g / C(n_g, 2) so the per-permutation cost is one pass over
/// the upper triangle.
class MrppStatistic {
public:
    MrppStatistic(const SimilarityMatrix& s, std::span<const int> labels,
                  std::span<const double> weights)
        : s_(&s) {
        if (labels.size() != s.size()) throw InvalidArgument("MRPP: labels/matrix size mismatch");
        const auto sizes = group_sizes(labels);
        validate_weights(weights, sizes.size());
        scale_.resize(sizes.size());
        for (std::size_t g = 0; g < sizes.size(); ++g) scale_[g] = weights[g] * mrpp_coefficient(sizes[g]);
    }

    double operator()(std::span<const int> labels) const {
        const std::size_t n = s_->size();
        // Stack buffer for the common small-g case.
        double local[8] = {};
        std::vector<double> heap;
        double* sums = local;
        if (scale_.size() > 8) {
            heap.assign(scale_.size(), 0.0);
            sums = heap.data();
        }
        for (std::size_t i = 0; i < n; ++i) {
            const int li = labels[i];
            const double* row = s_->row(i);
            double acc = 0.0;
            for (std::size_t j = i + 1; j < n; ++j) {
                if (labels[j] == li) acc += row[j];
            }
            sums[li] += acc;
        }
        double delta = 0.0;
        for (std::size_t g = 0; g < scale_.size(); ++g) delta += scale_[g] * sums[g];
        return delta;
    }

private:
    const SimilarityMatrix* s_;
    std::vector<double> scale_;
};

inline double mrpp_statistic(const SimilarityMatrix& s, std::span<const int> labels,
                             std::span<const double> weights) {
    return MrppStatistic(s, labels, weights)(labels);
}

/// MRPP on a precomputed similarity matrix; significance in the lower tail.
inline TestResult mrpp_test(const SimilarityMatrix& s, std::span<const int> labels,
                            const GroupWeights& weights, const PermutationScheme& scheme,
                            const RunOptions& opts = {}) {
    const auto w = weights.resolve(group_sizes(labels));
    const MrppStatistic stat(s, labels, w);
    return run_permutation_test(stat, labels, scheme, Tail::Lower, opts);
}

/// Builds the similarity matrix once from `pair(i, j)` and runs MRPP.
template <class PairFn>
    requires std::invocable<PairFn&, std::size_t, std::size_t>
TestResult mrpp_test(const Cohort& cohort, PairFn&& pair, const GroupWeights& weights,
                     const PermutationScheme& scheme, const RunOptions& opts = {}) {
    cohort.validate();
    const SimilarityMatrix s = build_similarity_matrix(cohort.size(), pair);
    return mrpp_test(s, cohort.labels, weights, scheme, opts);
}

inline TestResult mrpp_test(const Cohort& cohort, const SimilarityMeasure& measure,
                            const GroupWeights& weights, const PermutationScheme& scheme,
                            const RunOptions& opts = {}) {
    cohort.validate();
    return mrpp_test(similarity_matrix(cohort.tensors, measure), cohort.labels, weights, scheme,
                     opts);
}

// --- mean-based statistic ----------------------------------------------------

/// True when the mean and the distance come from the same geometry.
inline bool geometry_matches(const MeanKind& mean, const SimilarityMeasure& measure) {
    switch (mean.tag) {
        case MeanTag::Arithmetic: return measure.kind == MeasureKind::Euclidean;
        case MeanTag::LogEuclidean: return measure.kind == MeasureKind::LogEuclidean;
        case MeanTag::SpectralQuaternion: return measure.kind == MeasureKind::SpectralQuaternion;
        case MeanTag::Karcher:
            return mean.metric == KarcherMetric::LogEuclidean &&
                   measure.kind == MeasureKind::LogEuclidean;
    }
    return false;
}

namespace detail {

inline void split_two_groups(std::span<const SpdTensor> tensors, std::span<const int> labels,
                             std::vector<SpdTensor>& first, std::vector<SpdTensor>& second) {
    if (tensors.size() != labels.size()) throw InvalidArgument("tensors/labels size mismatch");
    if (group_sizes(labels).size() != 2) {
        throw InvalidArgument("mean-based statistic needs exactly two groups");
    }
    first.clear();
    second.clear();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        (labels[i] == 0 ? first : second).push_back(tensors[i]);
    }
}

}  // namespace detail

/// distance(mean(group 0), mean(group 1)); the pair must match geometrically
/// (arithmetic/Euclidean, Log-Euclidean/Log-Euclidean, SQ/SQ).
inline double mean_based_statistic(std::span<const SpdTensor> tensors, std::span<const int> labels,
                                   const MeanKind& mean, const SimilarityMeasure& measure) {
    if (!geometry_matches(mean, measure)) {
        throw MismatchedGeometry("mean-based statistic: mean kind and distance disagree");
    }
    std::vector<SpdTensor> a, b;
    detail::split_two_groups(tensors, labels, a, b);
    return dissimilarity(compute_mean(a, mean), compute_mean(b, mean), measure);
}

/// Same, with the distance implied by the mean; the affine-invariant Karcher
/// mean pairs with the affine-invariant geodesic distance.
inline double mean_based_statistic(std::span<const SpdTensor> tensors, std::span<const int> labels,
                                   const MeanKind& mean, double k0 = 1.0) {
    if (mean.tag == MeanTag::Karcher && mean.metric == KarcherMetric::AffineInvariant) {
        std::vector<SpdTensor> a, b;
        detail::split_two_groups(tensors, labels, a, b);
        return affine_invariant_distance(compute_mean(a, mean), compute_mean(b, mean));
    }
    SimilarityMeasure m;
    switch (mean.tag) {
        case MeanTag::Arithmetic: m = SimilarityMeasure::euclidean(); break;
        case MeanTag::SpectralQuaternion: m = SimilarityMeasure::spectral_quaternion(k0); break;
        default: m = SimilarityMeasure::log_euclidean(); break;
    }
    return mean_based_statistic(tensors, labels, mean, m);
}

/// Mean-difference permutation test, upper tail. Every relabeling recomputes
/// both group means.
inline TestResult mean_based_test(const Cohort& cohort, const MeanKind& mean,
                                  const PermutationScheme& scheme, const RunOptions& opts = {},
                                  double k0 = 1.0) {
    cohort.validate();
    auto stat = [&](std::span<const int> labels) {
        return mean_based_statistic(cohort.tensors, labels, mean, k0);
    };
    return run_permutation_test(stat, cohort.labels, scheme, Tail::Upper, opts);
}

}  // namespace spdperm
