// spdperm command-line front end.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "spdperm/spdperm.hpp"

using namespace spdperm;
using nlohmann::json;

namespace {

// Opens `path` for writing, or returns std::cout for "-" / empty.
struct Output {
    std::unique_ptr<std::ofstream> file;
    std::ostream* os = &std::cout;

    explicit Output(const std::string& path) {
        if (path.empty() || path == "-") return;
        file = std::make_unique<std::ofstream>(path);
        if (!*file) throw ParseError("cannot write '" + path + "'");
        os = file.get();
    }
    std::ostream& operator*() { return *os; }
    std::ostream* operator->() { return os; }
};

SimilarityMeasure make_measure(const std::string& name, double k0) {
    const MeasureKind k = parse_measure_kind(name);
    return k == MeasureKind::SpectralQuaternion ? SimilarityMeasure::spectral_quaternion(k0)
                                                : SimilarityMeasure{k, 1.0};
}

GroupWeights make_weights(const std::string& name) {
    return parse_weight_scheme(name) == WeightScheme::Equal ? GroupWeights::equal()
                                                            : GroupWeights::proportional();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Permutation tests for populations of 3x3 diffusion tensors"};
    app.require_subcommand(1);

    // similarity-matrix
    std::string sm_input, sm_output, sm_measure = "sq";
    double sm_k0 = 1.0;
    auto* sm = app.add_subcommand("similarity-matrix", "Write the pairwise dissimilarity matrix as CSV");
    sm->add_option("--input", sm_input, "Cohort CSV")->required();
    sm->add_option("--measure", sm_measure, "euclidean|logeuclidean|sq|fa");
    sm->add_option("--k0", sm_k0, "Orientation weight scale for sq");
    sm->add_option("--output", sm_output, "Output CSV (default stdout)");

    // mean
    std::string mean_input, mean_kind = "le";
    auto* mean = app.add_subcommand("mean", "Print the cohort mean as one tensor row");
    mean->add_option("--input", mean_input, "Cohort CSV")->required();
    mean->add_option("--kind", mean_kind, "arithmetic|le|sq|karcher");

    // test
    std::string t_input, t_measure = "sq", t_weights = "proportional", t_statistic = "mrpp", t_mean = "le";
    double t_k0 = 1.0;
    std::size_t t_np = 20000;
    std::uint64_t t_seed = 42;
    bool t_enumerate = false;
    unsigned t_threads = 1;
    auto* test = app.add_subcommand("test", "Two-or-more-group permutation test");
    test->add_option("--input", t_input, "Cohort CSV")->required();
    test->add_option("--statistic", t_statistic, "mrpp|mean");
    test->add_option("--measure", t_measure, "MRPP measure: euclidean|logeuclidean|sq|fa");
    test->add_option("--mean", t_mean, "Mean kind for --statistic mean: arithmetic|le|sq|karcher");
    test->add_option("--k0", t_k0, "Orientation weight scale for sq");
    test->add_option("--np", t_np, "Monte-Carlo permutations");
    test->add_option("--seed", t_seed, "Permutation seed");
    test->add_option("--weights", t_weights, "proportional|equal");
    test->add_flag("--enumerate", t_enumerate, "Enumerate every assignment instead of sampling");
    test->add_option("--threads", t_threads, "Worker threads (0 = all cores)");

    // mtest
    std::string mt_input, mt_param = "geometric", mt_combiner = "fisher", mt_weights = "proportional";
    std::size_t mt_np = 20000;
    std::uint64_t mt_seed = 42;
    unsigned mt_threads = 1;
    auto* mtest = app.add_subcommand("mtest", "Multivariate test combining six partial tests");
    mtest->add_option("--input", mt_input, "Cohort CSV")->required();
    mtest->add_option("--parametrization", mt_param, "geometric|euclidean");
    mtest->add_option("--combiner", mt_combiner, "fisher|tippett");
    mtest->add_option("--np", mt_np, "Monte-Carlo permutations");
    mtest->add_option("--seed", mt_seed, "Permutation seed");
    mtest->add_option("--weights", mt_weights, "proportional|equal");
    mtest->add_option("--threads", mt_threads, "Worker threads (0 = all cores)");

    // simulate
    std::string s_regime = "high", s_deform = "co", s_out;
    double s_gamma = 0.5;
    std::size_t s_n = 10;
    int s_df = WishartNoise{}.degrees_of_freedom;
    std::uint64_t s_seed = 7;
    int s_axis = 2;
    auto* sim = app.add_subcommand("simulate", "Generate a synthetic two-group cohort");
    sim->add_option("--regime", s_regime, "high|low|neariso");
    sim->add_option("--deform", s_deform, "dl|ir|im|co|co+dl|co+ir|co+im");
    sim->add_option("--gamma", s_gamma, "Deformation amount in [0, 1]");
    sim->add_option("--n", s_n, "Samples per group");
    sim->add_option("--df", s_df, "Wishart degrees of freedom");
    sim->add_option("--seed", s_seed, "Noise seed");
    sim->add_option("--axis", s_axis, "Eigenvector used as rotation axis (0-2)");
    sim->add_option("--out", s_out, "Output CSV (default stdout)");

    // power
    std::string p_config, p_out;
    bool p_full_scale = false;
    unsigned p_threads = 1;
    auto* power = app.add_subcommand("power", "Power curves over a deformation grid");
    power->add_option("--config", p_config, "Study configuration JSON")->required();
    power->add_option("--out", p_out, "Output CSV (default stdout)");
    power->add_flag("--paper-scale", p_full_scale, "20000 permutations, 500 tests per grid point");
    power->add_option("--threads", p_threads, "Worker threads (0 = all cores)");

    // benchmark
    std::vector<std::size_t> b_sizes{10, 20, 40, 80};
    std::string b_measure = "sq", b_mean = "sq";
    BenchmarkOptions b_opts;
    auto* bench = app.add_subcommand("benchmark", "MRPP vs mean-based test cost over cohort sizes");
    bench->add_option("--sizes", b_sizes, "Even cohort sizes");
    bench->add_option("--measure", b_measure, "MRPP measure");
    bench->add_option("--mean", b_mean, "Mean kind for the enumerated mean-based test");
    bench->add_option("--np", b_opts.n_permutations, "MRPP Monte-Carlo permutations");
    bench->add_option("--max-enumerated", b_opts.max_enumerated_n, "Largest N for the enumerated mean test");
    bench->add_option("--seed", b_opts.seed, "Cohort seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sm) {
            const Cohort c = read_cohort_csv(sm_input);
            Output out(sm_output);
            write_similarity_csv(*out, similarity_matrix(c.tensors, make_measure(sm_measure, sm_k0)));
        } else if (*mean) {
            const Cohort c = read_cohort_csv(mean_input);
            write_tensor_row(std::cout, compute_mean(c.tensors, parse_mean_kind(mean_kind)));
        } else if (*test) {
            const Cohort c = read_cohort_csv(t_input);
            const PermutationScheme scheme = t_enumerate ? PermutationScheme::full_enumeration()
                                                         : PermutationScheme::monte_carlo(t_np, t_seed);
            const RunOptions opts{t_threads, false};
            json settings{{"statistic", t_statistic},
                          {"permutations", t_enumerate ? "enumerate" : "monte-carlo"},
                          {"seed", t_seed},
                          {"n_samples", c.size()},
                          {"group_sizes", c.sizes()}};
            TestResult r;
            if (t_statistic == "mrpp") {
                const SimilarityMeasure m = make_measure(t_measure, t_k0);
                r = mrpp_test(c, m, make_weights(t_weights), scheme, opts);
                settings["measure"] = measure_name(m.kind);
                settings["k0"] = m.k0;
                settings["weights"] = t_weights;
            } else if (t_statistic == "mean") {
                r = mean_based_test(c, parse_mean_kind(t_mean), scheme, opts, t_k0);
                settings["mean"] = t_mean;
                settings["k0"] = t_k0;
            } else {
                throw ParseError("unknown statistic '" + t_statistic + "'");
            }
            const json j{{"observed", r.observed},
                         {"p_value", r.p_value},
                         {"tail", tail_name(r.tail)},
                         {"n_permutations", r.n_permutations},
                         {"degenerate", r.degenerate},
                         {"settings", settings}};
            std::cout << j.dump(2) << "\n";
        } else if (*mtest) {
            const Cohort c = read_cohort_csv(mt_input);
            const auto rep = multivariate_test(c, parse_parametrization(mt_param), parse_combiner(mt_combiner),
                                               PermutationScheme::monte_carlo(mt_np, mt_seed),
                                               {make_weights(mt_weights), mt_threads});
            json vars = json::array();
            for (std::size_t v = 0; v < rep.variables.size(); ++v) {
                vars.push_back({{"variable", rep.variables[v]},
                                {"observed", rep.observed[v]},
                                {"xi", rep.partial_p[v]},
                                {"degenerate", static_cast<bool>(rep.degenerate[v])}});
            }
            const json j{{"parametrization", mt_param},
                         {"combiner", combiner_name(rep.combiner)},
                         {"variables", rep.variables},
                         {"partial", vars},
                         {"combined_statistic", rep.combined_statistic},
                         {"combined_p", rep.combined_p},
                         {"n_permutations", rep.n_permutations},
                         {"seed", rep.seed}};
            std::cout << j.dump(2) << "\n";
        } else if (*sim) {
            DeformationSpec spec = parse_deformation(s_deform, s_gamma);
            spec.rotation_axis = s_axis;
            const Cohort c = make_cohort(parse_regime(s_regime), spec, s_n, {s_df, s_seed});
            Output out(s_out);
            write_cohort_csv(*out, c);
        } else if (*power) {
            std::ifstream f(p_config);
            if (!f) throw ParseError("cannot open '" + p_config + "'");
            json j;
            try {
                j = json::parse(f);
            } catch (const json::exception& e) {
                throw ParseError(std::string("study config: ") + e.what());
            }
            StudyConfig cfg = config_from_json(j);
            if (p_full_scale) cfg.apply_full_scale();
            if (power->count("--threads")) cfg.threads = p_threads;
            Output out(p_out);
            write_power_header(*out, cfg);
            out->flush();
            run_power_study(cfg, [&](const std::vector<PowerCurve>& curves, std::size_t gi) {
                write_power_rows(*out, cfg, curves, gi);
                out->flush();
            });
        } else if (*bench) {
            const auto rows = benchmark_costs(b_sizes, make_measure(b_measure, 1.0), parse_mean_kind(b_mean), b_opts);
            std::cout << "n,assignments,similarity_evaluations,mrpp_seconds,mean_evaluations,mean_seconds\n";
            std::vector<double> x, y;
            for (const auto& r : rows) {
                std::printf("%zu,%llu,%zu,%.6f,%s,%s\n", r.n, static_cast<unsigned long long>(r.assignments),
                            r.similarity_evaluations, r.mrpp_seconds,
                            r.mean_executed ? std::to_string(r.mean_evaluations).c_str() : "",
                            r.mean_executed ? std::to_string(r.mean_seconds).c_str() : "");
                x.push_back(static_cast<double>(r.n));
                y.push_back(static_cast<double>(r.similarity_evaluations));
            }
            if (rows.size() >= 2) std::printf("# evaluation exponent %.4f\n", fit_loglog_exponent(x, y));
        }
    } catch (const Error& e) {
        std::cerr << "spdperm: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
