// qfa: quantile-frequency analysis command-line tool.
//
// Subcommands mirror the library pipeline: qdft, qser, qacf, qper, spec,
// granger, simulate, benchmark, kld. Exit codes: 0 success, 2 usage/input
// error, 3 numerical failure.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <iostream>
#include <string>

#include "qfa/granger.hpp"
#include "qfa/io.hpp"
#include "qfa/metrics.hpp"
#include "qfa/qdft.hpp"
#include "qfa/simulate.hpp"

extern "C" void openblas_set_num_threads(int);

namespace {

using nlohmann::json;

struct GridSpec {
    std::string range = "0.1:0.9:0.01";
    std::vector<double> list;

    qfa::QuantileGrid build() const {
        if (!list.empty()) return qfa::QuantileGrid(list);
        double lo = 0, hi = 0, step = 0;
        if (std::sscanf(range.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) == 3)
            return qfa::QuantileGrid::regular(lo, hi, step);
        double single = 0;
        if (std::sscanf(range.c_str(), "%lf", &single) == 1)
            return qfa::QuantileGrid({single});
        throw qfa::domain_error("invalid --alpha spec '" + range + "' (want min:max:step or a level)");
    }
};

void add_grid_flags(CLI::App* cmd, GridSpec& g) {
    cmd->add_option("--alpha", g.range, "quantile grid min:max:step or a single level")
        ->capture_default_str();
    cmd->add_option("--alpha-list", g.list, "explicit comma-separated quantile levels")
        ->delimiter(',');
}

bool is_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    char magic[4] = {};
    return is.read(magic, 4) && std::string(magic, 4) == "QFAB";
}

/// Output format: explicit --format wins, else the --out extension.
std::string pick_format(const std::string& fmt, const std::string& out) {
    if (!fmt.empty()) return fmt;
    if (out.size() >= 4 && out.substr(out.size() - 4) == ".csv") return "csv";
    return "bin";
}

qfa::QdftArray load_qdft_input(const std::string& in, const GridSpec& grid, int threads) {
    if (is_container(in)) return qfa::read_qdft(in);
    qfa::MultiSeries s = qfa::read_series_csv(in);
    return qfa::qdft(s, grid.build(), threads);
}

qfa::QuantileSeries load_qser_input(const std::string& in, const GridSpec& grid, int threads) {
    if (is_container(in)) {
        auto is = qfa::detail::open_in(in);
        qfa::ContainerKind kind = qfa::detail::get_header(is);
        is.close();
        if (kind == qfa::ContainerKind::qser) return qfa::read_qser(in);
        if (kind == qfa::ContainerKind::qdft) return qfa::qser(qfa::read_qdft(in));
        throw qfa::domain_error("input '" + in + "': expected a series CSV, qdft, or qser container");
    }
    return qfa::qser(load_qdft_input(in, grid, threads));
}

json spectrum_meta_json(const qfa::SpectrumField& s) {
    return json{{"frequencies", s.freqs.size()}, {"levels", s.grid.size()}, {"channels", s.m}};
}

json gc_result_json(const qfa::GcResult& res, int effect, int cause) {
    json per_lag = json::array();
    for (const auto& lr : res.per_lag)
        per_lag.push_back({{"tau", lr.tau}, {"wald", lr.wald}, {"p_value", lr.p_value}});
    json band_lo = json::array(), band_hi = json::array(), obs = json::array();
    for (Eigen::Index t = 0; t < res.observed.rows(); ++t) {
        json rl = json::array(), rh = json::array(), ro = json::array();
        for (Eigen::Index l = 0; l < res.observed.cols(); ++l) {
            rl.push_back(res.band_lo(t, l));
            rh.push_back(res.band_hi(t, l));
            ro.push_back(res.observed(t, l));
        }
        band_lo.push_back(rl);
        band_hi.push_back(rh);
        obs.push_back(ro);
    }
    return json{{"effect", effect + 1},
                {"cause", cause + 1},
                {"wald", res.wald},
                {"p_value", res.p_value},
                {"B", res.B},
                {"rejected_replicates", res.rejected},
                {"per_lag", per_lag},
                {"observed", obs},
                {"band_lo", band_lo},
                {"band_hi", band_hi}};
}

void write_json(const std::string& path, const json& j) {
    auto os = qfa::detail::open_out(path);
    os << j.dump(2) << "\n";
}

int run(int argc, char** argv) {
    CLI::App app{"quantile-frequency analysis of multivariate time series"};
    app.require_subcommand(1);

    int threads = qfa::default_threads();
    app.add_option("--threads", threads, "worker threads (env QFA_THREADS)")->capture_default_str();

    std::string in, out, fmt, csv_out;

    // ---- qdft ----
    GridSpec g_qdft;
    auto* c_qdft = app.add_subcommand("qdft", "quantile discrete Fourier transform of a series CSV");
    c_qdft->add_option("--in", in, "input series CSV")->required();
    c_qdft->add_option("--out", out, "output path")->required();
    c_qdft->add_option("--format", fmt, "bin or csv (default: by extension)");
    add_grid_flags(c_qdft, g_qdft);

    // ---- qser ----
    GridSpec g_qser;
    auto* c_qser = app.add_subcommand("qser", "quantile series (inverse DFT of the QDFT)");
    c_qser->add_option("--in", in, "input series CSV or qdft container")->required();
    c_qser->add_option("--out", out, "output path")->required();
    c_qser->add_option("--format", fmt, "bin or csv (default: by extension)");
    add_grid_flags(c_qser, g_qser);

    // ---- qacf ----
    GridSpec g_qacf;
    int tau_max = -1;
    auto* c_qacf = app.add_subcommand("qacf", "quantile autocovariance function");
    c_qacf->add_option("--in", in, "input series CSV, qdft, or qser container")->required();
    c_qacf->add_option("--out", out, "output path")->required();
    c_qacf->add_option("--format", fmt, "bin or csv (default: by extension)");
    c_qacf->add_option("--tau-max", tau_max, "maximum lag (default n/4)");
    add_grid_flags(c_qacf, g_qacf);

    // ---- qper ----
    GridSpec g_qper;
    auto* c_qper = app.add_subcommand("qper", "quantile periodogram");
    c_qper->add_option("--in", in, "input series CSV or qdft container")->required();
    c_qper->add_option("--out", out, "output path")->required();
    c_qper->add_option("--format", fmt, "bin or csv (default: by extension)");
    add_grid_flags(c_qper, g_qper);

    // ---- spec ----
    GridSpec g_spec;
    std::string est = "sar", p_arg = "auto", spar_arg = "gcv", model_out, sidecar;
    int lw_M = 30, p_max = 20;
    auto* c_spec = app.add_subcommand("spec", "quantile spectrum estimation (ar, sar, lw)");
    c_spec->add_option("--in", in, "input series CSV, qdft, or qser container")->required();
    c_spec->add_option("--out", out, "output path")->required();
    c_spec->add_option("--format", fmt, "bin or csv (default: by extension)");
    c_spec->add_option("--est", est, "estimator: ar, sar, or lw")->capture_default_str();
    c_spec->add_option("--p", p_arg, "AR/SAR order or 'auto' (average AIC)")->capture_default_str();
    c_spec->add_option("--p-max", p_max, "order bound for auto selection")->capture_default_str();
    c_spec->add_option("--spar", spar_arg, "SAR smoothing parameter or 'gcv'")->capture_default_str();
    c_spec->add_option("--M", lw_M, "lag-window bandwidth")->capture_default_str();
    c_spec->add_option("--model-out", model_out, "write the fitted SAR model container here");
    c_spec->add_option("--sidecar", sidecar, "JSON sidecar path (default <out>.json for sar)");
    add_grid_flags(c_spec, g_spec);

    // ---- granger ----
    GridSpec g_gc;
    int cause = 2, effect = 1, B = 1000, n_B = 0;
    std::uint64_t seed = 0;
    std::string gc_out_prefix;
    auto* c_gc = app.add_subcommand("granger", "bootstrap Wald test for SAR Granger causality");
    c_gc->add_option("--in", in, "input series CSV or fitted sarmodel container")->required();
    c_gc->add_option("--out", gc_out_prefix, "output prefix (<prefix>.json, <prefix>_band.csv)")->required();
    c_gc->add_option("--cause", cause, "causing channel j' (1-based)")->capture_default_str();
    c_gc->add_option("--effect", effect, "affected channel j (1-based)")->capture_default_str();
    c_gc->add_option("--B", B, "bootstrap replicates")->capture_default_str();
    c_gc->add_option("--nb", n_B, "bootstrap recursion length (default n+1000)");
    c_gc->add_option("--seed", seed, "RNG seed")->capture_default_str();
    c_gc->add_option("--p", p_arg, "SAR order or 'auto' (when fitting from a series)")->capture_default_str();
    c_gc->add_option("--p-max", p_max, "order bound for auto selection")->capture_default_str();
    c_gc->add_option("--spar", spar_arg, "SAR smoothing parameter or 'gcv'")->capture_default_str();
    add_grid_flags(c_gc, g_gc);

    // ---- simulate ----
    std::string process = "mixture";
    int sim_n = 512;
    auto* c_sim = app.add_subcommand("simulate", "generate a benchmark process realization");
    c_sim->add_option("--process", process, "mixture or arma21")->capture_default_str();
    c_sim->add_option("--n", sim_n, "series length")->capture_default_str();
    c_sim->add_option("--seed", seed, "RNG seed")->capture_default_str();
    c_sim->add_option("--out", out, "output series CSV")->required();

    // ---- benchmark ----
    GridSpec g_bench;
    std::vector<std::string> est_list;
    int runs = 100, oracle_R = 1000;
    std::string oracle_cache, json_out;
    auto* c_bench = app.add_subcommand("benchmark", "Monte Carlo KLD benchmark against an ensemble oracle");
    c_bench->add_option("--process", process, "mixture or arma21")->capture_default_str();
    c_bench->add_option("--n", sim_n, "series length")->capture_default_str();
    c_bench->add_option("--runs", runs, "Monte Carlo replicates")->capture_default_str();
    c_bench->add_option("--est", est_list, "estimators, e.g. sar:gcv ar lw:30 (repeatable)")
        ->required()
        ->delimiter(',');
    c_bench->add_option("--seed", seed, "RNG seed")->capture_default_str();
    c_bench->add_option("--oracle-r", oracle_R, "oracle ensemble size")->capture_default_str();
    c_bench->add_option("--oracle-cache", oracle_cache, "oracle container path (reused when compatible)");
    c_bench->add_option("--out", out, "benchmark CSV output")->required();
    c_bench->add_option("--json", json_out, "benchmark JSON output");
    add_grid_flags(c_bench, g_bench);

    // ---- kld ----
    std::string est_path, truth_path;
    auto* c_kld = app.add_subcommand("kld", "Kullback-Leibler spectral divergence of two spectra");
    c_kld->add_option("--est", est_path, "estimated spectrum container")->required();
    c_kld->add_option("--truth", truth_path, "reference spectrum container")->required();
    c_kld->add_option("--json", json_out, "optional JSON output");

    // allow global flags (e.g. --threads) after a subcommand name
    for (CLI::App* sc : app.get_subcommands([](const CLI::App*) { return true; }))
        sc->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage errors are exit 2
    }
    openblas_set_num_threads(1);

    auto parse_order = [&](int n) -> int {
        if (p_arg == "auto") return -1;
        int p = std::stoi(p_arg);
        if (p < 0 || p >= n) throw qfa::domain_error("--p must be in [0, n)");
        return p;
    };

    if (c_qdft->parsed()) {
        qfa::QdftArray q = load_qdft_input(in, g_qdft, threads);
        if (pick_format(fmt, out) == "csv") qfa::write_qdft_csv(out, q);
        else qfa::write_qdft(out, q);
    } else if (c_qser->parsed()) {
        qfa::QuantileSeries qs = load_qser_input(in, g_qser, threads);
        if (pick_format(fmt, out) == "csv") qfa::write_qser_csv(out, qs);
        else qfa::write_qser(out, qs);
    } else if (c_qacf->parsed()) {
        qfa::QuantileSeries qs = load_qser_input(in, g_qacf, threads);
        if (tau_max < 0) tau_max = qs.n / 4;
        qfa::Qacf a = qfa::qacf(qs, tau_max);
        if (pick_format(fmt, out) == "csv") qfa::write_qacf_csv(out, a);
        else qfa::write_qacf(out, a);
    } else if (c_qper->parsed()) {
        qfa::QdftArray q = load_qdft_input(in, g_qper, threads);
        qfa::SpectrumField s = qfa::qper(q);
        if (pick_format(fmt, out) == "csv") qfa::write_spectrum_csv(out, s);
        else qfa::write_spectrum(out, s);
    } else if (c_spec->parsed()) {
        qfa::QuantileSeries qs = load_qser_input(in, g_spec, threads);
        std::vector<double> freqs = qfa::fourier_frequencies(qs.n);
        qfa::SpectrumField s;
        json sidecar_json;
        if (est == "ar") {
            int p = parse_order(qs.n);
            if (p < 0) p = qfa::select_order(qs, p_max);
            qfa::Qacf a = qfa::qacf(qs, std::max(p, 1));
            s = qfa::ar_estimate(a, p, freqs);
            sidecar_json = json{{"estimator", "ar"}, {"p", p}};
        } else if (est == "lw") {
            qfa::Qacf a = qfa::qacf(qs, lw_M);
            s = qfa::lw_estimate(a, lw_M, "tukey-hanning", freqs);
            sidecar_json = json{{"estimator", "lw"}, {"M", lw_M}};
        } else if (est == "sar") {
            int p = parse_order(qs.n);
            if (p < 0) p = qfa::select_order(qs, p_max);
            if (p < 1) p = 1;
            qfa::SplineBasis basis = qs.grid.size() >= 4 ? qfa::build_basis(qs.grid)
                                                         : qfa::SplineBasis::constant(qs.grid[0]);
            qfa::SarProblem prob = qfa::build_sar_problem(qs, p, basis);
            double spar = std::numeric_limits<double>::quiet_NaN(), lambda;
            json curve = json::array();
            if (spar_arg == "gcv") {
                qfa::SparSelection sel = qfa::select_spar(prob, qfa::default_spar_grid());
                spar = sel.spar;
                lambda = sel.lambda;
                for (const auto& pt : sel.curve)
                    curve.push_back({{"spar", pt.spar},
                                     {"lambda", pt.lambda},
                                     {"gcv", pt.gcv},
                                     {"tr_H", pt.hat_trace}});
            } else {
                spar = std::stod(spar_arg);
                lambda = qfa::spar_to_lambda(spar, prob.r_scale);
            }
            qfa::SarModel model = qfa::fit_sar(qs, p, lambda, basis);
            model.spar = spar;
            s = qfa::sar_spectrum(model, freqs);
            if (!model_out.empty()) qfa::write_sar_model(model_out, model);
            sidecar_json = json{{"estimator", "sar"},
                                {"p", p},
                                {"spar", spar},
                                {"lambda", lambda},
                                {"tr_H", model.hat_trace},
                                {"gcv_curve", curve}};
        } else {
            throw qfa::domain_error("--est must be ar, sar, or lw");
        }
        sidecar_json.update(spectrum_meta_json(s));
        if (pick_format(fmt, out) == "csv") qfa::write_spectrum_csv(out, s);
        else qfa::write_spectrum(out, s);
        if (sidecar.empty() && est == "sar") sidecar = out + ".json";
        if (!sidecar.empty()) write_json(sidecar, sidecar_json);
    } else if (c_gc->parsed()) {
        if (cause == effect) throw qfa::domain_error("--cause and --effect must differ");
        qfa::SarModel model;
        if (is_container(in)) {
            model = qfa::read_sar_model(in);
        } else {
            qfa::QuantileSeries qs = load_qser_input(in, g_gc, threads);
            int p = parse_order(qs.n);
            if (p < 0) p = qfa::select_order(qs, p_max);
            if (p < 1) p = 1;
            qfa::SplineBasis basis = qs.grid.size() >= 4 ? qfa::build_basis(qs.grid)
                                                         : qfa::SplineBasis::constant(qs.grid[0]);
            qfa::SarProblem prob = qfa::build_sar_problem(qs, p, basis);
            double lambda = spar_arg == "gcv"
                                ? qfa::select_spar(prob, qfa::default_spar_grid()).lambda
                                : qfa::spar_to_lambda(std::stod(spar_arg), prob.r_scale);
            model = qfa::fit_sar(qs, p, lambda, basis);
        }
        if (cause < 1 || cause > model.m || effect < 1 || effect > model.m)
            throw qfa::domain_error("--cause/--effect out of channel range");
        qfa::GcResult res = qfa::gc_run(model, effect - 1, cause - 1, B, seed, threads, n_B);
        write_json(gc_out_prefix + ".json", gc_result_json(res, effect - 1, cause - 1));
        qfa::write_gc_band_csv(gc_out_prefix + "_band.csv", res, model.grid);
        std::cout << "wald " << qfa::fmt17(res.wald) << " p_value " << qfa::fmt17(res.p_value)
                  << "\n";
    } else if (c_sim->parsed()) {
        qfa::ProcessSpec spec{qfa::parse_process(process), sim_n, seed};
        qfa::MultiSeries s = qfa::generate(spec, 0);
        qfa::write_series_csv(out, s);
    } else if (c_bench->parsed()) {
        qfa::ProcessSpec spec{qfa::parse_process(process), sim_n, seed};
        qfa::QuantileGrid grid = g_bench.build();
        std::vector<qfa::EstimatorConfig> configs;
        for (const std::string& e : est_list) configs.push_back(qfa::parse_estimator(e));

        qfa::SpectrumField oracle;
        const qfa::SpectrumField* oracle_ptr = nullptr;
        if (!oracle_cache.empty() && is_container(oracle_cache)) {
            qfa::OracleSpectrum o = qfa::read_oracle(oracle_cache);
            if (o.process.kind == spec.kind && o.process.n == spec.n && o.runs == oracle_R &&
                o.seed == seed && o.field.grid == grid) {
                oracle = std::move(o.field);
                oracle_ptr = &oracle;
            }
        }
        if (!oracle_ptr) {
            qfa::OracleSpectrum o = qfa::oracle_spectrum(spec, oracle_R, grid, seed, threads);
            if (!oracle_cache.empty()) qfa::write_oracle(oracle_cache, o);
            oracle = std::move(o.field);
            oracle_ptr = &oracle;
        }
        auto results = qfa::mc_benchmark(spec, configs, runs, seed, oracle_R, grid, threads, oracle_ptr);
        qfa::write_benchmark_csv(out, results, sim_n);
        json jr = json::array();
        for (const auto& r : results) {
            jr.push_back({{"estimator", r.estimator},
                          {"runs", r.runs},
                          {"completed", r.completed},
                          {"exclusions", r.exclusions},
                          {"mean_kld", r.mean_kld},
                          {"se", r.se},
                          {"klds", r.klds}});
            std::cout << r.estimator << " mean_kld " << qfa::fmt17(r.mean_kld) << " se "
                      << qfa::fmt17(r.se) << " exclusions " << r.exclusions << "\n";
        }
        if (!json_out.empty())
            write_json(json_out, json{{"process", process},
                                      {"n", sim_n},
                                      {"seed", seed},
                                      {"oracle_r", oracle_R},
                                      {"results", jr}});
    } else if (c_kld->parsed()) {
        qfa::SpectrumField est_s = qfa::read_spectrum(est_path);
        qfa::SpectrumField truth_s = qfa::read_spectrum(truth_path);
        double v = qfa::kld(est_s, truth_s);
        std::cout << qfa::fmt17(v) << "\n";
        if (!json_out.empty()) write_json(json_out, json{{"kld", v}});
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const qfa::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const qfa::numerical_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
