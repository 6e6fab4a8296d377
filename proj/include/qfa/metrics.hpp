#ifndef QFA_METRICS_HPP
#define QFA_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "qfa/estimators.hpp"
#include "qfa/qdft.hpp"
#include "qfa/simulate.hpp"
#include "qfa/spectrum.hpp"

namespace qfa {

/// Kullback-Leibler spectral divergence: mean over the (frequency, quantile)
/// grid of tr(S_hat S^{-1}) - log(|S_hat|/|S|) - m. Both fields are
/// eigenvalue-floored at 1e-10 * trace so the determinants are defined;
/// identical inputs give exactly zero.
inline double kld(const SpectrumField& est, const SpectrumField& truth) {
    if (!est.same_grid(truth)) throw domain_error("kld: estimate/truth grids differ");
    const int m = est.m;
    const std::size_t cells = est.values.size();
    if (cells == 0) throw domain_error("kld: empty grid");
    double total = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
        if ((est.values[i].array() == truth.values[i].array()).all()) continue;  // exact zero
        MatrixXcd s_hat = clip_psd(est.values[i]);
        MatrixXcd s = clip_psd(truth.values[i]);
        Eigen::SelfAdjointEigenSolver<MatrixXcd> es_hat(s_hat), es(s);
        if (es.eigenvalues().minCoeff() <= 0.0 || es_hat.eigenvalues().minCoeff() <= 0.0)
            throw numerical_error("kld: spectral matrix singular after clipping (zero trace?)");
        Eigen::LLT<MatrixXcd> llt(s);
        double tr = llt.solve(s_hat).trace().real();
        double logdet = es_hat.eigenvalues().array().log().sum() -
                        es.eigenvalues().array().log().sum();
        total += tr - logdet - m;
    }
    return total / static_cast<double>(cells);
}

/// Ensemble average of quantile periodograms over independent realizations;
/// the desk-scale stand-in for the true quantile spectrum.
struct OracleSpectrum {
    SpectrumField field;
    int runs = 0;
    ProcessSpec process;
    std::uint64_t seed = 0;
};

/// Averages R quantile periodograms of independent realizations. Replicate b
/// draws from stream (seed, b); accumulation runs in replicate order, so the
/// result is identical for any thread count.
inline OracleSpectrum oracle_spectrum(const ProcessSpec& spec, int R, const QuantileGrid& grid,
                                      std::uint64_t seed, int threads = 1) {
    if (R < 1) throw domain_error("oracle_spectrum: need R >= 1");
    OracleSpectrum out;
    out.runs = R;
    out.process = spec;
    out.seed = seed;
    ProcessSpec local = spec;
    local.seed = seed;
    for (int b = 0; b < R; ++b) {
        MultiSeries series = generate(local, static_cast<std::uint64_t>(b));
        SpectrumField per = qper(qdft(series, grid, threads));
        if (b == 0) out.field = std::move(per);
        else
            for (std::size_t i = 0; i < out.field.values.size(); ++i)
                out.field.values[i] += per.values[i];
    }
    for (auto& v : out.field.values) v /= static_cast<double>(R);
    return out;
}

/// One spectral-estimator configuration for the benchmark harness.
struct EstimatorConfig {
    enum class Kind { sar, ar, lw };
    Kind kind = Kind::sar;
    int p = -1;                                          // -1: select by average AIC
    double spar = std::numeric_limits<double>::quiet_NaN();  // NaN: select by GCV (sar)
    int M = 30;                                          // lag-window bandwidth
    int p_max = 20;

    std::string name() const {
        switch (kind) {
            case Kind::sar:
                return std::string("sar/") + (std::isnan(spar) ? "gcv" : "spar=" + std::to_string(spar));
            case Kind::ar: return "ar/none";
            case Kind::lw: return "lw(M=" + std::to_string(M) + ")/none";
        }
        return "?";
    }
};

/// Parses "sar", "sar:gcv", "sar:0.9", "ar", "ar:10", "lw:30".
inline EstimatorConfig parse_estimator(const std::string& s) {
    EstimatorConfig c;
    std::string head = s, arg;
    if (auto pos = s.find(':'); pos != std::string::npos) {
        head = s.substr(0, pos);
        arg = s.substr(pos + 1);
    }
    if (head == "sar") {
        c.kind = EstimatorConfig::Kind::sar;
        if (!arg.empty() && arg != "gcv") c.spar = std::stod(arg);
    } else if (head == "ar") {
        c.kind = EstimatorConfig::Kind::ar;
        if (!arg.empty() && arg != "auto") c.p = std::stoi(arg);
    } else if (head == "lw") {
        c.kind = EstimatorConfig::Kind::lw;
        if (!arg.empty()) c.M = std::stoi(arg);
    } else {
        throw domain_error("unknown estimator '" + s + "' (expected sar[:gcv|:spar], ar[:p], lw[:M])");
    }
    return c;
}

/// Computes one estimator's spectrum from a quantile series on the Fourier
/// frequency grid. `p_hint` carries an already-selected order (< 0 to select
/// here).
inline SpectrumField estimate_spectrum(const EstimatorConfig& cfg, const QuantileSeries& qs,
                                       const std::vector<double>& freqs, int p_hint = -1) {
    int p = cfg.p >= 0 ? cfg.p : p_hint;
    switch (cfg.kind) {
        case EstimatorConfig::Kind::ar: {
            if (p < 0) p = select_order(qs, cfg.p_max);
            Qacf acf = qacf(qs, std::max(p, 1));
            return ar_estimate(acf, p, freqs);
        }
        case EstimatorConfig::Kind::lw: {
            Qacf acf = qacf(qs, cfg.M);
            return lw_estimate(acf, cfg.M, "tukey-hanning", freqs);
        }
        case EstimatorConfig::Kind::sar: {
            if (p < 0) p = select_order(qs, cfg.p_max);
            if (p < 1) p = 1;
            SplineBasis basis = qs.grid.size() >= 4 ? build_basis(qs.grid)
                                                    : SplineBasis::constant(qs.grid[0]);
            SarProblem prob = build_sar_problem(qs, p, basis);
            double lambda;
            if (std::isnan(cfg.spar)) {
                lambda = select_spar(prob, default_spar_grid()).lambda;
            } else {
                lambda = spar_to_lambda(cfg.spar, prob.r_scale);
            }
            SarFitOptions fopt;
            fopt.compute_hat_trace = false;
            fopt.keep_residuals = false;
            std::vector<MatrixXd> series(qs.grid.size());
            for (std::size_t l = 0; l < qs.grid.size(); ++l) series[l] = detail::level_series(qs, l);
            SarModel model = fit_sar(series, qs.grid, p, lambda, basis, fopt, &prob);
            return sar_spectrum(model, freqs);
        }
    }
    throw domain_error("estimate_spectrum: unknown estimator kind");
}

struct BenchResult {
    std::string estimator;
    int runs = 0;
    int completed = 0;
    int exclusions = 0;
    double mean_kld = std::numeric_limits<double>::quiet_NaN();
    double se = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> klds;  // per run; NaN where excluded
    std::vector<std::string> errors;
};

namespace detail {
/// Benchmark runs draw from streams disjoint from the oracle's (which uses
/// streams 0..R-1 of the same seed).
constexpr std::uint64_t bench_stream_base = 1'000'000;
}

/// Monte Carlo benchmark: `runs` independent realizations, each estimator's
/// KLD computed against one shared oracle. Estimator failures exclude that
/// (run, estimator) cell and are reported. Pass a prebuilt oracle to reuse a
/// cache; it must match (process, grid).
inline std::vector<BenchResult> mc_benchmark(const ProcessSpec& spec,
                                             const std::vector<EstimatorConfig>& configs, int runs,
                                             std::uint64_t seed, int oracle_R,
                                             const QuantileGrid& grid, int threads = 1,
                                             const SpectrumField* oracle = nullptr) {
    if (runs < 1) throw domain_error("mc_benchmark: need runs >= 1");
    if (configs.empty()) throw domain_error("mc_benchmark: no estimator configs");
    ProcessSpec local = spec;
    local.seed = seed;

    SpectrumField oracle_local;
    if (!oracle) {
        oracle_local = oracle_spectrum(local, oracle_R, grid, seed, threads).field;
        oracle = &oracle_local;
    }
    if (oracle->grid != grid)
        throw domain_error("mc_benchmark: oracle quantile grid does not match");

    std::vector<double> freqs = fourier_frequencies(spec.n);
    std::vector<BenchResult> results(configs.size());
    for (std::size_t c = 0; c < configs.size(); ++c) {
        results[c].estimator = configs[c].name();
        results[c].runs = runs;
        results[c].klds.assign(runs, std::numeric_limits<double>::quiet_NaN());
    }

    bool any_auto = std::any_of(configs.begin(), configs.end(), [](const EstimatorConfig& c) {
        return c.kind != EstimatorConfig::Kind::lw && c.p < 0;
    });
    int p_max = configs.front().p_max;

    for (int r = 0; r < runs; ++r) {
        MultiSeries series = generate(local, detail::bench_stream_base + r);
        QuantileSeries qs = qser(qdft(series, grid, threads));
        int p_sel = any_auto ? select_order(qs, p_max) : -1;
        for (std::size_t c = 0; c < configs.size(); ++c) {
            try {
                SpectrumField est = estimate_spectrum(configs[c], qs, freqs, p_sel);
                results[c].klds[r] = kld(est, *oracle);
            } catch (const std::exception& e) {
                results[c].exclusions += 1;
                results[c].errors.push_back("run " + std::to_string(r) + ": " + e.what());
            }
        }
    }

    for (auto& res : results) {
        double sum = 0.0;
        int cnt = 0;
        for (double v : res.klds)
            if (!std::isnan(v)) { sum += v; ++cnt; }
        res.completed = cnt;
        if (cnt > 0) res.mean_kld = sum / cnt;
        if (cnt > 1) {
            double ss = 0.0;
            for (double v : res.klds)
                if (!std::isnan(v)) ss += (v - res.mean_kld) * (v - res.mean_kld);
            res.se = std::sqrt(ss / (cnt - 1) / cnt);
        }
    }
    return results;
}

/// Default quantile grid 0.1, 0.11, ..., 0.9.
inline QuantileGrid default_grid() { return QuantileGrid::regular(0.1, 0.9, 0.01); }

} // namespace qfa

#endif
