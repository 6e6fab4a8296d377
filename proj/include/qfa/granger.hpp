#ifndef QFA_GRANGER_HPP
#define QFA_GRANGER_HPP

#include <atomic>
#include <cmath>
#include <string>
#include <vector>

#include "qfa/estimators.hpp"
#include "qfa/parallel.hpp"
#include "qfa/rng.hpp"

namespace qfa {

/// (effect, cause)-entry paths of the fitted coefficients: p x L matrix with
/// row tau-1 holding A_tau(alpha_l)(effect, cause) over the grid.
inline MatrixXd gc_extract(const SarModel& model, int effect, int cause) {
    if (effect == cause) throw domain_error("gc_extract: self-causality (j = j') is not tested");
    if (effect < 0 || effect >= model.m || cause < 0 || cause >= model.m)
        throw domain_error("gc_extract: channel index out of range");
    const int L = static_cast<int>(model.grid.size());
    MatrixXd paths(model.p, L);
    for (int l = 0; l < L; ++l)
        for (int tau = 1; tau <= model.p; ++tau)
            paths(tau - 1, l) = model.coeff_at(tau, model.grid[l])(effect, cause);
    return paths;
}

struct GcSamples {
    MatrixXd samples;  // B x (p*L); column (tau-1)*L + l
    int rejected = 0;
    int B = 0;
};

/// Residual bootstrap under the no-causality null (Appendix-style):
/// each replicate resamples one residual time-index sequence shared across
/// levels, simulates the null-constrained recursion (the (effect, cause)
/// coefficient entry zeroed at every lag and level) for n_B steps, keeps the
/// last n, refits the SAR problem at the same (p, lambda), and records the
/// (effect, cause) coefficient paths. Explosive replicates (|y| > 1e8) are
/// redrawn; more than 10% rejections is an error.
inline GcSamples gc_bootstrap(const SarModel& model, int effect, int cause, int B, int n_B,
                              std::uint64_t seed, int threads = 1) {
    if (effect == cause) throw domain_error("gc_bootstrap: self-causality (j = j') is not tested");
    if (B < 2) throw domain_error("gc_bootstrap: need B >= 2");
    if (model.residuals.empty())
        throw domain_error("gc_bootstrap: model has no stored residuals (refit with keep_residuals)");
    const int n = model.n, m = model.m, p = model.p;
    if (n_B <= n) throw domain_error("gc_bootstrap: need n_B > n");
    const int L = static_cast<int>(model.grid.size());
    const int nr = n - p;  // residual rows per level

    // null-constrained per-level coefficient matrices
    std::vector<std::vector<MatrixXd>> A0(L);
    for (int l = 0; l < L; ++l) {
        A0[l].resize(p);
        for (int tau = 1; tau <= p; ++tau) {
            MatrixXd A = model.coeff_at(tau, model.grid[l]);
            A(effect, cause) = 0.0;
            A0[l][tau - 1] = A;
        }
    }

    GcSamples out;
    out.B = B;
    out.samples.resize(B, p * L);
    std::atomic<int> rejected{0};

    parallel_for(static_cast<std::size_t>(B), threads, [&](std::size_t b) {
        Rng rng(seed, b);
        std::vector<int> idx(n_B);
        std::vector<MatrixXd> sim(L, MatrixXd(n, m));
        const int max_redraw = 64;
        int attempt = 0;
        for (;; ++attempt) {
            if (attempt >= max_redraw)
                throw numerical_error("gc_bootstrap: replicate " + std::to_string(b) +
                                      " kept exploding after " + std::to_string(max_redraw) +
                                      " redraws (unstable null model)");
            for (int t = 0; t < n_B; ++t)
                idx[t] = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(nr)));
            bool explosive = false;
            for (int l = 0; l < L && !explosive; ++l) {
                const MatrixXd& resid = model.residuals[l];
                std::vector<Eigen::VectorXd> hist(p, Eigen::VectorXd::Zero(m));
                for (int t = 0; t < n_B; ++t) {
                    Eigen::VectorXd y = resid.row(idx[t]).transpose();
                    for (int tau = 1; tau <= p; ++tau) y += A0[l][tau - 1] * hist[tau - 1];
                    if (y.cwiseAbs().maxCoeff() > 1e8) { explosive = true; break; }
                    for (int tau = p - 1; tau > 0; --tau) hist[tau] = hist[tau - 1];
                    if (p > 0) hist[0] = y;
                    if (t >= n_B - n) sim[l].row(t - (n_B - n)) = y.transpose();
                }
            }
            if (!explosive) break;
            rejected.fetch_add(1);
        }
        // demean and refit at the same (p, lambda)
        for (int l = 0; l < L; ++l) sim[l].rowwise() -= sim[l].colwise().mean();
        SarProblem prob = build_sar_problem(sim, model.grid, p, model.basis);
        MatrixXd theta = detail::sar_solve_theta(prob, model.lambda);
        SarModel refit;
        refit.p = p;
        refit.m = m;
        refit.basis = model.basis;
        refit.Theta = std::move(theta);
        for (int l = 0; l < L; ++l)
            for (int tau = 1; tau <= p; ++tau)
                out.samples(static_cast<Eigen::Index>(b), (tau - 1) * L + l) =
                    refit.coeff_at(tau, model.grid[l])(effect, cause);
    });

    out.rejected = rejected.load();
    if (out.rejected > B / 10)
        throw numerical_error("gc_bootstrap: " + std::to_string(out.rejected) + " of " +
                              std::to_string(B) + " replicates explosive (unstable null model)");
    return out;
}

struct GcLagResult {
    int tau = 0;
    double wald = 0.0;
    double p_value = 1.0;
};

struct GcResult {
    double wald = 0.0;
    double p_value = 1.0;
    std::vector<GcLagResult> per_lag;
    MatrixXd observed;  // p x L coefficient paths
    MatrixXd band_lo, band_hi;  // p x L pointwise 2.5% / 97.5% bootstrap quantiles
    int B = 0;
    int rejected = 0;
};

namespace detail {

/// Pseudoinverse of a symmetric PSD matrix with eigenvalue cutoff
/// 1e-10 * largest; zero matrix -> error.
inline MatrixXd psd_pinv(const MatrixXd& S) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (S + S.transpose()));
    double emax = es.eigenvalues().maxCoeff();
    if (emax <= 0.0)
        throw numerical_error("gc_test: degenerate bootstrap covariance (all samples identical)");
    double cut = 1e-10 * emax;
    VectorXd inv = es.eigenvalues();
    for (Eigen::Index i = 0; i < inv.size(); ++i) inv[i] = inv[i] > cut ? 1.0 / inv[i] : 0.0;
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

inline double bootstrap_p(double W, const MatrixXd& centered, const MatrixXd& pinv,
                          int col0, int cols) {
    int count = 0;
    for (Eigen::Index b = 0; b < centered.rows(); ++b) {
        VectorXd x = centered.row(b).segment(col0, cols).transpose();
        double w = x.dot(pinv * x);
        if (w >= W) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(centered.rows());
}

} // namespace detail

/// Wald statistic W = a^T Sigma_B^+ a of the observed coefficient paths
/// against the bootstrap covariance, with the bootstrap null distribution
/// formed from mean-centered replicate statistics. Also produces per-lag
/// tests and the pointwise 95% band.
inline GcResult gc_test(const MatrixXd& observed, const GcSamples& boot) {
    const int p = static_cast<int>(observed.rows());
    const int L = static_cast<int>(observed.cols());
    const Eigen::Index B = boot.samples.rows();
    if (B < 2) throw domain_error("gc_test: need at least 2 bootstrap samples");
    if (boot.samples.cols() != static_cast<Eigen::Index>(p) * L)
        throw domain_error("gc_test: bootstrap sample width does not match observed paths");

    VectorXd a(p * L);
    for (int tau = 0; tau < p; ++tau)
        for (int l = 0; l < L; ++l) a[tau * L + l] = observed(tau, l);

    Eigen::RowVectorXd mean = boot.samples.colwise().mean();
    MatrixXd centered = boot.samples.rowwise() - mean;
    MatrixXd Sigma = centered.transpose() * centered / static_cast<double>(B - 1);

    GcResult res;
    res.B = static_cast<int>(B);
    res.rejected = boot.rejected;
    res.observed = observed;

    MatrixXd pinv = detail::psd_pinv(Sigma);
    res.wald = a.dot(pinv * a);
    res.p_value = detail::bootstrap_p(res.wald, centered, pinv, 0, p * L);

    for (int tau = 0; tau < p; ++tau) {
        GcLagResult lr;
        lr.tau = tau + 1;
        MatrixXd pinv_t = detail::psd_pinv(Sigma.block(tau * L, tau * L, L, L));
        VectorXd at = a.segment(tau * L, L);
        lr.wald = at.dot(pinv_t * at);
        lr.p_value = detail::bootstrap_p(lr.wald, centered, pinv_t, tau * L, L);
        res.per_lag.push_back(lr);
    }

    res.band_lo.resize(p, L);
    res.band_hi.resize(p, L);
    for (int tau = 0; tau < p; ++tau)
        for (int l = 0; l < L; ++l) {
            VectorXd col = boot.samples.col(tau * L + l);
            res.band_lo(tau, l) = sample_quantile(col, 0.025);
            res.band_hi(tau, l) = sample_quantile(col, 0.975);
        }
    return res;
}

/// End-to-end test: extract observed paths, bootstrap under the null, and
/// compute the Wald statistics. n_B defaults to n + 1000.
inline GcResult gc_run(const SarModel& model, int effect, int cause, int B, std::uint64_t seed,
                       int threads = 1, int n_B = 0) {
    if (n_B <= 0) n_B = model.n + 1000;
    MatrixXd observed = gc_extract(model, effect, cause);
    GcSamples boot = gc_bootstrap(model, effect, cause, B, n_B, seed, threads);
    return gc_test(observed, boot);
}

} // namespace qfa

#endif
