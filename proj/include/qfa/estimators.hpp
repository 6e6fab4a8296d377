#ifndef QFA_ESTIMATORS_HPP
#define QFA_ESTIMATORS_HPP

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qfa/qdft.hpp"
#include "qfa/spline.hpp"
#include "qfa/spectrum.hpp"

namespace qfa {

// ---------------------------------------------------------------------------
// Per-quantile Yule-Walker autoregression
// ---------------------------------------------------------------------------

struct ArFit {
    int p = 0;
    std::vector<MatrixXd> A;  // p coefficient matrices, m x m
    MatrixXd V;               // residual covariance, symmetric PSD
    double level = 0.0;
};

namespace detail {

/// Floors the eigenvalues of a symmetric real matrix at zero.
inline MatrixXd clip_psd_real(const MatrixXd& a, double floor_rel = 0.0) {
    MatrixXd h = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(h);
    double floor_val = floor_rel * std::max(h.trace(), 0.0);
    VectorXd ev = es.eigenvalues();
    bool changed = false;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (ev[i] < floor_val) { ev[i] = floor_val; changed = true; }
    if (!changed) return h;
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace detail

/// Solves the Yule-Walker equations A_p = gamma_p Gamma_p^{-1},
/// V = Gamma(0) - A_p gamma_p^T at one quantile level of the QACF.
inline ArFit yule_walker(const Qacf& acf, std::size_t level, int p) {
    const int m = acf.m;
    if (level >= acf.grid.size()) throw domain_error("yule_walker: level index out of range");
    if (p < 0 || p > acf.tau_max) throw domain_error("yule_walker: need 0 <= p <= tau_max");
    ArFit fit;
    fit.p = p;
    fit.level = acf.grid[level];
    if (p == 0) {
        fit.V = detail::clip_psd_real(acf.at(0, level));
        return fit;
    }
    // Gram of the stacked lags (y_{t-1}, ..., y_{t-p}): block (i, j) is
    // E[y_{t-1-i} y_{t-1-j}^T] = Gamma(j - i).
    MatrixXd Gp(m * p, m * p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
            int tau = j - i;
            if (tau >= 0) Gp.block(i * m, j * m, m, m) = acf.at(tau, level);
            else Gp.block(i * m, j * m, m, m) = acf.at(-tau, level).transpose();
        }
    Gp = 0.5 * (Gp + Gp.transpose().eval());
    MatrixXd gp(m, m * p);
    for (int tau = 1; tau <= p; ++tau) gp.middleCols((tau - 1) * m, m) = acf.at(tau, level);

    Eigen::LLT<MatrixXd> llt(Gp);
    if (llt.info() != Eigen::Success) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(Gp);
        throw numerical_error("yule_walker: block-Toeplitz matrix not positive definite at level " +
                              std::to_string(fit.level) + " (smallest eigenvalue " +
                              std::to_string(es.eigenvalues().minCoeff()) + ")");
    }
    MatrixXd A = llt.solve(gp.transpose()).transpose();  // m x mp
    fit.A.resize(p);
    for (int tau = 1; tau <= p; ++tau) fit.A[tau - 1] = A.middleCols((tau - 1) * m, m);
    fit.V = detail::clip_psd_real(acf.at(0, level) - A * gp.transpose());
    return fit;
}

namespace detail {

/// S(omega) = (I - A(omega))^{-1} V (I - A(omega))^{-H} with
/// A(omega) = sum_tau A_tau e^{-i omega tau}.
inline MatrixXcd ar_transfer_spectrum(const std::vector<MatrixXcd>& A_cplx, const MatrixXd& V,
                                      double omega, double cond_limit = 1e12) {
    const int m = static_cast<int>(V.rows());
    MatrixXcd T = MatrixXcd::Identity(m, m);
    for (std::size_t tau = 1; tau <= A_cplx.size(); ++tau)
        T -= A_cplx[tau - 1] * std::polar(1.0, -omega * static_cast<double>(tau));
    Eigen::JacobiSVD<MatrixXcd> svd(T, Eigen::ComputeThinU | Eigen::ComputeThinV);
    double smin = svd.singularValues().minCoeff();
    double smax = svd.singularValues().maxCoeff();
    if (smin <= 0.0 || smax / smin > cond_limit)
        throw numerical_error("ar spectrum: transfer matrix near-singular at omega = " +
                              std::to_string(omega) + " (condition > 1e12, unstable AR fit)");
    MatrixXcd Tinv = svd.solve(MatrixXcd::Identity(m, m));
    MatrixXcd s = Tinv * V.cast<cplx>() * Tinv.adjoint();
    return 0.5 * (s + s.adjoint().eval());
}

} // namespace detail

/// AR spectrum of one fit on a frequency grid; one quantile column.
inline SpectrumField ar_spectrum(const ArFit& fit, const std::vector<double>& freqs) {
    SpectrumField out = SpectrumField::zeros(freqs, QuantileGrid({fit.level}), static_cast<int>(fit.V.rows()));
    std::vector<MatrixXcd> Ac(fit.A.size());
    for (std::size_t t = 0; t < fit.A.size(); ++t) Ac[t] = fit.A[t].cast<cplx>();
    for (std::size_t fi = 0; fi < freqs.size(); ++fi)
        out.at(fi, 0) = detail::ar_transfer_spectrum(Ac, fit.V, freqs[fi]);
    return out;
}

/// Per-level Yule-Walker AR estimate over the whole quantile grid.
inline SpectrumField ar_estimate(const Qacf& acf, int p, const std::vector<double>& freqs) {
    SpectrumField out = SpectrumField::zeros(freqs, acf.grid, acf.m);
    for (std::size_t l = 0; l < acf.grid.size(); ++l) {
        ArFit fit = yule_walker(acf, l, p);
        std::vector<MatrixXcd> Ac(fit.A.size());
        for (std::size_t t = 0; t < fit.A.size(); ++t) Ac[t] = fit.A[t].cast<cplx>();
        for (std::size_t fi = 0; fi < freqs.size(); ++fi)
            out.at(fi, l) = detail::ar_transfer_spectrum(Ac, fit.V, freqs[fi]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Lag-window estimator
// ---------------------------------------------------------------------------

/// Tukey-Hanning lag window h(x) = (1 + cos(pi x)) / 2 for |x| <= 1.
inline double tukey_hanning(double x) {
    return std::abs(x) <= 1.0 ? 0.5 * (1.0 + std::cos(pi * x)) : 0.0;
}

/// Windowed Fourier transform of the QACF,
/// S(omega, alpha) = sum_{|tau| <= M} h(tau/M) Gamma(tau, alpha) e^{-i omega tau},
/// eigenvalue-floored at 1e-10 * trace for downstream use.
inline SpectrumField lw_estimate(const Qacf& acf, int M, const std::string& window,
                                 const std::vector<double>& freqs) {
    if (window != "tukey-hanning") throw domain_error("lw_estimate: unknown window '" + window + "'");
    if (M < 1 || M > acf.tau_max) throw domain_error("lw_estimate: need 1 <= M <= tau_max of the QACF");
    SpectrumField out = SpectrumField::zeros(freqs, acf.grid, acf.m);
    for (std::size_t l = 0; l < acf.grid.size(); ++l)
        for (std::size_t fi = 0; fi < freqs.size(); ++fi) {
            double omega = freqs[fi];
            MatrixXcd s = acf.at(0, l).cast<cplx>();
            for (int tau = 1; tau <= M; ++tau) {
                double h = tukey_hanning(static_cast<double>(tau) / M);
                if (h == 0.0) continue;
                cplx e = std::polar(1.0, -omega * tau);
                s += h * (acf.at(tau, l).cast<cplx>() * e +
                          acf.at(tau, l).transpose().cast<cplx>() * std::conj(e));
            }
            out.at(fi, l) = clip_psd(s);
        }
    return out;
}

inline SpectrumField lw_estimate(const Qacf& acf, int M, const std::string& window) {
    return lw_estimate(acf, M, window, {});
}

// ---------------------------------------------------------------------------
// Spline autoregression
// ---------------------------------------------------------------------------

/// Assembled normal-equation data of the SAR problem at a given order.
/// Row/column index layout: ((k * p + tau0) * m + channel), k = basis index,
/// tau0 = lag - 1.
struct SarProblem {
    int n = 0, m = 0, p = 0, K = 0, L = 0;
    MatrixXd S;        // sum_l Z_l Z_l^T
    MatrixXd G;        // sum_l Y_l Z_l^T, m x (K m p)
    MatrixXd OmegaPen; // basis Omega (D = Omega kron I_{pm} in this layout)
    double y2_sum = 0.0;  // sum_l ||Y_l||^2
    double r_scale = 0.0; // (n-p)^{-1} tr(S)/tr(D), the spar ratio scale
    QuantileGrid grid;

    int dim() const { return K * p * m; }

    /// M(lambda) = S + (n-p) * lambda * (Omega kron I_{pm}).
    MatrixXd penalized(double lambda) const {
        MatrixXd M = S;
        const int pm = p * m;
        double c = (n - p) * lambda;
        for (int k = 0; k < K; ++k)
            for (int k2 = 0; k2 < K; ++k2) {
                double w = c * OmegaPen(k, k2);
                if (w == 0.0) continue;
                M.block(k * pm, k2 * pm, pm, pm).diagonal().array() += w;
            }
        return M;
    }
};

namespace detail {

/// Demeaned level-l quantile series as an n x m matrix.
inline MatrixXd level_series(const QuantileSeries& qs, std::size_t l) {
    MatrixXd x(qs.n, qs.m);
    for (int j = 0; j < qs.m; ++j)
        for (int t = 0; t < qs.n; ++t)
            x(t, j) = qs.at(j, l, t) - qs.means(j, static_cast<Eigen::Index>(l));
    return x;
}

} // namespace detail

/// Builds the SAR normal-equation blocks from (already assembled) per-level
/// series. Series are demeaned n x m matrices, one per grid level.
inline SarProblem build_sar_problem(const std::vector<MatrixXd>& series, const QuantileGrid& grid,
                                    int p, const SplineBasis& basis) {
    const int L = static_cast<int>(series.size());
    if (L == 0 || static_cast<std::size_t>(L) != grid.size())
        throw domain_error("build_sar_problem: series/grid mismatch");
    const int n = static_cast<int>(series[0].rows());
    const int m = static_cast<int>(series[0].cols());
    if (p < 1 || p >= n) throw domain_error("build_sar_problem: need 1 <= p < n");

    SarProblem prob;
    prob.n = n;
    prob.m = m;
    prob.p = p;
    prob.K = basis.K;
    prob.L = L;
    prob.OmegaPen = basis.Omega;
    prob.grid = grid;
    const int pm = p * m;
    const int N = basis.K * pm;
    prob.S = MatrixXd::Zero(N, N);
    prob.G = MatrixXd::Zero(m, N);

    MatrixXd C(pm, pm), Gl(m, pm);
    for (int l = 0; l < L; ++l) {
        const MatrixXd& x = series[l];
        // lag cross-products over t = p+1..n (0-based rows p..n-1)
        for (int tau = 0; tau < p; ++tau)
            for (int tau2 = 0; tau2 < p; ++tau2) {
                MatrixXd acc = MatrixXd::Zero(m, m);
                for (int t = p; t < n; ++t)
                    acc.noalias() += x.row(t - 1 - tau).transpose() * x.row(t - 1 - tau2);
                C.block(tau * m, tau2 * m, m, m) = acc;
            }
        for (int tau = 0; tau < p; ++tau) {
            MatrixXd acc = MatrixXd::Zero(m, m);
            for (int t = p; t < n; ++t)
                acc.noalias() += x.row(t).transpose() * x.row(t - 1 - tau);
            Gl.middleCols(tau * m, m) = acc;
        }
        for (int t = p; t < n; ++t) prob.y2_sum += x.row(t).squaredNorm();

        VectorXd phi = basis.evaluate(grid[l]);
        for (int k = 0; k < basis.K; ++k) {
            if (phi[k] == 0.0) continue;
            for (int k2 = 0; k2 < basis.K; ++k2) {
                double w = phi[k] * phi[k2];
                if (w == 0.0) continue;
                prob.S.block(k * pm, k2 * pm, pm, pm) += w * C;
            }
            prob.G.middleCols(k * pm, pm) += phi[k] * Gl;
        }
    }
    double trD = basis.Omega.trace() * pm;
    prob.r_scale = trD > 0.0 ? prob.S.trace() / trD / (n - p) : 0.0;
    return prob;
}

inline SarProblem build_sar_problem(const QuantileSeries& qs, int p, const SplineBasis& basis) {
    std::vector<MatrixXd> series(qs.grid.size());
    for (std::size_t l = 0; l < qs.grid.size(); ++l) series[l] = detail::level_series(qs, l);
    return build_sar_problem(series, qs.grid, p, basis);
}

/// Fitted spline-AR model.
struct SarModel {
    int p = 0;
    SplineBasis basis;
    MatrixXd Theta;              // m x (K m p), columns laid out as SarProblem
    double lambda = 0.0;
    double spar = std::numeric_limits<double>::quiet_NaN();
    std::vector<VectorXd> vhat_xi;  // m*m smoothed residual-covariance coefficients (row-major entries)
    MatrixXd vtilde_raw;            // (m*m) x L raw residual covariances per level
    QuantileGrid grid;
    double hat_trace = std::numeric_limits<double>::quiet_NaN();
    int n = 0, m = 0;
    bool dof_deficient = false;
    std::vector<MatrixXd> residuals;  // per level, (n-p) x m

    /// A_tau(alpha) = Theta_tau Phi(alpha), tau = 1..p.
    MatrixXd coeff_at(int tau, double alpha) const {
        VectorXd phi = basis.evaluate(alpha);
        MatrixXd A = MatrixXd::Zero(m, m);
        const int pm = p * m;
        for (int k = 0; k < basis.K; ++k) {
            if (phi[k] == 0.0) continue;
            A += phi[k] * Theta.middleCols(k * pm + (tau - 1) * m, m);
        }
        return A;
    }

    /// Smoothed residual covariance at alpha (symmetric, not yet clipped).
    MatrixXd vhat_at(double alpha) const {
        VectorXd phi = basis.evaluate(alpha);
        MatrixXd V(m, m);
        for (int j = 0; j < m; ++j)
            for (int k = 0; k < m; ++k) V(j, k) = phi.dot(vhat_xi[j * m + k]);
        return 0.5 * (V + V.transpose().eval());
    }
};

struct SarFitOptions {
    bool compute_hat_trace = true;
    bool smooth_residual_cov = true;
    bool keep_residuals = true;
};

namespace detail {

/// Theta = G M(lambda)^{-1} via Cholesky of the penalized normal matrix.
inline MatrixXd sar_solve_theta(const SarProblem& prob, double lambda) {
    MatrixXd M = prob.penalized(lambda);
    Eigen::LLT<MatrixXd> llt(M);
    if (llt.info() != Eigen::Success)
        throw numerical_error("fit_sar: penalized normal matrix not positive definite");
    return llt.solve(prob.G.transpose()).transpose();
}

} // namespace detail

/// Fits the SAR model at fixed order and smoothing parameter from prebuilt
/// per-level series.
inline SarModel fit_sar(const std::vector<MatrixXd>& series, const QuantileGrid& grid, int p,
                        double lambda, const SplineBasis& basis, const SarFitOptions& opts = {},
                        const SarProblem* prebuilt = nullptr) {
    SarProblem local;
    const SarProblem* prob = prebuilt;
    if (!prob) {
        local = build_sar_problem(series, grid, p, basis);
        prob = &local;
    }
    const int n = prob->n, m = prob->m;

    SarModel model;
    model.p = p;
    model.basis = basis;
    model.grid = grid;
    model.lambda = lambda;
    model.n = n;
    model.m = m;
    model.dof_deficient = (n <= p * m * basis.K);
    model.Theta = detail::sar_solve_theta(*prob, lambda);

    // per-level residual covariances from the fitted functional coefficients
    const int L = prob->L;
    model.vtilde_raw.resize(m * m, L);
    if (opts.keep_residuals) model.residuals.resize(L);
    for (int l = 0; l < L; ++l) {
        std::vector<MatrixXd> A(p);
        for (int tau = 1; tau <= p; ++tau) A[tau - 1] = model.coeff_at(tau, grid[l]);
        const MatrixXd& x = series[l];
        MatrixXd resid(n - p, m);
        for (int t = p; t < n; ++t) {
            Eigen::RowVectorXd e = x.row(t);
            for (int tau = 1; tau <= p; ++tau) e -= x.row(t - tau) * A[tau - 1].transpose();
            resid.row(t - p) = e;
        }
        MatrixXd V = resid.transpose() * resid / static_cast<double>(n - p);
        V = 0.5 * (V + V.transpose().eval());
        for (int j = 0; j < m; ++j)
            for (int k = 0; k < m; ++k) model.vtilde_raw(j * m + k, l) = V(j, k);
        if (opts.keep_residuals) model.residuals[l] = std::move(resid);
    }

    if (opts.smooth_residual_cov) {
        model.vhat_xi.resize(m * m);
        for (int j = 0; j < m; ++j)
            for (int k = j; k < m; ++k) {
                VectorXd vals = model.vtilde_raw.row(j * m + k).transpose();
                SmoothedCurve c = smooth_scalar(vals, lambda, model.basis);
                model.vhat_xi[j * m + k] = c.xi;
                model.vhat_xi[k * m + j] = c.xi;
            }
    }

    if (opts.compute_hat_trace) {
        MatrixXd M = prob->penalized(lambda);
        Eigen::LLT<MatrixXd> llt(M);
        if (llt.info() != Eigen::Success)
            throw numerical_error("fit_sar: penalized normal matrix not positive definite");
        model.hat_trace = llt.solve(prob->S).trace() * m;
    }
    return model;
}

inline SarModel fit_sar(const QuantileSeries& qs, int p, double lambda, const SplineBasis& basis,
                        const SarFitOptions& opts = {}) {
    std::vector<MatrixXd> series(qs.grid.size());
    for (std::size_t l = 0; l < qs.grid.size(); ++l) series[l] = detail::level_series(qs, l);
    return fit_sar(series, qs.grid, p, lambda, basis, opts);
}

/// SAR spectral estimator on a (frequency, quantile) grid.
inline SpectrumField sar_spectrum(const SarModel& model, const std::vector<double>& freqs,
                                  const QuantileGrid& grid) {
    SpectrumField out = SpectrumField::zeros(freqs, grid, model.m);
    for (std::size_t li = 0; li < grid.size(); ++li) {
        double alpha = grid[li];
        std::vector<MatrixXcd> Ac(model.p);
        for (int tau = 1; tau <= model.p; ++tau) Ac[tau - 1] = model.coeff_at(tau, alpha).cast<cplx>();
        MatrixXd V = detail::clip_psd_real(model.vhat_at(alpha), 1e-10);
        for (std::size_t fi = 0; fi < freqs.size(); ++fi) {
            try {
                out.at(fi, li) = detail::ar_transfer_spectrum(Ac, V, freqs[fi]);
            } catch (const numerical_error& e) {
                throw numerical_error(std::string(e.what()) + " at alpha = " + std::to_string(alpha));
            }
        }
    }
    return out;
}

inline SpectrumField sar_spectrum(const SarModel& model, const std::vector<double>& freqs) {
    return sar_spectrum(model, freqs, model.grid);
}

// ---------------------------------------------------------------------------
// Order selection by average AIC
// ---------------------------------------------------------------------------

/// Chooses the AR order minimizing the quantile-grid average of
/// AIC_p = log det V_p + 2 p m^2 / (n - p_max), with least-squares fits on
/// the common sample t = p_max+1..n. Ties go to the smaller order.
inline int select_order(const QuantileSeries& qs, int p_max) {
    const int n = qs.n, m = qs.m;
    if (p_max < 0 || p_max >= n / 4) throw domain_error("select_order: need 0 <= p_max < n/4");
    const std::size_t L = qs.grid.size();
    const int nc = n - p_max;
    std::vector<double> avg_aic(p_max + 1, 0.0);

    for (std::size_t l = 0; l < L; ++l) {
        MatrixXd x = detail::level_series(qs, l);
        const int d = p_max * m;
        MatrixXd R = MatrixXd::Zero(d, d);
        MatrixXd r_yx = MatrixXd::Zero(m, d);
        MatrixXd Syy = MatrixXd::Zero(m, m);
        for (int t = p_max; t < n; ++t) {
            Syy.noalias() += x.row(t).transpose() * x.row(t);
            for (int tau = 0; tau < p_max; ++tau) {
                r_yx.middleCols(tau * m, m).noalias() += x.row(t).transpose() * x.row(t - 1 - tau);
                for (int tau2 = tau; tau2 < p_max; ++tau2) {
                    MatrixXd blk = x.row(t - 1 - tau).transpose() * x.row(t - 1 - tau2);
                    R.block(tau * m, tau2 * m, m, m) += blk;
                    if (tau2 > tau) R.block(tau2 * m, tau * m, m, m) += blk.transpose();
                }
            }
        }
        for (int p = 0; p <= p_max; ++p) {
            MatrixXd V;
            if (p == 0) {
                V = Syy / nc;
            } else {
                const int dp = p * m;
                Eigen::LDLT<MatrixXd> ldlt(R.topLeftCorner(dp, dp));
                if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
                    avg_aic[p] = std::numeric_limits<double>::infinity();
                    continue;
                }
                MatrixXd A = ldlt.solve(r_yx.leftCols(dp).transpose()).transpose();
                V = (Syy - A * r_yx.leftCols(dp).transpose()) / nc;
            }
            V = 0.5 * (V + V.transpose().eval());
            Eigen::LDLT<MatrixXd> vld(V);
            double logdet;
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(V);
            if (es.eigenvalues().minCoeff() <= 0.0) {
                avg_aic[p] = std::numeric_limits<double>::infinity();
                continue;
            }
            logdet = es.eigenvalues().array().log().sum();
            if (std::isfinite(avg_aic[p]))
                avg_aic[p] += (logdet + 2.0 * p * m * m / static_cast<double>(nc)) / L;
        }
    }
    int best = 0;
    for (int p = 1; p <= p_max; ++p)
        if (avg_aic[p] < avg_aic[best]) best = p;
    return best;
}

// ---------------------------------------------------------------------------
// GCV selection of the smoothing parameter
// ---------------------------------------------------------------------------

struct GcvPoint {
    double spar = 0.0, lambda = 0.0, gcv = 0.0, hat_trace = 0.0;
};

struct SparSelection {
    double spar = 0.0, lambda = 0.0, gcv = 0.0, hat_trace = 0.0;
    std::vector<GcvPoint> curve;
};

/// Whitened eigen-form of the SAR pencil: with S = Ls Ls^T and
/// C = Ls^{-1} (n-p) D Ls^{-T} = U diag(mu) U^T, every GCV quantity is a
/// scalar sum over the eigenvalues, so the spar search is cheap.
class SarGcv {
public:
    explicit SarGcv(const SarProblem& prob) : prob_(&prob) {
        const int N = prob.dim();
        const int pm = prob.p * prob.m;
        Eigen::LLT<MatrixXd> llt(prob.S);
        if (llt.info() != Eigen::Success)
            throw numerical_error("SarGcv: Gram matrix sum Z Z^T not positive definite");
        MatrixXd Ls = llt.matrixL();
        MatrixXd D = MatrixXd::Zero(N, N);
        for (int k = 0; k < prob.K; ++k)
            for (int k2 = 0; k2 < prob.K; ++k2) {
                double w = (prob.n - prob.p) * prob.OmegaPen(k, k2);
                if (w == 0.0) continue;
                D.block(k * pm, k2 * pm, pm, pm).diagonal().array() += w;
            }
        MatrixXd C = Ls.triangularView<Eigen::Lower>().solve(D);
        C = Ls.triangularView<Eigen::Lower>().solve(C.transpose().eval());
        C = 0.5 * (C + C.transpose().eval());
        mu_.resize(N);
        int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', N, C.data(), N, mu_.data());
        if (info != 0) throw numerical_error("SarGcv: eigendecomposition failed (dsyevd info " +
                                             std::to_string(info) + ")");
        for (int i = 0; i < N; ++i) mu_[i] = std::max(mu_[i], 0.0);
        // Gt = G Ls^{-T} U; C now holds the eigenvectors U
        MatrixXd GLinv = Ls.triangularView<Eigen::Lower>().solve(prob.G.transpose()).transpose();
        MatrixXd Gt = GLinv * C;
        g2_ = Gt.array().square().colwise().sum().transpose();
    }

    double hat_trace(double lambda) const {
        double s = 0.0;
        for (Eigen::Index i = 0; i < mu_.size(); ++i) s += 1.0 / (1.0 + lambda * mu_[i]);
        return s * prob_->m;
    }

    double rss(double lambda) const {
        double s = prob_->y2_sum;
        for (Eigen::Index i = 0; i < mu_.size(); ++i) {
            double w = 1.0 / (1.0 + lambda * mu_[i]);
            s += (w * w - 2.0 * w) * g2_[i];
        }
        return s;
    }

    /// GCV(lambda); +inf when the denominator 1 - tr(H)/(L(n-p)) is <= 0.
    double gcv(double lambda) const {
        double denom_scale = static_cast<double>(prob_->L) * (prob_->n - prob_->p);
        double denom = 1.0 - hat_trace(lambda) / denom_scale;
        if (denom <= 0.0) return std::numeric_limits<double>::infinity();
        return (rss(lambda) / denom_scale) / (denom * denom);
    }

    double r_scale() const { return prob_->r_scale; }

private:
    const SarProblem* prob_;
    VectorXd mu_;
    VectorXd g2_;
};

/// Grid search over spar followed by golden-section refinement to 0.01.
/// Ties on the grid go to the larger spar.
inline SparSelection select_spar(const SarProblem& prob, const std::vector<double>& spar_grid) {
    if (spar_grid.empty()) throw domain_error("select_spar: empty spar grid");
    SarGcv machinery(prob);
    const double r = machinery.r_scale();
    SparSelection sel;
    sel.gcv = std::numeric_limits<double>::infinity();
    for (double spar : spar_grid) {
        GcvPoint pt;
        pt.spar = spar;
        pt.lambda = spar_to_lambda(spar, r);
        pt.gcv = machinery.gcv(pt.lambda);
        pt.hat_trace = machinery.hat_trace(pt.lambda);
        sel.curve.push_back(pt);
        if (pt.gcv <= sel.gcv) {
            sel.spar = pt.spar;
            sel.lambda = pt.lambda;
            sel.gcv = pt.gcv;
            sel.hat_trace = pt.hat_trace;
        }
    }
    // golden-section refinement around the best grid cell, kept inside the grid
    double step = spar_grid.size() > 1 ? spar_grid[1] - spar_grid[0] : 0.05;
    double lo = std::max(sel.spar - step, spar_grid.front());
    double hi = std::min(sel.spar + step, spar_grid.back());
    const double gr = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = machinery.gcv(spar_to_lambda(x1, r));
    double f2 = machinery.gcv(spar_to_lambda(x2, r));
    while (b - a > 0.01) {
        if (f1 > f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = machinery.gcv(spar_to_lambda(x2, r));
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = machinery.gcv(spar_to_lambda(x1, r));
        }
    }
    double cand = (f1 < f2) ? x1 : x2;
    double cand_gcv = std::min(f1, f2);
    if (cand_gcv < sel.gcv) {
        sel.spar = cand;
        sel.lambda = spar_to_lambda(cand, r);
        sel.gcv = cand_gcv;
        sel.hat_trace = machinery.hat_trace(sel.lambda);
    }
    return sel;
}

inline SparSelection select_spar(const QuantileSeries& qs, int p, const SplineBasis& basis,
                                 const std::vector<double>& spar_grid) {
    SarProblem prob = build_sar_problem(qs, p, basis);
    return select_spar(prob, spar_grid);
}

/// Default spar search grid [0, 1.5] in steps of 0.05.
inline std::vector<double> default_spar_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 30; ++i) g.push_back(0.05 * i);
    return g;
}

} // namespace qfa

#endif
