#ifndef QFA_QUANTILE_REGRESSION_HPP
#define QFA_QUANTILE_REGRESSION_HPP

#include <array>
#include <cmath>
#include <vector>

#include "qfa/common.hpp"

namespace qfa {

/// Check loss rho_alpha(y) = y * (alpha - I(y <= 0)).
inline double check_loss(double residual, double alpha) {
    if (alpha <= 0.0 || alpha >= 1.0) throw domain_error("check_loss: alpha must be in (0,1)");
    return residual * (alpha - (residual <= 0.0 ? 1.0 : 0.0));
}

/// Trigonometric regressor of Eq-style three-branch form: [1] at omega=0,
/// [1, cos(pi t)] at omega=pi, [1, cos(omega t), sin(omega t)] otherwise.
struct TrigDesign {
    double omega = 0.0;
    int n = 0;
    int columns = 1;

    /// Build from a Fourier index v with omega = 2*pi*v/n; the omega=0 and
    /// omega=pi branches are selected by v==0 and 2v==n, never by floating
    /// comparison.
    static TrigDesign from_index(int v, int n) {
        if (n < 4) throw domain_error("TrigDesign: need n >= 4");
        if (v < 0 || v >= n) throw domain_error("TrigDesign: need 0 <= v < n");
        TrigDesign d;
        d.n = n;
        d.omega = 2.0 * pi * v / n;
        d.columns = (v == 0) ? 1 : (2 * v == n ? 2 : 3);
        return d;
    }

    static TrigDesign from_omega(double omega, int n) {
        if (n < 4) throw domain_error("TrigDesign: need n >= 4");
        if (omega < 0.0 || omega >= 2.0 * pi) throw domain_error("TrigDesign: omega must be in [0, 2*pi)");
        TrigDesign d;
        d.n = n;
        d.omega = omega;
        d.columns = (omega == 0.0) ? 1 : (omega == pi ? 2 : 3);
        return d;
    }

    /// Regressor row for time index t = 1..n.
    std::array<double, 3> row(int t) const {
        if (columns == 1) return {1.0, 0.0, 0.0};
        if (columns == 2) return {1.0, std::cos(pi * t), 0.0};
        return {1.0, std::cos(omega * t), std::sin(omega * t)};
    }
};

/// Standalone regressor per the three-branch definition (omega compared to
/// 0 and pi).
inline std::vector<double> trig_regressor(int t, double omega) {
    TrigDesign d = TrigDesign::from_omega(omega, std::max(4, t));
    auto r = d.row(t);
    return std::vector<double>(r.begin(), r.begin() + d.columns);
}

struct QrFit {
    VectorXd beta;
    double objective = 0.0;
    int iterations = 0;
};

namespace detail {

/// Reusable workspace for the interior-point solver.
struct FnWorkspace {
    std::vector<double> X;     // design, n x d column-major
    std::vector<double> x, s, z, w, dx, ds, dz, dw, dsep, dr, q, u, xinv, sinv;
    void resize(std::size_t n) {
        for (auto* v : {&x, &s, &z, &w, &dx, &ds, &dz, &dw, &dsep, &dr, &q, &u, &xinv, &sinv})
            v->resize(n);
    }
};

inline FnWorkspace& fn_workspace() {
    thread_local FnWorkspace ws;
    return ws;
}

/// Solves the bounded-variables dual LP of quantile regression,
///   max { y'a : X'a = (1-alpha) X'1, a in [0,1]^n },
/// by the Frisch-Newton primal-dual interior-point method with Mehrotra
/// corrector (after rqfnb). Returns the primal coefficients (the equality
/// multipliers). d <= 3.
template <int d>
inline bool frisch_newton(const double* y, const double* X, int n, double alpha,
                          double tol, int max_iter, double* beta_out, int* iters_out,
                          double* gap_out) {
    constexpr double big = 1e20;
    const double step_factor = 0.99995;
    FnWorkspace& ws = fn_workspace();
    ws.resize(n);
    double* x = ws.x.data();   // dual variable a
    double* s = ws.s.data();   // 1 - a
    double* z = ws.z.data();
    double* w = ws.w.data();
    double* dx = ws.dx.data();
    double* ds = ws.ds.data();
    double* dz = ws.dz.data();
    double* dw = ws.dw.data();
    double* dr = ws.dr.data();
    double* q = ws.q.data();   // diagonal weights
    double* u = ws.u.data();
    double* xinv = ws.xinv.data();
    double* sinv = ws.sinv.data();

    auto col = [&](int j) { return X + static_cast<std::ptrdiff_t>(j) * n; };

    // c = -y (maximize y'a as a minimization), b = (1-alpha) X'1
    std::array<double, 3> b{}, yd{}, dy{}, rhs{};
    for (int j = 0; j < d; ++j) {
        double sum = 0.0;
        const double* cj = col(j);
        for (int i = 0; i < n; ++i) sum += cj[i];
        b[j] = (1.0 - alpha) * sum;
    }

    // symmetric d x d solve helper (normal equations X' diag(q) X)
    auto solve_weighted = [&](const double* diag, const double* r, double* out, double* ada) -> bool {
        for (int j = 0; j < d; ++j)
            for (int k = j; k < d; ++k) {
                double acc = 0.0;
                const double* cj = col(j);
                const double* ck = col(k);
                for (int i = 0; i < n; ++i) acc += diag[i] * cj[i] * ck[i];
                ada[j * 3 + k] = ada[k * 3 + j] = acc;
            }
        // Cholesky on d x d
        double L[9];
        for (int j = 0; j < d; ++j) {
            for (int k = 0; k <= j; ++k) {
                double acc = ada[j * 3 + k];
                for (int t = 0; t < k; ++t) acc -= L[j * 3 + t] * L[k * 3 + t];
                if (k == j) {
                    if (acc <= 0.0) return false;
                    L[j * 3 + j] = std::sqrt(acc);
                } else {
                    L[j * 3 + k] = acc / L[k * 3 + k];
                }
            }
        }
        double tmp[3];
        for (int j = 0; j < d; ++j) {
            double acc = r[j];
            for (int t = 0; t < j; ++t) acc -= L[j * 3 + t] * tmp[t];
            tmp[j] = acc / L[j * 3 + j];
        }
        for (int j = d - 1; j >= 0; --j) {
            double acc = tmp[j];
            for (int t = j + 1; t < d; ++t) acc -= L[t * 3 + j] * out[t];
            out[j] = acc / L[j * 3 + j];
        }
        return true;
    };

    // initial point
    for (int i = 0; i < n; ++i) {
        x[i] = 1.0 - alpha;
        s[i] = alpha;
        q[i] = 1.0;
    }
    // y_dual from unweighted least squares on c = -y
    std::array<double, 3> r0{};
    for (int j = 0; j < d; ++j) {
        double acc = 0.0;
        const double* cj = col(j);
        for (int i = 0; i < n; ++i) acc += cj[i] * (-y[i]);
        r0[j] = acc;
    }
    double ada[9], ada_saved[9];
    if (!solve_weighted(q, r0.data(), yd.data(), ada)) return false;
    const double eps0 = 1e-12;
    double gap = 0.0;
    for (int i = 0; i < n; ++i) {
        double si = -y[i];
        for (int j = 0; j < d; ++j) si -= col(j)[i] * yd[j];
        if (std::abs(si) < eps0) {
            z[i] = std::max(si, 0.0) + eps0;
            w[i] = std::max(-si, 0.0) + eps0;
        } else {
            z[i] = std::max(si, 0.0);
            w[i] = std::max(-si, 0.0);
        }
        gap += z[i] * x[i] + w[i] * s[i];
    }
    for (int i = 0; i < n; ++i) {
        xinv[i] = 1.0 / x[i];
        sinv[i] = 1.0 / s[i];
    }

    int it = 0;
    while (gap > tol && it < max_iter) {
        ++it;
        // affine direction
        for (int i = 0; i < n; ++i) {
            q[i] = 1.0 / (z[i] * xinv[i] + w[i] * sinv[i]);
            ds[i] = z[i] - w[i];
            dz[i] = q[i] * ds[i];
        }
        for (int j = 0; j < d; ++j) {
            double acc = b[j];
            const double* cj = col(j);
            for (int i = 0; i < n; ++i) acc += cj[i] * (dz[i] - x[i]);
            rhs[j] = acc;
        }
        if (!solve_weighted(q, rhs.data(), dy.data(), ada)) break;
        for (int k = 0; k < 9; ++k) ada_saved[k] = ada[k];

        double mp = 0.0, md = 0.0;  // largest relative step ratios
        for (int i = 0; i < n; ++i) {
            double adyi = 0.0;
            for (int j = 0; j < d; ++j) adyi += col(j)[i] * dy[j];
            double dsi = adyi - ds[i];
            dx[i] = q[i] * dsi;
            ds[i] = -dx[i];
            double rx = dx[i] * xinv[i];
            double rs = ds[i] * sinv[i];
            dz[i] = -z[i] * (rx + 1.0);
            dw[i] = -w[i] * (rs + 1.0);
            mp = std::max(mp, std::max(-rx, -rs));
            md = std::max(md, std::max(rx, rs) + 1.0);  // -dz/z = rx+1, -dw/w = rs+1
        }
        double deltap = mp > 0.0 ? std::min(step_factor / mp, 1.0) : 1.0;
        double deltad = md > 0.0 ? std::min(step_factor / md, 1.0) : 1.0;

        if (std::min(deltap, deltad) < 1.0) {
            // Mehrotra corrector
            double mu = 0.0;
            for (int i = 0; i < n; ++i) mu += z[i] * x[i] + w[i] * s[i];
            double g = mu;
            for (int i = 0; i < n; ++i) {
                g += deltap * dx[i] * z[i] + deltad * dz[i] * x[i] + deltap * deltad * dx[i] * dz[i];
                g += deltap * ds[i] * w[i] + deltad * dw[i] * s[i] + deltap * deltad * ds[i] * dw[i];
            }
            mu = mu * std::pow(g / mu, 3) / (2.0 * n);
            for (int i = 0; i < n; ++i)
                dr[i] = q[i] * (mu * (sinv[i] - xinv[i]) + dx[i] * dz[i] * xinv[i] - ds[i] * dw[i] * sinv[i]);
            std::array<double, 3> rhs2{};
            for (int j = 0; j < d; ++j) {
                double acc = rhs[j];
                const double* cj = col(j);
                for (int i = 0; i < n; ++i) acc += cj[i] * dr[i];
                rhs2[j] = acc;
            }
            // reuse the factorized normal matrix
            double L[9];
            bool ok = true;
            for (int j = 0; j < d && ok; ++j)
                for (int k = 0; k <= j; ++k) {
                    double acc = ada_saved[j * 3 + k];
                    for (int t = 0; t < k; ++t) acc -= L[j * 3 + t] * L[k * 3 + t];
                    if (k == j) {
                        if (acc <= 0.0) { ok = false; break; }
                        L[j * 3 + j] = std::sqrt(acc);
                    } else {
                        L[j * 3 + k] = acc / L[k * 3 + k];
                    }
                }
            if (!ok) break;
            double tmp[3];
            for (int j = 0; j < d; ++j) {
                double acc = rhs2[j];
                for (int t = 0; t < j; ++t) acc -= L[j * 3 + t] * tmp[t];
                tmp[j] = acc / L[j * 3 + j];
            }
            for (int j = d - 1; j >= 0; --j) {
                double acc = tmp[j];
                for (int t = j + 1; t < d; ++t) acc -= L[t * 3 + j] * dy[t];
                dy[j] = acc / L[j * 3 + j];
            }
            mp = 0.0;
            deltad = big;
            for (int i = 0; i < n; ++i) {
                double adyi = 0.0;
                for (int j = 0; j < d; ++j) adyi += col(j)[i] * dy[j];
                u[i] = adyi;
                double dxdz = dx[i] * dz[i];
                double dsdw = ds[i] * dw[i];
                dx[i] = q[i] * (u[i] - z[i] + w[i]) - dr[i];
                ds[i] = -dx[i];
                dz[i] = -z[i] + (mu - z[i] * dx[i] - dxdz) * xinv[i];
                dw[i] = -w[i] + (mu - w[i] * ds[i] - dsdw) * sinv[i];
                mp = std::max(mp, std::max(-dx[i] * xinv[i], -ds[i] * sinv[i]));
                if (dz[i] < 0) deltad = std::min(deltad, -z[i] / dz[i]);
                if (dw[i] < 0) deltad = std::min(deltad, -w[i] / dw[i]);
            }
            deltap = mp > 0.0 ? std::min(step_factor / mp, 1.0) : 1.0;
            deltad = std::min(step_factor * deltad, 1.0);
        }

        gap = 0.0;
        for (int i = 0; i < n; ++i) {
            x[i] += deltap * dx[i];
            s[i] += deltap * ds[i];
            z[i] += deltad * dz[i];
            w[i] += deltad * dw[i];
            gap += z[i] * x[i] + w[i] * s[i];
            xinv[i] = 1.0 / x[i];
            sinv[i] = 1.0 / s[i];
        }
        for (int j = 0; j < d; ++j) yd[j] += deltad * dy[j];
    }

    for (int j = 0; j < d; ++j) beta_out[j] = -yd[j];
    *iters_out = it;
    *gap_out = gap;
    return gap <= tol;
}

} // namespace detail

struct QrOptions {
    double gap_tol = 1e-8;
    int max_iter = 200;
    bool polish = true;  // refine to an exact-fit vertex when it helps
};

/// Fits the trigonometric quantile regression of the responses on the design
/// at quantile level alpha. The omega=0 case is the univariate problem whose
/// optimum is the sample quantile (lower endpoint of the optimal interval).
inline QrFit fit_qr(const VectorXd& responses, const TrigDesign& design, double alpha,
                    const QrOptions& opts = {}) {
    const int n = static_cast<int>(responses.size());
    if (n < 4) throw domain_error("fit_qr: need n >= 4");
    if (design.n != n) throw domain_error("fit_qr: design length does not match responses");
    if (alpha <= 0.0 || alpha >= 1.0) throw domain_error("fit_qr: alpha must be in (0,1)");
    const int d = design.columns;

    auto objective_of = [&](const VectorXd& beta, const std::vector<double>& X) {
        double obj = 0.0;
        for (int i = 0; i < n; ++i) {
            double fit = beta[0];
            for (int j = 1; j < d; ++j) fit += X[static_cast<std::size_t>(j) * n + i] * beta[j];
            obj += check_loss(responses[i] - fit, alpha);
        }
        return obj;
    };

    QrFit fit;
    if (d == 1) {
        fit.beta = VectorXd::Constant(1, sample_quantile(responses, alpha));
        fit.iterations = 0;
        double obj = 0.0;
        for (int i = 0; i < n; ++i) obj += check_loss(responses[i] - fit.beta[0], alpha);
        fit.objective = obj;
        return fit;
    }

    // column-major design
    std::vector<double> X(static_cast<std::size_t>(n) * d);
    if (d == 2) {
        for (int i = 0; i < n; ++i) {
            X[i] = 1.0;
            X[static_cast<std::size_t>(n) + i] = ((i + 1) % 2 == 0) ? 1.0 : -1.0;  // cos(pi t), t=i+1
        }
    } else {
        const cplx rot(std::cos(design.omega), std::sin(design.omega));
        cplx z = rot;  // e^{i omega t} at t=1
        for (int i = 0; i < n; ++i) {
            X[i] = 1.0;
            X[static_cast<std::size_t>(n) + i] = z.real();
            X[2 * static_cast<std::size_t>(n) + i] = z.imag();
            z *= rot;
            if ((i & 63) == 63) z /= std::abs(z);
        }
    }

    // degenerate data: constant responses are fitted exactly by the intercept
    double ymin = responses.minCoeff(), ymax = responses.maxCoeff();
    if (ymin == ymax) {
        fit.beta = VectorXd::Zero(d);
        fit.beta[0] = ymin;
        fit.objective = 0.0;
        fit.iterations = 0;
        return fit;
    }

    double beta_arr[3];
    int iters = 0;
    double gap = 0.0;
    double scale = 0.0;
    for (int i = 0; i < n; ++i) scale += std::abs(responses[i]);
    double tol = opts.gap_tol * std::max(1.0, scale);
    bool converged = d == 3 ? detail::frisch_newton<3>(responses.data(), X.data(), n, alpha, tol,
                                                      opts.max_iter, beta_arr, &iters, &gap)
                            : detail::frisch_newton<2>(responses.data(), X.data(), n, alpha, tol,
                                                      opts.max_iter, beta_arr, &iters, &gap);
    if (!converged)
        throw numerical_error("fit_qr: interior-point solver did not converge after " +
                              std::to_string(iters) + " iterations (duality gap " +
                              std::to_string(gap) + ")");

    fit.beta = Eigen::Map<VectorXd>(beta_arr, d);
    fit.iterations = iters;
    fit.objective = objective_of(fit.beta, X);

    if (opts.polish && n > d) {
        // the LP optimum sits at a vertex interpolating d points; snap to the
        // vertex through the d smallest residuals when it is at least as good
        std::vector<std::pair<double, int>> res(n);
        for (int i = 0; i < n; ++i) {
            double fitv = fit.beta[0];
            for (int j = 1; j < d; ++j) fitv += X[static_cast<std::size_t>(j) * n + i] * fit.beta[j];
            res[i] = {std::abs(responses[i] - fitv), i};
        }
        std::partial_sort(res.begin(), res.begin() + d, res.end());
        Eigen::Matrix3d A;
        Eigen::Vector3d rhs;
        for (int r = 0; r < d; ++r) {
            int i = res[r].second;
            for (int j = 0; j < d; ++j) A(r, j) = X[static_cast<std::size_t>(j) * n + i];
            rhs[r] = responses[i];
        }
        auto lu = A.topLeftCorner(d, d).fullPivLu();
        if (lu.isInvertible()) {
            VectorXd cand = lu.solve(rhs.head(d));
            double cobj = objective_of(cand, X);
            if (cobj <= fit.objective + 1e-12 * std::max(1.0, fit.objective)) {
                fit.beta = cand;
                fit.objective = cobj;
            }
        }
    }
    return fit;
}

inline QrFit fit_qr(const VectorXd& responses, double omega, double alpha,
                    const QrOptions& opts = {}) {
    return fit_qr(responses, TrigDesign::from_omega(omega, static_cast<int>(responses.size())),
                  alpha, opts);
}

} // namespace qfa

#endif
