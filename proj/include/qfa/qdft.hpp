#ifndef QFA_QDFT_HPP
#define QFA_QDFT_HPP

#include <vector>

#include "qfa/common.hpp"
#include "qfa/fft.hpp"
#include "qfa/parallel.hpp"
#include "qfa/quantile_regression.hpp"
#include "qfa/spectrum.hpp"

namespace qfa {

/// Complex m x L x n array of quantile DFT values, conjugate-symmetric in
/// frequency within each (channel, level) slice.
struct QdftArray {
    int n = 0, m = 0;
    QuantileGrid grid;
    std::vector<cplx> z;  // indexed (j * L + l) * n + v

    cplx& at(int j, std::size_t l, int v) { return z[(static_cast<std::size_t>(j) * grid.size() + l) * n + v]; }
    cplx at(int j, std::size_t l, int v) const { return z[(static_cast<std::size_t>(j) * grid.size() + l) * n + v]; }
};

/// Real m x L x n quantile series plus per-level means (the sample quantiles).
struct QuantileSeries {
    int n = 0, m = 0;
    QuantileGrid grid;
    std::vector<double> y;  // indexed (j * L + l) * n + (t-1)
    MatrixXd means;         // m x L

    double& at(int j, std::size_t l, int t1) { return y[(static_cast<std::size_t>(j) * grid.size() + l) * n + t1]; }
    double at(int j, std::size_t l, int t1) const { return y[(static_cast<std::size_t>(j) * grid.size() + l) * n + t1]; }
};

///// Quantile autocovariances: m x m matrix per (lag, level), divide-by-n
/// estimator on the demeaned quantile series.
struct Qacf {
    int m = 0, tau_max = 0;
    QuantileGrid grid;
    std::vector<MatrixXd> gamma;  // indexed l * (tau_max+1) + tau

    MatrixXd& at(int tau, std::size_t l) { return gamma[l * (tau_max + 1) + tau]; }
    const MatrixXd& at(int tau, std::size_t l) const { return gamma[l * (tau_max + 1) + tau]; }
};

/// Computes the QDFT of every channel over the quantile grid. Frequencies
/// v <= n/2 are obtained from trigonometric quantile regression; the rest
/// are filled by conjugate symmetry.
inline QdftArray qdft(const MultiSeries& series, const QuantileGrid& grid, int threads = 1,
                      const QrOptions& opts = {}) {
    series.validate();
    grid.validate();
    const int n = static_cast<int>(series.length());
    const int m = static_cast<int>(series.channels());
    const std::size_t L = grid.size();
    const int vmax = n / 2;

    QdftArray out;
    out.n = n;
    out.m = m;
    out.grid = grid;
    out.z.assign(static_cast<std::size_t>(m) * L * n, cplx(0, 0));

    const std::size_t tasks = static_cast<std::size_t>(m) * L * (vmax + 1);
    parallel_for(tasks, threads, [&](std::size_t task) {
        const int v = static_cast<int>(task % (vmax + 1));
        const std::size_t l = (task / (vmax + 1)) % L;
        const int j = static_cast<int>(task / ((vmax + 1) * L));
        VectorXd yj = series.values.col(j);
        TrigDesign design = TrigDesign::from_index(v, n);
        QrFit fit;
        try {
            fit = fit_qr(yj, design, grid[l], opts);
        } catch (const std::exception& e) {
            throw numerical_error("qdft: solver failed at channel " + std::to_string(j + 1) +
                                  ", level " + std::to_string(grid[l]) + ", v " + std::to_string(v) +
                                  ": " + e.what());
        }
        cplx zv;
        if (v == 0) zv = cplx(n * fit.beta[0], 0.0);
        else if (2 * v == n) zv = cplx(n * fit.beta[1], 0.0);
        else zv = 0.5 * n * cplx(fit.beta[1], -fit.beta[2]);
        out.at(j, l, v) = zv;
    });

    // conjugate mirror
    for (int j = 0; j < m; ++j)
        for (std::size_t l = 0; l < L; ++l)
            for (int v = vmax + 1; v < n; ++v)
                out.at(j, l, v) = std::conj(out.at(j, l, n - v));
    return out;
}

/// Quantile periodogram at the Fourier frequencies v = 1..floor((n-1)/2):
/// rank-one Hermitian matrices n^{-1} Z Z^H per (frequency, level).
inline SpectrumField qper(const QdftArray& q) {
    const int n = q.n;
    const std::size_t L = q.grid.size();
    SpectrumField out = SpectrumField::zeros(fourier_frequencies(n), q.grid, q.m);
    for (std::size_t fi = 0; fi < out.freqs.size(); ++fi) {
        const int v = static_cast<int>(fi) + 1;
        for (std::size_t l = 0; l < L; ++l) {
            MatrixXcd& s = out.at(fi, l);
            for (int j = 0; j < q.m; ++j)
                for (int k = 0; k < q.m; ++k)
                    s(j, k) = q.at(j, l, v) * std::conj(q.at(k, l, v)) / static_cast<double>(n);
        }
    }
    return out;
}

/// Quantile series: inverse DFT of the QDFT per (channel, level), with the
/// per-level means (sample quantiles) recorded.
inline QuantileSeries qser(const QdftArray& q) {
    const int n = q.n;
    const std::size_t L = q.grid.size();
    QuantileSeries out;
    out.n = n;
    out.m = q.m;
    out.grid = q.grid;
    out.y.resize(static_cast<std::size_t>(q.m) * L * n);
    out.means.resize(q.m, static_cast<Eigen::Index>(L));

    std::vector<cplx> buf(n);
    for (int j = 0; j < q.m; ++j)
        for (std::size_t l = 0; l < L; ++l) {
            for (int v = 0; v < n; ++v) buf[v] = q.at(j, l, v);
            ifft(buf);
            // y_t = n^{-1} sum_v Z_v e^{i t omega_v}, t = 1..n (t = n wraps to 0)
            double max_imag = 0.0;
            for (int t = 1; t <= n; ++t) {
                cplx w = buf[t % n];
                max_imag = std::max(max_imag, std::abs(w.imag()));
                out.at(j, l, t - 1) = w.real();
            }
            double scale = std::abs(q.at(j, l, 0)) / n + 1.0;
            if (max_imag >= 1e-8 * scale)
                throw numerical_error("qser: inverse DFT imaginary residual " + std::to_string(max_imag) +
                                      " exceeds tolerance (QDFT not conjugate-symmetric?)");
            out.means(j, static_cast<Eigen::Index>(l)) = q.at(j, l, 0).real() / n;
        }
    return out;
}

/// Quantile autocovariance function of the demeaned quantile series,
/// gamma[tau, l] = n^{-1} sum_{t=tau+1}^{n} (y_t - mean)(y_{t-tau} - mean)^T.
inline Qacf qacf(const QuantileSeries& qs, int tau_max) {
    const int n = qs.n, m = qs.m;
    if (tau_max < 0 || tau_max >= n / 2)
        throw domain_error("qacf: need 0 <= tau_max < n/2");
    const std::size_t L = qs.grid.size();
    Qacf out;
    out.m = m;
    out.tau_max = tau_max;
    out.grid = qs.grid;
    out.gamma.assign(L * (tau_max + 1), MatrixXd::Zero(m, m));

    MatrixXd x(n, m);
    for (std::size_t l = 0; l < L; ++l) {
        for (int j = 0; j < m; ++j)
            for (int t = 0; t < n; ++t) x(t, j) = qs.at(j, l, t) - qs.means(j, static_cast<Eigen::Index>(l));
        for (int tau = 0; tau <= tau_max; ++tau) {
            MatrixXd g = MatrixXd::Zero(m, m);
            for (int t = tau; t < n; ++t)
                g.noalias() += x.row(t).transpose() * x.row(t - tau);
            out.at(tau, l) = g / static_cast<double>(n);
        }
    }
    return out;
}

} // namespace qfa

#endif
