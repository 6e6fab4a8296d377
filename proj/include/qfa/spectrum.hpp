#ifndef QFA_SPECTRUM_HPP
#define QFA_SPECTRUM_HPP

#include <vector>

#include "qfa/common.hpp"

namespace qfa {

/// m x m Hermitian spectral matrix per (frequency, quantile) grid point.
/// Frequencies are angular (omega in [0, pi]); outputs report f = omega/(2*pi).
struct SpectrumField {
    std::vector<double> freqs;   // omega
    QuantileGrid grid;
    int m = 0;
    std::vector<MatrixXcd> values;  // indexed fi * L + li

    MatrixXcd& at(std::size_t fi, std::size_t li) { return values[fi * grid.size() + li]; }
    const MatrixXcd& at(std::size_t fi, std::size_t li) const { return values[fi * grid.size() + li]; }

    static SpectrumField zeros(std::vector<double> freqs, QuantileGrid grid, int m) {
        SpectrumField s;
        s.freqs = std::move(freqs);
        s.grid = std::move(grid);
        s.m = m;
        s.values.assign(s.freqs.size() * s.grid.size(), MatrixXcd::Zero(m, m));
        return s;
    }

    bool same_grid(const SpectrumField& o) const {
        return m == o.m && grid == o.grid && freqs == o.freqs;
    }
};

/// Floors the eigenvalues of a Hermitian matrix at rel * trace so downstream
/// determinants and inverses are well defined.
inline MatrixXcd clip_psd(const MatrixXcd& a, double rel = 1e-10) {
    MatrixXcd h = 0.5 * (a + a.adjoint());
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(h);
    double tr = h.real().trace();
    double floor_val = rel * std::max(tr, 0.0);
    VectorXd ev = es.eigenvalues();
    bool changed = false;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (ev[i] < floor_val) { ev[i] = floor_val; changed = true; }
    if (!changed) return h;
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

} // namespace qfa

#endif
