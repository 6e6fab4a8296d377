#ifndef QFA_SPLINE_HPP
#define QFA_SPLINE_HPP

#include <cmath>

#include "qfa/common.hpp"

namespace qfa {

/// Spline basis on the quantile grid. The natural-cubic variant uses the
/// cardinal basis with knots at all L grid levels (K = L): phi_k is the
/// natural cubic spline interpolating the k-th unit vector. In that basis
/// B = I and Omega = Q R^{-1} Q^T (the classic second-derivative penalty),
/// both exact. A constant single-function basis covers the L = 1 case of
/// the spline autoregression.
struct SplineBasis {
    enum class Kind { NaturalCubic, Constant };

    Kind kind = Kind::NaturalCubic;
    std::vector<double> knots;
    int K = 0;
    MatrixXd B;       // L x K, phi_k(alpha_l)
    MatrixXd Omega;   // K x K, integral of second-derivative products
    MatrixXd Curv;    // K x K rows: second derivatives of the cardinal splines at knots

    static SplineBasis natural_cubic(const QuantileGrid& grid) {
        grid.validate();
        const int L = static_cast<int>(grid.size());
        if (L < 4) throw domain_error("SplineBasis: need at least 4 knots (penalty degenerate)");
        SplineBasis b;
        b.kind = Kind::NaturalCubic;
        b.knots = grid.levels;
        b.K = L;
        b.B = MatrixXd::Identity(L, L);

        // Green-Silverman Q (L x (L-2)) and tridiagonal R ((L-2) x (L-2))
        std::vector<double> h(L - 1);
        for (int i = 0; i < L - 1; ++i) h[i] = b.knots[i + 1] - b.knots[i];
        MatrixXd Q = MatrixXd::Zero(L, L - 2);
        MatrixXd R = MatrixXd::Zero(L - 2, L - 2);
        for (int j = 1; j <= L - 2; ++j) {       // interior knot j (0-based), column j-1
            Q(j - 1, j - 1) = 1.0 / h[j - 1];
            Q(j, j - 1) = -1.0 / h[j - 1] - 1.0 / h[j];
            Q(j + 1, j - 1) = 1.0 / h[j];
            R(j - 1, j - 1) = (h[j - 1] + h[j]) / 3.0;
            if (j <= L - 3) {
                R(j - 1, j) = h[j] / 6.0;
                R(j, j - 1) = h[j] / 6.0;
            }
        }
        Eigen::LLT<MatrixXd> rllt(R);
        MatrixXd Rinv_Qt = rllt.solve(Q.transpose());  // (L-2) x L: interior second derivatives
        b.Curv = MatrixXd::Zero(L, L);
        b.Curv.middleRows(1, L - 2) = Rinv_Qt;         // natural: zero curvature at the ends
        b.Omega = Q * Rinv_Qt;
        b.Omega = 0.5 * (b.Omega + b.Omega.transpose().eval());
        return b;
    }

    static SplineBasis constant(double level) {
        SplineBasis b;
        b.kind = Kind::Constant;
        b.knots = {level};
        b.K = 1;
        b.B = MatrixXd::Ones(1, 1);
        b.Omega = MatrixXd::Zero(1, 1);
        b.Curv = MatrixXd::Zero(1, 1);
        return b;
    }

    /// phi(alpha): length-K vector of basis values.
    VectorXd evaluate(double alpha) const {
        if (kind == Kind::Constant) return VectorXd::Ones(1);
        const int L = K;
        VectorXd phi = VectorXd::Zero(L);
        int i = interval(alpha);
        double h = knots[i + 1] - knots[i];
        double a = (knots[i + 1] - alpha) / h;
        double c = (alpha - knots[i]) / h;
        phi[i] += a;
        phi[i + 1] += c;
        double common = (alpha - knots[i]) * (knots[i + 1] - alpha) / 6.0;
        phi -= common * ((1.0 + a) * Curv.row(i) + (1.0 + c) * Curv.row(i + 1)).transpose();
        return phi;
    }

    /// Second derivative of each basis function at alpha (piecewise linear).
    VectorXd second_derivative(double alpha) const {
        if (kind == Kind::Constant) return VectorXd::Zero(1);
        int i = interval(alpha);
        double h = knots[i + 1] - knots[i];
        double a = (knots[i + 1] - alpha) / h;
        double c = (alpha - knots[i]) / h;
        return (a * Curv.row(i) + c * Curv.row(i + 1)).transpose();
    }

private:
    int interval(double alpha) const {
        const int L = static_cast<int>(knots.size());
        if (alpha <= knots.front()) return 0;
        if (alpha >= knots.back()) return L - 2;
        int lo = 0, hi = L - 1;
        while (hi - lo > 1) {
            int mid = (lo + hi) / 2;
            if (knots[mid] <= alpha) lo = mid;
            else hi = mid;
        }
        return lo;
    }
};

inline SplineBasis build_basis(const QuantileGrid& grid) { return SplineBasis::natural_cubic(grid); }

/// Smoothing-spline fit of scalar values on the grid:
/// xi = (B^T B + lambda Omega)^{-1} B^T values.
struct SmoothedCurve {
    VectorXd xi;
    const SplineBasis* basis = nullptr;

    double evaluate(double alpha) const { return basis->evaluate(alpha).dot(xi); }
};

inline SmoothedCurve smooth_scalar(const VectorXd& values, double lambda, const SplineBasis& basis) {
    if (lambda < 0.0) throw domain_error("smooth_scalar: lambda must be >= 0");
    if (values.size() != basis.B.rows())
        throw domain_error("smooth_scalar: values length does not match basis knots");
    MatrixXd A = basis.B.transpose() * basis.B + lambda * basis.Omega;
    Eigen::LDLT<MatrixXd> ldlt(A);
    if (ldlt.info() != Eigen::Success)
        throw numerical_error("smooth_scalar: singular smoothing system");
    SmoothedCurve c;
    c.xi = ldlt.solve(basis.B.transpose() * values);
    c.basis = &basis;
    return c;
}

/// smooth.spline-style reparameterization lambda = r * 256^(3*spar - 1).
inline double spar_to_lambda(double spar, double r) {
    if (r <= 0.0) throw domain_error("spar_to_lambda: r must be positive");
    return r * std::pow(256.0, 3.0 * spar - 1.0);
}

} // namespace qfa

#endif
