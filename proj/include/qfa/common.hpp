#ifndef QFA_COMMON_HPP
#define QFA_COMMON_HPP

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace qfa {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using cplx = std::complex<double>;

/// Thrown on invalid arguments or malformed inputs.
class domain_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical procedure fails (non-convergence, singularity).
class numerical_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

constexpr double pi = 3.14159265358979323846;

/// m-channel real time series of length n; values is n rows (time) by m columns.
struct MultiSeries {
    MatrixXd values;
    std::vector<std::string> channel_names;

    Eigen::Index length() const { return values.rows(); }
    Eigen::Index channels() const { return values.cols(); }

    void validate() const {
        if (values.rows() < 8)
            throw domain_error("MultiSeries: need n >= 8, got n = " + std::to_string(values.rows()));
        if (values.cols() < 1)
            throw domain_error("MultiSeries: need m >= 1");
        if (!values.allFinite())
            throw domain_error("MultiSeries: values must be finite");
    }
};

/// Strictly increasing quantile levels in (0,1).
struct QuantileGrid {
    std::vector<double> levels;

    QuantileGrid() = default;
    explicit QuantileGrid(std::vector<double> lv) : levels(std::move(lv)) { validate(); }

    /// Levels min, min+step, ..., up to max (inclusive within rounding slack).
    static QuantileGrid regular(double min, double max, double step) {
        if (step <= 0.0) throw domain_error("QuantileGrid: step must be positive");
        std::vector<double> lv;
        for (int k = 0;; ++k) {
            double a = min + step * k;
            if (a > max + 1e-12) break;
            lv.push_back(a);
        }
        return QuantileGrid(std::move(lv));
    }

    std::size_t size() const { return levels.size(); }
    double operator[](std::size_t i) const { return levels[i]; }

    void validate() const {
        if (levels.empty()) throw domain_error("QuantileGrid: empty");
        for (std::size_t i = 0; i < levels.size(); ++i) {
            if (levels[i] <= 0.0 || levels[i] >= 1.0)
                throw domain_error("QuantileGrid: levels must lie in (0,1)");
            if (i > 0 && levels[i] <= levels[i - 1])
                throw domain_error("QuantileGrid: levels must be strictly increasing");
        }
    }

    bool operator==(const QuantileGrid& o) const { return levels == o.levels; }
};

/// Fourier frequencies omega_v = 2*pi*v/n for v = 1..floor((n-1)/2).
inline std::vector<double> fourier_frequencies(int n) {
    std::vector<double> f;
    for (int v = 1; v <= (n - 1) / 2; ++v) f.push_back(2.0 * pi * v / n);
    return f;
}

/// Sample alpha-quantile: lower endpoint of the optimal interval of the
/// check-loss problem (order statistic y_(ceil(a*n)); y_(a*n) when a*n is
/// an integer).
inline double sample_quantile(const VectorXd& y, double alpha) {
    if (alpha <= 0.0 || alpha >= 1.0) throw domain_error("sample_quantile: alpha must be in (0,1)");
    const Eigen::Index n = y.size();
    std::vector<double> s(y.data(), y.data() + n);
    std::sort(s.begin(), s.end());
    double an = alpha * static_cast<double>(n);
    auto k = static_cast<Eigen::Index>(std::ceil(an - 1e-9));
    if (k < 1) k = 1;
    if (k > n) k = n;
    return s[static_cast<std::size_t>(k - 1)];
}

} // namespace qfa

#endif
