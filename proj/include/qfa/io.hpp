#ifndef QFA_IO_HPP
#define QFA_IO_HPP

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qfa/estimators.hpp"
#include "qfa/granger.hpp"
#include "qfa/metrics.hpp"
#include "qfa/qdft.hpp"

namespace qfa {

// ---------------------------------------------------------------------------
// Binary container ("QFAB"): little-endian, magic + version + kind header,
// then a kind-specific payload of u64 dimensions and raw f64 data.
// ---------------------------------------------------------------------------

enum class ContainerKind : std::uint32_t {
    qdft = 1,
    qser = 2,
    spectrum = 3,
    qacf = 4,
    sarmodel = 5,
    oracle = 6,
};

namespace detail {

constexpr std::uint32_t container_version = 1;

inline void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline void put_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline void put_f64s(std::ostream& os, const double* p, std::size_t count) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count * 8));
}

inline std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw domain_error("container: truncated file");
    return v;
}
inline std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 8)) throw domain_error("container: truncated file");
    return v;
}
inline double get_f64(std::istream& is) {
    double v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 8)) throw domain_error("container: truncated file");
    return v;
}
inline void get_f64s(std::istream& is, double* p, std::size_t count) {
    if (!is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(count * 8)))
        throw domain_error("container: truncated file");
}

inline void put_header(std::ostream& os, ContainerKind kind) {
    os.write("QFAB", 4);
    put_u32(os, container_version);
    put_u32(os, static_cast<std::uint32_t>(kind));
}

inline ContainerKind get_header(std::istream& is) {
    char magic[4] = {};
    if (!is.read(magic, 4) || std::string(magic, 4) != "QFAB")
        throw domain_error("container: bad magic (not a QFAB file)");
    std::uint32_t ver = get_u32(is);
    if (ver != container_version)
        throw domain_error("container: unsupported version " + std::to_string(ver));
    return static_cast<ContainerKind>(get_u32(is));
}

inline void expect_kind(ContainerKind got, ContainerKind want, const char* what) {
    if (got != want)
        throw domain_error(std::string("container: expected a ") + what + " payload, found kind " +
                           std::to_string(static_cast<std::uint32_t>(got)));
}

inline void put_grid(std::ostream& os, const QuantileGrid& g) {
    put_u64(os, g.size());
    put_f64s(os, g.levels.data(), g.size());
}

inline QuantileGrid get_grid(std::istream& is) {
    std::uint64_t L = get_u64(is);
    std::vector<double> lv(L);
    get_f64s(is, lv.data(), L);
    return QuantileGrid(std::move(lv));
}

inline void put_matrix(std::ostream& os, const MatrixXd& a) {
    put_u64(os, static_cast<std::uint64_t>(a.rows()));
    put_u64(os, static_cast<std::uint64_t>(a.cols()));
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) put_f64(os, a(i, j));
}

inline MatrixXd get_matrix(std::istream& is) {
    auto r = static_cast<Eigen::Index>(get_u64(is));
    auto c = static_cast<Eigen::Index>(get_u64(is));
    MatrixXd a(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) a(i, j) = get_f64(is);
    return a;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw domain_error("cannot open '" + path + "' for writing");
    return os;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw domain_error("cannot open '" + path + "' for reading");
    return is;
}

inline void put_spectrum_payload(std::ostream& os, const SpectrumField& s) {
    put_u64(os, s.freqs.size());
    put_grid(os, s.grid);
    put_u64(os, static_cast<std::uint64_t>(s.m));
    put_f64s(os, s.freqs.data(), s.freqs.size());
    for (const auto& v : s.values)
        for (int j = 0; j < s.m; ++j)
            for (int k = 0; k < s.m; ++k) {
                put_f64(os, v(j, k).real());
                put_f64(os, v(j, k).imag());
            }
}

inline SpectrumField get_spectrum_payload(std::istream& is) {
    std::uint64_t F = get_u64(is);
    QuantileGrid grid = get_grid(is);
    int m = static_cast<int>(get_u64(is));
    std::vector<double> freqs(F);
    get_f64s(is, freqs.data(), F);
    SpectrumField s = SpectrumField::zeros(std::move(freqs), std::move(grid), m);
    for (auto& v : s.values)
        for (int j = 0; j < m; ++j)
            for (int k = 0; k < m; ++k) {
                double re = get_f64(is), im = get_f64(is);
                v(j, k) = cplx(re, im);
            }
    return s;
}

} // namespace detail

inline void write_qdft(const std::string& path, const QdftArray& q) {
    auto os = detail::open_out(path);
    detail::put_header(os, ContainerKind::qdft);
    detail::put_u64(os, static_cast<std::uint64_t>(q.n));
    detail::put_u64(os, static_cast<std::uint64_t>(q.m));
    detail::put_grid(os, q.grid);
    for (const cplx& z : q.z) {
        detail::put_f64(os, z.real());
        detail::put_f64(os, z.imag());
    }
}

inline QdftArray read_qdft(const std::string& path) {
    auto is = detail::open_in(path);
    detail::expect_kind(detail::get_header(is), ContainerKind::qdft, "qdft");
    QdftArray q;
    q.n = static_cast<int>(detail::get_u64(is));
    q.m = static_cast<int>(detail::get_u64(is));
    q.grid = detail::get_grid(is);
    q.z.resize(static_cast<std::size_t>(q.n) * q.m * q.grid.size());
    for (cplx& z : q.z) {
        double re = detail::get_f64(is), im = detail::get_f64(is);
        z = cplx(re, im);
    }
    return q;
}

inline void write_qser(const std::string& path, const QuantileSeries& qs) {
    auto os = detail::open_out(path);
    detail::put_header(os, ContainerKind::qser);
    detail::put_u64(os, static_cast<std::uint64_t>(qs.n));
    detail::put_u64(os, static_cast<std::uint64_t>(qs.m));
    detail::put_grid(os, qs.grid);
    detail::put_matrix(os, qs.means);
    detail::put_f64s(os, qs.y.data(), qs.y.size());
}

inline QuantileSeries read_qser(const std::string& path) {
    auto is = detail::open_in(path);
    detail::expect_kind(detail::get_header(is), ContainerKind::qser, "qser");
    QuantileSeries qs;
    qs.n = static_cast<int>(detail::get_u64(is));
    qs.m = static_cast<int>(detail::get_u64(is));
    qs.grid = detail::get_grid(is);
    qs.means = detail::get_matrix(is);
    qs.y.resize(static_cast<std::size_t>(qs.n) * qs.m * qs.grid.size());
    detail::get_f64s(is, qs.y.data(), qs.y.size());
    return qs;
}

inline void write_spectrum(const std::string& path, const SpectrumField& s) {
    auto os = detail::open_out(path);
    detail::put_header(os, ContainerKind::spectrum);
    detail::put_spectrum_payload(os, s);
}

inline SpectrumField read_spectrum(const std::string& path) {
    auto is = detail::open_in(path);
    ContainerKind kind = detail::get_header(is);
    if (kind == ContainerKind::oracle) {
        detail::get_u32(is);  // process kind
        detail::get_u64(is);  // n
        detail::get_u64(is);  // R
        detail::get_u64(is);  // seed
        return detail::get_spectrum_payload(is);
    }
    detail::expect_kind(kind, ContainerKind::spectrum, "spectrum");
    return detail::get_spectrum_payload(is);
}

inline void write_qacf(const std::string& path, const Qacf& a) {
    auto os = detail::open_out(path);
    detail::put_header(os, ContainerKind::qacf);
    detail::put_u64(os, static_cast<std::uint64_t>(a.m));
    detail::put_u64(os, static_cast<std::uint64_t>(a.tau_max));
    detail::put_grid(os, a.grid);
    for (const MatrixXd& g : a.gamma)
        for (int j = 0; j < a.m; ++j)
            for (int k = 0; k < a.m; ++k) detail::put_f64(os, g(j, k));
}

inline Qacf read_qacf(const std::string& path) {
    auto is = detail::open_in(path);
    detail::expect_kind(detail::get_header(is), ContainerKind::qacf, "qacf");
    Qacf a;
    a.m = static_cast<int>(detail::get_u64(is));
    a.tau_max = static_cast<int>(detail::get_u64(is));
    a.grid = detail::get_grid(is);
    a.gamma.assign(a.grid.size() * (a.tau_max + 1), MatrixXd::Zero(a.m, a.m));
    for (MatrixXd& g : a.gamma)
        for (int j = 0; j < a.m; ++j)
            for (int k = 0; k < a.m; ++k) g(j, k) = detail::get_f64(is);
    return a;
}

inline void write_sar_model(const std::string& path, const SarModel& model) {
    auto os = detail::open_out(path);
    detail::put_header(os, ContainerKind::sarmodel);
    detail::put_u64(os, static_cast<std::uint64_t>(model.p));
    detail::put_u64(os, static_cast<std::uint64_t>(model.m));
    detail::put_u64(os, static_cast<std::uint64_t>(model.n));
    detail::put_u32(os, model.basis.kind == SplineBasis::Kind::Constant ? 1u : 0u);
    detail::put_u32(os, model.dof_deficient ? 1u : 0u);
    detail::put_u64(os, model.basis.knots.size());
    detail::put_f64s(os, model.basis.knots.data(), model.basis.knots.size());
    detail::put_grid(os, model.grid);
    detail::put_f64(os, model.lambda);
    detail::put_f64(os, model.spar);
    detail::put_f64(os, model.hat_trace);
    detail::put_matrix(os, model.Theta);
    detail::put_matrix(os, model.vtilde_raw);
    detail::put_u64(os, model.vhat_xi.size());
    for (const VectorXd& xi : model.vhat_xi) {
        detail::put_u64(os, static_cast<std::uint64_t>(xi.size()));
        detail::put_f64s(os, xi.data(), static_cast<std::size_t>(xi.size()));
    }
    detail::put_u64(os, model.residuals.size());
    for (const MatrixXd& r : model.residuals) detail::put_matrix(os, r);
}

inline SarModel read_sar_model(const std::string& path) {
    auto is = detail::open_in(path);
    detail::expect_kind(detail::get_header(is), ContainerKind::sarmodel, "sarmodel");
    SarModel model;
    model.p = static_cast<int>(detail::get_u64(is));
    model.m = static_cast<int>(detail::get_u64(is));
    model.n = static_cast<int>(detail::get_u64(is));
    bool constant = detail::get_u32(is) == 1u;
    model.dof_deficient = detail::get_u32(is) == 1u;
    std::uint64_t K = detail::get_u64(is);
    std::vector<double> knots(K);
    detail::get_f64s(is, knots.data(), K);
    model.basis = constant ? SplineBasis::constant(knots.at(0))
                           : SplineBasis::natural_cubic(QuantileGrid(knots));
    model.grid = detail::get_grid(is);
    model.lambda = detail::get_f64(is);
    model.spar = detail::get_f64(is);
    model.hat_trace = detail::get_f64(is);
    model.Theta = detail::get_matrix(is);
    model.vtilde_raw = detail::get_matrix(is);
    model.vhat_xi.resize(detail::get_u64(is));
    for (VectorXd& xi : model.vhat_xi) {
        xi.resize(static_cast<Eigen::Index>(detail::get_u64(is)));
        detail::get_f64s(is, xi.data(), static_cast<std::size_t>(xi.size()));
    }
    model.residuals.resize(detail::get_u64(is));
    for (MatrixXd& r : model.residuals) r = detail::get_matrix(is);
    return model;
}

inline void write_oracle(const std::string& path, const OracleSpectrum& o) {
    auto os = detail::open_out(path);
    detail::put_header(os, ContainerKind::oracle);
    detail::put_u32(os, static_cast<std::uint32_t>(o.process.kind));
    detail::put_u64(os, static_cast<std::uint64_t>(o.process.n));
    detail::put_u64(os, static_cast<std::uint64_t>(o.runs));
    detail::put_u64(os, o.seed);
    detail::put_spectrum_payload(os, o.field);
}

inline OracleSpectrum read_oracle(const std::string& path) {
    auto is = detail::open_in(path);
    detail::expect_kind(detail::get_header(is), ContainerKind::oracle, "oracle");
    OracleSpectrum o;
    o.process.kind = static_cast<ProcessKind>(detail::get_u32(is));
    o.process.n = static_cast<int>(detail::get_u64(is));
    o.runs = static_cast<int>(detail::get_u64(is));
    o.seed = detail::get_u64(is);
    o.field = detail::get_spectrum_payload(is);
    return o;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// 17-significant-digit decimal rendering (lossless double round trip).
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Reads an n x m numeric CSV; a non-numeric first row is taken as a header.
inline MultiSeries read_series_csv(const std::string& path) {
    auto is = detail::open_in(path);
    std::vector<std::vector<double>> rows;
    std::vector<std::string> names;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (!line.empty() && line.back() == ',') fields.push_back("");
        std::vector<double> vals;
        bool numeric = true;
        for (std::size_t c = 0; c < fields.size(); ++c) {
            try {
                std::size_t used = 0;
                double v = std::stod(fields[c], &used);
                while (used < fields[c].size() && std::isspace(static_cast<unsigned char>(fields[c][used]))) ++used;
                if (used != fields[c].size()) throw std::invalid_argument("trailing");
                vals.push_back(v);
            } catch (const std::exception&) {
                if (lineno == 1 && rows.empty()) {
                    numeric = false;
                    break;
                }
                throw domain_error("malformed CSV '" + path + "': row " + std::to_string(lineno) +
                                   ", column " + std::to_string(c + 1) + ": '" + fields[c] +
                                   "' is not numeric");
            }
        }
        if (!numeric) {
            names = fields;
            continue;
        }
        if (!rows.empty() && vals.size() != rows.front().size())
            throw domain_error("malformed CSV '" + path + "': row " + std::to_string(lineno) +
                               " has " + std::to_string(vals.size()) + " columns, expected " +
                               std::to_string(rows.front().size()));
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw domain_error("malformed CSV '" + path + "': no data rows");
    MultiSeries s;
    s.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows.front().size(); ++j)
            s.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    s.channel_names = std::move(names);
    return s;
}

inline void write_series_csv(const std::string& path, const MultiSeries& s) {
    auto os = detail::open_out(path);
    for (Eigen::Index j = 0; j < s.channels(); ++j)
        os << (j ? "," : "") << (static_cast<std::size_t>(j) < s.channel_names.size()
                                     ? s.channel_names[j]
                                     : "y" + std::to_string(j + 1));
    os << "\n";
    for (Eigen::Index t = 0; t < s.length(); ++t) {
        for (Eigen::Index j = 0; j < s.channels(); ++j)
            os << (j ? "," : "") << fmt17(s.values(t, j));
        os << "\n";
    }
}

inline void write_qdft_csv(const std::string& path, const QdftArray& q) {
    auto os = detail::open_out(path);
    os << "channel,alpha,v,re,im\n";
    for (int j = 0; j < q.m; ++j)
        for (std::size_t l = 0; l < q.grid.size(); ++l)
            for (int v = 0; v < q.n; ++v)
                os << j + 1 << "," << fmt17(q.grid[l]) << "," << v << ","
                   << fmt17(q.at(j, l, v).real()) << "," << fmt17(q.at(j, l, v).imag()) << "\n";
}

/// Wide format: n rows, one column per (channel, level); each column's mean
/// is the corresponding sample quantile.
inline void write_qser_csv(const std::string& path, const QuantileSeries& qs) {
    auto os = detail::open_out(path);
    bool first = true;
    for (int j = 0; j < qs.m; ++j)
        for (std::size_t l = 0; l < qs.grid.size(); ++l) {
            os << (first ? "" : ",") << "y" << j + 1 << "_a" << fmt17(qs.grid[l]);
            first = false;
        }
    os << "\n";
    for (int t = 0; t < qs.n; ++t) {
        first = true;
        for (int j = 0; j < qs.m; ++j)
            for (std::size_t l = 0; l < qs.grid.size(); ++l) {
                os << (first ? "" : ",") << fmt17(qs.at(j, l, t));
                first = false;
            }
        os << "\n";
    }
}

inline void write_qacf_csv(const std::string& path, const Qacf& a) {
    auto os = detail::open_out(path);
    os << "tau,alpha,j,k,value\n";
    for (int tau = 0; tau <= a.tau_max; ++tau)
        for (std::size_t l = 0; l < a.grid.size(); ++l)
            for (int j = 0; j < a.m; ++j)
                for (int k = 0; k < a.m; ++k)
                    os << tau << "," << fmt17(a.grid[l]) << "," << j + 1 << "," << k + 1 << ","
                       << fmt17(a.at(tau, l)(j, k)) << "\n";
}

/// Long format with f = omega / (2 pi).
inline void write_spectrum_csv(const std::string& path, const SpectrumField& s) {
    auto os = detail::open_out(path);
    os << "f,alpha,j,k,re,im\n";
    for (std::size_t fi = 0; fi < s.freqs.size(); ++fi)
        for (std::size_t l = 0; l < s.grid.size(); ++l)
            for (int j = 0; j < s.m; ++j)
                for (int k = 0; k < s.m; ++k) {
                    const cplx v = s.at(fi, l)(j, k);
                    os << fmt17(s.freqs[fi] / (2.0 * pi)) << "," << fmt17(s.grid[l]) << ","
                       << j + 1 << "," << k + 1 << "," << fmt17(v.real()) << "," << fmt17(v.imag())
                       << "\n";
                }
}

inline void write_benchmark_csv(const std::string& path, const std::vector<BenchResult>& results,
                                int n) {
    auto os = detail::open_out(path);
    os << "estimator,n,runs,completed,exclusions,mean_kld,se\n";
    for (const BenchResult& r : results)
        os << r.estimator << "," << n << "," << r.runs << "," << r.completed << "," << r.exclusions
           << "," << fmt17(r.mean_kld) << "," << fmt17(r.se) << "\n";
}

inline void write_gc_band_csv(const std::string& path, const GcResult& res,
                              const QuantileGrid& grid) {
    auto os = detail::open_out(path);
    os << "tau,alpha,observed,band_lo,band_hi\n";
    for (Eigen::Index tau = 0; tau < res.observed.rows(); ++tau)
        for (Eigen::Index l = 0; l < res.observed.cols(); ++l)
            os << tau + 1 << "," << fmt17(grid[static_cast<std::size_t>(l)]) << ","
               << fmt17(res.observed(tau, l)) << "," << fmt17(res.band_lo(tau, l)) << ","
               << fmt17(res.band_hi(tau, l)) << "\n";
}

} // namespace qfa

#endif
