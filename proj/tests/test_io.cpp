#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "qfa/io.hpp"
#include "qfa/simulate.hpp"

using namespace qfa;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("qfa_io_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

QdftArray sample_qdft() {
    MultiSeries s = gen_mixture(96, std::uint64_t{5});
    return qdft(s, QuantileGrid({0.25, 0.5, 0.75}), 1);
}

void write_text(const std::string& path, const std::string& body) {
    std::ofstream os(path);
    os << body;
}

} // namespace

TEST_CASE("qdft container round trip is bit exact") {
    TempDir dir;
    QdftArray q = sample_qdft();
    std::string p = dir.file("q.qfab");
    write_qdft(p, q);
    QdftArray r = read_qdft(p);
    CHECK(r.n == q.n);
    CHECK(r.m == q.m);
    CHECK(r.grid == q.grid);
    REQUIRE(r.z.size() == q.z.size());
    for (std::size_t i = 0; i < q.z.size(); ++i) CHECK(r.z[i] == q.z[i]);
}

TEST_CASE("qser, qacf, and spectrum containers round trip bit exact") {
    TempDir dir;
    QdftArray q = sample_qdft();
    QuantileSeries qs = qser(q);
    write_qser(dir.file("s.qfab"), qs);
    QuantileSeries rs = read_qser(dir.file("s.qfab"));
    CHECK(rs.y == qs.y);
    CHECK(rs.means == qs.means);
    CHECK(rs.grid == qs.grid);

    Qacf a = qacf(qs, 6);
    write_qacf(dir.file("a.qfab"), a);
    Qacf ra = read_qacf(dir.file("a.qfab"));
    REQUIRE(ra.gamma.size() == a.gamma.size());
    for (std::size_t i = 0; i < a.gamma.size(); ++i) CHECK(ra.gamma[i] == a.gamma[i]);

    SpectrumField sp = qper(q);
    write_spectrum(dir.file("p.qfab"), sp);
    SpectrumField rp = read_spectrum(dir.file("p.qfab"));
    CHECK(rp.freqs == sp.freqs);
    CHECK(rp.grid == sp.grid);
    REQUIRE(rp.values.size() == sp.values.size());
    for (std::size_t i = 0; i < sp.values.size(); ++i) CHECK(rp.values[i] == sp.values[i]);
}

TEST_CASE("sar model container round trips bit exact") {
    TempDir dir;
    MultiSeries series = gen_mixture(96, std::uint64_t{5});
    QuantileSeries qs = qser(qdft(series, QuantileGrid({0.5}), 1));
    SarModel model = fit_sar(qs, 2, 0.01, SplineBasis::constant(qs.grid[0]));
    // single-level path uses the constant basis; also exercise the cubic one
    QuantileGrid grid = QuantileGrid::regular(0.2, 0.8, 0.1);
    QuantileSeries qs2 = qser(qdft(gen_mixture(96, std::uint64_t{6}), grid, 1));
    SarModel cubic = fit_sar(qs2, 2, 0.05, build_basis(grid));
    for (const SarModel* mp : {&model, &cubic}) {
        std::string p = dir.file("m.qfab");
        write_sar_model(p, *mp);
        SarModel r = read_sar_model(p);
        CHECK(r.p == mp->p);
        CHECK(r.m == mp->m);
        CHECK(r.n == mp->n);
        CHECK(r.lambda == mp->lambda);
        CHECK(r.Theta == mp->Theta);
        CHECK(r.vtilde_raw == mp->vtilde_raw);
        REQUIRE(r.vhat_xi.size() == mp->vhat_xi.size());
        for (std::size_t i = 0; i < mp->vhat_xi.size(); ++i) CHECK(r.vhat_xi[i] == mp->vhat_xi[i]);
        REQUIRE(r.residuals.size() == mp->residuals.size());
        for (std::size_t i = 0; i < mp->residuals.size(); ++i) CHECK(r.residuals[i] == mp->residuals[i]);
        CHECK(r.basis.K == mp->basis.K);
        // the rebuilt basis evaluates identically
        for (double alpha : {0.2, 0.43, 0.8})
            CHECK((r.basis.evaluate(alpha) - mp->basis.evaluate(alpha)).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("oracle container round trips and reads back as a spectrum") {
    TempDir dir;
    ProcessSpec spec;
    spec.kind = ProcessKind::arma21;
    spec.n = 96;
    spec.seed = 9;
    OracleSpectrum o = oracle_spectrum(spec, 2, QuantileGrid({0.4, 0.6}), 9);
    std::string p = dir.file("o.qfab");
    write_oracle(p, o);
    OracleSpectrum r = read_oracle(p);
    CHECK(r.runs == 2);
    CHECK(r.seed == 9);
    CHECK(r.process.n == 96);
    CHECK(static_cast<int>(r.process.kind) == static_cast<int>(ProcessKind::arma21));
    for (std::size_t i = 0; i < o.field.values.size(); ++i)
        CHECK(r.field.values[i] == o.field.values[i]);
    // read_spectrum accepts an oracle container by skipping the metadata
    SpectrumField sp = read_spectrum(p);
    for (std::size_t i = 0; i < o.field.values.size(); ++i)
        CHECK(sp.values[i] == o.field.values[i]);
}

TEST_CASE("container kind and magic mismatches are diagnosed") {
    TempDir dir;
    QdftArray q = sample_qdft();
    write_qdft(dir.file("q.qfab"), q);
    CHECK_THROWS_AS(read_qser(dir.file("q.qfab")), domain_error);
    write_text(dir.file("bad.qfab"), "definitely not a container");
    CHECK_THROWS_AS(read_qdft(dir.file("bad.qfab")), domain_error);
    CHECK_THROWS_AS(read_qdft(dir.file("missing.qfab")), domain_error);
}

TEST_CASE("fmt17 round trips doubles exactly") {
    Rng rng(3, 0);
    for (int i = 0; i < 200; ++i) {
        double v = rng.normal() * std::pow(10.0, (i % 21) - 10);
        CHECK(std::stod(fmt17(v)) == v);
    }
    CHECK(std::stod(fmt17(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("series CSV writes and reads back exactly") {
    TempDir dir;
    MultiSeries s = gen_arma(80, std::uint64_t{4});
    s.channel_names = {"left", "right"};
    std::string p = dir.file("s.csv");
    write_series_csv(p, s);
    MultiSeries r = read_series_csv(p);
    CHECK(r.values == s.values);
    REQUIRE(r.channel_names.size() == 2);
    CHECK(r.channel_names[0] == "left");
    CHECK(r.channel_names[1] == "right");
}

TEST_CASE("series CSV accepts headerless input and flags malformed rows") {
    TempDir dir;
    write_text(dir.file("plain.csv"), "1.5,2\n3,4\n");
    MultiSeries s = read_series_csv(dir.file("plain.csv"));
    CHECK(s.length() == 2);
    CHECK(s.channels() == 2);
    CHECK(s.values(0, 0) == 1.5);

    write_text(dir.file("badcell.csv"), "a,b\n1,2\n3,oops\n");
    try {
        read_series_csv(dir.file("badcell.csv"));
        FAIL("expected domain_error");
    } catch (const domain_error& e) {
        std::string msg = e.what();
        CHECK(msg.find("row 3") != std::string::npos);
        CHECK(msg.find("column 2") != std::string::npos);
    }

    write_text(dir.file("ragged.csv"), "1,2\n3\n");
    CHECK_THROWS_AS(read_series_csv(dir.file("ragged.csv")), domain_error);
    write_text(dir.file("empty.csv"), "");
    CHECK_THROWS_AS(read_series_csv(dir.file("empty.csv")), domain_error);
}

TEST_CASE("derived CSV writers emit well-formed headers and 17-digit values") {
    TempDir dir;
    QdftArray q = sample_qdft();
    QuantileSeries qs = qser(q);
    write_qdft_csv(dir.file("q.csv"), q);
    write_qser_csv(dir.file("s.csv"), qs);
    write_qacf_csv(dir.file("a.csv"), qacf(qs, 3));
    write_spectrum_csv(dir.file("p.csv"), qper(q));
    auto first_line = [](const std::string& path) {
        std::ifstream is(path);
        std::string line;
        std::getline(is, line);
        return line;
    };
    CHECK(first_line(dir.file("q.csv")) == "channel,alpha,v,re,im");
    CHECK(first_line(dir.file("a.csv")) == "tau,alpha,j,k,value");
    CHECK(first_line(dir.file("p.csv")) == "f,alpha,j,k,re,im");
    CHECK(first_line(dir.file("s.csv")).substr(0, 7) == "y1_a0.2");
    // qser CSV columns read back as an ordinary series, bit exact
    MultiSeries wide = read_series_csv(dir.file("s.csv"));
    REQUIRE(wide.channels() == static_cast<Eigen::Index>(3 * q.m));
    int col = 0;
    for (int j = 0; j < q.m; ++j)
        for (std::size_t l = 0; l < q.grid.size(); ++l, ++col)
            for (int t = 0; t < qs.n; ++t) CHECK(wide.values(t, col) == qs.at(j, l, t));
}
