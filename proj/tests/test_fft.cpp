#include <catch2/catch_amalgamated.hpp>

#include "qfa/fft.hpp"
#include "qfa/rng.hpp"

using namespace qfa;

namespace {

std::vector<cplx> naive_dft(const std::vector<cplx>& a, int sign) {
    const std::size_t n = a.size();
    std::vector<cplx> out(n);
    for (std::size_t v = 0; v < n; ++v) {
        cplx acc(0, 0);
        for (std::size_t s = 0; s < n; ++s) {
            double ang = sign * 2.0 * pi * static_cast<double>(v * s) / static_cast<double>(n);
            acc += a[s] * cplx(std::cos(ang), std::sin(ang));
        }
        out[v] = acc;
    }
    return out;
}

std::vector<cplx> random_signal(std::size_t n, std::uint64_t seed) {
    Rng rng(seed, 0);
    std::vector<cplx> a(n);
    for (auto& v : a) v = cplx(rng.normal(), rng.normal());
    return a;
}

} // namespace

TEST_CASE("fft matches the naive DFT for power-of-two and general lengths") {
    for (std::size_t n : {2u, 8u, 16u, 64u, 12u, 17u, 100u, 255u}) {
        std::vector<cplx> a = random_signal(n, 31 + n);
        std::vector<cplx> ref = naive_dft(a, -1);
        std::vector<cplx> got = a;
        fft(got);
        double worst = 0;
        for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(got[i] - ref[i]));
        INFO("n = " << n);
        CHECK(worst < 1e-9 * static_cast<double>(n));
    }
}

TEST_CASE("ifft inverts fft to machine precision") {
    for (std::size_t n : {8u, 12u, 17u, 128u, 510u}) {
        std::vector<cplx> a = random_signal(n, 77 + n);
        std::vector<cplx> b = a;
        fft(b);
        ifft(b);
        double worst = 0;
        for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
        INFO("n = " << n);
        CHECK(worst < 1e-10);
    }
}

TEST_CASE("fft of a unit impulse is flat") {
    std::vector<cplx> a(10, cplx(0, 0));
    a[0] = cplx(1, 0);
    fft(a);
    for (const cplx& v : a) CHECK(std::abs(v - cplx(1, 0)) < 1e-12);
}
