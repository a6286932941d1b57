#include <catch2/catch_amalgamated.hpp>

#include <iedr/probes.hpp>

using namespace iedr;

namespace {

// Desk-size calibration cases; the acceptance suite re-runs them at the full
// 10^4 sample count and tighter tolerances.
constexpr std::size_t kN = 3000;

Tensor gaussian(std::size_t n, std::size_t d, std::uint64_t seed) {
    RngStream rng(seed, "probe.data");
    Tensor t({n, d});
    for (auto& v : t.data) v = rng.gauss();
    return t;
}

std::pair<Tensor, Tensor> identity_channel(std::size_t n, std::uint64_t seed) {
    RngStream rng(seed, "probe.data");
    Tensor a({n, 4}), b({n, 4});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t s = rng.index(4);
        a.at(i, s) = 1.0;
        b.at(i, s) = 1.0;
    }
    return {a, b};
}

} // namespace

TEST_CASE("mine probe on independent gaussians is near zero") {
    Tensor a = gaussian(kN, 4, 1);
    Tensor b = gaussian(kN, 4, 2);
    CHECK(std::abs(probe_mine(a, b)) < 0.1);
}

TEST_CASE("mine probe recovers log 4 on a 4-symbol identity channel") {
    auto [a, b] = identity_channel(kN, 3);
    const double est = probe_mine(a, b);
    CHECK(est > 1.2);
    CHECK(est < 1.45);
}

TEST_CASE("mine probe with a constant second argument is near zero") {
    Tensor a = gaussian(kN, 4, 4);
    Tensor b({kN, 2});
    for (auto& v : b.data) v = 0.7;
    CHECK(std::abs(probe_mine(a, b)) < 0.05);
}

TEST_CASE("club probe on independent gaussians is near zero") {
    Tensor a = gaussian(kN, 4, 5);
    Tensor b = gaussian(kN, 4, 6);
    CHECK(std::abs(probe_club(a, b)) < 0.1);
}

TEST_CASE("club probe upper-bounds the identity channel above 1.2") {
    auto [a, b] = identity_channel(kN, 7);
    CHECK(probe_club(a, b) >= 1.2);
}

TEST_CASE("club probe with a constant second argument is near zero") {
    Tensor a = gaussian(kN, 4, 8);
    Tensor b({kN, 2});
    for (auto& v : b.data) v = -1.3;
    CHECK(std::abs(probe_club(a, b)) < 0.05);
}

TEST_CASE("probes reject mismatched sample sets") {
    Tensor a({10, 3});
    Tensor b({11, 3});
    CHECK_THROWS_AS(probe_mine(a, b), std::invalid_argument);
    CHECK_THROWS_AS(probe_club(a, b), std::invalid_argument);
}
