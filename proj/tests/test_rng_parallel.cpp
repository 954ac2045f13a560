#include <cmath>
#include <cstdlib>
#include <numeric>
#include <stdexcept>

#include "doctest.h"
#include "sae/parallel.hpp"
#include "sae/rng.hpp"

using namespace sae;

TEST_CASE("streams depend only on seed and index") {
    RandomStream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
    bool differs_c = false, differs_d = false;
    for (int k = 0; k < 1000; ++k) {
        const std::uint64_t x = a.next_u64();
        CHECK(x == b.next_u64());
        differs_c |= x != c.next_u64();
        differs_d |= x != d.next_u64();
    }
    CHECK(differs_c);
    CHECK(differs_d);
}

TEST_CASE("uniforms lie in the open unit interval") {
    RandomStream rs(0, 0);
    double sum = 0.0;
    const int n = 200000;
    for (int k = 0; k < n; ++k) {
        const double u = rs.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(std::abs(sum / n - 0.5) < 5.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST_CASE("normal moments") {
    RandomStream rs(123, 4);
    const int n = 400000;
    double s1 = 0, s2 = 0, s4 = 0;
    for (int k = 0; k < n; ++k) {
        const double z = rs.normal();
        s1 += z;
        s2 += z * z;
        s4 += z * z * z * z;
    }
    CHECK(std::abs(s1 / n) < 5.0 / std::sqrt(double(n)));
    CHECK(std::abs(s2 / n - 1.0) < 5.0 * std::sqrt(2.0 / n));
    CHECK(std::abs(s4 / n - 3.0) < 5.0 * std::sqrt(96.0 / n));
}

TEST_CASE("normal pairs share uniforms") {
    RandomStream a(9, 9);
    RandomStream b(9, 9);
    const double z1 = a.normal();
    const double z2 = a.normal();
    const double u1 = b.uniform();
    const double u2 = b.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    CHECK(z1 == doctest::Approx(r * std::cos(2.0 * M_PI * u2)).epsilon(1e-14));
    CHECK(z2 == doctest::Approx(r * std::sin(2.0 * M_PI * u2)).epsilon(1e-14));
}

TEST_CASE("bounded integers") {
    RandomStream rs(5, 5);
    std::vector<int> counts(7, 0);
    for (int k = 0; k < 70000; ++k) {
        const auto v = rs.below(7);
        REQUIRE(v < 7);
        ++counts[v];
    }
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("derived seeds separate domains") {
    CHECK(derive_seed(1, stream_domain::kBootstrap, 0) != derive_seed(1, stream_domain::kSimulation, 0));
    CHECK(derive_seed(1, stream_domain::kBootstrap, 0) != derive_seed(1, stream_domain::kBootstrap, 1));
    CHECK(derive_seed(1, stream_domain::kBootstrap, 3) == derive_seed(1, stream_domain::kBootstrap, 3));
}

TEST_CASE("ordered reductions do not depend on the worker count") {
    auto run = [](std::size_t workers) {
        double acc = 0.0;
        std::vector<std::size_t> order;
        ordered_map_consume(
            1000, workers,
            [](std::size_t i) {
                RandomStream rs(77, i);
                return rs.normal() * 1e-3 + 1e6 * rs.uniform();
            },
            [&](std::size_t i, double v) {
                acc += v;
                order.push_back(i);
            },
            64);
        return std::pair{acc, order};
    };
    const auto [a1, o1] = run(1);
    for (std::size_t w : {2, 3, 8}) {
        const auto [aw, ow] = run(w);
        CHECK(aw == a1);
        CHECK(ow == o1);
    }
    std::vector<std::size_t> expected(1000);
    std::iota(expected.begin(), expected.end(), 0);
    CHECK(o1 == expected);
}

TEST_CASE("parallel_for visits every index once and rethrows the lowest failure") {
    std::vector<int> hits(500, 0);
    parallel_for(500, 4, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);

    try {
        parallel_for(100, 4, [](std::size_t i) {
            if (i == 37 || i == 80) throw std::runtime_error(std::to_string(i));
        });
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()) == "37");
    }
    parallel_for(0, 4, [](std::size_t) { FAIL("no work expected"); });
}

TEST_CASE("worker count from the environment") {
    ::setenv("SAE_BENCH_THREADS", "3", 1);
    CHECK(default_worker_count() == 3);
    CHECK(resolve_workers(0) == 3);
    CHECK(resolve_workers(5) == 5);
    ::setenv("SAE_BENCH_THREADS", "junk", 1);
    CHECK(default_worker_count() >= 1);
    ::unsetenv("SAE_BENCH_THREADS");
    CHECK(default_worker_count() >= 1);
}
