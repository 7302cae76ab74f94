#include <doctest.h>

#include "streampoint/common.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <vector>

using namespace streampoint;

TEST_CASE("crc32 matches the standard check value") {
    const char* msg = "123456789";
    CHECK(crc32(msg, 9) == 0xCBF43926u);
    CHECK(crc32("", 0) == 0u);
    // chaining via the seed argument equals one pass over the whole buffer
    std::uint32_t part = crc32(msg, 4);
    CHECK(crc32(msg + 4, 5, part) == 0xCBF43926u);
}

TEST_CASE("rng streams are reproducible and state-resumable") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng c(7);
    for (int i = 0; i < 10; ++i) c.next_u64();
    const std::uint64_t snap = c.state();
    std::vector<std::uint64_t> tail;
    for (int i = 0; i < 20; ++i) tail.push_back(c.next_u64());

    Rng d(999);
    d.set_state(snap);
    for (int i = 0; i < 20; ++i) CHECK(d.next_u64() == tail[i]);

    Rng e1(1), e2(2);
    CHECK(e1.next_u64() != e2.next_u64());
}

TEST_CASE("rng uniform stays in range and covers indices") {
    Rng r(3);
    for (int i = 0; i < 1000; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    // uniform_index histogram over [0,8): each bucket within 4 sigma of the mean
    const int n = 8, draws = 80000;
    std::vector<int> hist(n, 0);
    for (int i = 0; i < draws; ++i) ++hist[static_cast<int>(r.uniform_index(n))];
    const double expect = static_cast<double>(draws) / n;
    const double sigma = std::sqrt(expect * (1.0 - 1.0 / n));
    for (int k = 0; k < n; ++k) CHECK(std::abs(hist[k] - expect) < 4 * sigma);
    CHECK(r.uniform_index(0) == 0);
}

TEST_CASE("rng normal has unit moments") {
    Rng r(11);
    const int n = 200000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
        double x = r.normal();
        sum += x;
        sum2 += x * x;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    // 3-sigma bands for the sample mean and variance of N(0,1)
    CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("parallel_for covers every index exactly once") {
    const std::int64_t n = 10007;
    std::vector<std::atomic<int>> hits(n);
    for (auto& h : hits) h.store(0);
    parallel_for(n, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) hits[i].fetch_add(1);
    });
    for (std::int64_t i = 0; i < n; ++i) CHECK(hits[i].load() == 1);

    parallel_for(0, [&](std::int64_t, std::int64_t) { CHECK(false); });
}

TEST_CASE("thread cap env var controls the worker count") {
    setenv("STREAMPOINT_THREADS", "1", 1);
    CHECK(worker_thread_cap() == 1);
    setenv("STREAMPOINT_THREADS", "4", 1);
    CHECK(worker_thread_cap() == 4);
    unsetenv("STREAMPOINT_THREADS");
    CHECK(worker_thread_cap() >= 1);
}
