#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace streampoint {

// Error taxonomy shared across the library. CLI maps all of these to exit 1;
// flag-level validation failures exit 2 before any of this code runs.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DegenerateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Counter-based RNG with a fixed cross-platform bit stream. std::mt19937's
// engine is portable but the distributions are not, and training resume needs
// a state that serializes to a single word.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed + 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next_u64() {
        // splitmix64
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_index(std::uint64_t n) {
        return n ? next_u64() % n : 0;
    }

    // Box-Muller, no cached spare so the state stays a single word.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

private:
    std::uint64_t state_;
};

// Worker cap from STREAMPOINT_THREADS (0 or unset -> hardware concurrency).
int worker_thread_cap();

// Deterministic parallel map: the work partition depends only on `n` and the
// resolved thread count, and every index writes disjoint output, so results
// are identical for any cap.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body);

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);

}  // namespace streampoint
