#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "audit/errors.hpp"

namespace audit {

// Deterministic random stream. All randomness in the library flows through
// this class so that a single seed reproduces every downstream draw
// bit-for-bit. The raw generator is mt19937_64 (its output sequence is
// pinned by the standard); the real-valued helpers are hand-rolled on top
// because the std distributions are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random mantissa bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller. The sine half of the pair is discarded;
    // wasting one draw keeps the stream position independent of call history.
    double gaussian() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Index in [0, n). Modulo bias is below 2^-53 for any feasible n.
    std::size_t index(std::size_t n) {
        if (n == 0) throw ArgumentError("Rng::index: n must be positive");
        return static_cast<std::size_t>(gen_() % n);
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        if (items.size() < 2) return;
        for (std::size_t i = items.size() - 1; i > 0; --i) {
            std::swap(items[i], items[index(i + 1)]);
        }
    }

private:
    std::mt19937_64 gen_;
};

} // namespace audit
