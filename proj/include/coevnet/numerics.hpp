#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>

namespace coevnet {

/// Raised when an iterative solver cannot make progress. Carries a
/// human-readable description of the state it gave up in.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// SplitMix64 generator. Small state, so a fresh engine per (seed, stage,
/// index...) key is cheap; this gives schedule-independent substreams.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

/// Hash a seed together with stream coordinates into an independent seed.
std::uint64_t stream_key(std::uint64_t seed, std::initializer_list<std::uint64_t> coords);

inline SplitMix64 substream(std::uint64_t seed, std::initializer_list<std::uint64_t> coords) {
    return SplitMix64(stream_key(seed, coords));
}

struct RootResult {
    double x = 0.0;
    double fx = 0.0;
    int iterations = 0;
};

/// Root of a strictly decreasing function on [lo, hi] with f(lo) >= 0 >=
/// f(hi). Newton steps that leave the bracket (or stall) are replaced by
/// bisection. Stops when |f| <= ftol or the bracket is narrower than xtol.
RootResult find_root_decreasing(const std::function<double(double)>& f,
                                const std::function<double(double)>& df, double lo, double hi,
                                double ftol = 1e-14, double xtol = 1e-15, int max_iter = 200);

}  // namespace coevnet
