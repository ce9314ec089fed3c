#include "coevnet/numerics.hpp"

#include <cmath>
#include <sstream>

namespace coevnet {

std::uint64_t stream_key(std::uint64_t seed, std::initializer_list<std::uint64_t> coords) {
    SplitMix64 mix(seed);
    std::uint64_t key = mix();
    for (std::uint64_t c : coords) {
        SplitMix64 step(key ^ (c + 0x632be59bd9b4e019ULL));
        key = step();
    }
    return key;
}

RootResult find_root_decreasing(const std::function<double(double)>& f, const std::function<double(double)>& df,
                                double lo, double hi, double ftol, double xtol, int max_iter) {
    double flo = f(lo);
    double fhi = f(hi);
    if (flo < 0.0 || fhi > 0.0 || !(lo <= hi)) {
        std::ostringstream msg;
        msg << "root not bracketed: f(" << lo << ")=" << flo << ", f(" << hi << ")=" << fhi;
        throw NumericalError(msg.str());
    }
    if (flo == 0.0) return {lo, 0.0, 0};
    if (fhi == 0.0) return {hi, 0.0, 0};

    double x = 0.5 * (lo + hi);
    double fx = f(x);
    for (int it = 1; it <= max_iter; ++it) {
        if (std::abs(fx) <= ftol) return {x, fx, it};
        if (fx > 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        if (hi - lo <= xtol * std::max(1.0, std::abs(x))) return {x, fx, it};

        const double d = df(x);
        double next = (d < 0.0 && std::isfinite(d)) ? x - fx / d : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (next == x) return {x, fx, it};
        x = next;
        fx = f(x);
    }
    std::ostringstream msg;
    msg << "root finder did not converge: x=" << x << ", f(x)=" << fx << ", bracket=[" << lo << ", " << hi << "]";
    throw NumericalError(msg.str());
}

}  // namespace coevnet
