#ifndef IABSDE_PHILOX_HPP
#define IABSDE_PHILOX_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace iabsde {

/**
 * Philox 4x32-10 counter-based random bits.
 *
 * A pure function from (key, counter) to 128 random bits: no stream state,
 * so any (path, step, component) cell of a simulation can be regenerated
 * independently and in any order, which is what makes runs bit-identical
 * under different path partitions.  Constants are the standard Philox
 * round/Weyl constants.
 */
struct Philox4x32 {
    static constexpr std::uint32_t kWeylA = 0x9E3779B9u;  // golden ratio
    static constexpr std::uint32_t kWeylB = 0xBB67AE85u;  // sqrt(3) - 1
    static constexpr std::uint32_t kMultA = 0xD2511F53u;
    static constexpr std::uint32_t kMultB = 0xCD9E8D57u;

    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter round(Counter c, Key k) noexcept {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMultA) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMultB) * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }

    static Counter generate(Counter c, Key k) noexcept {
        for (int r = 0; r < 10; ++r) {
            c = round(c, k);
            k[0] += kWeylA;
            k[1] += kWeylB;
        }
        return c;
    }
};

namespace detail {
/// Lay out the cell coordinates (path, step, component, stream) in the
/// 128-bit counter.  The high halves of path and step land in word 2 so
/// indices past 2^32 still produce distinct counters.
inline Philox4x32::Counter cell_counter(std::uint64_t path, std::uint64_t step,
                                        std::uint32_t component, std::uint32_t stream) noexcept {
    const auto path_hi = static_cast<std::uint32_t>(path >> 32);
    const auto step_hi = static_cast<std::uint32_t>(step >> 32);
    return {static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(step),
            path_hi ^ (step_hi << 16), (component & 0xFFFFu) | (stream << 16)};
}

/// Two 32-bit words -> uniform double in (0, 1].  Uses the top 53 bits so the
/// value round-trips exactly; never returns 0, so log() below is safe.
inline double u01_open(std::uint32_t hi, std::uint32_t lo) noexcept {
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}
}  // namespace detail

/**
 * One standard normal draw for the cell (seed; path, step, component, stream).
 *
 * Box-Muller on the four words of a single Philox block.  The stream tag
 * separates independent uses of the same (path, step) coordinates, e.g.
 * Brownian increments vs. randomized control draws.
 */
inline double counter_normal(std::uint64_t seed, std::uint64_t path, std::uint64_t step,
                             std::uint32_t component, std::uint32_t stream = 0) noexcept {
    const Philox4x32::Key key = {static_cast<std::uint32_t>(seed),
                                 static_cast<std::uint32_t>(seed >> 32)};
    const auto r = Philox4x32::generate(detail::cell_counter(path, step, component, stream), key);
    const double u1 = detail::u01_open(r[0], r[1]);
    const double u2 = detail::u01_open(r[2], r[3]);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Uniform draw in [0, 1) for the same cell coordinates.
inline double counter_uniform(std::uint64_t seed, std::uint64_t path, std::uint64_t step,
                              std::uint32_t component, std::uint32_t stream = 0) noexcept {
    const Philox4x32::Key key = {static_cast<std::uint32_t>(seed),
                                 static_cast<std::uint32_t>(seed >> 32)};
    const auto r = Philox4x32::generate(detail::cell_counter(path, step, component, stream), key);
    const std::uint64_t bits = (static_cast<std::uint64_t>(r[0]) << 32) | r[1];
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace iabsde

#endif  // IABSDE_PHILOX_HPP
