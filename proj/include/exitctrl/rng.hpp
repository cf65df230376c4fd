#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace exitctrl {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A draw is a pure function of (key, counter), so any path/step can be
/// regenerated without replaying a sequential stream.
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter c, Key k) {
        constexpr std::uint32_t kM0 = 0xD2511F53u;
        constexpr std::uint32_t kM1 = 0xCD9E8D57u;
        constexpr std::uint32_t kW0 = 0x9E3779B9u;
        constexpr std::uint32_t kW1 = 0xBB67AE85u;
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
            k[0] += kW0;
            k[1] += kW1;
        }
        return c;
    }
};

/// Substreams keyed by (master seed, path, step, lane).
class CounterRng {
public:
    /// Lane offset reserved for uniforms that are not Gaussian increments.
    static constexpr std::uint32_t kAuxLane = 0x80000000u;

    explicit CounterRng(std::uint64_t seed) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    std::array<std::uint32_t, 4> raw(std::uint64_t path, std::uint32_t step, std::uint32_t lane) const noexcept {
        return Philox4x32::generate(
            {static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32), step, lane}, key_);
    }

    /// Two uniforms in [0, 1) with 53-bit resolution.
    std::array<double, 2> uniforms(std::uint64_t path, std::uint32_t step, std::uint32_t lane) const noexcept {
        const auto r = raw(path, step, lane);
        return {to_unit(r[0], r[1]), to_unit(r[2], r[3])};
    }

    /// Fills `out` with independent standard normals for (path, step).
    void normals(std::uint64_t path, std::uint32_t step, std::span<double> out) const noexcept {
        for (std::size_t i = 0; i < out.size(); i += 2) {
            const auto u = uniforms(path, step, static_cast<std::uint32_t>(i / 2));
            const double radius = std::sqrt(-2.0 * std::log(1.0 - u[0]));
            const double angle = 2.0 * std::numbers::pi * u[1];
            out[i] = radius * std::cos(angle);
            if (i + 1 < out.size()) out[i + 1] = radius * std::sin(angle);
        }
    }

    double aux_uniform(std::uint64_t path, std::uint32_t step) const noexcept {
        return uniforms(path, step, kAuxLane)[0];
    }

private:
    static double to_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
        const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32 | lo) >> 11;
        return static_cast<double>(bits) * 0x1.0p-53;
    }

    Philox4x32::Key key_;
};

}  // namespace exitctrl
