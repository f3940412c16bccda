#pragma once

#include <cstdint>
#include <string_view>

namespace firecast {

// Deterministic counter-based random stream.
//
// Draw number i of stream s is a pure function of (s, i):
//
//   state = s + (i + 1) * 0x9E3779B97F4A7C15        (splitmix64 stream walk)
//   m     = splitmix64_mix(state)                    (fmix: >>30,*c1,>>27,*c2,>>31)
//   draw  = xorshift64star(m)                        (^>>12, ^<<25, ^>>27, *c3)
//
// so equal (seed, counter) pairs always yield equal draws, streams can be
// resumed from the two integers alone, and independent substreams are derived
// by hashing a tag into a fresh seed. All multi-draw samplers below consume a
// documented, fixed number of raw draws (normal: 2, uniform/below/poisson-step: 1).
struct RngState {
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;

    RngState() = default;
    explicit RngState(std::uint64_t seed_, std::uint64_t counter_ = 0)
        : seed(seed_), counter(counter_) {}

    std::uint64_t next_u64();

    // Uniform real in [0, 1), 53-bit resolution.
    double next_uniform();
    // Uniform real in (0, 1]; safe as a log() argument.
    double next_uniform_open();
    double next_uniform(double lo, double hi);

    // Standard normal via Box-Muller; consumes exactly two raw draws.
    double next_normal();

    // Uniform integer in [0, n); n must be positive. Fixed-width multiply,
    // always one raw draw.
    std::uint64_t next_below(std::uint64_t n);

    bool next_bernoulli(double p);

    // Knuth's product-of-uniforms method; draw count varies with lambda but
    // is a deterministic function of the stream position.
    std::uint32_t next_poisson(double lambda);

    // Independent substream derived from a tag and up to three indices.
    RngState substream(std::string_view tag, std::uint64_t a = 0,
                       std::uint64_t b = 0, std::uint64_t c = 0) const;
};

// The splitmix64 output mix, exposed for seed derivation elsewhere.
std::uint64_t splitmix64_mix(std::uint64_t x);

}  // namespace firecast
