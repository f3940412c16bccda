#include "firecast/rng.hpp"

#include <cmath>
#include <numbers>

#include "firecast/errors.hpp"

namespace firecast {

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

std::uint64_t xorshift64star(std::uint64_t x) {
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    return x * 0x2545F4914F6CDD1Dull;
}

// FNV-1a over a byte, used to fold tags into substream seeds.
std::uint64_t fnv1a_byte(std::uint64_t h, unsigned char byte) {
    h ^= byte;
    return h * 0x100000001B3ull;
}

std::uint64_t fnv1a_u64(std::uint64_t h, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        h = fnv1a_byte(h, static_cast<unsigned char>(v >> (8 * i)));
    }
    return h;
}
}  // namespace

std::uint64_t splitmix64_mix(std::uint64_t x) {
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t RngState::next_u64() {
    ++counter;
    return xorshift64star(splitmix64_mix(seed + counter * kGamma));
}

double RngState::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngState::next_uniform_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RngState::next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_uniform();
}

double RngState::next_normal() {
    const double u1 = next_uniform_open();
    const double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngState::next_below(std::uint64_t n) {
    if (n == 0) {
        throw ArgumentError("next_below requires a positive bound");
    }
    const unsigned __int128 wide =
        static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::uint64_t>(wide >> 64);
}

bool RngState::next_bernoulli(double p) { return next_uniform() < p; }

std::uint32_t RngState::next_poisson(double lambda) {
    if (lambda <= 0.0) {
        return 0;
    }
    const double limit = std::exp(-lambda);
    std::uint32_t k = 0;
    double product = 1.0;
    do {
        ++k;
        product *= next_uniform_open();
    } while (product > limit);
    return k - 1;
}

RngState RngState::substream(std::string_view tag, std::uint64_t a,
                             std::uint64_t b, std::uint64_t c) const {
    std::uint64_t h = 0xCBF29CE484222325ull;
    h = fnv1a_u64(h, seed);
    for (const char ch : tag) {
        h = fnv1a_byte(h, static_cast<unsigned char>(ch));
    }
    h = fnv1a_u64(h, a);
    h = fnv1a_u64(h, b);
    h = fnv1a_u64(h, c);
    return RngState(splitmix64_mix(h));
}

}  // namespace firecast
