#include "pskd/rng.hpp"

#include <cmath>

#include "pskd/errors.hpp"

namespace pskd {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    std::uint64_t s = base ^ (0xD1B54A32D192ED03ULL * (tag + 1));
    std::uint64_t a = splitmix64(s);
    std::uint64_t b = splitmix64(s);
    return a ^ (b << 1);
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    // FNV-1a over the tag, then mixed with the base.
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return derive_seed(base, h);
}

static inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

Rng::Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& s : s_) s = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::uniform_f32(double lo, double hi) {
    return static_cast<double>(static_cast<float>(uniform(lo, hi)));
}

double Rng::gaussian(double mean, double stddev) {
    // u1 in (0,1] so the log is finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    return mean + stddev * z;
}

int Rng::uniform_int(int n) {
    if (n <= 0) throw ParamError("uniform_int: n must be positive");
    // Rejection sampling keeps the draw exactly uniform.
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<int>(x % un);
}

void Rng::shuffle(std::vector<int>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
        int j = uniform_int(i + 1);
        std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
}

}  // namespace pskd
