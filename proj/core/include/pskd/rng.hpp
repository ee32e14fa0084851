#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace pskd {

// splitmix64; used both as a mixer for deriving named streams and to seed
// the main generator. Standard-library distributions are avoided on
// purpose: their output is implementation-defined and would break the
// byte-identical reproducibility contract.
std::uint64_t splitmix64(std::uint64_t& state);

// Derives an independent stream seed from (base, tag). Adding streams
// never perturbs existing ones.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

// xoshiro256++ with splitmix64 seeding. Deterministic across platforms.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform in [0,1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi);

    // Uniform draw that is exactly representable as a 32-bit float, so a
    // freshly initialized model survives the f32 checkpoint round trip
    // bit-for-bit.
    double uniform_f32(double lo, double hi);

    // Box-Muller, no cached spare.
    double gaussian(double mean = 0.0, double stddev = 1.0);

    // Uniform integer in [0, n).
    int uniform_int(int n);

    // Fisher-Yates in place.
    void shuffle(std::vector<int>& v);

  private:
    std::uint64_t s_[4];
};

}  // namespace pskd
