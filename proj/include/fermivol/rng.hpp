#ifndef FERMIVOL_RNG_HPP
#define FERMIVOL_RNG_HPP

#include <cstdint>
#include <random>

namespace fermivol {

// splitmix64 scrambler; decorrelates the sequential per-shard seeds
// (seed + shard_index) before they reach the Mersenne twister.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

    std::uint64_t bits() { return gen_(); }

    // [0,1); 53 random bits so results do not depend on the standard
    // library's uniform_real_distribution implementation
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // [0, n)
    std::uint64_t uniform_index(std::uint64_t n) {
        // modulo bias is ~n/2^64, irrelevant for the pool sizes used here
        return gen_() % n;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace fermivol

#endif
