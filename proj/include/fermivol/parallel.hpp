#ifndef FERMIVOL_PARALLEL_HPP
#define FERMIVOL_PARALLEL_HPP

#include <cstdint>
#include <vector>

#include "fermivol/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fermivol {

// Every Monte Carlo kernel in this project runs through run_shards: the
// sample budget is split over a fixed shard count, shard s draws from
// Rng(seed + s), and partials are merged in shard order. The OpenMP and
// serial paths therefore produce bit-identical results for any thread
// count; the serial path is kept as the reference implementation for
// tests and for the benchmark target.
enum class Exec { openmp, serial };

inline constexpr int kDefaultShards = 256;

inline std::uint64_t shard_budget(std::uint64_t n_total, int n_shards, int s) {
    std::uint64_t base = n_total / static_cast<std::uint64_t>(n_shards);
    std::uint64_t rem = n_total % static_cast<std::uint64_t>(n_shards);
    return base + (static_cast<std::uint64_t>(s) < rem ? 1 : 0);
}

// kernel(shard_index, rng, n_in_shard) -> Partial
template <class Partial, class Kernel>
std::vector<Partial> run_shards(std::uint64_t n_total, std::uint64_t seed,
                                Exec exec, Kernel&& kernel,
                                int n_shards = kDefaultShards) {
    std::vector<Partial> partials(static_cast<std::size_t>(n_shards));
    if (exec == Exec::serial) {
        for (int s = 0; s < n_shards; ++s) {
            Rng rng(seed + static_cast<std::uint64_t>(s));
            partials[s] = kernel(s, rng, shard_budget(n_total, n_shards, s));
        }
        return partials;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int s = 0; s < n_shards; ++s) {
        Rng rng(seed + static_cast<std::uint64_t>(s));
        partials[s] = kernel(s, rng, shard_budget(n_total, n_shards, s));
    }
    return partials;
}

}  // namespace fermivol

#endif
