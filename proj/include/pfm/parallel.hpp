#pragma once

#include <cstdint>
#include <functional>

namespace pfm {

// SplitMix64 finaliser applied to (seed, stream); used to give every clip,
// worker or run an independent deterministic rng stream.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Runs fn(i) for i in [0, count) on up to `workers` threads and rethrows the
// first exception after all threads finish.
void parallel_for(int count, int workers, const std::function<void(int)>& fn);

}  // namespace pfm
