#pragma once

#include <cstdint>
#include <random>

namespace cbpkf {

/// SplitMix64 finalizer. Used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for stream `stream_id` under `master_seed`:
///   splitmix64(master_seed ^ splitmix64(stream_id + 1))
/// Depends only on the pair, so any subset of streams reproduces the same
/// per-stream sequences.
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t stream_id);

/// Seedable normal/uniform source with output that is identical across
/// platforms and standard libraries: the engine is std::mt19937_64 (fully
/// specified by the standard) and the transforms below are implemented
/// here rather than via std::*_distribution.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    double uniform();

    /// Standard normal deviate (Marsaglia polar method).
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    std::uint64_t next_u64() { return engine_(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace cbpkf
