#pragma once

#include <cstdint>
#include <random>

namespace twinbeam {

using Rng = std::mt19937_64;

/// Independent named streams sharing one user seed.
enum class Stream : std::uint32_t { Generate = 1, Sample = 2, Trial = 3 };

/// Deterministic generator for (seed, index, stream). Shots draw from their
/// own substream so serial and parallel runs produce identical bits.
inline Rng substream(std::uint64_t seed, std::uint64_t index, Stream stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      static_cast<std::uint32_t>(stream)};
    return Rng(seq);
}

/// Poisson draw that accepts a zero mean.
inline std::uint64_t poisson(Rng& rng, double mean)
{
    if (!(mean > 0.0))
        return 0;
    std::poisson_distribution<std::uint64_t> d(mean);
    return d(rng);
}

inline std::uint64_t binomial(Rng& rng, std::uint64_t n, double p)
{
    if (n == 0 || !(p > 0.0))
        return 0;
    if (p >= 1.0)
        return n;
    std::binomial_distribution<std::uint64_t> d(n, p);
    return d(rng);
}

/// Sum of `modes` independent geometric (thermal) photon numbers of mean mu.
/// The sum is negative binomial, drawn as a gamma-mixed Poisson so that
/// fractional mode counts are allowed.
inline std::uint64_t multi_thermal(Rng& rng, double modes, double mu)
{
    if (!(modes > 0.0) || !(mu > 0.0))
        return 0;
    std::gamma_distribution<double> g(modes, mu);
    return poisson(rng, g(rng));
}

} // namespace twinbeam
