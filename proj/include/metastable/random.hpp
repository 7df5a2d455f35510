#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace metastable {

using Rng = std::mt19937_64;

/// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Independent stream keyed by a master seed and a path of ids, e.g.
/// (seed, run, replica, branch). Same key, same stream, on any thread.
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids)
{
    std::uint64_t h = mix64(seed);
    for (auto id : ids) h = mix64(h ^ mix64(id + 0x632be59bd9b4e019ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                      static_cast<std::uint32_t>(mix64(h)), static_cast<std::uint32_t>(mix64(h) >> 32)};
    return Rng(seq);
}

} // namespace metastable
