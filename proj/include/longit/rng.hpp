#ifndef LONGIT_RNG_HPP
#define LONGIT_RNG_HPP

#include <cstdint>
#include <random>

namespace longit {

// splitmix64 finalizer; used to decorrelate (seed, stream id) pairs before
// seeding the per-stream engine.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Independent RNG stream derived from a base seed and a stream index
// (subject id, replication index, ...). Identical (seed, id) always gives
// an identical stream, independent of how many other streams were drawn.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream_id) {
    return std::mt19937_64(mix64(mix64(seed) ^ mix64(stream_id + 0x51ed2701ULL)));
}

}  // namespace longit

#endif
