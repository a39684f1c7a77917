#pragma once

#include <cstdint>
#include <random>

namespace gwr::rng {

// All randomness in the toolkit flows from one user-visible seed. Independent
// streams are derived as stream(seed, tag, index); every consumer documents
// its (tag, index) pair, so any parallel schedule reproduces the same output.
enum Tag : std::uint64_t {
    kGraph = 0x01,
    kWalk = 0x02,
    kTestWalk = 0x03,
    kSplit = 0x04,
    kBatchShuffle = 0x05,
    kModelInit = 0x06,
    kSynth = 0x07,
    kLassoCv = 0x08,
    kNoise = 0x09,
    kValSplit = 0x0a,
};

// splitmix64 step (Vigna). Good 64-bit mixing, standard choice for deriving
// child seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
    std::uint64_t s = seed;
    std::uint64_t a = splitmix64(s);
    s ^= tag * 0x9e3779b97f4a7c15ULL;
    std::uint64_t b = splitmix64(s);
    s ^= index;
    std::uint64_t c = splitmix64(s);
    return a ^ (b + 0x632be59bd9b4e019ULL) ^ c;
}

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
    return std::mt19937_64(derive(seed, tag, index));
}

}  // namespace gwr::rng
