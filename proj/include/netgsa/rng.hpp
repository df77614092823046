#ifndef NETGSA_RNG_HPP
#define NETGSA_RNG_HPP

#include <cstdint>
#include <random>

namespace netgsa {

// SplitMix64 seed expander (Steele, Lea & Flood). Used to derive independent
// engine seeds from a (seed, stream) pair so replicate-level work items get
// their own generators and results do not depend on scheduling.
struct SplitMix64 {
    std::uint64_t state;

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
};

// Derive a sub-seed for a named stream. stream 0 is distinct from the raw seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    SplitMix64 sm{seed ^ (0xd1342543de82ef95ull * (stream + 1))};
    sm.next();
    return sm.next();
}

inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream = 0) {
    return std::mt19937_64(derive_seed(seed, stream));
}

}  // namespace netgsa

#endif
