#include "eot/rng.hpp"

namespace eot {

namespace {

std::uint64_t finalize(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t substream_key(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t h = finalize(seed + 0x9e3779b97f4a7c15ULL);
    for (std::uint64_t part : path) {
        h = finalize(h ^ finalize(part + 0x632be59bd9b4e019ULL));
    }
    return h;
}

}  // namespace eot
