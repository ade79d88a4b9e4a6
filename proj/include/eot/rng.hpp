#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace eot {

/// SplitMix64 generator. Small state, so one instance per (chain, step)
/// substream is cheap to create; satisfies UniformRandomBitGenerator.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t state = 0) noexcept : state_(state) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept {
        return std::numeric_limits<result_type>::max();
    }

    result_type operator()() noexcept {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state() const noexcept { return state_; }

    friend bool operator==(const SplitMix64&, const SplitMix64&) = default;

private:
    std::uint64_t state_;
};

/// Hashes a seed and a path of counters into a substream key. The result
/// depends only on the values, never on evaluation order.
std::uint64_t substream_key(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept;

inline SplitMix64 substream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept {
    return SplitMix64(substream_key(seed, path));
}

/// Domain tags keep substreams of different consumers apart.
namespace stream_tag {
inline constexpr std::uint64_t langevin_noise = 0x4c414e47;  // "LANG"
inline constexpr std::uint64_t chain_init = 0x494e4954;      // "INIT"
inline constexpr std::uint64_t buffer = 0x42554646;          // "BUFF"
inline constexpr std::uint64_t network_init = 0x4e455457;    // "NETW"
inline constexpr std::uint64_t source = 0x50535243;          // "PSRC"
inline constexpr std::uint64_t target = 0x51545247;          // "QTRG"
inline constexpr std::uint64_t covariance = 0x434f5641;      // "COVA"
inline constexpr std::uint64_t evaluation = 0x4556414c;      // "EVAL"
inline constexpr std::uint64_t eval_target = 0x45545247;     // "ETRG"
inline constexpr std::uint64_t probe = 0x50524f42;           // "PROB"
inline constexpr std::uint64_t function = 0x46554e43;        // "FUNC"
}  // namespace stream_tag

}  // namespace eot
