#pragma once

#include <cstdint>
#include <random>

namespace merton {

enum class StreamTag : std::uint64_t {
    stock = 1,
    factor = 2,
    action = 3,
    noise = 4,
    exploration = 5,
    sampler = 6,
    init = 7,
    run = 8,
    test = 9,
    train = 10,
};

struct SeedSpec {
    std::uint64_t master_seed = 0;
    std::uint64_t path_index = 0;
    StreamTag tag = StreamTag::stock;

    SeedSpec with_tag(StreamTag t) const { return {master_seed, path_index, t}; }
    SeedSpec with_index(std::uint64_t i) const { return {master_seed, i, tag}; }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(const SeedSpec& s) {
    std::uint64_t h = splitmix64(s.master_seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(s.tag));
    return splitmix64(h ^ s.path_index);
}

// Child master seed for nested experiments (run r of an experiment seeded m).
inline std::uint64_t child_seed(std::uint64_t master, std::uint64_t index) {
    return derive_seed({master, index, StreamTag::run});
}

using Rng = std::mt19937_64;

inline Rng make_rng(const SeedSpec& s) { return Rng(derive_seed(s)); }

class NormalStream {
public:
    explicit NormalStream(const SeedSpec& s) : rng_(make_rng(s)) {}
    double operator()() { return dist_(rng_); }
    Rng& engine() { return rng_; }

private:
    Rng rng_;
    std::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace merton
