#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace corrdetect {

std::uint64_t mix64(std::uint64_t z);

// Stateless derivation of a child seed. Every replication in the engine gets
// split(master, cell, stream_key, rep) so results never depend on scheduling.
std::uint64_t split(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0,
                    std::uint64_t c = 0);

// FNV-1a, used to turn labels (alternative names, phases) into stream keys.
std::uint64_t hash_label(std::string_view s);

class Stream {
public:
    explicit Stream(std::uint64_t seed) : seed_(seed), eng_(seed) {}

    double normal() { return norm_(eng_); }
    double uniform() { return std::generate_canonical<double, 53>(eng_); }
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 eng_;
    std::normal_distribution<double> norm_;
};

}  // namespace corrdetect
