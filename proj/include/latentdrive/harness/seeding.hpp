#pragma once

#include <cstdint>
#include <stdexcept>
#include <string_view>

#include "latentdrive/random.hpp"

namespace latentdrive::harness {

/// Single seeding authority for a run. Every RNG consumer (env, traffic,
/// exploration, replay sampling, init) pulls a named stream from here, so one
/// seed pins the whole run and two consumers never share a sequence.
class SeedHub {
public:
    explicit SeedHub(uint64_t seed) : seed_(seed) {}

    uint64_t seed() const { return seed_; }

    /// Independent stream for a named consumer.
    RandomStream stream(std::string_view name) const {
        return RandomStream(seed_).substream(name);
    }

    /// Derived integer seed for components that own their RNG (worlds).
    uint64_t derive(std::string_view name) const {
        return detail::splitmix64(seed_ ^ detail::fnv1a64(name));
    }

    /// The seed is part of the run's identity; swapping it mid-run would make
    /// the metrics log unreproducible.
    void reseed(uint64_t) { throw std::logic_error("reseeding mid-run is rejected"); }

private:
    uint64_t seed_;
};

}  // namespace latentdrive::harness
