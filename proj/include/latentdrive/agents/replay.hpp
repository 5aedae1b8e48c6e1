#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "latentdrive/random.hpp"

namespace latentdrive::agents {

/// One environment interaction. ActionT is a discrete index (value-based
/// agents) or a normalized action vector in [-1,1]^d (actor-critic agents).
template <typename ActionT>
struct Transition {
    std::vector<float> state;
    ActionT action{};
    float reward = 0.f;
    std::vector<float> next_state;
    bool done = false;
};

/// Fixed-capacity FIFO store sampled uniformly with replacement.
template <typename ActionT>
class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity) : cap_(capacity) {
        if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
    }

    void push(Transition<ActionT> t) {
        if (items_.size() < cap_) {
            items_.push_back(std::move(t));
        } else {
            items_[next_] = std::move(t);
            next_ = (next_ + 1) % cap_;
        }
    }

    std::vector<Transition<ActionT>> sample(size_t n, RandomStream& rng) const {
        if (n > items_.size())
            throw std::runtime_error("replay sample of " + std::to_string(n) + " from " +
                                     std::to_string(items_.size()) + " stored transitions");
        std::vector<Transition<ActionT>> out;
        out.reserve(n);
        for (size_t i = 0; i < n; ++i)
            out.push_back(items_[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(items_.size()) - 1))]);
        return out;
    }

    size_t size() const { return items_.size(); }
    size_t capacity() const { return cap_; }

    /// Oldest-first iteration order is not guaranteed; this accessor exists
    /// for eviction tests.
    const std::vector<Transition<ActionT>>& raw() const { return items_; }

private:
    size_t cap_;
    size_t next_ = 0;  // overwrite cursor once full; items_[next_] is the oldest
    std::vector<Transition<ActionT>> items_;
};

}  // namespace latentdrive::agents
