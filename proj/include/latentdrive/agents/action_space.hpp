#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>

#include "latentdrive/drivesim/types.hpp"

namespace latentdrive::agents {

// Discrete driving action grid: every (acceleration, steering) pair.
inline constexpr std::array<double, 3> kAccelChoices{-3.0, 0.0, 3.0};
inline constexpr std::array<double, 5> kSteerChoices{-0.5, -0.2, 0.0, 0.2, 0.5};
inline constexpr int kDiscreteActionCount =
    static_cast<int>(kAccelChoices.size() * kSteerChoices.size());

inline drivesim::Action discrete_action(int index) {
    if (index < 0 || index >= kDiscreteActionCount)
        throw std::out_of_range("discrete action index out of range");
    auto a = static_cast<size_t>(index) / kSteerChoices.size();
    auto s = static_cast<size_t>(index) % kSteerChoices.size();
    return {kAccelChoices[a], kSteerChoices[s]};
}

/// Normalized [-1,1]^2 actor output to physical (accel, steer) ranges.
inline drivesim::Action continuous_action(const std::array<float, 2>& a) {
    return {static_cast<double>(a[0]) * drivesim::kAccelMax,
            static_cast<double>(a[1]) * drivesim::kSteerMax};
}

}  // namespace latentdrive::agents
