#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "latentdrive/random.hpp"

namespace latentdrive::agents {

/// Decaying, path-length-aware, periodically reheated Gaussian action noise
/// for the deterministic-policy agent:
///   sigma_dim = delta_dim * lambda_t * lambda_d * lambda_p
/// lambda_t halves over training and floors at 0.5; lambda_d rewards long
/// episodes (t_p is the step count of the current episode, T_p its cap);
/// lambda_p sweeps 0..2 sinusoidally so exploration repeatedly cools off and
/// reheats.
struct NoiseSchedule {
    std::vector<double> delta{0.5, 0.1};  // per-dimension base scale (accel, steer)
    double T = 100000.0;                  // total decay horizon, env steps
    double T_p = 500.0;                   // episode length cap

    double lambda_t(double t) const { return std::max(0.5, 1.0 - t / T); }
    double lambda_d(double t, double t_p) const { return std::max(1.0 - t / T, 0.2 + t_p / T_p); }
    double lambda_p(double t) const {
        return 1.0 + std::sin(5.0 * std::numbers::pi * t / T + std::numbers::pi / 2.0);
    }

    double sigma(size_t dim, double t, double t_p) const {
        if (dim >= delta.size()) throw std::out_of_range("noise schedule dimension out of range");
        return delta[dim] * lambda_t(t) * lambda_d(t, t_p) * lambda_p(t);
    }
};

/// Greedy action with probability 1-epsilon; otherwise a draw from
/// softmax(q / temperature), so higher-valued actions are explored more.
inline int q_weighted_exploration(std::span<const double> q, double epsilon, RandomStream& rng,
                                  double temperature = 1.0) {
    if (q.empty()) throw std::invalid_argument("empty Q vector");
    for (double v : q)
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite Q value");

    auto argmax = static_cast<size_t>(std::max_element(q.begin(), q.end()) - q.begin());
    if (rng.uniform() >= epsilon) return static_cast<int>(argmax);

    std::vector<double> p(q.size());
    double z = 0.0;
    for (size_t i = 0; i < q.size(); ++i) {
        p[i] = std::exp((q[i] - q[argmax]) / temperature);
        z += p[i];
    }
    double u = rng.uniform() * z, acc = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(p.size()) - 1;  // u landed on the top edge
}

/// Linear epsilon decay for the value-based agent.
struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.05;
    double decay_steps = 100000.0;

    double at(double t) const {
        if (t >= decay_steps) return end;
        return start + (end - start) * (t / decay_steps);
    }
};

}  // namespace latentdrive::agents
