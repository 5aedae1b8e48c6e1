#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "latentdrive/ndgrad/layers.hpp"
#include "latentdrive/ndgrad/tensor.hpp"
#include "latentdrive/random.hpp"

namespace latentdrive::agents {

using ndgrad::Act;
using ndgrad::LayerSpec;

/// Value-style head: five dense layers, hidden widths 256 down to 32, relu.
/// Used for the discrete Q net and for the stochastic agent's critics and
/// state-value net.
template <typename T>
ndgrad::Mlp<T> dense_head(int in, int out, RandomStream& rng) {
    return ndgrad::Mlp<T>({{in, 256, Act::kRelu, false},
                           {256, 128, Act::kRelu, false},
                           {128, 64, Act::kRelu, false},
                           {64, 32, Act::kRelu, false},
                           {32, out, Act::kNone, false}},
                          rng);
}

/// Deterministic actor: hidden widths 64/200/20 with batch norm and leaky
/// relu, tanh output bounding the action to [-1,1]^d.
template <typename T>
ndgrad::Mlp<T> bounded_actor(int in, int act_dim, RandomStream& rng) {
    return ndgrad::Mlp<T>({{in, 64, Act::kLeakyRelu, true},
                           {64, 200, Act::kLeakyRelu, true},
                           {200, 20, Act::kLeakyRelu, true},
                           {20, act_dim, Act::kTanh, false}},
                          rng);
}

/// Critic paired with the bounded actor: same widths on the concatenated
/// (state, action) input, no batch norm, linear scalar output.
template <typename T>
ndgrad::Mlp<T> actor_critic_q(int state_dim, int act_dim, RandomStream& rng) {
    return ndgrad::Mlp<T>({{state_dim + act_dim, 64, Act::kLeakyRelu, false},
                           {64, 200, Act::kLeakyRelu, false},
                           {200, 20, Act::kLeakyRelu, false},
                           {20, 1, Act::kNone, false}},
                          rng);
}

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
// additive floor inside log(1 - tanh^2) keeping the squash correction finite
// when the pre-tanh sample saturates
inline constexpr double kSquashEps = 1e-6;

/// Stochastic policy: the dense trunk splits into mean and log-std branches.
template <typename T>
struct GaussianPolicyNet {
    ndgrad::Mlp<T> trunk;
    ndgrad::Dense<T> mean_head, log_std_head;

    static GaussianPolicyNet init(int in, int act_dim, RandomStream& rng) {
        GaussianPolicyNet n;
        n.trunk = ndgrad::Mlp<T>({{in, 256, Act::kRelu, false},
                                  {256, 128, Act::kRelu, false},
                                  {128, 64, Act::kRelu, false},
                                  {64, 32, Act::kRelu, false}},
                                 rng);
        n.mean_head = ndgrad::Dense<T>::init(32, act_dim, rng);
        n.log_std_head = ndgrad::Dense<T>::init(32, act_dim, rng);
        return n;
    }

    /// x [B,in] -> (mean [B,d], log_std [B,d] clamped to a sane range)
    std::pair<ndgrad::Tensor<T>, ndgrad::Tensor<T>> forward(const ndgrad::Tensor<T>& x) {
        auto h = trunk.forward(x, false);
        return {mean_head.forward(h),
                clamp(log_std_head.forward(h), static_cast<T>(kLogStdMin), static_cast<T>(kLogStdMax))};
    }

    ndgrad::NamedState<T> state(const std::string& prefix) {
        auto s = trunk.state(prefix + "trunk.");
        s.emplace_back(prefix + "mean.w", mean_head.w);
        s.emplace_back(prefix + "mean.b", mean_head.b);
        s.emplace_back(prefix + "log_std.w", log_std_head.w);
        s.emplace_back(prefix + "log_std.b", log_std_head.b);
        return s;
    }
};

template <typename T>
struct SquashedSample {
    ndgrad::Tensor<T> action;    // [B,d], tanh-bounded
    ndgrad::Tensor<T> log_prob;  // [B], density of `action` under the squashed Gaussian
};

/// Reparameterized draw a = tanh(mean + exp(log_std) * noise) with its
/// log-density. Per dimension:
///   log pi(a) = -noise^2/2 - log_std - log(sqrt(2 pi)) - log(1 - a^2)
/// the last term being the tanh change of variables. The noise tensor must
/// be standard normal, drawn outside (keeps the loss a pure function of the
/// parameters).
template <typename T>
SquashedSample<T> squashed_gaussian(const ndgrad::Tensor<T>& mean, const ndgrad::Tensor<T>& log_std,
                                    const ndgrad::Tensor<T>& noise) {
    auto sigma = exp(log_std);
    auto pre = add(mean, mul(sigma, noise));
    auto action = tanh(pre);
    const T half_log_2pi = static_cast<T>(0.5 * std::log(2.0 * std::numbers::pi));
    auto gauss = sub(affine(square(noise), T(-0.5), -half_log_2pi), log_std);
    auto correction = log(affine(square(action), T(-1), T(1) + static_cast<T>(kSquashEps)));
    return {action, sum_cols(sub(gauss, correction))};
}

}  // namespace latentdrive::agents
