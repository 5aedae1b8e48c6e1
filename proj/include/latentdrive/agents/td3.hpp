#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "latentdrive/agents/exploration.hpp"
#include "latentdrive/agents/networks.hpp"
#include "latentdrive/agents/replay.hpp"
#include "latentdrive/ndgrad/adam.hpp"

namespace latentdrive::agents {

/// Twin-min bootstrap: the pessimistic critic pair caps value overestimation.
inline double td3_target(double reward, bool done, double q1_next, double q2_next, double gamma) {
    if (done) return reward;
    return reward + gamma * std::min(q1_next, q2_next);
}

struct Td3Config {
    double gamma = 0.99;
    double tau = 0.005;
    double policy_lr = 1e-4;
    double q_lr = 1e-3;
    int policy_delay = 2;          // actor/targets move every d-th critic update
    double smoothing_std = 0.2;    // target-policy smoothing noise, normalized units
    double smoothing_clip = 0.5;
};

struct Td3Losses {
    double critic = 0.0;
    double actor = 0.0;      // NaN-free only on delayed steps
    bool actor_stepped = false;
};

/// Deterministic actor-critic with twin critics, delayed actor updates, and
/// target-policy smoothing. Actions live in [-1,1]^d.
template <typename T>
class Td3Agent {
public:
    Td3Agent(int state_dim, int act_dim, Td3Config cfg, RandomStream& rng)
        : cfg_(cfg),
          act_dim_(act_dim),
          policy_(bounded_actor<T>(state_dim, act_dim, rng)),
          policy_target_(bounded_actor<T>(state_dim, act_dim, rng)),
          q1_(actor_critic_q<T>(state_dim, act_dim, rng)),
          q2_(actor_critic_q<T>(state_dim, act_dim, rng)),
          q1_target_(actor_critic_q<T>(state_dim, act_dim, rng)),
          q2_target_(actor_critic_q<T>(state_dim, act_dim, rng)),
          policy_opt_(ndgrad::trainable_of(policy_.state()), static_cast<T>(cfg.policy_lr)),
          critic_opt_(critic_params(), static_cast<T>(cfg.q_lr)) {
        sync_target(policy_target_, policy_);
        sync_target(q1_target_, q1_);
        sync_target(q2_target_, q2_);
    }

    /// Noiseless action (batch-norm in inference mode).
    std::vector<float> act(const std::vector<float>& state) {
        ndgrad::NoGradGuard ng;
        auto a = policy_.forward(row(state), false);
        return std::vector<float>(a.data().begin(), a.data().end());
    }

    /// Exploration action: policy output plus scheduled Gaussian noise,
    /// clipped back into the normalized range.
    std::vector<float> act_explore(const std::vector<float>& state, const NoiseSchedule& sched,
                                   double t, double t_p, RandomStream& rng) {
        auto a = act(state);
        for (size_t d = 0; d < a.size(); ++d) {
            a[d] += static_cast<float>(rng.normal(0.0, sched.sigma(d, t, t_p)));
            a[d] = std::clamp(a[d], -1.f, 1.f);
        }
        return a;
    }

    Td3Losses update(const std::vector<Transition<std::vector<float>>>& batch, RandomStream& rng) {
        if (batch.empty()) throw std::invalid_argument("empty update batch");
        const int b = static_cast<int>(batch.size());
        const int s = static_cast<int>(batch.front().state.size());

        std::vector<T> ys(batch.size());
        {
            ndgrad::NoGradGuard ng;
            auto next = stack(batch, &Transition<std::vector<float>>::next_state, s);
            auto a_next = policy_target_.forward(next, false);
            auto smoothed = smooth(a_next, rng);
            auto cat = concat_cols(next, smoothed);
            auto q1n = q1_target_.forward(cat, false);
            auto q2n = q2_target_.forward(cat, false);
            for (int i = 0; i < b; ++i) {
                const auto& tr = batch[static_cast<size_t>(i)];
                ys[static_cast<size_t>(i)] = static_cast<T>(
                    td3_target(tr.reward, tr.done, q1n.data()[static_cast<size_t>(i)],
                               q2n.data()[static_cast<size_t>(i)], cfg_.gamma));
            }
        }

        Td3Losses out;
        auto states = stack(batch, &Transition<std::vector<float>>::state, s);
        auto actions = stack_actions(batch);
        {
            zero_all();
            auto cat = concat_cols(states, actions);
            auto y = ndgrad::Tensor<T>::from_data({b}, ys);
            auto l1 = mean(square(sub(reshape(q1_.forward(cat, false), {b}), y)));
            auto l2 = mean(square(sub(reshape(q2_.forward(cat, false), {b}), y)));
            auto loss = add(l1, l2);
            out.critic = static_cast<double>(loss.item());
            if (!std::isfinite(out.critic)) throw std::runtime_error("td3: non-finite critic loss");
            loss.backward();
            critic_opt_.step();
        }

        ++updates_;
        if (updates_ % cfg_.policy_delay == 0) {
            zero_all();
            auto a_pi = policy_.forward(states, true);
            auto q = reshape(q1_.forward(concat_cols(states, a_pi), false), {b});
            auto loss = affine(mean(q), T(-1), T(0));  // ascend Q1
            out.actor = static_cast<double>(loss.item());
            if (!std::isfinite(out.actor)) throw std::runtime_error("td3: non-finite actor loss");
            loss.backward();
            policy_opt_.step();
            out.actor_stepped = true;

            soft_all(policy_target_, policy_);
            soft_all(q1_target_, q1_);
            soft_all(q2_target_, q2_);
        }
        return out;
    }

    long updates() const { return updates_; }
    const Td3Config& config() const { return cfg_; }
    int action_dim() const { return act_dim_; }

    ndgrad::NamedState<T> state() {
        auto s = policy_.state("policy.");
        append(s, policy_target_.state("policy_target."));
        append(s, q1_.state("q1."));
        append(s, q2_.state("q2."));
        append(s, q1_target_.state("q1_target."));
        append(s, q2_target_.state("q2_target."));
        return s;
    }

    std::vector<T> policy_snapshot() {
        std::vector<T> out;
        for (auto& [n, t] : policy_.state()) out.insert(out.end(), t.data().begin(), t.data().end());
        return out;
    }

    /// Mean Q1(s, pi(s)) with the policy in training mode: the quantity the
    /// delayed actor step ascends. Exposed so tests can confirm the step
    /// direction on a frozen critic.
    double actor_objective(const std::vector<std::vector<float>>& states) {
        ndgrad::NoGradGuard ng;
        if (states.empty()) throw std::invalid_argument("empty state batch");
        const int b = static_cast<int>(states.size());
        const int s = static_cast<int>(states.front().size());
        std::vector<T> d;
        d.reserve(states.size() * static_cast<size_t>(s));
        for (const auto& st : states) {
            if (static_cast<int>(st.size()) != s) throw std::invalid_argument("ragged batch");
            d.insert(d.end(), st.begin(), st.end());
        }
        auto x = ndgrad::Tensor<T>::from_data({b, s}, std::move(d));
        auto a_pi = policy_.forward(x, true);
        return static_cast<double>(mean(reshape(q1_.forward(concat_cols(x, a_pi), false), {b})).item());
    }

private:
    ndgrad::Tensor<T> row(const std::vector<float>& state) const {
        std::vector<T> d(state.begin(), state.end());
        return ndgrad::Tensor<T>::from_data({1, static_cast<int>(state.size())}, std::move(d));
    }

    static void append(ndgrad::NamedState<T>& dst, const ndgrad::NamedState<T>& src) {
        for (auto& e : src) dst.push_back(e);
    }

    static void sync_target(ndgrad::Mlp<T>& target, ndgrad::Mlp<T>& online) {
        auto dst = target.state();
        auto src = online.state();
        ndgrad::hard_copy(dst, src);
    }

    void soft_all(ndgrad::Mlp<T>& target, ndgrad::Mlp<T>& online) {
        auto dst = target.state();
        auto src = online.state();
        ndgrad::soft_update(dst, src, static_cast<T>(cfg_.tau));
    }

    std::vector<ndgrad::Tensor<T>> critic_params() {
        auto p = ndgrad::trainable_of(q1_.state());
        for (auto& t : ndgrad::trainable_of(q2_.state())) p.push_back(t);
        return p;
    }

    void zero_all() {
        ndgrad::zero_grads(ndgrad::trainable_of(state()));
    }

    ndgrad::Tensor<T> smooth(const ndgrad::Tensor<T>& a, RandomStream& rng) {
        std::vector<T> d(a.data().begin(), a.data().end());
        for (auto& v : d) {
            double n = std::clamp(rng.normal(0.0, cfg_.smoothing_std), -cfg_.smoothing_clip,
                                  cfg_.smoothing_clip);
            v = std::clamp(v + static_cast<T>(n), T(-1), T(1));
        }
        return ndgrad::Tensor<T>::from_data(a.shape(), std::move(d));
    }

    template <typename Tr>
    static ndgrad::Tensor<T> stack(const std::vector<Tr>& batch, std::vector<float> Tr::*field,
                                   int dim) {
        std::vector<T> d;
        d.reserve(batch.size() * static_cast<size_t>(dim));
        for (const auto& tr : batch) {
            const auto& v = tr.*field;
            if (static_cast<int>(v.size()) != dim) throw std::invalid_argument("ragged batch");
            d.insert(d.end(), v.begin(), v.end());
        }
        return ndgrad::Tensor<T>::from_data({static_cast<int>(batch.size()), dim}, std::move(d));
    }

    ndgrad::Tensor<T> stack_actions(const std::vector<Transition<std::vector<float>>>& batch) {
        std::vector<T> d;
        d.reserve(batch.size() * static_cast<size_t>(act_dim_));
        for (const auto& tr : batch) {
            if (static_cast<int>(tr.action.size()) != act_dim_)
                throw std::invalid_argument("action dimension mismatch");
            d.insert(d.end(), tr.action.begin(), tr.action.end());
        }
        return ndgrad::Tensor<T>::from_data({static_cast<int>(batch.size()), act_dim_}, std::move(d));
    }

    Td3Config cfg_;
    int act_dim_;
    ndgrad::Mlp<T> policy_, policy_target_, q1_, q2_, q1_target_, q2_target_;
    ndgrad::Adam<T> policy_opt_, critic_opt_;
    long updates_ = 0;
};

}  // namespace latentdrive::agents
