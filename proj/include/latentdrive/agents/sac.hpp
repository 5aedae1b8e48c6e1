#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "latentdrive/agents/networks.hpp"
#include "latentdrive/agents/replay.hpp"
#include "latentdrive/ndgrad/adam.hpp"

namespace latentdrive::agents {

/// Eq.-style soft targets, kept as plain scalar arithmetic so they can be
/// anchored by hand: the critic bootstraps through the target value net, the
/// value net regresses on the entropy-regularized twin-min Q.
inline double sac_q_target(double reward, bool done, double v_next, double gamma) {
    if (done) return reward;
    return reward + gamma * v_next;
}

inline double sac_value_target(double q_min, double log_pi, double alpha) {
    return q_min - alpha * log_pi;
}

struct SacConfig {
    double gamma = 0.99;
    double tau = 0.005;
    double lr = 3e-4;
    double alpha = 0.2;  // entropy weight on every log-pi term
};

struct SacLosses {
    double critic = 0.0;
    double value = 0.0;
    double policy = 0.0;
};

/// Soft actor-critic with a separate state-value net and its target, twin
/// critics, and a tanh-squashed Gaussian policy. Actions live in [-1,1]^d.
template <typename T>
class SacAgent {
public:
    SacAgent(int state_dim, int act_dim, SacConfig cfg, RandomStream& rng)
        : cfg_(cfg),
          act_dim_(act_dim),
          policy_(GaussianPolicyNet<T>::init(state_dim, act_dim, rng)),
          q1_(dense_head<T>(state_dim + act_dim, 1, rng)),
          q2_(dense_head<T>(state_dim + act_dim, 1, rng)),
          value_(dense_head<T>(state_dim, 1, rng)),
          value_target_(dense_head<T>(state_dim, 1, rng)),
          policy_opt_(trainable_of_policy(), static_cast<T>(cfg.lr)),
          critic_opt_(critic_params(), static_cast<T>(cfg.lr)),
          value_opt_(ndgrad::trainable_of(value_.state()), static_cast<T>(cfg.lr)) {
        auto dst = value_target_.state();
        auto src = value_.state();
        ndgrad::hard_copy(dst, src);
    }

    /// Deterministic evaluation action: squashed policy mean.
    std::vector<float> act_mean(const std::vector<float>& state) {
        ndgrad::NoGradGuard ng;
        auto [mean, log_std] = policy_.forward(row(state));
        auto a = tanh(mean);
        return std::vector<float>(a.data().begin(), a.data().end());
    }

    /// Stochastic rollout action.
    std::vector<float> act_sample(const std::vector<float>& state, RandomStream& rng) {
        ndgrad::NoGradGuard ng;
        auto [mean, log_std] = policy_.forward(row(state));
        auto noise = ndgrad::Tensor<T>::normal({1, act_dim_}, T(0), T(1), rng, false);
        auto s = squashed_gaussian(mean, log_std, noise);
        return std::vector<float>(s.action.data().begin(), s.action.data().end());
    }

    SacLosses update(const std::vector<Transition<std::vector<float>>>& batch, RandomStream& rng) {
        if (batch.empty()) throw std::invalid_argument("empty update batch");
        const int b = static_cast<int>(batch.size());
        const int s = static_cast<int>(batch.front().state.size());

        auto states = stack(batch, &Transition<std::vector<float>>::state, s);
        auto actions = stack_actions(batch);
        SacLosses out;

        // critic step: regress both Qs on r + gamma * V_target(s')
        {
            std::vector<T> ys(batch.size());
            {
                ndgrad::NoGradGuard ng;
                auto next = stack(batch, &Transition<std::vector<float>>::next_state, s);
                auto vn = value_target_.forward(next, false);
                for (int i = 0; i < b; ++i) {
                    const auto& tr = batch[static_cast<size_t>(i)];
                    ys[static_cast<size_t>(i)] = static_cast<T>(sac_q_target(
                        tr.reward, tr.done, vn.data()[static_cast<size_t>(i)], cfg_.gamma));
                }
            }
            zero_all();
            auto cat = concat_cols(states, actions);
            auto y = ndgrad::Tensor<T>::from_data({b}, std::move(ys));
            auto l1 = mean(square(sub(reshape(q1_.forward(cat, false), {b}), y)));
            auto l2 = mean(square(sub(reshape(q2_.forward(cat, false), {b}), y)));
            auto loss = add(l1, l2);
            out.critic = static_cast<double>(loss.item());
            if (!std::isfinite(out.critic)) throw std::runtime_error("sac: non-finite critic loss");
            loss.backward();
            critic_opt_.step();
        }

        // value step: regress V on twin-min Q of a fresh action minus entropy
        {
            std::vector<T> vhat(batch.size());
            {
                ndgrad::NoGradGuard ng;
                auto [mean_a, log_std] = policy_.forward(states);
                auto noise = ndgrad::Tensor<T>::normal({b, act_dim_}, T(0), T(1), rng, false);
                auto smp = squashed_gaussian(mean_a, log_std, noise);
                auto cat = concat_cols(states, smp.action);
                auto qmin = minimum(reshape(q1_.forward(cat, false), {b}),
                                    reshape(q2_.forward(cat, false), {b}));
                for (int i = 0; i < b; ++i)
                    vhat[static_cast<size_t>(i)] = static_cast<T>(
                        sac_value_target(qmin.data()[static_cast<size_t>(i)],
                                         smp.log_prob.data()[static_cast<size_t>(i)], cfg_.alpha));
            }
            zero_all();
            auto target = ndgrad::Tensor<T>::from_data({b}, std::move(vhat));
            auto loss = mean(square(sub(reshape(value_.forward(states, false), {b}), target)));
            out.value = static_cast<double>(loss.item());
            if (!std::isfinite(out.value)) throw std::runtime_error("sac: non-finite value loss");
            loss.backward();
            value_opt_.step();
        }

        // policy step: minimize alpha * log pi - twin-min Q through the
        // reparameterized sample
        {
            zero_all();
            auto noise = ndgrad::Tensor<T>::normal({b, act_dim_}, T(0), T(1), rng, false);
            auto loss = policy_objective(states, noise);
            out.policy = static_cast<double>(loss.item());
            if (!std::isfinite(out.policy)) throw std::runtime_error("sac: non-finite policy loss");
            loss.backward();
            policy_opt_.step();
        }

        auto dst = value_target_.state();
        auto src = value_.state();
        ndgrad::soft_update(dst, src, static_cast<T>(cfg_.tau));

        ++updates_;
        return out;
    }

    /// Mean over states of alpha * log pi(a|s) - min(Q1, Q2)(s, a) with
    /// a = f(noise; s). Exposed for the finite-difference oracle.
    ndgrad::Tensor<T> policy_objective(const ndgrad::Tensor<T>& states,
                                       const ndgrad::Tensor<T>& noise) {
        int b = states.dim(0);
        auto [mean_a, log_std] = policy_.forward(states);
        auto smp = squashed_gaussian(mean_a, log_std, noise);
        auto cat = concat_cols(states, smp.action);
        auto qmin = minimum(reshape(q1_.forward(cat, false), {b}),
                            reshape(q2_.forward(cat, false), {b}));
        return mean(sub(affine(smp.log_prob, static_cast<T>(cfg_.alpha), T(0)), qmin));
    }

    GaussianPolicyNet<T>& policy() { return policy_; }
    long updates() const { return updates_; }
    const SacConfig& config() const { return cfg_; }
    int action_dim() const { return act_dim_; }

    ndgrad::NamedState<T> state() {
        auto st = policy_.state("policy.");
        append(st, q1_.state("q1."));
        append(st, q2_.state("q2."));
        append(st, value_.state("value."));
        append(st, value_target_.state("value_target."));
        return st;
    }

private:
    ndgrad::Tensor<T> row(const std::vector<float>& state) const {
        std::vector<T> d(state.begin(), state.end());
        return ndgrad::Tensor<T>::from_data({1, static_cast<int>(state.size())}, std::move(d));
    }

    static void append(ndgrad::NamedState<T>& dst, const ndgrad::NamedState<T>& src) {
        for (auto& e : src) dst.push_back(e);
    }

    std::vector<ndgrad::Tensor<T>> trainable_of_policy() {
        return ndgrad::trainable_of(policy_.state(""));
    }

    std::vector<ndgrad::Tensor<T>> critic_params() {
        auto p = ndgrad::trainable_of(q1_.state());
        for (auto& t : ndgrad::trainable_of(q2_.state())) p.push_back(t);
        return p;
    }

    void zero_all() { ndgrad::zero_grads(ndgrad::trainable_of(state())); }

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

    SacConfig cfg_;
    int act_dim_;
    GaussianPolicyNet<T> policy_;
    ndgrad::Mlp<T> q1_, q2_, value_, value_target_;
    ndgrad::Adam<T> policy_opt_, critic_opt_, value_opt_;
    long updates_ = 0;
};

}  // namespace latentdrive::agents
