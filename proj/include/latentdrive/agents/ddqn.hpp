#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "latentdrive/agents/exploration.hpp"
#include "latentdrive/agents/networks.hpp"
#include "latentdrive/agents/replay.hpp"
#include "latentdrive/ndgrad/adam.hpp"

namespace latentdrive::agents {

/// Plain bootstrap: y = r + gamma * max_a' Q_target(s', a').
inline double dqn_target(double reward, bool done, std::span<const double> q_target_next,
                         double gamma) {
    if (done) return reward;
    if (q_target_next.empty()) throw std::invalid_argument("empty target Q vector");
    return reward + gamma * *std::max_element(q_target_next.begin(), q_target_next.end());
}

/// Double bootstrap: the online net picks the action, the target net scores
/// it, which caps the optimistic bias of the plain max.
inline double ddqn_target(double reward, bool done, std::span<const double> q_online_next,
                          std::span<const double> q_target_next, double gamma) {
    if (done) return reward;
    if (q_online_next.size() != q_target_next.size() || q_online_next.empty())
        throw std::invalid_argument("mismatched Q vectors");
    auto pick = static_cast<size_t>(
        std::max_element(q_online_next.begin(), q_online_next.end()) - q_online_next.begin());
    return reward + gamma * q_target_next[pick];
}

struct DdqnConfig {
    double gamma = 0.99;
    double lr = 1e-3;
    int target_copy_period = 1000;  // hard-copy cadence, in updates
    double temperature = 1.0;       // Q-weighted exploration softmax temperature
};

/// Discrete-action value learner: one online net trained with squared error
/// against the double-bootstrap target, one periodically hard-copied target
/// net.
template <typename T>
class DdqnAgent {
public:
    DdqnAgent(int state_dim, int n_actions, DdqnConfig cfg, RandomStream& rng)
        : cfg_(cfg),
          n_actions_(n_actions),
          online_(dense_head<T>(state_dim, n_actions, rng)),
          target_(dense_head<T>(state_dim, n_actions, rng)),
          opt_(ndgrad::trainable_of(online_.state()), static_cast<T>(cfg.lr)) {
        auto dst = target_.state();
        auto src = online_.state();
        ndgrad::hard_copy(dst, src);
    }

    std::vector<double> q_values(const std::vector<float>& state) {
        ndgrad::NoGradGuard ng;
        auto q = online_.forward(row(state), false);
        return std::vector<double>(q.data().begin(), q.data().end());
    }

    int act_greedy(const std::vector<float>& state) {
        auto q = q_values(state);
        return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
    }

    int act_explore(const std::vector<float>& state, double epsilon, RandomStream& rng) {
        auto q = q_values(state);
        return q_weighted_exploration(q, epsilon, rng, cfg_.temperature);
    }

    /// One optimization step on the online net. Returns the batch loss.
    double update(const std::vector<Transition<int>>& batch) {
        if (batch.empty()) throw std::invalid_argument("empty update batch");
        const int b = static_cast<int>(batch.size());
        const int s = static_cast<int>(batch.front().state.size());

        std::vector<T> ys(batch.size());
        {
            ndgrad::NoGradGuard ng;
            auto next = stack(batch, &Transition<int>::next_state, s);
            auto q_online_next = online_.forward(next, false);
            auto q_target_next = target_.forward(next, false);
            for (int i = 0; i < b; ++i) {
                std::vector<double> qo = row_of(q_online_next, i);
                std::vector<double> qt = row_of(q_target_next, i);
                ys[static_cast<size_t>(i)] = static_cast<T>(
                    ddqn_target(batch[static_cast<size_t>(i)].reward, batch[static_cast<size_t>(i)].done,
                                qo, qt, cfg_.gamma));
            }
        }

        ndgrad::zero_grads(ndgrad::trainable_of(online_.state()));
        auto states = stack(batch, &Transition<int>::state, s);
        std::vector<int> acts(batch.size());
        for (size_t i = 0; i < batch.size(); ++i) acts[i] = batch[i].action;
        auto taken = gather_cols(online_.forward(states, false), std::move(acts));
        auto y = ndgrad::Tensor<T>::from_data({b}, std::move(ys));
        auto loss = mean(square(sub(taken, y)));

        double loss_v = static_cast<double>(loss.item());
        if (!std::isfinite(loss_v)) throw std::runtime_error("ddqn: non-finite loss");
        loss.backward();
        opt_.step();

        ++updates_;
        if (updates_ % cfg_.target_copy_period == 0) {
            auto dst = target_.state();
            auto src = online_.state();
            ndgrad::hard_copy(dst, src);
        }
        return loss_v;
    }

    long updates() const { return updates_; }
    const DdqnConfig& config() const { return cfg_; }
    int action_count() const { return n_actions_; }

    ndgrad::NamedState<T> state() {
        auto s = online_.state("online.");
        for (auto& e : target_.state("target.")) s.push_back(e);
        return s;
    }

    /// Target-net parameters flattened, for change-detection tests.
    std::vector<T> target_snapshot() {
        std::vector<T> out;
        for (auto& [n, t] : target_.state())
            out.insert(out.end(), t.data().begin(), t.data().end());
        return out;
    }

private:
    ndgrad::Tensor<T> row(const std::vector<float>& state) const {
        std::vector<T> d(state.begin(), state.end());
        return ndgrad::Tensor<T>::from_data({1, static_cast<int>(state.size())}, std::move(d));
    }

    static ndgrad::Tensor<T> stack(const std::vector<Transition<int>>& batch,
                                   std::vector<float> Transition<int>::*field, int dim) {
        std::vector<T> d;
        d.reserve(batch.size() * static_cast<size_t>(dim));
        for (const auto& tr : batch) {
            const auto& v = tr.*field;
            if (static_cast<int>(v.size()) != dim) throw std::invalid_argument("ragged state batch");
            d.insert(d.end(), v.begin(), v.end());
        }
        return ndgrad::Tensor<T>::from_data({static_cast<int>(batch.size()), dim}, std::move(d));
    }

    static std::vector<double> row_of(const ndgrad::Tensor<T>& m, int i) {
        int n = m.dim(1);
        auto d = m.data();
        return std::vector<double>(d.begin() + static_cast<size_t>(i) * n,
                                   d.begin() + (static_cast<size_t>(i) + 1) * n);
    }

    DdqnConfig cfg_;
    int n_actions_;
    ndgrad::Mlp<T> online_, target_;
    ndgrad::Adam<T> opt_;
    long updates_ = 0;
};

}  // namespace latentdrive::agents
