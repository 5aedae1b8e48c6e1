#pragma once

#include <array>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "latentdrive/agents/frame_skip.hpp"
#include "latentdrive/drivesim/types.hpp"
#include "latentdrive/harness/driving_env.hpp"

namespace latentdrive::harness {

/// Aggregated result of an evaluation round: average undiscounted return and
/// the fraction of episodes that reached each route checkpoint.
struct EvalReport {
    double avg_return = 0.0;
    double rate_entrance = 0.0;
    double rate_first = 0.0;
    double rate_second = 0.0;
    double rate_desired = 0.0;
    double rate_goal = 0.0;
    int episodes = 0;

    std::array<double, 5> rates() const {
        return {rate_entrance, rate_first, rate_second, rate_desired, rate_goal};
    }
};

/// The checkpoints lie on one route, so a later flag implies every earlier
/// one per episode and the aggregated rates must fall (weakly) along the
/// route. A violation means broken progress tracking, not a bad policy.
inline void validate_report(const EvalReport& r) {
    auto rs = r.rates();
    for (size_t i = 0; i < rs.size(); ++i) {
        if (rs[i] < 0.0 || rs[i] > 1.0)
            throw std::logic_error("checkpoint rate outside [0,1] at index " + std::to_string(i));
        if (i > 0 && rs[i] > rs[i - 1] + 1e-12)
            throw std::logic_error("checkpoint rates must be weakly decreasing along the route");
    }
}

/// Roll the aggregation separately so it can be tested on synthetic
/// progress/return data without driving the simulator.
inline EvalReport aggregate_eval(const std::vector<drivesim::CheckpointProgress>& progresses,
                                 const std::vector<double>& returns) {
    if (progresses.empty() || progresses.size() != returns.size())
        throw std::invalid_argument("evaluation aggregate needs matching, non-empty inputs");
    EvalReport r;
    r.episodes = static_cast<int>(progresses.size());
    double sum = 0.0;
    int hits[5] = {0, 0, 0, 0, 0};
    for (size_t i = 0; i < progresses.size(); ++i) {
        sum += returns[i];
        const auto& p = progresses[i];
        hits[0] += p.entrance;
        hits[1] += p.first_exit;
        hits[2] += p.second_exit;
        hits[3] += p.desired_exit;
        hits[4] += p.goal;
    }
    r.avg_return = sum / static_cast<double>(r.episodes);
    double n = static_cast<double>(r.episodes);
    r.rate_entrance = hits[0] / n;
    r.rate_first = hits[1] / n;
    r.rate_second = hits[2] / n;
    r.rate_desired = hits[3] / n;
    r.rate_goal = hits[4] / n;
    validate_report(r);
    return r;
}

/// Run deterministic evaluation episodes (no exploration noise; the policy
/// maps the latent observation to a physical action).
inline EvalReport evaluate(DrivingEnv& env,
                           const std::function<drivesim::Action(const std::vector<float>&)>& policy,
                           int episodes, int frame_skip) {
    if (episodes < 1) throw std::invalid_argument("evaluation needs at least one episode");
    std::vector<drivesim::CheckpointProgress> progresses;
    std::vector<double> returns;
    for (int e = 0; e < episodes; ++e) {
        auto obs = env.reset();
        double ret = 0.0;
        bool done = false;
        while (!done) {
            auto step = agents::frame_skip_step(env, policy(obs), frame_skip);
            ret += step.reward;
            done = step.done;
            obs = std::move(step.obs);
        }
        progresses.push_back(env.world().progress());
        returns.push_back(ret);
    }
    return aggregate_eval(progresses, returns);
}

}  // namespace latentdrive::harness
