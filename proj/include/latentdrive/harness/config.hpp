#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "latentdrive/agents/ddqn.hpp"
#include "latentdrive/agents/exploration.hpp"
#include "latentdrive/agents/sac.hpp"
#include "latentdrive/agents/td3.hpp"
#include "latentdrive/drivesim/roadmap.hpp"
#include "latentdrive/drivesim/world.hpp"
#include "latentdrive/kvfile.hpp"

namespace latentdrive::harness {

/// Everything a training run needs, parsed from a flat key = value file.
/// CLI flags (--algo/--seed/--out) override file values after parsing.
struct RunConfig {
    std::string algo = "sac";  // ddqn | td3 | sac
    uint64_t seed = 1;
    std::string out_dir = "run";
    std::string vae_checkpoint;  // required: frozen encoder for observations

    // scenario
    double ring_radius = drivesim::kRingRadius;  // fixed geometry; validated
    int n_traffic = 10;
    int step_limit = 1000;  // agent steps per episode
    int frame_skip = 4;

    // loop
    long total_steps = 100000;  // agent steps
    long eval_period = 5000;
    int eval_episodes = 10;
    long warmup_steps = 1000;  // env steps before the first update
    int batch_size = 64;
    size_t replay_capacity = 100000;

    // shared algorithm knobs
    double gamma = 0.99;
    double tau = 0.005;

    // ddqn
    double ddqn_lr = 1e-3;
    int target_copy_period = 1000;
    double softmax_temperature = 1.0;
    agents::EpsilonSchedule epsilon{};

    // td3
    double td3_policy_lr = 1e-4;
    double td3_q_lr = 1e-3;
    int policy_delay = 2;
    double smoothing_std = 0.2;
    double smoothing_clip = 0.5;
    agents::NoiseSchedule noise{};

    // sac
    double sac_lr = 3e-4;
    double sac_alpha = 0.2;

    static RunConfig from_kv(const KvFile& kv) {
        RunConfig c;
        c.algo = kv.get_string("algo", c.algo);
        c.seed = static_cast<uint64_t>(kv.get_long("seed", static_cast<long>(c.seed)));
        c.out_dir = kv.get_string("out_dir", c.out_dir);
        c.vae_checkpoint = kv.get_string("vae_checkpoint", c.vae_checkpoint);

        c.ring_radius = kv.get_double("ring_radius", c.ring_radius);
        c.n_traffic = static_cast<int>(kv.get_long("n_traffic", c.n_traffic));
        c.step_limit = static_cast<int>(kv.get_long("step_limit", c.step_limit));
        c.frame_skip = static_cast<int>(kv.get_long("frame_skip", c.frame_skip));

        c.total_steps = kv.get_long("total_steps", c.total_steps);
        c.eval_period = kv.get_long("eval_period", c.eval_period);
        c.eval_episodes = static_cast<int>(kv.get_long("eval_episodes", c.eval_episodes));
        c.warmup_steps = kv.get_long("warmup_steps", c.warmup_steps);
        c.batch_size = static_cast<int>(kv.get_long("batch_size", c.batch_size));
        c.replay_capacity =
            static_cast<size_t>(kv.get_long("replay_capacity", static_cast<long>(c.replay_capacity)));

        c.gamma = kv.get_double("gamma", c.gamma);
        c.tau = kv.get_double("tau", c.tau);

        c.ddqn_lr = kv.get_double("ddqn_lr", c.ddqn_lr);
        c.target_copy_period = static_cast<int>(kv.get_long("target_copy_period", c.target_copy_period));
        c.softmax_temperature = kv.get_double("softmax_temperature", c.softmax_temperature);
        c.epsilon.start = kv.get_double("epsilon_start", c.epsilon.start);
        c.epsilon.end = kv.get_double("epsilon_end", c.epsilon.end);
        c.epsilon.decay_steps = kv.get_double("epsilon_decay_steps", c.epsilon.decay_steps);

        c.td3_policy_lr = kv.get_double("td3_policy_lr", c.td3_policy_lr);
        c.td3_q_lr = kv.get_double("td3_q_lr", c.td3_q_lr);
        c.policy_delay = static_cast<int>(kv.get_long("policy_delay", c.policy_delay));
        c.smoothing_std = kv.get_double("smoothing_std", c.smoothing_std);
        c.smoothing_clip = kv.get_double("smoothing_clip", c.smoothing_clip);
        c.noise.delta[0] = kv.get_double("sigma_accel", c.noise.delta[0]);
        c.noise.delta[1] = kv.get_double("sigma_steer", c.noise.delta[1]);
        c.noise.T = kv.get_double("sigma_horizon", c.noise.T);
        c.noise.T_p = kv.get_double("sigma_episode_cap", c.noise.T_p);

        c.sac_lr = kv.get_double("sac_lr", c.sac_lr);
        c.sac_alpha = kv.get_double("sac_alpha", c.sac_alpha);

        c.validate();
        return c;
    }

    static RunConfig from_file(const std::string& path) { return from_kv(KvFile::load(path)); }

    void validate() const {
        if (algo != "ddqn" && algo != "td3" && algo != "sac")
            throw std::invalid_argument("unknown algo '" + algo + "' (expected ddqn, td3, or sac)");
        if (ring_radius != drivesim::kRingRadius)
            throw std::invalid_argument("this build fixes ring_radius at " +
                                        std::to_string(drivesim::kRingRadius) + " m");
        if (n_traffic < 0) throw std::invalid_argument("n_traffic must be >= 0");
        if (frame_skip < 1) throw std::invalid_argument("frame_skip must be >= 1");
        if (step_limit < 1) throw std::invalid_argument("step_limit must be >= 1");
        if (total_steps < 0) throw std::invalid_argument("total_steps must be >= 0");
        if (eval_period < 1) throw std::invalid_argument("eval_period must be >= 1");
        if (eval_episodes < 1) throw std::invalid_argument("eval_episodes must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (replay_capacity == 0) throw std::invalid_argument("replay_capacity must be >= 1");
        if (gamma <= 0 || gamma > 1) throw std::invalid_argument("gamma must be in (0, 1]");
        if (tau <= 0 || tau > 1) throw std::invalid_argument("tau must be in (0, 1]");
    }

    /// Every effective value, for the resolved-config dump written next to
    /// the metrics. Loading the dump reproduces this config exactly.
    KvFile resolved() const {
        KvFile kv;
        kv.set("algo", algo);
        kv.set("seed", std::to_string(seed));
        kv.set("out_dir", out_dir);
        kv.set("vae_checkpoint", vae_checkpoint);
        kv.set("ring_radius", fmt(ring_radius));
        kv.set("n_traffic", std::to_string(n_traffic));
        kv.set("step_limit", std::to_string(step_limit));
        kv.set("frame_skip", std::to_string(frame_skip));
        kv.set("total_steps", std::to_string(total_steps));
        kv.set("eval_period", std::to_string(eval_period));
        kv.set("eval_episodes", std::to_string(eval_episodes));
        kv.set("warmup_steps", std::to_string(warmup_steps));
        kv.set("batch_size", std::to_string(batch_size));
        kv.set("replay_capacity", std::to_string(replay_capacity));
        kv.set("gamma", fmt(gamma));
        kv.set("tau", fmt(tau));
        kv.set("ddqn_lr", fmt(ddqn_lr));
        kv.set("target_copy_period", std::to_string(target_copy_period));
        kv.set("softmax_temperature", fmt(softmax_temperature));
        kv.set("epsilon_start", fmt(epsilon.start));
        kv.set("epsilon_end", fmt(epsilon.end));
        kv.set("epsilon_decay_steps", fmt(epsilon.decay_steps));
        kv.set("td3_policy_lr", fmt(td3_policy_lr));
        kv.set("td3_q_lr", fmt(td3_q_lr));
        kv.set("policy_delay", std::to_string(policy_delay));
        kv.set("smoothing_std", fmt(smoothing_std));
        kv.set("smoothing_clip", fmt(smoothing_clip));
        kv.set("sigma_accel", fmt(noise.delta[0]));
        kv.set("sigma_steer", fmt(noise.delta[1]));
        kv.set("sigma_horizon", fmt(noise.T));
        kv.set("sigma_episode_cap", fmt(noise.T_p));
        kv.set("sac_lr", fmt(sac_lr));
        kv.set("sac_alpha", fmt(sac_alpha));
        return kv;
    }

    drivesim::WorldConfig world_config() const {
        drivesim::WorldConfig wc;
        wc.traffic_count = n_traffic;
        wc.max_frames = step_limit * frame_skip;
        return wc;
    }

    agents::DdqnConfig ddqn_config() const {
        agents::DdqnConfig a;
        a.gamma = gamma;
        a.lr = ddqn_lr;
        a.target_copy_period = target_copy_period;
        a.temperature = softmax_temperature;
        return a;
    }

    agents::Td3Config td3_config() const {
        agents::Td3Config a;
        a.gamma = gamma;
        a.tau = tau;
        a.policy_lr = td3_policy_lr;
        a.q_lr = td3_q_lr;
        a.policy_delay = policy_delay;
        a.smoothing_std = smoothing_std;
        a.smoothing_clip = smoothing_clip;
        return a;
    }

    agents::SacConfig sac_config() const {
        agents::SacConfig a;
        a.gamma = gamma;
        a.tau = tau;
        a.lr = sac_lr;
        a.alpha = sac_alpha;
        return a;
    }

private:
    static std::string fmt(double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    }
};

}  // namespace latentdrive::harness
