#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "latentdrive/agents/action_space.hpp"
#include "latentdrive/agents/ddqn.hpp"
#include "latentdrive/agents/frame_skip.hpp"
#include "latentdrive/agents/replay.hpp"
#include "latentdrive/agents/sac.hpp"
#include "latentdrive/agents/td3.hpp"
#include "latentdrive/harness/config.hpp"
#include "latentdrive/harness/driving_env.hpp"
#include "latentdrive/harness/evaluator.hpp"
#include "latentdrive/harness/metrics.hpp"
#include "latentdrive/harness/seeding.hpp"
#include "latentdrive/latent/vae.hpp"
#include "latentdrive/ndgrad/serialize.hpp"

namespace latentdrive::harness {

struct TrainArtifacts {
    std::string checkpoint_path;
    std::string metrics_path;
    std::vector<EvalReport> evals;
    long episodes = 0;
    long steps = 0;
};

/// Load a VAE whose parameters live under the "vae." prefix of a checkpoint
/// (both pure VAE checkpoints and combined agent+VAE checkpoints work).
inline latent::Vae<float> load_vae(const std::string& path) {
    RandomStream scratch(0);  // shapes only; values come from the file
    auto vae = latent::Vae<float>::init(scratch);
    auto st = vae.state();
    ndgrad::load_params_subset(path, st);
    return vae;
}

namespace detail {

/// Hooks that differ between the three algorithms. ActionT is the stored
/// replay form: a discrete index or a normalized action vector.
template <typename ActionT>
struct AlgoHooks {
    std::function<ActionT(const std::vector<float>& obs, long t, long episode_steps)> explore;
    std::function<drivesim::Action(const ActionT&)> to_physical;
    std::function<void(const std::vector<agents::Transition<ActionT>>&)> update;
    std::function<drivesim::Action(const std::vector<float>&)> eval_policy;
    std::function<void(const std::string& path)> save;
};

/// The interact -> store -> update loop shared by every algorithm: frame-skip
/// stepping, warmup before updates, periodic evaluation with a checkpoint
/// dump, and one metrics row per finished episode.
template <typename ActionT>
TrainArtifacts run_loop(const RunConfig& cfg, DrivingEnv& env, DrivingEnv& eval_env,
                        const AlgoHooks<ActionT>& hooks, SeedHub& hub,
                        std::ostream* log = nullptr) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const std::string ckpt = (fs::path(cfg.out_dir) / "checkpoint.ckpt").string();
    TrainArtifacts out;
    out.checkpoint_path = ckpt;
    out.metrics_path = (fs::path(cfg.out_dir) / "metrics.csv").string();

    cfg.resolved().save((fs::path(cfg.out_dir) / "config.cfg").string());
    MetricsWriter metrics(out.metrics_path);
    hooks.save(ckpt);  // initial checkpoint: a zero-step run still evaluates/replays

    agents::ReplayBuffer<ActionT> replay(cfg.replay_capacity);
    auto replay_rng = hub.stream("replay");
    EvalReport last_eval;

    auto obs = env.reset();
    double ep_return = 0.0;
    long ep_steps = 0;

    for (long t = 1; t <= cfg.total_steps; ++t) {
        ActionT action = hooks.explore(obs, t - 1, ep_steps);
        auto step = agents::frame_skip_step(env, hooks.to_physical(action), cfg.frame_skip);

        agents::Transition<ActionT> tr;
        tr.state = std::move(obs);
        tr.action = action;
        tr.reward = static_cast<float>(step.reward);
        tr.next_state = step.obs;
        tr.done = env.terminal();  // step-limit truncation still bootstraps
        replay.push(std::move(tr));

        obs = std::move(step.obs);
        ep_return += step.reward;
        ++ep_steps;

        if (t > cfg.warmup_steps && replay.size() >= static_cast<size_t>(cfg.batch_size))
            hooks.update(replay.sample(static_cast<size_t>(cfg.batch_size), replay_rng));

        if (step.done) {
            ++out.episodes;
            metrics.append(t, out.episodes, ep_return, last_eval);
            obs = env.reset();
            ep_return = 0.0;
            ep_steps = 0;
        }

        if (t % cfg.eval_period == 0 || t == cfg.total_steps) {
            last_eval = evaluate(eval_env, hooks.eval_policy, cfg.eval_episodes, cfg.frame_skip);
            out.evals.push_back(last_eval);
            hooks.save(ckpt);
            if (log)
                (*log) << "step " << t << " episodes " << out.episodes << " eval_return "
                       << last_eval.avg_return << " entrance " << last_eval.rate_entrance << " first "
                       << last_eval.rate_first << " second " << last_eval.rate_second << " desired "
                       << last_eval.rate_desired << " goal " << last_eval.rate_goal << std::endl;
        }
    }
    out.steps = cfg.total_steps;
    return out;
}

inline std::array<float, 2> as_pair(const std::vector<float>& a) {
    if (a.size() != 2) throw std::logic_error("expected a 2-dim action");
    return {a[0], a[1]};
}

}  // namespace detail

/// Combined checkpoint: agent networks plus the frozen encoder, so
/// evaluation needs only this one file.
template <typename Agent>
void save_checkpoint(const std::string& path, Agent& agent, latent::Vae<float>& vae) {
    auto st = agent.state();
    for (auto& e : vae.state()) st.push_back(e);
    ndgrad::save_params(path, st);
}

inline TrainArtifacts train(const RunConfig& cfg, std::ostream* log = nullptr) {
    cfg.validate();
    if (cfg.vae_checkpoint.empty())
        throw std::invalid_argument("training needs vae_checkpoint (frozen observation encoder)");

    SeedHub hub(cfg.seed);
    auto vae = load_vae(cfg.vae_checkpoint);
    DrivingEnv env(cfg.world_config(), vae, hub.derive("env"));
    DrivingEnv eval_env(cfg.world_config(), vae, hub.derive("eval_env"));

    auto init_rng = hub.stream("init");
    auto explore_rng = hub.stream("explore");
    const int state_dim = latent::kLatentDim;

    if (cfg.algo == "ddqn") {
        agents::DdqnAgent<float> agent(state_dim, agents::kDiscreteActionCount, cfg.ddqn_config(),
                                       init_rng);
        detail::AlgoHooks<int> hooks;
        hooks.explore = [&](const std::vector<float>& o, long t, long) {
            return agent.act_explore(o, cfg.epsilon.at(static_cast<double>(t)), explore_rng);
        };
        hooks.to_physical = [](const int& a) { return agents::discrete_action(a); };
        hooks.update = [&](const std::vector<agents::Transition<int>>& batch) { agent.update(batch); };
        hooks.eval_policy = [&](const std::vector<float>& o) {
            return agents::discrete_action(agent.act_greedy(o));
        };
        hooks.save = [&](const std::string& p) { save_checkpoint(p, agent, vae); };
        return detail::run_loop(cfg, env, eval_env, hooks, hub, log);
    }

    if (cfg.algo == "td3") {
        agents::Td3Agent<float> agent(state_dim, 2, cfg.td3_config(), init_rng);
        detail::AlgoHooks<std::vector<float>> hooks;
        hooks.explore = [&](const std::vector<float>& o, long t, long ep_steps) {
            return agent.act_explore(o, cfg.noise, static_cast<double>(t),
                                     static_cast<double>(ep_steps), explore_rng);
        };
        hooks.to_physical = [](const std::vector<float>& a) {
            return agents::continuous_action(detail::as_pair(a));
        };
        hooks.update = [&](const std::vector<agents::Transition<std::vector<float>>>& batch) {
            agent.update(batch, explore_rng);
        };
        hooks.eval_policy = [&](const std::vector<float>& o) {
            return agents::continuous_action(detail::as_pair(agent.act(o)));
        };
        hooks.save = [&](const std::string& p) { save_checkpoint(p, agent, vae); };
        return detail::run_loop(cfg, env, eval_env, hooks, hub, log);
    }

    agents::SacAgent<float> agent(state_dim, 2, cfg.sac_config(), init_rng);
    detail::AlgoHooks<std::vector<float>> hooks;
    hooks.explore = [&](const std::vector<float>& o, long, long) {
        return agent.act_sample(o, explore_rng);
    };
    hooks.to_physical = [](const std::vector<float>& a) {
        return agents::continuous_action(detail::as_pair(a));
    };
    hooks.update = [&](const std::vector<agents::Transition<std::vector<float>>>& batch) {
        agent.update(batch, explore_rng);
    };
    hooks.eval_policy = [&](const std::vector<float>& o) {
        return agents::continuous_action(detail::as_pair(agent.act_mean(o)));
    };
    hooks.save = [&](const std::string& p) { save_checkpoint(p, agent, vae); };
    return detail::run_loop(cfg, env, eval_env, hooks, hub, log);
}

/// Rebuild the eval-time policy from a combined checkpoint. The algorithm is
/// identified by the network names stored in the file.
inline std::string checkpoint_algo(const std::vector<std::string>& names) {
    for (const auto& n : names) {
        if (n.rfind("online.", 0) == 0) return "ddqn";
        if (n.rfind("policy_target.", 0) == 0) return "td3";
        if (n.rfind("value_target.", 0) == 0) return "sac";
    }
    throw std::runtime_error("checkpoint holds no recognizable agent networks");
}

inline EvalReport evaluate_checkpoint(const std::string& path, const RunConfig& cfg, int episodes,
                                      uint64_t seed) {
    SeedHub hub(seed);
    auto vae = load_vae(path);
    DrivingEnv env(cfg.world_config(), vae, hub.derive("eval_env"));
    auto init_rng = hub.stream("init");
    const int state_dim = latent::kLatentDim;
    const std::string algo = checkpoint_algo(ndgrad::param_names(path));

    if (algo == "ddqn") {
        agents::DdqnAgent<float> agent(state_dim, agents::kDiscreteActionCount, cfg.ddqn_config(),
                                       init_rng);
        auto st = agent.state();
        ndgrad::load_params_subset(path, st);
        return evaluate(
            env, [&](const std::vector<float>& o) { return agents::discrete_action(agent.act_greedy(o)); },
            episodes, cfg.frame_skip);
    }
    if (algo == "td3") {
        agents::Td3Agent<float> agent(state_dim, 2, cfg.td3_config(), init_rng);
        auto st = agent.state();
        ndgrad::load_params_subset(path, st);
        return evaluate(
            env,
            [&](const std::vector<float>& o) {
                return agents::continuous_action(detail::as_pair(agent.act(o)));
            },
            episodes, cfg.frame_skip);
    }
    agents::SacAgent<float> agent(state_dim, 2, cfg.sac_config(), init_rng);
    auto st = agent.state();
    ndgrad::load_params_subset(path, st);
    return evaluate(
        env,
        [&](const std::vector<float>& o) {
            return agents::continuous_action(detail::as_pair(agent.act_mean(o)));
        },
        episodes, cfg.frame_skip);
}

}  // namespace latentdrive::harness
