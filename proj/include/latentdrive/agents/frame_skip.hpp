#pragma once

#include <stdexcept>
#include <utility>

namespace latentdrive::agents {

template <typename Obs>
struct SkipStep {
    Obs obs;
    double reward = 0.0;  // summed over executed frames
    bool done = false;
    int frames = 0;  // k, or fewer when the episode ends inside the window
};

/// Hold one action for k simulator frames, summing rewards, stopping early on
/// termination. Env contract: step_frame(action) -> {reward, done} advances
/// one frame (updating any per-frame state such as history buffers);
/// observe() builds the current observation.
template <typename Env, typename ActionT>
auto frame_skip_step(Env& env, const ActionT& action, int k) {
    if (k < 1) throw std::invalid_argument("frame skip must be >= 1");
    double total = 0.0;
    bool done = false;
    int frames = 0;
    for (int i = 0; i < k && !done; ++i) {
        auto r = env.step_frame(action);
        total += r.reward;
        done = r.done;
        ++frames;
    }
    using Obs = decltype(env.observe());
    return SkipStep<Obs>{env.observe(), total, done, frames};
}

}  // namespace latentdrive::agents
