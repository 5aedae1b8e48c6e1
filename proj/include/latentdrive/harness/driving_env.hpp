#pragma once

#include <utility>
#include <vector>

#include "latentdrive/birdview/birdview.hpp"
#include "latentdrive/drivesim/world.hpp"
#include "latentdrive/latent/vae.hpp"

namespace latentdrive::harness {

/// The RL-facing environment: the roundabout world observed through the
/// frozen encoder. step_frame advances one simulator tick and records it in
/// the render history; observe() rasterizes the bird view and returns the
/// 64-dim posterior mean. Satisfies the frame-skip wrapper's env contract.
class DrivingEnv {
public:
    DrivingEnv(const drivesim::WorldConfig& wc, latent::Vae<float> vae, uint64_t seed)
        : world_(drivesim::build_roundabout(), wc, seed), vae_(std::move(vae)) {
        history_.fill(birdview::snapshot_of(world_));
    }

    std::vector<float> reset() {
        world_.reset();
        history_.fill(birdview::snapshot_of(world_));
        return observe();
    }

    struct FrameOut {
        double reward = 0.0;
        bool done = false;
    };

    FrameOut step_frame(const drivesim::Action& a) {
        auto r = world_.step_frame(a);
        history_.push(birdview::snapshot_of(world_));
        return {r.reward.total, r.done};
    }

    std::vector<float> observe() {
        auto frame = birdview::render(world_.map(), history_);
        return latent::encode_mean(vae_, frame).z;
    }

    /// True terminal state, as opposed to the step-limit truncation; replay
    /// transitions bootstrap through truncations.
    bool terminal() const {
        return world_.done() && world_.reason() != drivesim::TermReason::kTimeout;
    }

    const drivesim::World& world() const { return world_; }
    drivesim::World& world() { return world_; }

private:
    drivesim::World world_;
    birdview::HistoryBuffer history_;
    latent::Vae<float> vae_;
};

}  // namespace latentdrive::harness
