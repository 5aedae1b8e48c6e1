#pragma once

#include <vector>

#include "latentdrive/birdview/birdview.hpp"
#include "latentdrive/drivesim/pure_pursuit.hpp"
#include "latentdrive/drivesim/world.hpp"
#include "latentdrive/random.hpp"

namespace latentdrive::latent {

struct CollectConfig {
    int frames = 1000;       // dataset frames to gather (one per control step)
    uint64_t seed = 1;
    int frame_skip = 4;      // sim frames per control step
    double accel_noise = 1.0;    // stddev added to the scripted accel command
    double steer_noise = 0.15;   // stddev added to the scripted steer command
};

/// Drives the roundabout with a noise-perturbed route follower and records
/// one camera frame per control step. The noise pushes the car off the lane
/// center so the dataset covers more of the scene than clean driving would;
/// episodes reset on any termination and collection continues.
inline std::vector<birdview::BirdViewFrame> collect_frames(const CollectConfig& cc) {
    drivesim::World world(drivesim::build_roundabout(), drivesim::WorldConfig{}, cc.seed);
    RandomStream rng(cc.seed);
    auto noise = rng.substream("collect.action_noise");
    drivesim::PurePursuitDriver driver;

    birdview::HistoryBuffer hist;
    hist.fill(birdview::snapshot_of(world));

    std::vector<birdview::BirdViewFrame> out;
    out.reserve(static_cast<size_t>(cc.frames));
    while (static_cast<int>(out.size()) < cc.frames) {
        drivesim::Action a = driver.act(world.ego(), world.map().route);
        a.accel += noise.normal(0.0, cc.accel_noise);
        a.steer += noise.normal(0.0, cc.steer_noise);

        bool finished = false;
        for (int f = 0; f < cc.frame_skip && !finished; ++f) {
            finished = world.step_frame(a).done;
            hist.push(birdview::snapshot_of(world));
        }
        out.push_back(birdview::render(world.map(), hist));

        if (finished) {
            world.reset();
            hist.fill(birdview::snapshot_of(world));
        }
    }
    return out;
}

}  // namespace latentdrive::latent
