// Drive the roundabout with the scripted route follower and narrate the
// episode: checkpoint flags as they flip, cumulative reward, termination
// reason. Writes the final bird view to simulator_tour.ppm.

#include <cstdio>
#include <string>

#include "latentdrive/birdview/birdview.hpp"
#include "latentdrive/drivesim/pure_pursuit.hpp"
#include "latentdrive/drivesim/world.hpp"

using namespace latentdrive;

int main() {
    drivesim::WorldConfig wc;
    wc.traffic_count = 6;
    drivesim::World world(drivesim::build_roundabout(), wc, 2024);
    drivesim::PurePursuitDriver driver;

    birdview::HistoryBuffer hist;
    hist.fill(birdview::snapshot_of(world));

    drivesim::CheckpointProgress seen;
    double total = 0.0;
    while (!world.done()) {
        auto r = world.step_frame(driver.act(world.ego(), world.map().route));
        hist.push(birdview::snapshot_of(world));
        total += r.reward.total;

        const auto& p = world.progress();
        auto flip = [&](bool now, bool& before, const char* name) {
            if (now && !before) std::printf("frame %4d  reached %s (return so far %.2f)\n",
                                            world.frames(), name, total);
            before = now;
        };
        flip(p.entrance, seen.entrance, "entrance");
        flip(p.first_exit, seen.first_exit, "first exit");
        flip(p.second_exit, seen.second_exit, "second exit");
        flip(p.desired_exit, seen.desired_exit, "desired exit");
        flip(p.goal, seen.goal, "goal");
    }

    const char* reason = "running";
    switch (world.reason()) {
        case drivesim::TermReason::kCollision: reason = "collision"; break;
        case drivesim::TermReason::kOffRoute: reason = "off route"; break;
        case drivesim::TermReason::kGoal: reason = "goal"; break;
        case drivesim::TermReason::kTimeout: reason = "timeout"; break;
        case drivesim::TermReason::kRunning: break;
    }
    std::printf("episode over after %d frames: %s, return %.2f\n", world.frames(), reason, total);

    auto frame = birdview::render(world.map(), hist);
    birdview::write_ppm("simulator_tour.ppm", birdview::kFrameRes, birdview::kFrameRes,
                        birdview::frame_bytes(frame));
    std::printf("wrote simulator_tour.ppm\n");
    return world.reason() == drivesim::TermReason::kGoal ? 0 : 1;
}
