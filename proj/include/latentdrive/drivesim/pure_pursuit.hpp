#pragma once

#include <algorithm>
#include <cmath>

#include "latentdrive/drivesim/roadmap.hpp"
#include "latentdrive/drivesim/types.hpp"

namespace latentdrive::drivesim {

/// Scripted route follower: pure-pursuit steering toward a speed-scaled
/// lookahead point plus proportional speed control. Used to gather diverse
/// camera frames and as a sanity-check driver; it does not avoid traffic.
struct PurePursuitDriver {
    double target_speed = 4.0;
    double lookahead_gain = 0.8;   // seconds of travel ahead
    double lookahead_min = 3.0;
    double lookahead_max = 8.0;
    double speed_kp = 2.0;

    Action act(const VehicleState& v, const Polyline& route) const {
        double s = route.project(v.pos);
        double ld = std::clamp(lookahead_gain * std::max(v.speed, 1.0), lookahead_min, lookahead_max);
        Vec2 target = route.point_at(std::min(s + ld, route.length()));

        Vec2 to_target = target - v.pos;
        double dist = std::max(to_target.norm(), 1e-6);
        double alpha = wrap_angle(std::atan2(to_target.y, to_target.x) - v.heading);
        double curvature = 2.0 * std::sin(alpha) / dist;

        Action a;
        a.steer = std::clamp(std::atan(kWheelbase * curvature), -kSteerMax, kSteerMax);
        a.accel = std::clamp(speed_kp * (target_speed - v.speed), -kAccelMax, kAccelMax);
        return a;
    }
};

}  // namespace latentdrive::drivesim
