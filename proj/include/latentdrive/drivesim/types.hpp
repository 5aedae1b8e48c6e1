#pragma once

#include <cmath>

namespace latentdrive::drivesim {

struct Vec2 {
    double x = 0.0, y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double cross(Vec2 o) const { return x * o.y - y * o.x; }
    double norm() const { return std::sqrt(x * x + y * y); }
    Vec2 normalized() const {
        double n = norm();
        return n > 0 ? Vec2{x / n, y / n} : Vec2{1, 0};
    }
    Vec2 rot90() const { return {-y, x}; }  // counterclockwise
};

inline Vec2 heading_vec(double heading) { return {std::cos(heading), std::sin(heading)}; }

inline double wrap_angle(double a) {
    while (a > M_PI) a -= 2 * M_PI;
    while (a < -M_PI) a += 2 * M_PI;
    return a;
}

// vehicle geometry (meters)
inline constexpr double kVehicleLength = 4.0;
inline constexpr double kVehicleWidth = 1.8;
inline constexpr double kWheelbase = 2.5;

// control limits
inline constexpr double kAccelMax = 3.0;    // m/s^2, symmetric
inline constexpr double kSteerMax = 0.5;    // rad
inline constexpr double kSpeedMax = 20.0;   // m/s
inline constexpr double kFrameDt = 0.05;    // s per simulation frame

struct VehicleState {
    Vec2 pos;             // geometric center
    double heading = 0.0; // rad, world frame
    double speed = 0.0;   // m/s, forward only
};

struct Action {
    double accel = 0.0;  // [-3, 3]
    double steer = 0.0;  // [-0.5, 0.5]
};

inline Action clamp_action(Action a) {
    a.accel = std::fmin(std::fmax(a.accel, -kAccelMax), kAccelMax);
    a.steer = std::fmin(std::fmax(a.steer, -kSteerMax), kSteerMax);
    return a;
}

struct RewardBreakdown {
    double speed = 0.0;      // forward progress incentive, capped at 5 m/s
    double steer = 0.0;      // quadratic steering penalty
    double collision = 0.0;  // -10 on contact
    double off_lane = 0.0;   // -1 beyond 2 m from the route
    double constant = 0.0;   // -0.1 time penalty
    double total = 0.0;
};

/// Per-frame reward. speed/steer are the post-integration speed and the
/// clamped steering command; deviation is distance from the route centerline.
inline RewardBreakdown compute_reward(double speed, double steer, bool collision, double deviation) {
    RewardBreakdown r;
    r.speed = speed <= 5.0 ? speed : 10.0 - speed;
    r.steer = -0.5 * steer * steer;
    r.collision = collision ? -10.0 : 0.0;
    r.off_lane = deviation > 2.0 ? -1.0 : 0.0;
    r.constant = -0.1;
    r.total = r.speed + r.steer + r.collision + r.off_lane + r.constant;
    return r;
}

/// Ordered milestones along the fixed route. A later flag can only be set
/// once every earlier one is, so per-episode outcomes are monotone.
struct CheckpointProgress {
    bool entrance = false;      // merged onto the ring
    bool first_exit = false;    // drove past the first (east) exit
    bool second_exit = false;   // drove past the second (north) exit
    bool desired_exit = false;  // took the third (west) exit
    bool goal = false;          // reached the end of the exit road

    int count() const {
        return static_cast<int>(entrance) + static_cast<int>(first_exit) +
               static_cast<int>(second_exit) + static_cast<int>(desired_exit) +
               static_cast<int>(goal);
    }
};

enum class TermReason { kRunning, kCollision, kOffRoute, kGoal, kTimeout };

inline const char* term_reason_name(TermReason r) {
    switch (r) {
        case TermReason::kRunning: return "running";
        case TermReason::kCollision: return "collision";
        case TermReason::kOffRoute: return "off_route";
        case TermReason::kGoal: return "goal";
        case TermReason::kTimeout: return "timeout";
    }
    return "?";
}

}  // namespace latentdrive::drivesim
