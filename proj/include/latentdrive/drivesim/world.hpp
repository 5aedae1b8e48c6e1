#pragma once

#include <array>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "latentdrive/drivesim/roadmap.hpp"
#include "latentdrive/drivesim/types.hpp"
#include "latentdrive/random.hpp"

namespace latentdrive::drivesim {

/// Oriented bounding box of a vehicle pose.
inline std::array<Vec2, 4> vehicle_corners(const VehicleState& v) {
    Vec2 fwd = heading_vec(v.heading);
    Vec2 left = fwd.rot90();
    Vec2 dl = fwd * (kVehicleLength / 2), dw = left * (kVehicleWidth / 2);
    return {v.pos + dl + dw, v.pos + dl - dw, v.pos - dl - dw, v.pos - dl + dw};
}

/// Separating-axis overlap test for two vehicle rectangles.
inline bool vehicles_collide(const VehicleState& a, const VehicleState& b) {
    auto ca = vehicle_corners(a);
    auto cb = vehicle_corners(b);
    std::array<Vec2, 4> axes = {heading_vec(a.heading), heading_vec(a.heading).rot90(),
                                heading_vec(b.heading), heading_vec(b.heading).rot90()};
    for (const Vec2& ax : axes) {
        double amin = std::numeric_limits<double>::max(), amax = -amin;
        double bmin = amin, bmax = -amin;
        for (const Vec2& p : ca) {
            double d = p.dot(ax);
            amin = std::min(amin, d);
            amax = std::max(amax, d);
        }
        for (const Vec2& p : cb) {
            double d = p.dot(ax);
            bmin = std::min(bmin, d);
            bmax = std::max(bmax, d);
        }
        if (amax < bmin || bmax < amin) return false;
    }
    return true;
}

/// Kinematic bicycle step: rear-axle model, forward motion only.
inline VehicleState step_bicycle(VehicleState v, Action a, double dt) {
    a = clamp_action(a);
    v.speed = std::clamp(v.speed + a.accel * dt, 0.0, kSpeedMax);
    v.heading = wrap_angle(v.heading + v.speed * std::tan(a.steer) / kWheelbase * dt);
    Vec2 fwd = heading_vec(v.heading);
    v.pos = v.pos + fwd * (v.speed * dt);
    return v;
}

struct TrafficCar {
    VehicleState st;
    Polyline path;
    double s = 0.0;  // arc-length position along path
};

struct WorldConfig {
    int traffic_count = 8;
    double cruise_speed = 5.0;       // traffic target speed, m/s
    double gap_slow = 8.0;           // begin slowing when the gap shrinks below
    double gap_stop = 2.0;           // full stop at this gap
    double spawn_clearance = 8.0;    // min spacing between spawned vehicles
    double ego_clearance = 15.0;     // traffic never (re)spawns this close to ego
    double spawn_jitter_pos = 0.5;   // ego lateral jitter at reset, m
    double spawn_jitter_heading = 0.05;  // rad
    double off_route_limit = 5.0;    // episode ends beyond this deviation
    int max_frames = 4000;           // hard safety cap per episode
};

struct FrameResult {
    RewardBreakdown reward;
    bool done = false;
    TermReason reason = TermReason::kRunning;
    double deviation = 0.0;
    bool collision = false;
};

struct TrajectorySample {
    int frame = 0;
    VehicleState ego;
    double reward = 0.0;
    double deviation = 0.0;
};

/// The scenario: one ego vehicle on a fixed route through a roundabout with
/// scripted traffic. step_frame advances a single dt tick; callers hold an
/// action across several frames for coarser control.
class World {
public:
    World(RoadMap map, WorldConfig cfg, uint64_t seed)
        : map_(std::move(map)), cfg_(cfg), rng_(seed) {
        reset();
    }

    void reset() {
        frames_ = 0;
        done_ = false;
        reason_ = TermReason::kRunning;
        progress_ = CheckpointProgress{};
        trajectory_.clear();

        const Polyline& route = map_.route;
        double s0 = 5.0;  // a few meters in from the route start
        ego_.pos = route.point_at(s0);
        ego_.heading = route.heading_at(s0);
        ego_.speed = 0.0;
        // lateral + heading jitter so episodes don't replay one trajectory
        Vec2 lat = heading_vec(ego_.heading).rot90();
        ego_.pos = ego_.pos + lat * rng_.uniform(-cfg_.spawn_jitter_pos, cfg_.spawn_jitter_pos);
        ego_.heading = wrap_angle(ego_.heading +
                                  rng_.uniform(-cfg_.spawn_jitter_heading, cfg_.spawn_jitter_heading));

        traffic_.clear();
        int attempts = 0;
        while (static_cast<int>(traffic_.size()) < cfg_.traffic_count && attempts < 200) {
            ++attempts;
            TrafficCar car;
            car.path = make_traffic_route(map_, rng_);
            car.s = rng_.uniform(0.0, car.path.length() * 0.6);
            car.st.pos = car.path.point_at(car.s);
            car.st.heading = car.path.heading_at(car.s);
            car.st.speed = cfg_.cruise_speed * rng_.uniform(0.5, 1.0);
            if ((car.st.pos - ego_.pos).norm() < cfg_.ego_clearance) continue;
            bool crowded = false;
            for (const auto& other : traffic_)
                if ((car.st.pos - other.st.pos).norm() < cfg_.spawn_clearance) crowded = true;
            if (crowded) continue;
            traffic_.push_back(std::move(car));
        }
    }

    /// One dt tick with the given (clamped) controls.
    FrameResult step_frame(Action a) {
        if (done_) throw std::runtime_error("step_frame called on a finished episode; reset first");
        a = clamp_action(a);
        ego_ = step_bicycle(ego_, a, kFrameDt);
        step_traffic();
        ++frames_;

        FrameResult out;
        out.collision = false;
        for (const auto& car : traffic_)
            if (vehicles_collide(ego_, car.st)) out.collision = true;
        out.deviation = map_.route.distance_to(ego_.pos);
        update_progress();
        out.reward = compute_reward(ego_.speed, a.steer, out.collision, out.deviation);

        if (out.collision) {
            done_ = true;
            reason_ = TermReason::kCollision;
        } else if (out.deviation > cfg_.off_route_limit) {
            done_ = true;
            reason_ = TermReason::kOffRoute;
        } else if (progress_.goal) {
            done_ = true;
            reason_ = TermReason::kGoal;
        } else if (frames_ >= cfg_.max_frames) {
            done_ = true;
            reason_ = TermReason::kTimeout;
        }
        out.done = done_;
        out.reason = reason_;
        trajectory_.push_back({frames_, ego_, out.reward.total, out.deviation});
        return out;
    }

    const VehicleState& ego() const { return ego_; }
    VehicleState& mutable_ego() { return ego_; }  // tests position the ego directly
    const std::vector<TrafficCar>& traffic() const { return traffic_; }
    std::vector<TrafficCar>& mutable_traffic() { return traffic_; }
    const RoadMap& map() const { return map_; }
    const CheckpointProgress& progress() const { return progress_; }
    bool done() const { return done_; }
    TermReason reason() const { return reason_; }
    int frames() const { return frames_; }
    const WorldConfig& config() const { return cfg_; }

    void dump_trajectory(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw std::runtime_error("cannot open trajectory file: " + path);
        os << "frame,x,y,heading,speed,reward,deviation\n";
        for (const auto& t : trajectory_)
            os << t.frame << ',' << t.ego.pos.x << ',' << t.ego.pos.y << ',' << t.ego.heading << ','
               << t.ego.speed << ',' << t.reward << ',' << t.deviation << '\n';
    }

private:
    void step_traffic() {
        for (auto& car : traffic_) {
            double gap = std::numeric_limits<double>::max();
            Vec2 fwd = heading_vec(car.st.heading);
            auto consider = [&](const VehicleState& other) {
                Vec2 rel = other.pos - car.st.pos;
                double lon = rel.dot(fwd);
                double lat = rel.cross(fwd);
                if (lon > 0 && lon < cfg_.gap_slow + kVehicleLength && std::abs(lat) < 2.2)
                    gap = std::min(gap, lon - kVehicleLength);
            };
            for (const auto& other : traffic_)
                if (&other != &car) consider(other.st);
            consider(ego_);

            double v_cmd = cfg_.cruise_speed;
            if (gap < cfg_.gap_slow)
                v_cmd *= std::clamp((gap - cfg_.gap_stop) / (cfg_.gap_slow - cfg_.gap_stop), 0.0, 1.0);
            double dv = std::clamp(v_cmd - car.st.speed, -kAccelMax * kFrameDt, kAccelMax * kFrameDt);
            car.st.speed = std::max(0.0, car.st.speed + dv);
            car.s += car.st.speed * kFrameDt;

            if (car.s >= car.path.length()) {
                respawn(car);
                continue;
            }
            car.st.pos = car.path.point_at(car.s);
            car.st.heading = car.path.heading_at(car.s);
        }
    }

    void respawn(TrafficCar& car) {
        for (int tries = 0; tries < 20; ++tries) {
            Polyline path = make_traffic_route(map_, rng_);
            double s = rng_.uniform(0.0, path.length() * 0.3);
            Vec2 pos = path.point_at(s);
            if ((pos - ego_.pos).norm() < cfg_.ego_clearance) continue;
            bool crowded = false;
            for (const auto& other : traffic_)
                if (&other != &car && (pos - other.st.pos).norm() < cfg_.spawn_clearance) crowded = true;
            if (crowded) continue;
            car.path = std::move(path);
            car.s = s;
            car.st.pos = pos;
            car.st.heading = car.path.heading_at(s);
            car.st.speed = cfg_.cruise_speed * 0.5;
            return;
        }
        car.s = car.path.length();  // parked at path end until a retry succeeds
        car.st.speed = 0.0;
    }

    void update_progress() {
        const auto& cps = map_.checkpoints;
        bool* flags[5] = {&progress_.entrance, &progress_.first_exit, &progress_.second_exit,
                          &progress_.desired_exit, &progress_.goal};
        int next = progress_.count();
        if (next < 5 && (ego_.pos - cps[static_cast<size_t>(next)]).norm() <= kCheckpointRadius)
            *flags[next] = true;
    }

    RoadMap map_;
    WorldConfig cfg_;
    RandomStream rng_;
    VehicleState ego_;
    std::vector<TrafficCar> traffic_;
    CheckpointProgress progress_;
    std::vector<TrajectorySample> trajectory_;
    int frames_ = 0;
    bool done_ = false;
    TermReason reason_ = TermReason::kRunning;
};

}  // namespace latentdrive::drivesim
