#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "latentdrive/drivesim/types.hpp"
#include "latentdrive/random.hpp"

namespace latentdrive::drivesim {

/// Piecewise-linear path with arc-length lookup.
struct Polyline {
    std::vector<Vec2> pts;
    std::vector<double> cum;  // cum[i] = arc length from pts[0] to pts[i]

    void build() {
        if (pts.size() < 2) throw std::invalid_argument("polyline needs at least 2 points");
        cum.resize(pts.size());
        cum[0] = 0.0;
        for (size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
    }

    double length() const { return cum.back(); }

    Vec2 point_at(double s) const {
        if (s <= 0) return pts.front();
        if (s >= length()) return pts.back();
        size_t i = static_cast<size_t>(std::upper_bound(cum.begin(), cum.end(), s) - cum.begin());
        double seg = cum[i] - cum[i - 1];
        double t = seg > 0 ? (s - cum[i - 1]) / seg : 0.0;
        return pts[i - 1] + (pts[i] - pts[i - 1]) * t;
    }

    double heading_at(double s) const {
        size_t i;
        if (s <= 0)
            i = 1;
        else if (s >= length())
            i = pts.size() - 1;
        else
            i = static_cast<size_t>(std::upper_bound(cum.begin(), cum.end(), s) - cum.begin());
        Vec2 d = pts[i] - pts[i - 1];
        return std::atan2(d.y, d.x);
    }

    /// Distance from p to the nearest point of the path.
    double distance_to(Vec2 p) const {
        double best = std::numeric_limits<double>::max();
        for (size_t i = 1; i < pts.size(); ++i)
            best = std::min(best, seg_distance(pts[i - 1], pts[i], p));
        return best;
    }

    /// Arc length of the point on the path closest to p.
    double project(Vec2 p) const {
        double best = std::numeric_limits<double>::max();
        double s_best = 0.0;
        for (size_t i = 1; i < pts.size(); ++i) {
            Vec2 a = pts[i - 1], d = pts[i] - a;
            double len2 = d.dot(d);
            double t = len2 > 0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
            double dist = (p - (a + d * t)).norm();
            if (dist < best) {
                best = dist;
                s_best = cum[i - 1] + std::sqrt(len2) * t;
            }
        }
        return s_best;
    }

private:
    static double seg_distance(Vec2 a, Vec2 b, Vec2 p) {
        Vec2 d = b - a;
        double len2 = d.dot(d);
        double t = len2 > 0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
        return (p - (a + d * t)).norm();
    }
};

// roundabout geometry (meters)
inline constexpr double kRingRadius = 20.0;       // ring lane centerline
inline constexpr double kRoadWidth = 6.0;         // full width, both road types
inline constexpr double kLaneOffset = 1.5;        // lane centerline from road axis
inline constexpr double kArmReach = 50.0;         // arm end, measured from center
inline constexpr double kCheckpointRadius = 5.0;  // trigger disc
inline constexpr int kArmCount = 4;               // +y, +x, -y, -x

/// Junction: a lane at lateral offset kLaneOffset meets the ring circle where
/// sqrt(t^2 + offset^2) = kRingRadius.
inline double junction_reach() {
    return std::sqrt(kRingRadius * kRingRadius - kLaneOffset * kLaneOffset);
}

/// Four-arm roundabout with counterclockwise circulation and a fixed task
/// route: enter from the south arm, pass the east and north exits, leave west.
struct RoadMap {
    std::array<Vec2, kArmCount> arm_dirs{Vec2{0, 1}, Vec2{1, 0}, Vec2{0, -1}, Vec2{-1, 0}};
    std::array<Polyline, kArmCount> inbound;   // arm end -> ring
    std::array<Polyline, kArmCount> outbound;  // ring -> arm end
    std::array<double, kArmCount> entry_angle{};  // ring angle where inbound lane merges
    std::array<double, kArmCount> exit_angle{};   // ring angle where outbound lane splits
    Polyline route;                               // the ego task route
    std::array<Vec2, 5> checkpoints{};            // entrance, first, second, desired, goal

    bool drivable(Vec2 p) const {
        double rho = p.norm();
        double inner = kRingRadius - kRoadWidth / 2, outer = kRingRadius + kRoadWidth / 2;
        if (rho >= inner && rho <= outer) return true;
        for (const Vec2& d : arm_dirs) {
            double lon = p.dot(d);
            double lat = p.cross(d);
            if (std::abs(lat) <= kRoadWidth / 2 && lon >= inner && lon <= kArmReach) return true;
        }
        return false;
    }
};

namespace detail {

inline void append_arc(std::vector<Vec2>& pts, double theta0, double theta1, double step_len) {
    // CCW arc on the ring circle, theta1 > theta0
    double dstep = step_len / kRingRadius;
    int n = std::max(2, static_cast<int>(std::ceil((theta1 - theta0) / dstep)));
    for (int i = 0; i <= n; ++i) {
        double th = theta0 + (theta1 - theta0) * i / n;
        pts.push_back({kRingRadius * std::cos(th), kRingRadius * std::sin(th)});
    }
}

inline void append_line(std::vector<Vec2>& pts, Vec2 a, Vec2 b, double step_len) {
    double len = (b - a).norm();
    int n = std::max(1, static_cast<int>(std::ceil(len / step_len)));
    for (int i = 0; i <= n; ++i) pts.push_back(a + (b - a) * (static_cast<double>(i) / n));
}

inline std::vector<Vec2> dedup(std::vector<Vec2> pts) {
    std::vector<Vec2> out;
    for (const auto& p : pts)
        if (out.empty() || (p - out.back()).norm() > 1e-9) out.push_back(p);
    return out;
}

}  // namespace detail

inline RoadMap build_roundabout() {
    RoadMap m;
    const double tj = junction_reach();
    const double step = 1.0;

    for (int k = 0; k < kArmCount; ++k) {
        Vec2 d = m.arm_dirs[static_cast<size_t>(k)];
        Vec2 left = d.rot90();
        // traffic drives on the right: inbound (toward ring) sits left of the
        // outward arm axis, outbound sits right of it
        Vec2 in_off = left * kLaneOffset;
        Vec2 out_off = left * -kLaneOffset;

        std::vector<Vec2> in_pts, out_pts;
        detail::append_line(in_pts, d * kArmReach + in_off, d * tj + in_off, step);
        m.inbound[static_cast<size_t>(k)].pts = std::move(in_pts);
        m.inbound[static_cast<size_t>(k)].build();
        detail::append_line(out_pts, d * tj + out_off, d * kArmReach + out_off, step);
        m.outbound[static_cast<size_t>(k)].pts = std::move(out_pts);
        m.outbound[static_cast<size_t>(k)].build();

        Vec2 entry = d * tj + in_off;
        Vec2 exit = d * tj + out_off;
        m.entry_angle[static_cast<size_t>(k)] = std::atan2(entry.y, entry.x);
        m.exit_angle[static_cast<size_t>(k)] = std::atan2(exit.y, exit.x);
    }

    // task route: south arm in, counterclockwise ring, west arm out
    const int south = 2, west = 3;
    double th_in = m.entry_angle[south];
    double th_out = m.exit_angle[west];
    while (th_out <= th_in) th_out += 2 * M_PI;

    std::vector<Vec2> pts;
    Vec2 south_in_off = m.arm_dirs[south].rot90() * kLaneOffset;
    detail::append_line(pts, m.arm_dirs[south] * (kArmReach - 5.0) + south_in_off,
                        m.arm_dirs[south] * junction_reach() + south_in_off, step);
    detail::append_arc(pts, th_in, th_out, step);
    Vec2 west_out_off = m.arm_dirs[west].rot90() * -kLaneOffset;
    detail::append_line(pts, m.arm_dirs[west] * junction_reach() + west_out_off,
                        m.arm_dirs[west] * (kArmReach - 5.0) + west_out_off, step);
    m.route.pts = detail::dedup(std::move(pts));
    m.route.build();

    m.checkpoints[0] = m.arm_dirs[south] * junction_reach() + south_in_off;  // entrance
    m.checkpoints[1] = {kRingRadius, 0.0};                                   // east exit
    m.checkpoints[2] = {0.0, kRingRadius};                                   // north exit
    m.checkpoints[3] = m.arm_dirs[west] * junction_reach() + west_out_off;   // desired exit
    m.checkpoints[4] = m.route.pts.back();                                   // goal
    return m;
}

/// Random traffic itinerary: optional inbound approach, a counterclockwise
/// stint on the ring, exit onto a random outbound arm.
inline Polyline make_traffic_route(const RoadMap& m, RandomStream& rng) {
    const double step = 1.0;
    std::vector<Vec2> pts;

    double theta;
    if (rng.uniform() < 0.5) {
        int arm = static_cast<int>(rng.uniform_int(0, kArmCount - 1));
        pts.insert(pts.end(), m.inbound[static_cast<size_t>(arm)].pts.begin(),
                   m.inbound[static_cast<size_t>(arm)].pts.end());
        theta = m.entry_angle[static_cast<size_t>(arm)];
    } else {
        theta = rng.uniform(0.0, 2 * M_PI);
        pts.push_back({kRingRadius * std::cos(theta), kRingRadius * std::sin(theta)});
    }
    const double start_theta = theta;  // unwrapped; hops only ever increase theta

    int exit_arm = -1;
    double exit_theta = 0.0;
    for (int hops = 0; hops < 8 && exit_arm < 0; ++hops) {
        // nearest exit angle strictly ahead, counterclockwise
        int best = -1;
        double best_th = 0.0;
        for (int k = 0; k < kArmCount; ++k) {
            double th = m.exit_angle[static_cast<size_t>(k)];
            while (th <= theta + 1e-6) th += 2 * M_PI;
            if (best < 0 || th < best_th) {
                best = k;
                best_th = th;
            }
        }
        if (hops == 7 || rng.uniform() < 0.4) {
            exit_arm = best;
            exit_theta = best_th;
        } else {
            theta = best_th;  // roll past this junction
        }
    }

    std::vector<Vec2> arc;
    detail::append_arc(arc, start_theta, exit_theta, step);
    pts.insert(pts.end(), arc.begin(), arc.end());

    const Polyline& out = m.outbound[static_cast<size_t>(exit_arm)];
    pts.insert(pts.end(), out.pts.begin(), out.pts.end());

    Polyline p;
    p.pts = detail::dedup(std::move(pts));
    p.build();
    return p;
}

}  // namespace latentdrive::drivesim
