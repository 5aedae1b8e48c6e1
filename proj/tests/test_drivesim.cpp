// Simulator checks: reward arithmetic, bicycle kinematics against a
// fine-step integrator, SAT collision against an exact polygon oracle, road
// geometry invariants, traffic behavior, episode lifecycle.

#include <catch2/catch_amalgamated.hpp>

#include "latentdrive/drivesim/pure_pursuit.hpp"
#include "latentdrive/drivesim/roadmap.hpp"
#include "latentdrive/drivesim/types.hpp"
#include "latentdrive/drivesim/world.hpp"

#include <filesystem>
#include <fstream>

using namespace latentdrive;
using namespace latentdrive::drivesim;

namespace {

// Exact overlap test for two convex quads: corner containment or any edge
// intersection. Independent of the separating-axis implementation.
bool point_in_quad(const std::array<Vec2, 4>& q, Vec2 p) {
    int sign = 0;
    for (int i = 0; i < 4; ++i) {
        Vec2 a = q[static_cast<size_t>(i)], b = q[static_cast<size_t>((i + 1) % 4)];
        double c = (b - a).cross(p - a);
        if (std::abs(c) < 1e-12) continue;
        int s = c > 0 ? 1 : -1;
        if (sign == 0) sign = s;
        else if (s != sign) return false;
    }
    return true;
}

bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
    auto orient = [](Vec2 p, Vec2 q, Vec2 r) {
        double v = (q - p).cross(r - p);
        return v > 1e-12 ? 1 : (v < -1e-12 ? -1 : 0);
    };
    int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
    return o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0;
}

bool quads_overlap_exact(const std::array<Vec2, 4>& qa, const std::array<Vec2, 4>& qb) {
    for (const Vec2& p : qa)
        if (point_in_quad(qb, p)) return true;
    for (const Vec2& p : qb)
        if (point_in_quad(qa, p)) return true;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (segments_intersect(qa[static_cast<size_t>(i)], qa[static_cast<size_t>((i + 1) % 4)],
                                   qb[static_cast<size_t>(j)], qb[static_cast<size_t>((j + 1) % 4)]))
                return true;
    return false;
}

}  // namespace

TEST_CASE("reward components and pinned anchor values") {
    // stopped, straight wheel, on route: only the time penalty
    CHECK(compute_reward(0.0, 0.0, false, 0.0).total == Catch::Approx(-0.1).margin(1e-9));
    // cruising at 3 m/s with a slight steer:  3 - 0.5*0.01 - 0.1
    CHECK(compute_reward(3.0, 0.1, false, 0.0).total == Catch::Approx(2.895).margin(1e-9));
    // collision at 2 m/s: 2 - 10 - 0.1
    CHECK(compute_reward(2.0, 0.0, true, 0.0).total == Catch::Approx(-8.1).margin(1e-9));

    auto r = compute_reward(7.0, -0.3, false, 2.5);
    CHECK(r.speed == Catch::Approx(3.0));       // above 5 m/s: 10 - v
    CHECK(r.steer == Catch::Approx(-0.045));    // -0.5 * 0.09
    CHECK(r.off_lane == Catch::Approx(-1.0));   // deviation beyond 2 m
    CHECK(r.collision == 0.0);
    CHECK(r.constant == Catch::Approx(-0.1));
    CHECK(r.total == Catch::Approx(r.speed + r.steer + r.collision + r.off_lane + r.constant));
    // reward is exactly at the 2 m boundary: no penalty
    CHECK(compute_reward(1.0, 0.0, false, 2.0).off_lane == 0.0);
}

TEST_CASE("bicycle step matches a fine-step integrator") {
    RandomStream rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        VehicleState v;
        v.pos = {rng.uniform(-5, 5), rng.uniform(-5, 5)};
        v.heading = rng.uniform(-M_PI, M_PI);
        v.speed = rng.uniform(0, 10);
        Action a{rng.uniform(-3, 3), rng.uniform(-0.5, 0.5)};

        VehicleState coarse = step_bicycle(v, a, kFrameDt);

        // the same dynamics at dt/1000, holding the piecewise update structure
        VehicleState fine = v;
        const int sub = 1000;
        double dt = kFrameDt / sub;
        for (int i = 0; i < sub; ++i) {
            fine.speed = std::clamp(fine.speed + a.accel * dt, 0.0, kSpeedMax);
            fine.heading = wrap_angle(fine.heading + fine.speed * std::tan(a.steer) / kWheelbase * dt);
            fine.pos = fine.pos + heading_vec(fine.heading) * (fine.speed * dt);
        }
        // one Euler step over 0.05 s stays within a small neighborhood of the
        // converged trajectory
        CHECK((coarse.pos - fine.pos).norm() < 0.02);
        CHECK(std::abs(wrap_angle(coarse.heading - fine.heading)) < 0.02);
        CHECK(coarse.speed == Catch::Approx(fine.speed).margin(1e-9));
    }
}

TEST_CASE("bicycle respects speed and control limits") {
    VehicleState v;
    v.speed = 0.0;
    v = step_bicycle(v, {-3.0, 0.0}, kFrameDt);
    CHECK(v.speed == 0.0);  // no reverse

    v.speed = kSpeedMax;
    v = step_bicycle(v, {3.0, 0.0}, kFrameDt);
    CHECK(v.speed == kSpeedMax);

    VehicleState w;
    w.speed = 5.0;
    auto straight = step_bicycle(w, {0.0, 0.0}, kFrameDt);
    auto over_steer = step_bicycle(w, {0.0, 9.9}, kFrameDt);
    auto max_steer = step_bicycle(w, {0.0, kSteerMax}, kFrameDt);
    CHECK(over_steer.heading == Catch::Approx(max_steer.heading));
    CHECK(straight.heading == Catch::Approx(0.0));
}

TEST_CASE("constant steering closes a circle") {
    VehicleState v;
    v.speed = 5.0;
    v.pos = {0, 0};
    double steer = 0.3;
    double radius = kWheelbase / std::tan(steer);
    double period = 2 * M_PI * radius / v.speed;  // seconds for a full loop
    int n = static_cast<int>(std::round(period / kFrameDt));
    VehicleState w = v;
    for (int i = 0; i < n; ++i) w = step_bicycle(w, {0.0, steer}, kFrameDt);
    CHECK((w.pos - v.pos).norm() < 0.6);  // discretization drift only
    CHECK(std::abs(wrap_angle(w.heading - v.heading)) < 0.1);
}

TEST_CASE("separating-axis collision agrees with an exact polygon oracle") {
    RandomStream rng(22);
    int overlaps = 0;
    for (int i = 0; i < 3000; ++i) {
        VehicleState a, b;
        a.pos = {rng.uniform(-3, 3), rng.uniform(-3, 3)};
        a.heading = rng.uniform(-M_PI, M_PI);
        b.pos = {rng.uniform(-6, 6), rng.uniform(-6, 6)};
        b.heading = rng.uniform(-M_PI, M_PI);
        bool sat = vehicles_collide(a, b);
        bool exact = quads_overlap_exact(vehicle_corners(a), vehicle_corners(b));
        if (exact) ++overlaps;
        REQUIRE(sat == exact);
    }
    CHECK(overlaps > 200);       // both outcomes well represented
    CHECK(overlaps < 2800);
}

TEST_CASE("roundabout map geometry") {
    RoadMap m = build_roundabout();

    SECTION("route runs south arm -> ring -> west arm") {
        Vec2 start = m.route.pts.front();
        Vec2 end = m.route.pts.back();
        CHECK(start.x == Catch::Approx(1.5));
        CHECK(start.y == Catch::Approx(-45.0));
        CHECK(end.x == Catch::Approx(-45.0));
        CHECK(end.y == Catch::Approx(1.5));
        CHECK(m.route.length() > 130.0);
        CHECK(m.route.length() < 150.0);
    }

    SECTION("route is continuous, on drivable ground, ~1 m sampled") {
        for (size_t i = 1; i < m.route.pts.size(); ++i)
            CHECK((m.route.pts[i] - m.route.pts[i - 1]).norm() < 1.2);
        for (const Vec2& p : m.route.pts) CHECK(m.drivable(p));
    }

    SECTION("ring travel is counterclockwise") {
        for (size_t i = 1; i < m.route.pts.size(); ++i) {
            Vec2 a = m.route.pts[i - 1], b = m.route.pts[i];
            if (std::abs(a.norm() - kRingRadius) < 0.1 && std::abs(b.norm() - kRingRadius) < 0.1)
                CHECK(a.cross(b) > 0);
        }
    }

    SECTION("checkpoints sit on the route in travel order") {
        double prev = -1.0;
        for (const Vec2& cp : m.checkpoints) {
            CHECK(m.route.distance_to(cp) < 0.1);
            double s = m.route.project(cp);
            CHECK(s > prev);
            prev = s;
        }
        CHECK(m.checkpoints[0].x == Catch::Approx(1.5));
        CHECK(m.checkpoints[0].y == Catch::Approx(-junction_reach()));
        CHECK(m.checkpoints[1].x == Catch::Approx(kRingRadius));  // east
        CHECK(m.checkpoints[1].y == Catch::Approx(0.0).margin(1e-9));
        CHECK(m.checkpoints[2].x == Catch::Approx(0.0).margin(1e-9));  // north
        CHECK(m.checkpoints[2].y == Catch::Approx(kRingRadius));
    }

    SECTION("drivable region membership") {
        CHECK(m.drivable({20, 0}));           // ring lane
        CHECK(m.drivable({0, -18}));          // inner ring edge region
        CHECK_FALSE(m.drivable({0, 0}));      // central island
        CHECK_FALSE(m.drivable({0, 16.9}));   // island boundary
        CHECK(m.drivable({1.5, -30}));        // south arm lane
        CHECK(m.drivable({-30, 1.5}));        // west arm lane
        CHECK_FALSE(m.drivable({3.5, -30}));  // beside the south arm
        CHECK_FALSE(m.drivable({0, 51}));     // past the north arm end
        CHECK_FALSE(m.drivable({35, 35}));    // open field
        CHECK(m.drivable({0, 45}));           // north arm
    }
}

TEST_CASE("traffic routes are continuous, drivable and counterclockwise") {
    RoadMap m = build_roundabout();
    RandomStream rng(23);
    for (int t = 0; t < 100; ++t) {
        Polyline p = make_traffic_route(m, rng);
        REQUIRE(p.pts.size() >= 2);
        for (size_t i = 1; i < p.pts.size(); ++i)
            REQUIRE((p.pts[i] - p.pts[i - 1]).norm() < 1.2);
        for (const Vec2& q : p.pts) REQUIRE(m.drivable(q));
        // ends at the tip of some outbound arm
        CHECK(p.pts.back().norm() == Catch::Approx(std::sqrt(kArmReach * kArmReach +
                                                             kLaneOffset * kLaneOffset)));
        for (size_t i = 1; i < p.pts.size(); ++i) {
            Vec2 a = p.pts[i - 1], b = p.pts[i];
            if (std::abs(a.norm() - kRingRadius) < 0.05 && std::abs(b.norm() - kRingRadius) < 0.05)
                REQUIRE(a.cross(b) > 0);
        }
    }
}

TEST_CASE("world reset places ego near the route start with jitter") {
    World w(build_roundabout(), WorldConfig{}, 31);
    Vec2 p1 = w.ego().pos;
    w.reset();
    Vec2 p2 = w.ego().pos;
    CHECK((p1 - Vec2{1.5, -40.0}).norm() < 1.0);
    CHECK((p2 - Vec2{1.5, -40.0}).norm() < 1.0);
    CHECK((p1 - p2).norm() > 1e-6);  // jitter draws differ between episodes
    CHECK(w.ego().speed == 0.0);
}

TEST_CASE("worlds with the same seed evolve identically") {
    WorldConfig cfg;
    World a(build_roundabout(), cfg, 99);
    World b(build_roundabout(), cfg, 99);
    PurePursuitDriver driver;
    for (int i = 0; i < 200 && !a.done(); ++i) {
        Action act = driver.act(a.ego(), a.map().route);
        a.step_frame(act);
        b.step_frame(act);
    }
    REQUIRE(a.traffic().size() == b.traffic().size());
    CHECK(a.ego().pos.x == b.ego().pos.x);
    CHECK(a.ego().pos.y == b.ego().pos.y);
    CHECK(a.ego().heading == b.ego().heading);
    for (size_t i = 0; i < a.traffic().size(); ++i) {
        CHECK(a.traffic()[i].st.pos.x == b.traffic()[i].st.pos.x);
        CHECK(a.traffic()[i].st.pos.y == b.traffic()[i].st.pos.y);
    }
}

TEST_CASE("traffic keeps its distance from a stopped vehicle ahead") {
    WorldConfig cfg;
    cfg.traffic_count = 0;
    World w(build_roundabout(), cfg, 41);
    // park the ego on the ring, then hand-place one traffic car behind it
    w.mutable_ego().pos = {kRingRadius, 0.0};
    w.mutable_ego().heading = M_PI / 2;  // ccw tangent at angle 0
    w.mutable_ego().speed = 0.0;

    TrafficCar car;
    RandomStream rr(5);
    RoadMap m = build_roundabout();
    // a pure ring loop long enough to pass behind the ego
    std::vector<Vec2> loop;
    drivesim::detail::append_arc(loop, -M_PI / 2, M_PI / 2, 1.0);
    car.path.pts = loop;
    car.path.build();
    car.s = 0.0;
    car.st.pos = car.path.point_at(0);
    car.st.heading = car.path.heading_at(0);
    car.st.speed = 5.0;
    w.mutable_traffic().push_back(car);

    bool collided = false;
    for (int i = 0; i < 400; ++i) {
        auto res = w.step_frame({0.0, 0.0});
        collided = collided || res.collision;
        if (res.done) break;
    }
    CHECK_FALSE(collided);
    const auto& t = w.traffic()[0];
    CHECK(t.st.speed < 0.05);  // settled to a stop behind the ego
    double gap = (w.ego().pos - t.st.pos).norm() - kVehicleLength;
    CHECK(gap > 0.5);
    CHECK(gap < 6.0);
}

TEST_CASE("scripted driver completes the route hitting checkpoints in order") {
    WorldConfig cfg;
    cfg.traffic_count = 0;
    World w(build_roundabout(), cfg, 51);
    PurePursuitDriver driver;

    int prev_count = 0;
    double max_dev = 0.0;
    for (int i = 0; i < cfg.max_frames && !w.done(); ++i) {
        auto res = w.step_frame(driver.act(w.ego(), w.map().route));
        max_dev = std::max(max_dev, res.deviation);
        int c = w.progress().count();
        REQUIRE(c >= prev_count);
        REQUIRE(c - prev_count <= 1);
        prev_count = c;
    }
    CHECK(w.done());
    CHECK(w.reason() == TermReason::kGoal);
    CHECK(w.progress().entrance);
    CHECK(w.progress().first_exit);
    CHECK(w.progress().second_exit);
    CHECK(w.progress().desired_exit);
    CHECK(w.progress().goal);
    // the lookahead controller cuts the straight-to-arc transition slightly;
    // stays well inside the 2 m lane envelope
    CHECK(max_dev < 1.5);
}

TEST_CASE("leaving the route ends the episode as off-route") {
    WorldConfig cfg;
    cfg.traffic_count = 0;
    World w(build_roundabout(), cfg, 61);
    bool saw_off_lane_penalty = false;
    // drive straight west from the south arm spawn: deviation grows
    w.mutable_ego().heading = M_PI;
    w.mutable_ego().speed = 5.0;
    for (int i = 0; i < 200 && !w.done(); ++i) {
        auto res = w.step_frame({0.0, 0.0});
        if (res.reward.off_lane < 0) {
            saw_off_lane_penalty = true;
            CHECK(res.deviation > 2.0);
        }
    }
    CHECK(w.done());
    CHECK(w.reason() == TermReason::kOffRoute);
    CHECK(saw_off_lane_penalty);
}

TEST_CASE("contact with traffic ends the episode as collision") {
    WorldConfig cfg;
    cfg.traffic_count = 0;
    World w(build_roundabout(), cfg, 71);
    TrafficCar car;
    car.st = w.ego();
    car.st.pos.y += 3.0;  // directly ahead, overlapping after a short drive
    car.st.speed = 0.0;
    std::vector<Vec2> ppts = {car.st.pos, car.st.pos + Vec2{0, 10}};
    car.path.pts = ppts;
    car.path.build();
    car.s = 0.0;
    w.mutable_traffic().push_back(car);

    FrameResult last;
    for (int i = 0; i < 100 && !w.done(); ++i) last = w.step_frame({3.0, 0.0});
    CHECK(w.done());
    CHECK(w.reason() == TermReason::kCollision);
    CHECK(last.reward.collision == Catch::Approx(-10.0));
    CHECK(last.collision);
}

TEST_CASE("stepping a finished episode is an error") {
    WorldConfig cfg;
    cfg.traffic_count = 0;
    cfg.max_frames = 3;
    World w(build_roundabout(), cfg, 81);
    for (int i = 0; i < 3; ++i) w.step_frame({0.0, 0.0});
    CHECK(w.done());
    CHECK(w.reason() == TermReason::kTimeout);
    CHECK_THROWS_AS(w.step_frame({0.0, 0.0}), std::runtime_error);
}

TEST_CASE("trajectory dump is a parseable csv") {
    WorldConfig cfg;
    cfg.traffic_count = 2;
    World w(build_roundabout(), cfg, 91);
    for (int i = 0; i < 10; ++i) w.step_frame({1.0, 0.0});
    auto path = (std::filesystem::temp_directory_path() / "traj_test.csv").string();
    w.dump_trajectory(path);
    std::ifstream is(path);
    std::string header;
    std::getline(is, header);
    CHECK(header == "frame,x,y,heading,speed,reward,deviation");
    int rows = 0;
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 10);
    std::filesystem::remove(path);
}

TEST_CASE("traffic vehicles stay on drivable ground") {
    WorldConfig cfg;
    cfg.traffic_count = 8;
    World w(build_roundabout(), cfg, 101);
    CHECK(w.traffic().size() == 8);
    for (int i = 0; i < 500 && !w.done(); ++i) {
        w.step_frame({0.0, 0.0});
        for (const auto& car : w.traffic()) REQUIRE(w.map().drivable(car.st.pos));
    }
}
