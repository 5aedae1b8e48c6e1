// Rasterizer checks: pixel-space anchors, draw order, trail brightness,
// palette discipline, determinism, downsampling arithmetic, file formats.

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "latentdrive/birdview/birdview.hpp"
#include "latentdrive/drivesim/pure_pursuit.hpp"

using namespace latentdrive;
using namespace latentdrive::birdview;
using drivesim::Vec2;
using drivesim::VehicleState;

namespace {

float px_at(const std::vector<float>& hwc, int col, int row, int c) {
    return hwc[(static_cast<size_t>(row) * kRenderRes + static_cast<size_t>(col)) * kChannels +
               static_cast<size_t>(c)];
}

VehicleState pose(double x, double y, double heading, double speed = 0.0) {
    VehicleState v;
    v.pos = {x, y};
    v.heading = heading;
    v.speed = speed;
    return v;
}

}  // namespace

TEST_CASE("world_to_pixel maps the ego frame onto the expected anchors") {
    VehicleState ego = pose(10.0, -4.0, M_PI / 2);  // facing north

    auto self = world_to_pixel(ego.pos, ego);
    CHECK(self.x == Catch::Approx(128.0));
    CHECK(self.y == Catch::Approx(204.8));

    auto ahead = world_to_pixel({10.0, 4.0}, ego);  // 8 m forward
    CHECK(ahead.x == Catch::Approx(128.0));
    CHECK(ahead.y == Catch::Approx(204.8 - 8 * 6.4));

    auto left1m = world_to_pixel({9.0, -4.0}, ego);  // 1 m to the ego's left (west)
    CHECK(left1m.x == Catch::Approx(128.0 - 6.4));
    CHECK(left1m.y == Catch::Approx(204.8));

    // rotation only changes which world direction is "up"
    VehicleState east = pose(0.0, 0.0, 0.0);
    auto ahead_e = world_to_pixel({8.0, 0.0}, east);
    CHECK(ahead_e.x == Catch::Approx(128.0));
    CHECK(ahead_e.y == Catch::Approx(204.8 - 8 * 6.4));
}

TEST_CASE("ego renders as a full-brightness red block at the anchor pixels") {
    drivesim::RoadMap map = drivesim::build_roundabout();
    HistoryBuffer hb;
    Snapshot s;
    s.ego = pose(1.5, -40.0, M_PI / 2);
    hb.fill(s);
    auto hi = render_highres(map, hb);

    // vehicle is 4.0 x 1.8 m: rows 192..217, cols 123..133 fall inside
    for (int row : {195, 204, 214})
        for (int col : {124, 128, 132}) {
            INFO("pixel " << col << "," << row);
            CHECK(px_at(hi, col, row, 0) == 1.0f);
            CHECK(px_at(hi, col, row, 1) == 0.0f);
            CHECK(px_at(hi, col, row, 2) == 0.0f);
        }
    // well outside the box: not red
    CHECK(px_at(hi, 100, 204, 0) != 1.0f);
}

TEST_CASE("route paints a blue band ahead of an on-route ego") {
    drivesim::RoadMap map = drivesim::build_roundabout();
    HistoryBuffer hb;
    Snapshot s;
    s.ego = pose(1.5, -40.0, M_PI / 2);  // on the south approach lane
    hb.fill(s);
    auto hi = render_highres(map, hb);
    // 5 m ahead on the lane center: route blue, drawn over gray
    int row = static_cast<int>(204.8 - 5 * 6.4);
    CHECK(px_at(hi, 128, row, 2) == 1.0f);
    CHECK(px_at(hi, 128, row, 0) == 0.0f);
    // beside the road (18 m left, 7 m back: open field): background
    CHECK(px_at(hi, 10, 250, 0) == 0.0f);
    CHECK(px_at(hi, 10, 250, 1) == 0.0f);
    CHECK(px_at(hi, 10, 250, 2) == 0.0f);
}

TEST_CASE("traffic renders green and the newest pose wins overdraw") {
    drivesim::RoadMap map = drivesim::build_roundabout();
    HistoryBuffer hb;
    Snapshot s;
    s.ego = pose(1.5, -40.0, M_PI / 2);
    s.others = {pose(1.5, -32.0, M_PI / 2)};  // 8 m ahead
    hb.fill(s);
    auto hi = render_highres(map, hb);
    int row = static_cast<int>(204.8 - 8 * 6.4);
    CHECK(px_at(hi, 128, row, 1) == 1.0f);
    CHECK(px_at(hi, 128, row, 0) == 0.0f);
    CHECK(px_at(hi, 128, row, 2) == 0.0f);
}

TEST_CASE("history trail brightens toward the present") {
    drivesim::RoadMap map = drivesim::build_roundabout();
    HistoryBuffer hb;
    // ego advancing north in 5 m hops; newest at y = -40
    hb.fill({pose(1.5, -55.0, M_PI / 2), {}});
    hb.push({pose(1.5, -50.0, M_PI / 2), {}});
    hb.push({pose(1.5, -45.0, M_PI / 2), {}});
    hb.push({pose(1.5, -40.0, M_PI / 2), {}});
    auto hi = render_highres(map, hb);

    // newest box at the anchor, full red
    CHECK(px_at(hi, 128, 204, 0) == 1.0f);
    // previous pose: 5 m behind => 32 px lower, brightness 0.8
    CHECK(px_at(hi, 128, 204 + 32, 0) == 0.8f);
    CHECK(px_at(hi, 128, 204 + 32, 1) == 0.0f);
}

TEST_CASE("every high-res pixel stays on the palette") {
    drivesim::RoadMap map = drivesim::build_roundabout();
    RandomStream rng(17);
    drivesim::WorldConfig cfg;
    drivesim::World w(map, cfg, 1234);
    HistoryBuffer hb;
    hb.fill(snapshot_of(w));
    drivesim::PurePursuitDriver driver;
    for (int i = 0; i < 40; ++i) {
        w.step_frame(driver.act(w.ego(), map.route));
        hb.push(snapshot_of(w));
    }
    auto hi = render_highres(map, hb);
    for (int row = 0; row < kRenderRes; ++row)
        for (int col = 0; col < kRenderRes; ++col) {
            float r = px_at(hi, col, row, 0), g = px_at(hi, col, row, 1), b = px_at(hi, col, row, 2);
            bool ok = (r == 0.f && g == 0.f && b == 0.f) ||
                      (r == 0.5f && g == 0.5f && b == 0.5f) ||
                      (r == 0.f && g == 0.f && b == 1.f);
            for (float beta : kTrailBrightness) {
                ok = ok || (r == beta && g == 0.f && b == 0.f);   // ego trail
                ok = ok || (r == 0.f && g == beta && b == 0.f);   // traffic trail
            }
            if (!ok) {
                INFO("pixel " << col << "," << row << " = " << r << "," << g << "," << b);
                REQUIRE(ok);
            }
        }
}

TEST_CASE("downsample is an exact 4x4 box average") {
    std::vector<float> hi(static_cast<size_t>(kRenderRes) * kRenderRes * kChannels, 0.f);
    // fill one aligned 4x4 block with red=1, and half of another with green=1
    for (int dy = 0; dy < 4; ++dy)
        for (int dx = 0; dx < 4; ++dx) {
            hi[((static_cast<size_t>(8) + dy) * kRenderRes + (12 + dx)) * 3 + 0] = 1.f;
            if (dx < 2) hi[((static_cast<size_t>(20) + dy) * kRenderRes + (40 + dx)) * 3 + 1] = 1.f;
        }
    auto f = downsample(hi);
    CHECK(f.at(0, 2, 3) == 1.0f);
    CHECK(f.at(1, 2, 3) == 0.0f);
    CHECK(f.at(1, 5, 10) == 0.5f);
    CHECK(f.at(0, 0, 0) == 0.0f);
}

TEST_CASE("rendering is deterministic byte for byte") {
    drivesim::RoadMap map = drivesim::build_roundabout();
    drivesim::WorldConfig cfg;
    for (uint64_t seed : {7u, 8u, 9u}) {
        drivesim::World w1(map, cfg, seed), w2(map, cfg, seed);
        HistoryBuffer h1, h2;
        h1.fill(snapshot_of(w1));
        h2.fill(snapshot_of(w2));
        for (int i = 0; i < 20; ++i) {
            w1.step_frame({1.0, 0.1});
            w2.step_frame({1.0, 0.1});
            h1.push(snapshot_of(w1));
            h2.push(snapshot_of(w2));
        }
        auto b1 = frame_bytes(render(map, h1));
        auto b2 = frame_bytes(render(map, h2));
        REQUIRE(b1 == b2);
    }
}

TEST_CASE("history buffer keeps insertion order with a fixed depth") {
    HistoryBuffer hb;
    hb.fill({pose(0, 0, 0), {}});
    for (int i = 1; i <= 5; ++i) hb.push({pose(i, 0, 0), {}});
    // last four pushes survive: 2, 3, 4, 5
    CHECK(hb.slot(0).ego.pos.x == 2.0);
    CHECK(hb.slot(1).ego.pos.x == 3.0);
    CHECK(hb.slot(2).ego.pos.x == 4.0);
    CHECK(hb.newest().ego.pos.x == 5.0);
}

TEST_CASE("dataset files round trip") {
    drivesim::RoadMap map = drivesim::build_roundabout();
    HistoryBuffer hb;
    hb.fill({pose(1.5, -40.0, M_PI / 2), {pose(1.5, -30.0, M_PI / 2)}});
    std::vector<BirdViewFrame> frames;
    frames.push_back(render(map, hb));
    hb.push({pose(1.5, -39.0, M_PI / 2), {pose(1.5, -30.0, M_PI / 2)}});
    frames.push_back(render(map, hb));

    auto path = (std::filesystem::temp_directory_path() / "bv_roundtrip.bin").string();
    save_dataset(path, frames);
    Dataset d = load_dataset(path);
    REQUIRE(d.count() == 2);
    CHECK(d.width == kFrameRes);
    CHECK(d.height == kFrameRes);
    CHECK(d.channels == kChannels);

    auto expect0 = frame_bytes(frames[0]);
    for (size_t i = 0; i < expect0.size(); ++i) REQUIRE(d.bytes[i] == expect0[i]);

    // float conversion: byte/255, channel-major
    auto chw = d.frame_chw(0);
    CHECK(chw.size() == frames[0].chw.size());
    for (size_t i = 0; i < 50; ++i)
        CHECK(chw[i] == Catch::Approx(std::round(std::clamp(frames[0].chw[i], 0.f, 1.f) * 255) / 255.f));
    CHECK_THROWS_AS(d.frame_chw(2), std::out_of_range);
    std::filesystem::remove(path);
}

TEST_CASE("dataset loader rejects corrupt files") {
    auto path = (std::filesystem::temp_directory_path() / "bv_corrupt.bin").string();
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE";
    }
    CHECK_THROWS_WITH(load_dataset(path), Catch::Matchers::ContainsSubstring("magic"));
    {
        std::ofstream os(path, std::ios::binary);
        os << "BVDS";
        unsigned char hdr[16] = {2, 0, 0, 0, 64, 0, 0, 0, 64, 0, 0, 0, 3, 0, 0, 0};
        os.write(reinterpret_cast<char*>(hdr), 16);
        os << "short";
    }
    CHECK_THROWS_WITH(load_dataset(path), Catch::Matchers::ContainsSubstring("truncated"));
    std::filesystem::remove(path);
}

TEST_CASE("ppm dump carries the right header and payload size") {
    std::vector<uint8_t> rgb(static_cast<size_t>(kFrameRes) * kFrameRes * 3, 100);
    auto path = (std::filesystem::temp_directory_path() / "bv_test.ppm").string();
    write_ppm(path, kFrameRes, kFrameRes, rgb);
    std::ifstream is(path, std::ios::binary);
    std::string magic, dims, maxval;
    std::getline(is, magic);
    std::getline(is, dims);
    std::getline(is, maxval);
    CHECK(magic == "P6");
    CHECK(dims == "64 64");
    CHECK(maxval == "255");
    std::vector<char> payload(rgb.size() + 1);
    is.read(payload.data(), static_cast<std::streamsize>(payload.size()));
    CHECK(is.gcount() == static_cast<std::streamsize>(rgb.size()));
    std::filesystem::remove(path);
    CHECK_THROWS_AS(write_ppm(path, 10, 10, rgb), std::invalid_argument);
}

TEST_CASE("observation frame anchors survive downsampling") {
    drivesim::RoadMap map = drivesim::build_roundabout();
    HistoryBuffer hb;
    hb.fill({pose(1.5, -40.0, M_PI / 2), {}});
    auto f = render(map, hb);
    // ego center block: rows 204..207, cols 128..131 at high res => (51, 32)
    CHECK(f.at(0, 51, 32) == 1.0f);
    CHECK(f.at(1, 51, 32) == 0.0f);
    // values stay in [0, 1]
    for (float v : f.chw) {
        REQUIRE(v >= 0.f);
        REQUIRE(v <= 1.f);
    }
}
