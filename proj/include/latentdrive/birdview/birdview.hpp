#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "latentdrive/drivesim/roadmap.hpp"
#include "latentdrive/drivesim/types.hpp"
#include "latentdrive/drivesim/world.hpp"

namespace latentdrive::birdview {

inline constexpr int kRenderRes = 256;  // rasterization resolution
inline constexpr int kFrameRes = 64;    // observation resolution after 4x4 averaging
inline constexpr int kChannels = 3;
inline constexpr double kViewSpan = 40.0;      // meters covered by the full frame
inline constexpr double kEgoFromBottom = 8.0;  // ego anchor distance from the bottom edge
inline constexpr double kPxPerMeter = kRenderRes / kViewSpan;                   // 6.4
inline constexpr double kEgoPxCol = kRenderRes / 2.0;                           // 128
inline constexpr double kEgoPxRow = kRenderRes - kEgoFromBottom * kPxPerMeter;  // 204.8
inline constexpr double kRouteHalfWidth = 1.0;  // meters, drawn route thickness /2
inline constexpr int kHistoryDepth = 4;

inline constexpr float kGroundGray = 0.5f;
// oldest -> newest trail brightness
inline constexpr std::array<float, kHistoryDepth> kTrailBrightness{0.4f, 0.6f, 0.8f, 1.0f};

/// Poses of everything drawable at one simulation frame.
struct Snapshot {
    drivesim::VehicleState ego;
    std::vector<drivesim::VehicleState> others;
};

inline Snapshot snapshot_of(const drivesim::World& w) {
    Snapshot s;
    s.ego = w.ego();
    s.others.reserve(w.traffic().size());
    for (const auto& car : w.traffic()) s.others.push_back(car.st);
    return s;
}

/// Ring of the last kHistoryDepth snapshots, pushed once per simulation
/// frame. fill() seeds every slot, so a fresh episode renders a standing
/// vehicle rather than a partial trail.
class HistoryBuffer {
public:
    void fill(const Snapshot& s) {
        for (auto& slot : slots_) slot = s;
        head_ = 0;
    }

    void push(const Snapshot& s) {
        slots_[head_] = s;
        head_ = (head_ + 1) % kHistoryDepth;
    }

    /// i = 0 is the oldest retained snapshot, i = kHistoryDepth-1 the newest.
    const Snapshot& slot(int i) const {
        return slots_[static_cast<size_t>((head_ + i) % kHistoryDepth)];
    }

    const Snapshot& newest() const { return slot(kHistoryDepth - 1); }

private:
    std::array<Snapshot, kHistoryDepth> slots_{};
    int head_ = 0;
};

/// Continuous pixel coordinates (col, row) of a world point at the render
/// resolution, in the frame of the given ego pose: ego forward is screen-up,
/// the ego center sits at (kEgoPxCol, kEgoPxRow).
inline drivesim::Vec2 world_to_pixel(drivesim::Vec2 p, const drivesim::VehicleState& ego) {
    drivesim::Vec2 fwd = drivesim::heading_vec(ego.heading);
    drivesim::Vec2 left = fwd.rot90();
    drivesim::Vec2 rel = p - ego.pos;
    double f = rel.dot(fwd), l = rel.dot(left);
    return {kEgoPxCol - l * kPxPerMeter, kEgoPxRow - f * kPxPerMeter};
}

/// 64x64x3 observation, channel-major (CHW), values in [0, 1].
struct BirdViewFrame {
    std::vector<float> chw = std::vector<float>(static_cast<size_t>(kChannels) * kFrameRes * kFrameRes, 0.f);

    float at(int c, int y, int x) const {
        return chw[(static_cast<size_t>(c) * kFrameRes + static_cast<size_t>(y)) * kFrameRes +
                   static_cast<size_t>(x)];
    }
};

namespace detail {

struct Canvas {
    // HWC float RGB at kRenderRes
    std::vector<float> px = std::vector<float>(static_cast<size_t>(kRenderRes) * kRenderRes * kChannels, 0.f);

    void set(int col, int row, float r, float g, float b) {
        size_t i = (static_cast<size_t>(row) * kRenderRes + static_cast<size_t>(col)) * kChannels;
        px[i] = r;
        px[i + 1] = g;
        px[i + 2] = b;
    }
};

inline void draw_map(Canvas& cv, const drivesim::RoadMap& map, const drivesim::VehicleState& ego) {
    drivesim::Vec2 fwd = drivesim::heading_vec(ego.heading);
    drivesim::Vec2 left = fwd.rot90();
    for (int row = 0; row < kRenderRes; ++row) {
        double f = (kEgoPxRow - (row + 0.5)) / kPxPerMeter;
        for (int col = 0; col < kRenderRes; ++col) {
            double l = (kEgoPxCol - (col + 0.5)) / kPxPerMeter;
            drivesim::Vec2 p = ego.pos + fwd * f + left * l;
            if (map.drivable(p)) cv.set(col, row, kGroundGray, kGroundGray, kGroundGray);
        }
    }
}

inline void draw_route(Canvas& cv, const drivesim::Polyline& route, const drivesim::VehicleState& ego) {
    const double hw_px = kRouteHalfWidth * kPxPerMeter;
    for (size_t i = 1; i < route.pts.size(); ++i) {
        drivesim::Vec2 a = world_to_pixel(route.pts[i - 1], ego);
        drivesim::Vec2 b = world_to_pixel(route.pts[i], ego);
        int c0 = static_cast<int>(std::floor(std::min(a.x, b.x) - hw_px - 1));
        int c1 = static_cast<int>(std::ceil(std::max(a.x, b.x) + hw_px + 1));
        int r0 = static_cast<int>(std::floor(std::min(a.y, b.y) - hw_px - 1));
        int r1 = static_cast<int>(std::ceil(std::max(a.y, b.y) + hw_px + 1));
        if (c1 < 0 || r1 < 0 || c0 >= kRenderRes || r0 >= kRenderRes) continue;
        c0 = std::max(c0, 0);
        r0 = std::max(r0, 0);
        c1 = std::min(c1, kRenderRes - 1);
        r1 = std::min(r1, kRenderRes - 1);
        drivesim::Vec2 d = b - a;
        double len2 = d.dot(d);
        for (int row = r0; row <= r1; ++row)
            for (int col = c0; col <= c1; ++col) {
                drivesim::Vec2 p{col + 0.5, row + 0.5};
                double t = len2 > 0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
                if ((p - (a + d * t)).norm() <= hw_px) cv.set(col, row, 0.f, 0.f, 1.f);
            }
    }
}

inline void draw_vehicle(Canvas& cv, const drivesim::VehicleState& v, const drivesim::VehicleState& ego,
                         float r, float g, float b) {
    auto corners_world = drivesim::vehicle_corners(v);
    std::array<drivesim::Vec2, 4> q;
    for (int i = 0; i < 4; ++i) q[static_cast<size_t>(i)] = world_to_pixel(corners_world[static_cast<size_t>(i)], ego);
    double minx = q[0].x, maxx = q[0].x, miny = q[0].y, maxy = q[0].y;
    for (const auto& p : q) {
        minx = std::min(minx, p.x);
        maxx = std::max(maxx, p.x);
        miny = std::min(miny, p.y);
        maxy = std::max(maxy, p.y);
    }
    int c0 = std::max(static_cast<int>(std::floor(minx)), 0);
    int c1 = std::min(static_cast<int>(std::ceil(maxx)), kRenderRes - 1);
    int r0 = std::max(static_cast<int>(std::floor(miny)), 0);
    int r1 = std::min(static_cast<int>(std::ceil(maxy)), kRenderRes - 1);
    for (int row = r0; row <= r1; ++row)
        for (int col = c0; col <= c1; ++col) {
            drivesim::Vec2 p{col + 0.5, row + 0.5};
            int sign = 0;
            bool inside = true;
            for (int i = 0; i < 4 && inside; ++i) {
                drivesim::Vec2 e = q[static_cast<size_t>((i + 1) % 4)] - q[static_cast<size_t>(i)];
                double cr = e.cross(p - q[static_cast<size_t>(i)]);
                if (std::abs(cr) < 1e-12) continue;
                int s = cr > 0 ? 1 : -1;
                if (sign == 0) sign = s;
                else if (s != sign) inside = false;
            }
            if (inside) cv.set(col, row, r, g, b);
        }
}

}  // namespace detail

/// Full-resolution render: map (gray), route (blue), traffic trail (green),
/// ego trail (red); trails brighten toward the present. Returns HWC floats.
inline std::vector<float> render_highres(const drivesim::RoadMap& map, const HistoryBuffer& history) {
    detail::Canvas cv;
    const drivesim::VehicleState& ego = history.newest().ego;
    detail::draw_map(cv, map, ego);
    detail::draw_route(cv, map.route, ego);
    for (int h = 0; h < kHistoryDepth; ++h) {
        float beta = kTrailBrightness[static_cast<size_t>(h)];
        for (const auto& other : history.slot(h).others)
            detail::draw_vehicle(cv, other, ego, 0.f, beta, 0.f);
    }
    for (int h = 0; h < kHistoryDepth; ++h) {
        float beta = kTrailBrightness[static_cast<size_t>(h)];
        detail::draw_vehicle(cv, history.slot(h).ego, ego, beta, 0.f, 0.f);
    }
    return std::move(cv.px);
}

/// 4x4 box average of the high-resolution render, repacked channel-major.
inline BirdViewFrame downsample(const std::vector<float>& highres) {
    BirdViewFrame out;
    constexpr int k = kRenderRes / kFrameRes;
    for (int y = 0; y < kFrameRes; ++y)
        for (int x = 0; x < kFrameRes; ++x) {
            float acc[kChannels] = {0, 0, 0};
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx) {
                    size_t i = ((static_cast<size_t>(y) * k + dy) * kRenderRes +
                                (static_cast<size_t>(x) * k + dx)) * kChannels;
                    for (int c = 0; c < kChannels; ++c) acc[c] += highres[i + static_cast<size_t>(c)];
                }
            for (int c = 0; c < kChannels; ++c)
                out.chw[(static_cast<size_t>(c) * kFrameRes + y) * kFrameRes + x] = acc[c] / (k * k);
        }
    return out;
}

inline BirdViewFrame render(const drivesim::RoadMap& map, const HistoryBuffer& history) {
    return downsample(render_highres(map, history));
}

inline uint8_t quantize(float v) {
    float q = std::round(std::clamp(v, 0.f, 1.f) * 255.f);
    return static_cast<uint8_t>(q);
}

/// Frame bytes, HWC interleaved RGB, for files and hashing.
inline std::vector<uint8_t> frame_bytes(const BirdViewFrame& f) {
    std::vector<uint8_t> out(static_cast<size_t>(kFrameRes) * kFrameRes * kChannels);
    for (int y = 0; y < kFrameRes; ++y)
        for (int x = 0; x < kFrameRes; ++x)
            for (int c = 0; c < kChannels; ++c)
                out[(static_cast<size_t>(y) * kFrameRes + x) * kChannels + static_cast<size_t>(c)] =
                    quantize(f.at(c, y, x));
    return out;
}

inline void write_ppm(const std::string& path, int width, int height,
                      const std::vector<uint8_t>& hwc_rgb) {
    if (hwc_rgb.size() != static_cast<size_t>(width) * height * 3)
        throw std::invalid_argument("ppm payload does not match dimensions");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open ppm for writing: " + path);
    os << "P6\n" << width << " " << height << "\n255\n";
    os.write(reinterpret_cast<const char*>(hwc_rgb.data()), static_cast<std::streamsize>(hwc_rgb.size()));
    if (!os) throw std::runtime_error("ppm write failed: " + path);
}

// Dataset file: magic "BVDS", then u32 count, width, height, channels
// (little endian), then count frames of width*height*channels bytes, HWC.

namespace detail {
inline constexpr char kDatasetMagic[4] = {'B', 'V', 'D', 'S'};

inline void write_u32le(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("dataset file truncated in header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}
}  // namespace detail

struct Dataset {
    uint32_t width = 0, height = 0, channels = 0;
    std::vector<uint8_t> bytes;  // count * width*height*channels, HWC per frame

    size_t frame_size() const { return static_cast<size_t>(width) * height * channels; }
    size_t count() const { return frame_size() ? bytes.size() / frame_size() : 0; }

    /// One frame as CHW floats in [0, 1] (the layout the encoder consumes).
    std::vector<float> frame_chw(size_t i) const {
        if (i >= count()) throw std::out_of_range("dataset frame index out of range");
        const uint8_t* f = bytes.data() + i * frame_size();
        std::vector<float> out(frame_size());
        for (uint32_t y = 0; y < height; ++y)
            for (uint32_t x = 0; x < width; ++x)
                for (uint32_t c = 0; c < channels; ++c)
                    out[(static_cast<size_t>(c) * height + y) * width + x] =
                        static_cast<float>(f[(static_cast<size_t>(y) * width + x) * channels + c]) / 255.f;
        return out;
    }
};

inline void save_dataset(const std::string& path, const std::vector<BirdViewFrame>& frames) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open dataset for writing: " + path);
    os.write(detail::kDatasetMagic, 4);
    detail::write_u32le(os, static_cast<uint32_t>(frames.size()));
    detail::write_u32le(os, kFrameRes);
    detail::write_u32le(os, kFrameRes);
    detail::write_u32le(os, kChannels);
    for (const auto& f : frames) {
        auto b = frame_bytes(f);
        os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    }
    if (!os) throw std::runtime_error("dataset write failed: " + path);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open dataset: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, detail::kDatasetMagic, 4) != 0)
        throw std::runtime_error("not a dataset file (bad magic): " + path);
    Dataset d;
    uint32_t count = detail::read_u32le(is);
    d.width = detail::read_u32le(is);
    d.height = detail::read_u32le(is);
    d.channels = detail::read_u32le(is);
    if (d.width == 0 || d.height == 0 || d.channels == 0 || d.width > 4096 || d.height > 4096 ||
        d.channels > 4)
        throw std::runtime_error("dataset header corrupt: " + path);
    d.bytes.resize(static_cast<size_t>(count) * d.frame_size());
    is.read(reinterpret_cast<char*>(d.bytes.data()), static_cast<std::streamsize>(d.bytes.size()));
    if (!is) throw std::runtime_error("dataset file truncated in payload: " + path);
    return d;
}

}  // namespace latentdrive::birdview
