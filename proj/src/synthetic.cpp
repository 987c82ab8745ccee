#include "fdc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace fdc {

namespace {

void validate_spec(const SceneSpec& spec) {
    if (spec.height <= 0 || spec.width <= 0 || spec.length <= 0)
        throw std::invalid_argument("scene dims and length must be positive");
    if (!(spec.background_depth >= 3))
        throw std::invalid_argument("background depth must be >= 3 m");
    if (!std::isfinite(spec.bg_vx) || !std::isfinite(spec.bg_vy))
        throw std::invalid_argument("background velocity must be finite");
    for (const auto& o : spec.objects) {
        if (!std::isfinite(o.x) || !std::isfinite(o.y) || !std::isfinite(o.vx) || !std::isfinite(o.vy) ||
            !std::isfinite(o.depth))
            throw std::invalid_argument("object parameters must be finite");
        if (!(o.depth >= 3)) throw std::invalid_argument("object depth must be >= 3 m");
        if (o.w <= 0 || o.h <= 0) throw std::invalid_argument("object extent must be positive");
        if (o.x < 0 || o.y < 0 || o.x + o.w > spec.width || o.y + o.h > spec.height)
            throw std::invalid_argument("object rectangle out of image bounds at frame 0");
    }
}

// Pixel px is covered when its center lies in [x, x+w).
inline bool covers(double x, int extent, int px) { return px + 0.5 >= x && px + 0.5 < x + extent; }

// Deterministic bounded draws; avoids distribution implementation drift.
std::uint64_t draw(std::mt19937_64& rng, std::uint64_t n) { return rng() % n; }
int draw_range(std::mt19937_64& rng, int lo, int hi) {  // inclusive
    return lo + static_cast<int>(draw(rng, static_cast<std::uint64_t>(hi - lo + 1)));
}
double draw_real(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

}  // namespace

SyntheticSequence synth_scene(const SceneSpec& spec) {
    validate_spec(spec);
    // Painter's order: farther first, so the nearest cover wins; equal depths
    // resolve to the later object in the list.
    std::vector<size_t> order(spec.objects.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return spec.objects[a].depth > spec.objects[b].depth;
    });

    SyntheticSequence seq;
    seq.spec = spec;
    seq.frames.reserve(static_cast<size_t>(spec.length));
    std::vector<int> top(static_cast<size_t>(spec.height) * spec.width);
    for (int f = 0; f < spec.length; ++f) {
        std::fill(top.begin(), top.end(), -1);
        for (size_t oi : order) {
            const auto& o = spec.objects[oi];
            const double ox = o.x + o.vx * f;
            const double oy = o.y + o.vy * f;
            const int x0 = std::max(0, static_cast<int>(std::ceil(ox - 0.5)));
            const int x1 = std::min(spec.width - 1, static_cast<int>(std::floor(ox + o.w - 0.5 - 1e-9)));
            const int y0 = std::max(0, static_cast<int>(std::ceil(oy - 0.5)));
            const int y1 = std::min(spec.height - 1, static_cast<int>(std::floor(oy + o.h - 0.5 - 1e-9)));
            for (int y = y0; y <= y1; ++y) {
                if (!covers(oy, o.h, y)) continue;
                for (int x = x0; x <= x1; ++x)
                    if (covers(ox, o.w, x)) top[static_cast<size_t>(y) * spec.width + x] = static_cast<int>(oi);
            }
        }

        SyntheticFrame frame;
        frame.flow = FlowField(spec.height, spec.width);
        frame.depth = DepthMap(spec.height, spec.width);
        frame.masks.assign(spec.objects.size(), InstanceMask());
        for (size_t oi = 0; oi < spec.objects.size(); ++oi) {
            frame.masks[oi] = InstanceMask(spec.height, spec.width);
            frame.masks[oi].instance_id = static_cast<int>(oi);
            frame.masks[oi].frame_index = f;
        }
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x) {
                const int oi = top[static_cast<size_t>(y) * spec.width + x];
                if (oi < 0) {
                    frame.flow.u(y, x) = static_cast<float>(spec.bg_vx);
                    frame.flow.v(y, x) = static_cast<float>(spec.bg_vy);
                    frame.depth.d(y, x) = static_cast<float>(spec.background_depth);
                } else {
                    const auto& o = spec.objects[static_cast<size_t>(oi)];
                    frame.flow.u(y, x) = static_cast<float>(o.vx);
                    frame.flow.v(y, x) = static_cast<float>(o.vy);
                    frame.depth.d(y, x) = static_cast<float>(o.depth);
                    frame.masks[static_cast<size_t>(oi)].at(y, x) = 1.f;
                }
            }
        seq.frames.push_back(std::move(frame));
    }
    return seq;
}

SceneSpec random_scene_spec(std::uint64_t seed, const SceneRandomParams& params) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + 0xD1B54A32D192ED03ull);
    SceneSpec spec;
    spec.height = params.height;
    spec.width = params.width;
    spec.length = params.length;
    spec.background_depth = draw_real(rng, params.min_bg_depth, params.max_bg_depth);
    spec.bg_vx = draw_range(rng, -params.max_bg_speed, params.max_bg_speed);
    spec.bg_vy = draw_range(rng, -params.max_bg_speed, params.max_bg_speed);
    const bool coherent = draw_real(rng, 0, 1) < params.coherent_fraction;

    const int n = draw_range(rng, params.min_objects, params.max_objects);
    for (int i = 0; i < n; ++i) {
        ObjectSpec o;
        o.w = draw_range(rng, params.min_size, std::min(params.max_size, spec.width / 2));
        o.h = draw_range(rng, params.min_size, std::min(params.max_size, spec.height / 2));
        o.depth = draw_real(rng, params.min_depth, params.max_depth);
        for (int attempt = 0; attempt < 64; ++attempt) {
            if (coherent) {
                o.vx = spec.bg_vx;
                o.vy = spec.bg_vy;
            } else {
                o.vx = draw_range(rng, -params.max_speed, params.max_speed);
                o.vy = draw_range(rng, -params.max_speed, params.max_speed);
                if (o.vx == 0 && o.vy == 0) o.vx = 1;
            }
            const double travel_x = o.vx * (spec.length - 1);
            const double travel_y = o.vy * (spec.length - 1);
            double lo_x = 0, hi_x = spec.width - o.w;
            double lo_y = 0, hi_y = spec.height - o.h;
            if (params.keep_in_bounds) {
                lo_x = std::max(lo_x, -travel_x);
                hi_x = std::min(hi_x, spec.width - o.w - travel_x);
                lo_y = std::max(lo_y, -travel_y);
                hi_y = std::min(hi_y, spec.height - o.h - travel_y);
            }
            if (lo_x > hi_x || lo_y > hi_y) continue;  // too fast to stay inside, redraw
            o.x = std::floor(draw_real(rng, lo_x, hi_x + 1));
            o.y = std::floor(draw_real(rng, lo_y, hi_y + 1));
            o.x = std::clamp(o.x, lo_x, hi_x);
            o.y = std::clamp(o.y, lo_y, hi_y);
            spec.objects.push_back(o);
            break;
        }
    }
    return spec;
}

}  // namespace fdc
