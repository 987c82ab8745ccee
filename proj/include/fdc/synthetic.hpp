#pragma once

#include <cstdint>
#include <vector>

#include "fdc/raster.hpp"

namespace fdc {

/// Axis-aligned rectangle moving at constant velocity, at fixed depth.
struct ObjectSpec {
    double x = 0, y = 0;    // top-left corner at frame 0, pixels
    int w = 0, h = 0;       // extent, pixels
    double vx = 0, vy = 0;  // velocity, pixels/frame
    double depth = 10;      // meters
};

struct SceneSpec {
    int height = 64, width = 128;
    int length = 16;
    double background_depth = 60;        // meters
    double bg_vx = 0, bg_vy = 0;         // background velocity, pixels/frame
    std::vector<ObjectSpec> objects;     // z-order resolved by depth (closer wins)
};

struct SyntheticFrame {
    FlowField flow;                    // velocity of the topmost cover at each pixel
    DepthMap depth;                    // depth of the topmost cover
    std::vector<InstanceMask> masks;   // visible (topmost) mask per object
};

/// Analytically exact ground-truth sequence. Regenerating with the same
/// spec/seed reproduces it bit-exactly.
struct SyntheticSequence {
    std::vector<SyntheticFrame> frames;
    SceneSpec spec;
    std::uint64_t seed = 0;
};

SyntheticSequence synth_scene(const SceneSpec& spec);

/// Knobs for randomized scene specs. Coherent scenes give every object the
/// background velocity (rigid camera-pan motion), which is the regime where
/// backward warping by the full flow raster is exact.
struct SceneRandomParams {
    int height = 64, width = 128;
    int length = 16;
    int min_objects = 2, max_objects = 4;
    int max_speed = 4;              // per-component, pixels/frame, integer
    int max_bg_speed = 2;
    double min_depth = 5, max_depth = 35;
    double min_bg_depth = 40, max_bg_depth = 80;
    int min_size = 10, max_size = 26;
    double coherent_fraction = 0.25;
    bool keep_in_bounds = true;     // objects stay inside the frame for all frames
};

SceneSpec random_scene_spec(std::uint64_t seed, const SceneRandomParams& params);

inline SyntheticSequence synth_scene(std::uint64_t seed, const SceneRandomParams& params) {
    SyntheticSequence seq = synth_scene(random_scene_spec(seed, params));
    seq.seed = seed;
    return seq;
}

}  // namespace fdc
