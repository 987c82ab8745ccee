#pragma once

#include <cstdint>
#include <vector>

#include "fdc/raster.hpp"
#include "fdc/tensor.hpp"

namespace fdc {

struct CameraIntrinsics {
    double focal_length = 0;  // pixels
    double baseline = 0;      // meters
    void validate() const {
        if (focal_length <= 0 || baseline <= 0)
            throw std::invalid_argument("camera intrinsics must be strictly positive");
    }
};

/// Min-max normalization constants. Flow min/max are one global scalar pair
/// shared by u and v, taken from the dataset manifest; depth is capped then
/// divided by the cap.
struct NormalizationParams {
    double flow_min = -1;
    double flow_max = 1;
    double depth_cap = 150;  // meters
    void validate() const {
        if (!(flow_min < flow_max)) throw std::invalid_argument("flow_min must be < flow_max");
        if (!(depth_cap > 0)) throw std::invalid_argument("depth_cap must be > 0");
    }
};

/// Counts values clamped into range while normalizing raw external data.
/// Model outputs are range-bounded by construction and never clamp.
struct NormStats {
    std::int64_t clamped = 0;
};

/// D = f*b/d; zero or invalid disparity maps to depth 0.
DepthMap disparity_to_depth(const Raster& disparity, const CameraIntrinsics& cam);

/// min(d, cap)/cap into [0,1]; invalid zeros stay 0.
Raster normalize_depth(const DepthMap& d, const NormalizationParams& p);
/// Inverse of normalize_depth for inputs within [0,1].
DepthMap denormalize_depth(const Raster& n, const NormalizationParams& p);

/// Affine map [flow_min, flow_max] -> [-1,1] on both channels. Out-of-range
/// raw values are clamped and counted.
Raster normalize_flow(const FlowField& f, const NormalizationParams& p, NormStats* stats = nullptr);
FlowField denormalize_flow(const Raster& n, const NormalizationParams& p);

inline double normalize_flow_value(double x, const NormalizationParams& p) {
    return 2.0 * (x - p.flow_min) / (p.flow_max - p.flow_min) - 1.0;
}
inline double denormalize_flow_value(double n, const NormalizationParams& p) {
    return (n + 1.0) * 0.5 * (p.flow_max - p.flow_min) + p.flow_min;
}

/// T stacked (u,v,d) frames, normalized, ready for the model. Layout
/// [T,3,H,W]; channels 0-1 hold flow in [-1,1], channel 2 depth in [0,1].
struct InputWindow {
    Tensor frames;
    int t_len() const { return frames.dim(0); }
    int height() const { return frames.dim(2); }
    int width() const { return frames.dim(3); }
};

/// Normalize one (flow, depth) pair into a 3-channel planar frame [3,H,W].
Tensor make_frame(const FlowField& flow, const DepthMap& depth, const NormalizationParams& p,
                  NormStats* stats = nullptr);

/// Window of the T frames ending at index t (inclusive), in temporal order.
InputWindow build_window(const std::vector<FlowField>& flows, const std::vector<DepthMap>& depths, int t,
                         int t_len, const NormalizationParams& p, NormStats* stats = nullptr);

/// Bilinear resize; flow variant rescales (u,v) by the resize ratio since
/// displacements live in pixel units.
Raster resize_bilinear(const Raster& src, int out_h, int out_w);
FlowField resize_flow(const FlowField& src, int out_h, int out_w);

}  // namespace fdc
