#pragma once

#include <cstdint>
#include <vector>

#include "fdc/raster.hpp"

namespace fdc {

struct DepthReport {
    double abs_rel = 0;
    double sq_rel = 0;
    double rmse = 0;
    double rmse_log = 0;  // variance of log(pred)-log(gt)
    double delta1 = 0, delta2 = 0, delta3 = 0;
    std::int64_t valid_pixel_count = 0;
};

struct FlowReport {
    double mse_u = 0;
    double mse_v = 0;
    double mse_mean = 0;
    double epe = 0;  // pixels
};

/// Per-depth-bin mean error; empty bins keep count 0 and a NaN error (the
/// "null" marker), never a fake 0.
struct DistanceHistogram {
    std::vector<double> bin_edges;
    std::vector<double> per_bin_error;
    std::vector<std::int64_t> per_bin_count;
};

struct EvalMask {
    int height = 0, width = 0;
    std::vector<std::uint8_t> keep;
    bool at(int y, int x) const { return keep[static_cast<size_t>(y) * width + x] != 0; }
    std::int64_t count() const;
};

/// Valid-evaluation mask: gt > 0, gt <= cap, and the bottom crop_bottom
/// fraction of rows removed (car-hood crop).
EvalMask depth_eval_mask(const DepthMap& gt, double cap = 80.0, double crop_bottom_fraction = 0.2);

/// Depth metrics over masked pixels. Nonpositive predictions under the mask
/// are an error unless clamp_pred floors them to 1e-6 m.
DepthReport evaluate_depth(const DepthMap& pred, const DepthMap& gt, const EvalMask& mask,
                           bool clamp_pred = false);

FlowReport evaluate_flow(const FlowField& pred, const FlowField& gt);

std::vector<double> default_distance_bins();  // {3,5,10,15,20,30,40,60,80,150} m

/// AbsRel per pixel binned by ground-truth depth.
DistanceHistogram error_by_distance(const DepthMap& pred, const DepthMap& gt, const DepthMap& gt_depth,
                                    const std::vector<double>& bin_edges);
/// EPE per pixel binned by ground-truth depth.
DistanceHistogram error_by_distance(const FlowField& pred, const FlowField& gt, const DepthMap& gt_depth,
                                    const std::vector<double>& bin_edges);

/// Accumulates per-pixel histogram contributions across frames.
struct HistogramAccumulator {
    std::vector<double> bin_edges;
    std::vector<double> sums;
    std::vector<std::int64_t> counts;
    explicit HistogramAccumulator(std::vector<double> edges);
    void add(const DistanceHistogram& h);
    DistanceHistogram finish() const;
};

}  // namespace fdc
