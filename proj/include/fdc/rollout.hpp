#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fdc/model.hpp"
#include "fdc/pipeline.hpp"
#include "fdc/raster.hpp"

namespace fdc {

struct RolloutResult {
    int horizon = 0;
    std::vector<FlowField> flows;   // denormalized, pixels
    std::vector<DepthMap> depths;   // denormalized, meters
    int rounds = 0;                 // forward passes performed
    std::int64_t clamped = 0;       // feedback values clamped into range; 0 by construction
};

struct RolloutOptions {
    /// T != K requires mixing observed and predicted frames inside one
    /// feedback window; off by default and rejected as unsupported.
    bool allow_mixed_window = false;
};

/// One normalized 3-channel frame predictor: window [T,3,H,W] -> K frames.
/// The default implementation wraps FlodcastModel::forward; tests substitute
/// oracle stubs. Returned frames are [K,3,H,W] in normalized space.
using FramePredictor = std::function<Tensor(const Tensor& window)>;

FramePredictor model_predictor(const FlodcastModel& model);

/// Recursive inference: each round consumes the latest T frames (observed or
/// previously predicted) and emits the next K. The feedback loop stays in
/// normalized space; denormalization happens only on the returned lists.
RolloutResult autoregress(const FramePredictor& predict, int t_len, int k, const InputWindow& window,
                          int horizon, const NormalizationParams& norm, const RolloutOptions& opts = {});

inline RolloutResult autoregress(const FlodcastModel& model, const InputWindow& window, int horizon,
                                 const NormalizationParams& norm, const RolloutOptions& opts = {}) {
    return autoregress(model_predictor(model), model.config().t, model.config().k, window, horizon, norm, opts);
}

/// Element k (1-based) of the rollout.
std::pair<FlowField, DepthMap> predict_at(const FlodcastModel& model, const InputWindow& window, int k,
                                          const NormalizationParams& norm, const RolloutOptions& opts = {});

}  // namespace fdc
