#include "fdc/rollout.hpp"

#include <algorithm>
#include <deque>

namespace fdc {

FramePredictor model_predictor(const FlodcastModel& model) {
    return [&model](const Tensor& window) {
        NoGradGuard ng;
        const int t = window.dim(0), h = window.dim(2), w = window.dim(3);
        Tensor batched({1, t, 3, h, w}, window.storage());
        auto out = model.forward(batched);
        const int k = model.config().k;
        const std::int64_t hw = static_cast<std::int64_t>(h) * w;
        Tensor frames({k, 3, h, w});
        const auto& flows = out.flows.value();    // [1,2K,H,W]
        const auto& depths = out.depths.value();  // [1,K,H,W]
        for (int i = 0; i < k; ++i) {
            std::copy_n(flows.data() + (2 * i) * hw, 2 * hw, frames.data() + static_cast<std::int64_t>(i) * 3 * hw);
            std::copy_n(depths.data() + i * hw, hw, frames.data() + static_cast<std::int64_t>(i) * 3 * hw + 2 * hw);
        }
        return frames;
    };
}

RolloutResult autoregress(const FramePredictor& predict, int t_len, int k, const InputWindow& window,
                          int horizon, const NormalizationParams& norm, const RolloutOptions& opts) {
    if (horizon < 1) throw std::invalid_argument("autoregress: horizon must be >= 1");
    norm.validate();
    if (window.t_len() != t_len) throw std::invalid_argument("autoregress: window length does not match T");
    if (t_len != k && horizon > k && !opts.allow_mixed_window)
        throw std::runtime_error(
            "autoregress: T != K with horizon > K needs mixed observed/predicted feedback windows, which is "
            "unsupported unless explicitly enabled");

    const int h = window.height(), w = window.width();
    const std::int64_t frame_sz = 3LL * h * w;

    RolloutResult result;
    result.horizon = horizon;
    result.rounds = (horizon + k - 1) / k;

    std::deque<Tensor> history;  // last T normalized frames
    for (int t = 0; t < t_len; ++t) {
        Tensor f({3, h, w});
        std::copy_n(window.frames.data() + t * frame_sz, frame_sz, f.data());
        history.push_back(std::move(f));
    }

    for (int round = 0; round < result.rounds; ++round) {
        Tensor win({t_len, 3, h, w});
        for (int t = 0; t < t_len; ++t)
            std::copy_n(history[static_cast<size_t>(t)].data(), frame_sz, win.data() + t * frame_sz);
        Tensor preds = predict(win);  // [K,3,H,W]
        if (preds.rank() != 4 || preds.dim(0) != k || preds.dim(1) != 3 || preds.dim(2) != h || preds.dim(3) != w)
            throw std::runtime_error("autoregress: predictor returned unexpected shape " + shape_str(preds.shape()));
        for (int i = 0; i < k; ++i) {
            Tensor f({3, h, w});
            std::copy_n(preds.data() + static_cast<std::int64_t>(i) * frame_sz, frame_sz, f.data());
            // tanh/sigmoid outputs are range-bounded by construction; count
            // (and repair) any violation rather than letting it drift.
            const std::int64_t hw = static_cast<std::int64_t>(h) * w;
            for (std::int64_t p = 0; p < 2 * hw; ++p)
                if (f[p] < -1.f || f[p] > 1.f) {
                    f[p] = std::clamp(f[p], -1.f, 1.f);
                    ++result.clamped;
                }
            for (std::int64_t p = 2 * hw; p < 3 * hw; ++p)
                if (f[p] < 0.f || f[p] > 1.f) {
                    f[p] = std::clamp(f[p], 0.f, 1.f);
                    ++result.clamped;
                }
            history.push_back(std::move(f));
            history.pop_front();

            if (static_cast<int>(result.flows.size()) >= horizon) continue;
            const Tensor& nf = history.back();
            Raster flow_n(h, w, 2);
            Raster depth_n(h, w, 1);
            for (std::int64_t p = 0; p < hw; ++p) {
                flow_n.values[2 * p] = nf[p];
                flow_n.values[2 * p + 1] = nf[hw + p];
                depth_n.values[p] = nf[2 * hw + p];
            }
            result.flows.push_back(denormalize_flow(flow_n, norm));
            result.depths.push_back(denormalize_depth(depth_n, norm));
        }
    }
    return result;
}

std::pair<FlowField, DepthMap> predict_at(const FlodcastModel& model, const InputWindow& window, int k,
                                          const NormalizationParams& norm, const RolloutOptions& opts) {
    RolloutResult r = autoregress(model, window, k, norm, opts);
    return {std::move(r.flows.back()), std::move(r.depths.back())};
}

}  // namespace fdc
