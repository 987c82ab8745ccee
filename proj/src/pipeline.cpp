#include "fdc/pipeline.hpp"

#include <algorithm>
#include <cmath>

namespace fdc {

DepthMap disparity_to_depth(const Raster& disparity, const CameraIntrinsics& cam) {
    if (disparity.height <= 0 || disparity.width <= 0 || disparity.channels != 1)
        throw std::invalid_argument("disparity_to_depth: expected nonempty C=1 raster");
    cam.validate();
    DepthMap out(disparity.height, disparity.width);
    const double fb = cam.focal_length * cam.baseline;
    for (size_t i = 0; i < disparity.values.size(); ++i) {
        const float d = disparity.values[i];
        out.values[i] = (std::isfinite(d) && d > 0.f) ? static_cast<float>(fb / d) : 0.f;
    }
    return out;
}

Raster normalize_depth(const DepthMap& d, const NormalizationParams& p) {
    p.validate();
    Raster out(d.height, d.width, 1);
    const float cap = static_cast<float>(p.depth_cap);
    for (size_t i = 0; i < d.values.size(); ++i) out.values[i] = std::min(d.values[i], cap) / cap;
    return out;
}

DepthMap denormalize_depth(const Raster& n, const NormalizationParams& p) {
    p.validate();
    if (n.channels != 1) throw std::invalid_argument("denormalize_depth: expected C=1 raster");
    DepthMap out(n.height, n.width);
    const float cap = static_cast<float>(p.depth_cap);
    for (size_t i = 0; i < n.values.size(); ++i) {
        const float v = n.values[i];
        if (v < 0.f || v > 1.f)
            throw std::invalid_argument("denormalize_depth: value " + std::to_string(v) + " outside [0,1]");
        out.values[i] = v * cap;
    }
    return out;
}

Raster normalize_flow(const FlowField& f, const NormalizationParams& p, NormStats* stats) {
    p.validate();
    Raster out(f.height, f.width, 2);
    const double lo = p.flow_min, hi = p.flow_max;
    for (size_t i = 0; i < f.values.size(); ++i) {
        double x = f.values[i];
        if (x < lo || x > hi) {
            if (stats) ++stats->clamped;
            x = std::clamp(x, lo, hi);
        }
        out.values[i] = static_cast<float>(normalize_flow_value(x, p));
    }
    return out;
}

FlowField denormalize_flow(const Raster& n, const NormalizationParams& p) {
    p.validate();
    if (n.channels != 2) throw std::invalid_argument("denormalize_flow: expected C=2 raster");
    FlowField out(n.height, n.width);
    for (size_t i = 0; i < n.values.size(); ++i)
        out.values[i] = static_cast<float>(denormalize_flow_value(n.values[i], p));
    return out;
}

Tensor make_frame(const FlowField& flow, const DepthMap& depth, const NormalizationParams& p, NormStats* stats) {
    if (flow.height != depth.height || flow.width != depth.width)
        throw std::invalid_argument("make_frame: flow/depth shape mismatch");
    const int h = flow.height, w = flow.width;
    Tensor frame({3, h, w});
    const Raster nf = normalize_flow(flow, p, stats);
    const Raster nd = normalize_depth(depth, p);
    float* fu = frame.data();
    float* fv = frame.data() + static_cast<std::int64_t>(h) * w;
    float* fd = frame.data() + 2 * static_cast<std::int64_t>(h) * w;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
        fu[i] = nf.values[2 * i];
        fv[i] = nf.values[2 * i + 1];
        fd[i] = nd.values[i];
    }
    return frame;
}

InputWindow build_window(const std::vector<FlowField>& flows, const std::vector<DepthMap>& depths, int t,
                         int t_len, const NormalizationParams& p, NormStats* stats) {
    if (t_len < 1) throw std::invalid_argument("build_window: T must be >= 1");
    if (flows.size() != depths.size()) throw std::invalid_argument("build_window: flow/depth count mismatch");
    if (t < t_len - 1 || t >= static_cast<int>(flows.size()))
        throw std::out_of_range("build_window: insufficient history for t=" + std::to_string(t) +
                                " with T=" + std::to_string(t_len));
    const int h = flows[0].height, w = flows[0].width;
    InputWindow win;
    win.frames = Tensor({t_len, 3, h, w});
    const std::int64_t frame_sz = 3LL * h * w;
    for (int i = 0; i < t_len; ++i) {
        const int src = t - t_len + 1 + i;
        if (flows[src].height != h || flows[src].width != w || depths[src].height != h ||
            depths[src].width != w)
            throw std::invalid_argument("build_window: frames must share one shape");
        Tensor frame = make_frame(flows[src], depths[src], p, stats);
        std::copy_n(frame.data(), frame_sz, win.frames.data() + i * frame_sz);
    }
    return win;
}

Raster resize_bilinear(const Raster& src, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize_bilinear: bad target size");
    Raster out(out_h, out_w, src.channels);
    const double sy = static_cast<double>(src.height) / out_h;
    const double sx = static_cast<double>(src.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
        const int y0 = std::min(static_cast<int>(fy), src.height - 1);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
            const int x0 = std::min(static_cast<int>(fx), src.width - 1);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < src.channels; ++c) {
                const double v = (1 - wy) * ((1 - wx) * src.at(y0, x0, c) + wx * src.at(y0, x1, c)) +
                                 wy * ((1 - wx) * src.at(y1, x0, c) + wx * src.at(y1, x1, c));
                out.at(y, x, c) = static_cast<float>(v);
            }
        }
    }
    return out;
}

FlowField resize_flow(const FlowField& src, int out_h, int out_w) {
    FlowField out(resize_bilinear(src, out_h, out_w));
    const float rx = static_cast<float>(out_w) / src.width;
    const float ry = static_cast<float>(out_h) / src.height;
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            out.u(y, x) *= rx;
            out.v(y, x) *= ry;
        }
    return out;
}

}  // namespace fdc
