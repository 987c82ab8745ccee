#include "fdc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fdc {

std::int64_t EvalMask::count() const {
    std::int64_t n = 0;
    for (auto v : keep) n += v != 0;
    return n;
}

EvalMask depth_eval_mask(const DepthMap& gt, double cap, double crop_bottom_fraction) {
    if (!(cap > 0)) throw std::invalid_argument("depth_eval_mask: cap must be > 0");
    if (crop_bottom_fraction < 0 || crop_bottom_fraction >= 1)
        throw std::invalid_argument("depth_eval_mask: crop fraction must be in [0,1)");
    EvalMask m;
    m.height = gt.height;
    m.width = gt.width;
    m.keep.assign(static_cast<size_t>(gt.height) * gt.width, 0);
    const int row_limit = static_cast<int>((1.0 - crop_bottom_fraction) * gt.height);
    for (int y = 0; y < row_limit; ++y)
        for (int x = 0; x < gt.width; ++x) {
            const float d = gt.d(y, x);
            if (d > 0.f && d <= cap) m.keep[static_cast<size_t>(y) * gt.width + x] = 1;
        }
    return m;
}

DepthReport evaluate_depth(const DepthMap& pred, const DepthMap& gt, const EvalMask& mask, bool clamp_pred) {
    if (!pred.same_dims(gt)) throw std::invalid_argument("evaluate_depth: shape mismatch");
    if (mask.height != gt.height || mask.width != gt.width)
        throw std::invalid_argument("evaluate_depth: mask shape mismatch");
    DepthReport r;
    double abs_rel = 0, sq_rel = 0, sq = 0, dsum = 0, dsq = 0;
    std::int64_t n = 0, in1 = 0, in2 = 0, in3 = 0;
    const double tau1 = 1.25, tau2 = 1.25 * 1.25, tau3 = 1.25 * 1.25 * 1.25;
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x) {
            if (!mask.at(y, x)) continue;
            const double yv = gt.d(y, x);
            double pv = pred.d(y, x);
            if (pv <= 0) {
                if (!clamp_pred)
                    throw std::invalid_argument("evaluate_depth: nonpositive predicted depth under mask");
                pv = 1e-6;
            }
            const double diff = yv - pv;
            abs_rel += std::abs(diff) / yv;
            sq_rel += diff * diff / yv;
            sq += diff * diff;
            const double dl = std::log(pv) - std::log(yv);
            dsum += dl;
            dsq += dl * dl;
            const double ratio = std::max(yv / pv, pv / yv);
            in1 += ratio < tau1;
            in2 += ratio < tau2;
            in3 += ratio < tau3;
            ++n;
        }
    if (n == 0) throw std::runtime_error("evaluate_depth: empty mask, no valid pixels");
    const double nn = static_cast<double>(n);
    r.abs_rel = abs_rel / nn;
    r.sq_rel = sq_rel / nn;
    r.rmse = std::sqrt(sq / nn);
    r.rmse_log = std::max(0.0, dsq / nn - (dsum / nn) * (dsum / nn));
    r.delta1 = in1 / nn;
    r.delta2 = in2 / nn;
    r.delta3 = in3 / nn;
    r.valid_pixel_count = n;
    return r;
}

FlowReport evaluate_flow(const FlowField& pred, const FlowField& gt) {
    if (!pred.same_dims(gt)) throw std::invalid_argument("evaluate_flow: shape mismatch");
    FlowReport r;
    double su = 0, sv = 0, se = 0;
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x) {
            const double du = pred.u(y, x) - gt.u(y, x);
            const double dv = pred.v(y, x) - gt.v(y, x);
            su += du * du;
            sv += dv * dv;
            se += std::sqrt(du * du + dv * dv);
        }
    const double n = static_cast<double>(gt.pixel_count());
    r.mse_u = su / n;
    r.mse_v = sv / n;
    r.mse_mean = (r.mse_u + r.mse_v) / 2;
    r.epe = se / n;
    return r;
}

std::vector<double> default_distance_bins() { return {3, 5, 10, 15, 20, 30, 40, 60, 80, 150}; }

namespace {

void check_edges(const std::vector<double>& edges) {
    if (edges.size() < 2) throw std::invalid_argument("error_by_distance: need at least two bin edges");
    for (size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1])) throw std::invalid_argument("error_by_distance: edges must be ascending");
}

template <class PixelError>
DistanceHistogram bin_errors(const DepthMap& gt_depth, const std::vector<double>& edges, PixelError err) {
    check_edges(edges);
    const size_t nbins = edges.size() - 1;
    std::vector<double> sums(nbins, 0.0);
    std::vector<std::int64_t> counts(nbins, 0);
    std::int64_t valid = 0;
    for (int y = 0; y < gt_depth.height; ++y)
        for (int x = 0; x < gt_depth.width; ++x) {
            const double d = gt_depth.d(y, x);
            if (d <= 0) continue;  // invalid measurement
            ++valid;
            if (d < edges.front() || d >= edges.back()) continue;
            const auto it = std::upper_bound(edges.begin(), edges.end(), d);
            const size_t bin = static_cast<size_t>(it - edges.begin()) - 1;
            sums[bin] += err(y, x);
            ++counts[bin];
        }
    if (valid == 0) throw std::runtime_error("error_by_distance: no valid pixels");
    DistanceHistogram h;
    h.bin_edges = edges;
    h.per_bin_error.resize(nbins);
    h.per_bin_count = counts;
    for (size_t b = 0; b < nbins; ++b)
        h.per_bin_error[b] = counts[b] ? sums[b] / counts[b] : std::numeric_limits<double>::quiet_NaN();
    return h;
}

}  // namespace

DistanceHistogram error_by_distance(const DepthMap& pred, const DepthMap& gt, const DepthMap& gt_depth,
                                    const std::vector<double>& bin_edges) {
    if (!pred.same_dims(gt) || gt.height != gt_depth.height || gt.width != gt_depth.width)
        throw std::invalid_argument("error_by_distance: shape mismatch");
    return bin_errors(gt_depth, bin_edges, [&](int y, int x) {
        const double yv = gt.d(y, x);
        return yv > 0 ? std::abs(yv - pred.d(y, x)) / yv : 0.0;
    });
}

DistanceHistogram error_by_distance(const FlowField& pred, const FlowField& gt, const DepthMap& gt_depth,
                                    const std::vector<double>& bin_edges) {
    if (!pred.same_dims(gt) || gt.height != gt_depth.height || gt.width != gt_depth.width)
        throw std::invalid_argument("error_by_distance: shape mismatch");
    return bin_errors(gt_depth, bin_edges, [&](int y, int x) {
        const double du = pred.u(y, x) - gt.u(y, x);
        const double dv = pred.v(y, x) - gt.v(y, x);
        return std::sqrt(du * du + dv * dv);
    });
}

HistogramAccumulator::HistogramAccumulator(std::vector<double> edges) : bin_edges(std::move(edges)) {
    check_edges(bin_edges);
    sums.assign(bin_edges.size() - 1, 0.0);
    counts.assign(bin_edges.size() - 1, 0);
}

void HistogramAccumulator::add(const DistanceHistogram& h) {
    if (h.bin_edges != bin_edges) throw std::invalid_argument("histogram accumulator: edge mismatch");
    for (size_t b = 0; b < sums.size(); ++b)
        if (h.per_bin_count[b]) {
            sums[b] += h.per_bin_error[b] * static_cast<double>(h.per_bin_count[b]);
            counts[b] += h.per_bin_count[b];
        }
}

DistanceHistogram HistogramAccumulator::finish() const {
    DistanceHistogram h;
    h.bin_edges = bin_edges;
    h.per_bin_count = counts;
    h.per_bin_error.resize(sums.size());
    for (size_t b = 0; b < sums.size(); ++b)
        h.per_bin_error[b] = counts[b] ? sums[b] / counts[b] : std::numeric_limits<double>::quiet_NaN();
    return h;
}

}  // namespace fdc
