#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>

#include "fdc/tensor.hpp"

namespace fdc {

struct LossWeights {
    double alpha = 10;  // flow term
    double beta = 1;    // depth term
    void validate() const {
        if (alpha < 0 || beta < 0 || (alpha == 0 && beta == 0))
            throw std::invalid_argument("loss weights must be >= 0 and not both zero");
    }
};

/// Reverse Huber over a batch of residuals: c = 0.2*max|x|; per element |x|
/// when |x| <= c, otherwise (x^2+c^2)/(2c); mean over elements. An all-zero
/// batch has c = 0 and the loss is defined as 0.
template <class S>
double berhu(std::span<const S> residuals) {
    if (residuals.empty()) throw std::invalid_argument("berhu on empty residuals");
    double maxabs = 0;
    for (S r : residuals) {
        if (!std::isfinite(static_cast<double>(r))) throw std::invalid_argument("berhu residual not finite");
        maxabs = std::max(maxabs, std::abs(static_cast<double>(r)));
    }
    if (maxabs == 0) return 0;
    const double c = 0.2 * maxabs;
    double acc = 0;
    for (S r : residuals) {
        const double a = std::abs(static_cast<double>(r));
        acc += a <= c ? a : (a * a + c * c) / (2 * c);
    }
    return acc / static_cast<double>(residuals.size());
}

/// BerHu over all elements of the normalized K-step flow block; the
/// threshold comes from this modality's own residuals.
template <class S>
double flow_loss(const TensorT<S>& pred, const TensorT<S>& gt) {
    if (!pred.same_shape(gt)) throw std::invalid_argument("flow_loss shape mismatch");
    std::vector<double> r(static_cast<size_t>(pred.numel()));
    for (std::int64_t i = 0; i < pred.numel(); ++i)
        r[static_cast<size_t>(i)] = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
    return berhu<double>(r);
}

template <class S>
double depth_loss(const TensorT<S>& pred, const TensorT<S>& gt) {
    return flow_loss(pred, gt);  // same BerHu form; c is per-modality because callers pass one modality
}

template <class S>
double total_loss(const TensorT<S>& pred_flows, const TensorT<S>& gt_flows, const TensorT<S>& pred_depths,
                  const TensorT<S>& gt_depths, const LossWeights& w) {
    w.validate();
    return w.alpha * flow_loss(pred_flows, gt_flows) + w.beta * depth_loss(pred_depths, gt_depths);
}

}  // namespace fdc
