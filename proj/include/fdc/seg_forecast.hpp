#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fdc/autograd.hpp"
#include "fdc/raster.hpp"

namespace fdc {

/// Backward warp with bilinear sampling: out(p) = mask(p - flow(p)).
/// Out-of-bounds samples read 0. Flow is in pixel units (denormalized).
Raster warp_mask(const Raster& mask, const FlowField& flow);

/// value >= threshold -> 1, else 0.
Raster binarize(const Raster& prob, double threshold = 0.5);

/// Iterated warp over an ordered flow list, re-binarizing between steps so
/// intermediate masks stay binary; the final step is returned as sampled.
Raster warp_chain(const Raster& mask, std::span<const FlowField> flows, double threshold = 0.5);

struct DaeConfig {
    std::array<int, 3> encoder_widths{32, 64, 128};
    std::array<int, 3> decoder_widths{128, 64, 32};
    double binarize_threshold = 0.5;
    void validate() const {
        for (int w : encoder_widths)
            if (w <= 0) throw std::invalid_argument("DAE widths must be positive");
        for (int w : decoder_widths)
            if (w <= 0) throw std::invalid_argument("DAE widths must be positive");
        if (!(binarize_threshold > 0 && binarize_threshold < 1))
            throw std::invalid_argument("DAE binarize threshold must be in (0,1)");
    }
};

/// Mask-refinement denoising autoencoder: three Conv-ReLU-MaxPool stages down,
/// three Conv-ReLU-UpSample stages back, single-channel 3x3 sigmoid output.
/// Input resolution must divide by 8.
template <class S>
class DaeT {
public:
    DaeT(DaeConfig cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        std::mt19937_64 rng(seed ^ 0xDAEDAEull);
        int prev = 1;
        for (int i = 0; i < 3; ++i) {
            enc_[i] = make_conv(rng, cfg_.encoder_widths[i], prev, "dae.enc" + std::to_string(i + 1));
            prev = cfg_.encoder_widths[i];
        }
        for (int i = 0; i < 3; ++i) {
            dec_[i] = make_conv(rng, cfg_.decoder_widths[i], prev, "dae.dec" + std::to_string(i + 1));
            prev = cfg_.decoder_widths[i];
        }
        out_ = make_conv(rng, 1, prev, "dae.out");
    }

    const DaeConfig& config() const { return cfg_; }

    /// x: [N,1,H,W] in [0,1] -> probabilities (0,1), same size.
    VarT<S> forward(const VarT<S>& x) const {
        const auto& s = x.value().shape();
        if (s.size() != 4 || s[1] != 1 || s[2] % 8 || s[3] % 8)
            throw std::invalid_argument("dae forward: input must be [N,1,H,W] with H,W divisible by 8, got " +
                                        shape_str(s));
        VarT<S> cur = x;
        for (int i = 0; i < 3; ++i) cur = maxpool2(relu(conv2d(cur, enc_[i].w, enc_[i].b)));
        for (int i = 0; i < 3; ++i) cur = upsample_nearest2(relu(conv2d(cur, dec_[i].w, dec_[i].b)));
        return sigmoid(conv2d(cur, out_.w, out_.b));
    }

    Raster refine(const Raster& mask) const {
        if (mask.channels != 1) throw std::invalid_argument("dae refine: mask must have C=1");
        NoGradGuard ng;
        TensorT<S> x({1, 1, mask.height, mask.width});
        for (size_t i = 0; i < mask.values.size(); ++i) x[static_cast<std::int64_t>(i)] = static_cast<S>(mask.values[i]);
        VarT<S> y = forward(VarT<S>::constant(std::move(x)));
        Raster out(mask.height, mask.width, 1);
        for (size_t i = 0; i < out.values.size(); ++i) out.values[i] = static_cast<float>(y.value()[static_cast<std::int64_t>(i)]);
        return out;
    }

    std::vector<std::pair<std::string, VarT<S>>>& named_params() { return params_; }
    const std::vector<std::pair<std::string, VarT<S>>>& named_params() const { return params_; }

    void zero_grad() {
        for (auto& [name, p] : params_) p.zero_grad();
    }

    std::vector<std::pair<std::string, Tensor>> state() const {
        std::vector<std::pair<std::string, Tensor>> out;
        for (const auto& [name, p] : params_) out.emplace_back(name, p.value().template cast<float>());
        return out;
    }
    void load_state(const std::vector<std::pair<std::string, Tensor>>& blobs) {
        if (blobs.size() != params_.size()) throw std::runtime_error("DAE state size mismatch");
        for (size_t i = 0; i < params_.size(); ++i) {
            if (blobs[i].first != params_[i].first || blobs[i].second.shape() != params_[i].second.value().shape())
                throw std::runtime_error("DAE state tensor mismatch at " + blobs[i].first);
            params_[i].second.value() = blobs[i].second.cast<S>();
        }
    }

private:
    struct ConvParam {
        VarT<S> w, b;
    };
    ConvParam make_conv(std::mt19937_64& rng, int cout, int cin, const std::string& name) {
        const double bound = std::sqrt(6.0 / (9.0 * cin));
        TensorT<S> w({cout, cin, 3, 3});
        for (std::int64_t i = 0; i < w.numel(); ++i) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            w[i] = static_cast<S>((2 * u - 1) * bound);
        }
        ConvParam p{VarT<S>::leaf(std::move(w), true), VarT<S>::leaf(TensorT<S>({cout}), true)};
        params_.emplace_back(name + ".w", p.w);
        params_.emplace_back(name + ".b", p.b);
        return p;
    }

    DaeConfig cfg_;
    std::array<ConvParam, 3> enc_;
    std::array<ConvParam, 3> dec_;
    ConvParam out_;
    std::vector<std::pair<std::string, VarT<S>>> params_;
};

using Dae = DaeT<float>;

struct MaskPair {
    Raster noisy;  // warped (and possibly corrupted) input mask
    Raster clean;  // ground-truth future mask
};

struct DaeTrainLog {
    std::vector<double> epoch_loss;
};

/// One training phase: per-pixel MSE, Adam. The paper's recipe is two calls,
/// 3 epochs on short-term warps then 3 more on mid-term ones.
DaeTrainLog train_dae(Dae& dae, const std::vector<MaskPair>& pairs, int epochs, double lr = 1e-4,
                      int batch_size = 8, std::uint64_t seed = 0);

struct MaskScore {
    double mean_iou = 0;
    double ap50 = 0;
    std::int64_t matched = 0, false_positives = 0, false_negatives = 0;
};

double mask_iou(const Raster& a, const Raster& b);

/// Greedy one-to-one matching by IoU; AP50 is the confidence-free ratio
/// TP/(TP+FP+FN) at IoU >= 0.5, mean IoU averages the matched pairs.
MaskScore evaluate_masks(const std::vector<std::vector<Raster>>& pred_frames,
                         const std::vector<std::vector<Raster>>& gt_frames);

/// Flip each pixel to 1 (salt) or 0 (pepper) with probability p, seeded.
Raster salt_pepper(const Raster& mask, double p, std::uint64_t seed);

void save_dae(const std::filesystem::path& path, const Dae& dae);
Dae load_dae(const std::filesystem::path& path);

}  // namespace fdc
