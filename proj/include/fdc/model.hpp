#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fdc/autograd.hpp"
#include "fdc/tensor.hpp"

namespace fdc {

/// Input-side ablations: the excluded channels are zeroed inside forward so
/// every caller (training, rollout) sees the same masked view.
enum class Ablation { none, no_flow, no_depth };

inline const char* ablation_name(Ablation a) {
    switch (a) {
        case Ablation::no_flow: return "no_flow";
        case Ablation::no_depth: return "no_depth";
        default: return "none";
    }
}
Ablation ablation_from_name(const std::string& s);

struct ModelConfig {
    int t = 3;
    int k = 3;
    std::array<int, 5> unet_widths{64, 128, 256, 512, 1024};
    std::array<int, 3> head_widths{32, 16, 8};
    int feature_channels = 64;
    int recurrent_hidden_channels = 64;
    int height = 128;
    int width = 256;
    Ablation ablation = Ablation::none;

    static ModelConfig tiny() {
        ModelConfig c;
        c.unet_widths = {8, 16, 32, 64, 128};
        c.feature_channels = 8;
        c.recurrent_hidden_channels = 8;
        c.height = 64;
        c.width = 128;
        return c;
    }

    void validate() const {
        if (t < 1 || k < 1) throw std::invalid_argument("model config: T and K must be >= 1");
        for (int w : unet_widths)
            if (w <= 0) throw std::invalid_argument("model config: UNet widths must be positive");
        for (int w : head_widths)
            if (w <= 0) throw std::invalid_argument("model config: head widths must be positive");
        if (feature_channels <= 0 || recurrent_hidden_channels <= 0)
            throw std::invalid_argument("model config: channel counts must be positive");
        if (height <= 0 || width <= 0 || height % 16 || width % 16)
            throw std::invalid_argument("model config: resolution must be positive and divisible by 16");
    }

    bool operator==(const ModelConfig&) const = default;
};

/// The forecasting network: a shared UNet extracts per-frame features, a
/// ConvLSTM aggregates them over the T input frames, and two convolutional
/// heads emit the K future flows (tanh, channels [u0,v0,u1,v1,...]) and K
/// future depths (sigmoid) in one pass.
template <class S>
class FlodcastModelT {
public:
    struct Output {
        VarT<S> flows;   // [N, 2K, H, W] in [-1,1]
        VarT<S> depths;  // [N, K, H, W] in [0,1]
    };

    FlodcastModelT(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        std::mt19937_64 rng(seed ^ 0xF10DCA57ull);
        const auto& uw = cfg_.unet_widths;
        int prev = 3;
        for (int l = 0; l < 5; ++l) {
            enc_[l][0] = make_conv(rng, uw[l], prev, "unet.enc" + std::to_string(l + 1) + ".conv1");
            enc_[l][1] = make_conv(rng, uw[l], uw[l], "unet.enc" + std::to_string(l + 1) + ".conv2");
            prev = uw[l];
        }
        for (int l = 3; l >= 0; --l) {
            dec_[l][0] = make_conv(rng, uw[l], uw[l + 1], "unet.dec" + std::to_string(l + 1) + ".up");
            dec_[l][1] = make_conv(rng, uw[l], 2 * uw[l], "unet.dec" + std::to_string(l + 1) + ".conv");
        }
        out_conv_ = make_conv(rng, cfg_.feature_channels, uw[0], "unet.out");
        const int hid = cfg_.recurrent_hidden_channels;
        lstm_ = make_conv(rng, 4 * hid, cfg_.feature_channels + hid, "lstm");
        make_head(rng, flow_head_, 2 * cfg_.k, "head.flow");
        make_head(rng, depth_head_, cfg_.k, "head.depth");
    }

    const ModelConfig& config() const { return cfg_; }

    std::vector<std::pair<std::string, VarT<S>>>& named_params() { return params_; }
    const std::vector<std::pair<std::string, VarT<S>>>& named_params() const { return params_; }

    std::int64_t param_count() const {
        std::int64_t n = 0;
        for (const auto& [name, p] : params_) n += p.value().numel();
        return n;
    }

    void zero_grad() {
        for (auto& [name, p] : params_) p.zero_grad();
    }

    /// Encoder-decoder features for a batch of frames: [M,3,H,W] -> [M,F,H,W].
    VarT<S> unet_features(const VarT<S>& x) const {
        VarT<S> cur = x;
        std::array<VarT<S>, 4> skips;
        for (int l = 0; l < 5; ++l) {
            cur = relu(conv2d(cur, enc_[l][0].w, enc_[l][0].b));
            cur = relu(conv2d(cur, enc_[l][1].w, enc_[l][1].b));
            if (l < 4) {
                skips[l] = cur;
                cur = maxpool2(cur);
            }
        }
        for (int l = 3; l >= 0; --l) {
            cur = relu(conv2d(upsample_nearest2(cur), dec_[l][0].w, dec_[l][0].b));
            cur = relu(conv2d(concat_ch(cur, skips[l]), dec_[l][1].w, dec_[l][1].b));
        }
        return relu(conv2d(cur, out_conv_.w, out_conv_.b));
    }
    VarT<S> unet_features(const TensorT<S>& x) const { return unet_features(VarT<S>::constant(x)); }

    /// ConvLSTM over T equally shaped feature rasters, zero-initialized
    /// state; returns the hidden state after the last step.
    VarT<S> recurrent_encode(const std::vector<VarT<S>>& frames) const {
        if (frames.empty()) throw std::invalid_argument("recurrent_encode: no frames");
        const auto& s = frames[0].value().shape();
        for (const auto& f : frames)
            if (f.value().shape() != s)
                throw std::invalid_argument("recurrent_encode: mismatched feature shapes");
        const int hid = cfg_.recurrent_hidden_channels;
        VarT<S> h = VarT<S>::constant(TensorT<S>({s[0], hid, s[2], s[3]}));
        VarT<S> c = h;
        for (const auto& x : frames) {
            VarT<S> gates = conv2d(concat_ch(x, h), lstm_.w, lstm_.b);
            VarT<S> gi = sigmoid(slice_ch(gates, 0, hid));
            VarT<S> gf = sigmoid(slice_ch(gates, hid, hid));
            VarT<S> gg = tanh_act(slice_ch(gates, 2 * hid, hid));
            VarT<S> go = sigmoid(slice_ch(gates, 3 * hid, hid));
            c = add(mul(gf, c), mul(gi, gg));
            h = mul(go, tanh_act(c));
        }
        return h;
    }

    VarT<S> flow_head(const VarT<S>& hidden) const { return tanh_act(head_trunk(flow_head_, hidden)); }
    VarT<S> depth_head(const VarT<S>& hidden) const { return sigmoid(head_trunk(depth_head_, hidden)); }

    /// x: [N,T,3,H,W] normalized input windows.
    Output forward(const TensorT<S>& x) const {
        const auto& s = x.shape();
        if (s.size() != 5 || s[1] != cfg_.t || s[2] != 3 || s[3] != cfg_.height || s[4] != cfg_.width)
            throw std::invalid_argument("forward: input must be [N," + std::to_string(cfg_.t) + ",3," +
                                        std::to_string(cfg_.height) + "," + std::to_string(cfg_.width) +
                                        "], got " + shape_str(s));
        const int n = s[0];
        TensorT<S> stacked({n * cfg_.t, 3, cfg_.height, cfg_.width}, x.storage());
        apply_ablation(stacked);
        VarT<S> feats = unet_features(VarT<S>::constant(stacked));
        std::vector<VarT<S>> steps;
        steps.reserve(static_cast<size_t>(cfg_.t));
        for (int t = 0; t < cfg_.t; ++t) steps.push_back(select_frame(feats, n, cfg_.t, t));
        VarT<S> hidden = recurrent_encode(steps);
        return Output{flow_head(hidden), depth_head(hidden)};
    }

    void apply_ablation(TensorT<S>& frames) const {  // frames: [M,3,H,W]
        if (cfg_.ablation == Ablation::none) return;
        const int m = frames.dim(0);
        const std::int64_t hw = static_cast<std::int64_t>(frames.dim(2)) * frames.dim(3);
        for (int i = 0; i < m; ++i) {
            S* base = frames.data() + static_cast<std::int64_t>(i) * 3 * hw;
            if (cfg_.ablation == Ablation::no_flow) std::fill(base, base + 2 * hw, S(0));
            if (cfg_.ablation == Ablation::no_depth) std::fill(base + 2 * hw, base + 3 * hw, S(0));
        }
    }

    /// Overwrite parameters from named float32 blobs (checkpoint contents).
    void load_state(const std::vector<std::pair<std::string, Tensor>>& blobs);

    /// Parameters as float32 blobs in registration order.
    std::vector<std::pair<std::string, Tensor>> state() const {
        std::vector<std::pair<std::string, Tensor>> out;
        out.reserve(params_.size());
        for (const auto& [name, p] : params_) out.emplace_back(name, p.value().template cast<float>());
        return out;
    }

private:
    struct ConvParam {
        VarT<S> w, b;
    };

    ConvParam make_conv(std::mt19937_64& rng, int cout, int cin, const std::string& name, int kh = 3, int kw = 3) {
        // Kaiming-uniform: keeps ReLU activations from decaying across the
        // deep encoder-decoder stack.
        const double bound = std::sqrt(6.0 / (static_cast<double>(cin) * kh * kw));
        TensorT<S> w({cout, cin, kh, kw});
        for (std::int64_t i = 0; i < w.numel(); ++i) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0,1)
            w[i] = static_cast<S>((2 * u - 1) * bound);
        }
        ConvParam p{VarT<S>::leaf(std::move(w), true), VarT<S>::leaf(TensorT<S>({cout}), true)};
        params_.emplace_back(name + ".w", p.w);
        params_.emplace_back(name + ".b", p.b);
        return p;
    }

    void make_head(std::mt19937_64& rng, std::array<ConvParam, 4>& head, int out_ch, const std::string& name) {
        int prev = cfg_.recurrent_hidden_channels;
        for (int i = 0; i < 3; ++i) {
            head[i] = make_conv(rng, cfg_.head_widths[i], prev, name + ".conv" + std::to_string(i + 1));
            prev = cfg_.head_widths[i];
        }
        head[3] = make_conv(rng, out_ch, prev, name + ".out");
    }

    VarT<S> head_trunk(const std::array<ConvParam, 4>& head, const VarT<S>& hidden) const {
        VarT<S> cur = hidden;
        for (int i = 0; i < 3; ++i) cur = relu(conv2d(cur, head[i].w, head[i].b));
        return conv2d(cur, head[3].w, head[3].b);
    }

    /// Pick frame t of every sample from [N*T,C,H,W] -> [N,C,H,W].
    static VarT<S> select_frame(const VarT<S>& x, int n, int t_len, int t) {
        const auto& s = x.value().shape();
        const std::int64_t chw = static_cast<std::int64_t>(s[1]) * s[2] * s[3];
        TensorT<S> y({n, s[1], s[2], s[3]});
        for (int i = 0; i < n; ++i)
            std::copy_n(x.value().data() + (static_cast<std::int64_t>(i) * t_len + t) * chw, chw,
                        y.data() + static_cast<std::int64_t>(i) * chw);
        auto xn = x.node();
        return detail::make_op<S>(std::move(y), {x}, [xn, n, t_len, t, chw](NodeT<S>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (int i = 0; i < n; ++i) {
                const S* g = self.grad.data() + static_cast<std::int64_t>(i) * chw;
                S* gx = xn->grad.data() + (static_cast<std::int64_t>(i) * t_len + t) * chw;
                for (std::int64_t p = 0; p < chw; ++p) gx[p] += g[p];
            }
        });
    }

    ModelConfig cfg_;
    std::array<std::array<ConvParam, 2>, 5> enc_;
    std::array<std::array<ConvParam, 2>, 4> dec_;  // dec_[l]: {up, post-concat}
    ConvParam out_conv_;
    ConvParam lstm_;
    std::array<ConvParam, 4> flow_head_;
    std::array<ConvParam, 4> depth_head_;
    std::vector<std::pair<std::string, VarT<S>>> params_;
};

template <class S>
void FlodcastModelT<S>::load_state(const std::vector<std::pair<std::string, Tensor>>& blobs) {
    if (blobs.size() != params_.size())
        throw std::runtime_error("checkpoint has " + std::to_string(blobs.size()) + " tensors, model expects " +
                                 std::to_string(params_.size()));
    for (size_t i = 0; i < params_.size(); ++i) {
        if (blobs[i].first != params_[i].first)
            throw std::runtime_error("checkpoint tensor '" + blobs[i].first + "' does not match model parameter '" +
                                     params_[i].first + "'");
        if (blobs[i].second.shape() != params_[i].second.value().shape())
            throw std::runtime_error("checkpoint tensor '" + blobs[i].first + "' has shape " +
                                     shape_str(blobs[i].second.shape()) + ", model expects " +
                                     shape_str(params_[i].second.value().shape()));
        params_[i].second.value() = blobs[i].second.cast<S>();
    }
}

using FlodcastModel = FlodcastModelT<float>;

}  // namespace fdc
