#include "fdc/seg_forecast.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "fdc/trainer.hpp"

namespace fdc {

Raster warp_mask(const Raster& mask, const FlowField& flow) {
    if (mask.channels != 1) throw std::invalid_argument("warp_mask: mask must have C=1");
    if (mask.height != flow.height || mask.width != flow.width)
        throw std::invalid_argument("warp_mask: mask/flow shape mismatch");
    const int h = mask.height, w = mask.width;
    Raster out(h, w, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double sx = x - flow.u(y, x);
            const double sy = y - flow.v(y, x);
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0;
            const double fy = sy - y0;
            double acc = 0;
            for (int dy = 0; dy <= 1; ++dy)
                for (int dx = 0; dx <= 1; ++dx) {
                    const int yy = y0 + dy, xx = x0 + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    const double wgt = (dy ? fy : 1 - fy) * (dx ? fx : 1 - fx);
                    acc += wgt * mask.at(yy, xx);
                }
            out.at(y, x) = static_cast<float>(acc);
        }
    return out;
}

Raster binarize(const Raster& prob, double threshold) {
    Raster out(prob.height, prob.width, prob.channels);
    for (size_t i = 0; i < prob.values.size(); ++i) out.values[i] = prob.values[i] >= threshold ? 1.f : 0.f;
    return out;
}

Raster warp_chain(const Raster& mask, std::span<const FlowField> flows, double threshold) {
    if (flows.empty()) throw std::invalid_argument("warp_chain: need at least one flow");
    Raster cur = mask;
    for (size_t i = 0; i < flows.size(); ++i) {
        if (i > 0) cur = binarize(cur, threshold);
        cur = warp_mask(cur, flows[i]);
    }
    return cur;
}

DaeTrainLog train_dae(Dae& dae, const std::vector<MaskPair>& pairs, int epochs, double lr, int batch_size,
                      std::uint64_t seed) {
    if (pairs.empty()) throw std::invalid_argument("train_dae: empty training set");
    const int h = pairs[0].noisy.height, w = pairs[0].noisy.width;
    for (const auto& p : pairs)
        if (p.noisy.height != h || p.noisy.width != w || p.clean.height != h || p.clean.width != w)
            throw std::invalid_argument("train_dae: all masks must share one shape");

    Adam<float> opt(dae.named_params(), lr);
    DaeTrainLog log;
    std::vector<size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), size_t{0});
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::mt19937_64 rng(seed * 1000003ull + static_cast<std::uint64_t>(epoch));
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
        double epoch_loss = 0;
        int batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
            const int n = static_cast<int>(end - start);
            Tensor x({n, 1, h, w});
            Tensor target({n, 1, h, w});
            for (int b = 0; b < n; ++b) {
                const auto& pair = pairs[order[start + b]];
                std::copy_n(pair.noisy.values.data(), hw, x.data() + b * hw);
                std::copy_n(pair.clean.values.data(), hw, target.data() + b * hw);
            }
            dae.zero_grad();
            Var out = dae.forward(Var::constant(std::move(x)));
            Var loss = mse_mean(out, target);
            backward(loss);
            opt.step(dae.named_params());
            epoch_loss += loss.value()[0];
            ++batches;
        }
        log.epoch_loss.push_back(epoch_loss / std::max(1, batches));
    }
    return log;
}

double mask_iou(const Raster& a, const Raster& b) {
    if (!a.same_dims(b)) throw std::invalid_argument("mask_iou: shape mismatch");
    std::int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        const bool av = a.values[i] >= 0.5f;
        const bool bv = b.values[i] >= 0.5f;
        inter += av && bv;
        uni += av || bv;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

MaskScore evaluate_masks(const std::vector<std::vector<Raster>>& pred_frames,
                         const std::vector<std::vector<Raster>>& gt_frames) {
    if (pred_frames.size() != gt_frames.size())
        throw std::invalid_argument("evaluate_masks: frame count mismatch");
    MaskScore score;
    double iou_sum = 0;
    std::int64_t tp50 = 0;
    for (size_t f = 0; f < pred_frames.size(); ++f) {
        const auto& preds = pred_frames[f];
        const auto& gts = gt_frames[f];
        struct Cand {
            double iou;
            size_t p, g;
        };
        std::vector<Cand> cands;
        for (size_t p = 0; p < preds.size(); ++p)
            for (size_t g = 0; g < gts.size(); ++g) {
                const double iou = mask_iou(preds[p], gts[g]);
                if (iou > 0) cands.push_back({iou, p, g});
            }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.iou != b.iou) return a.iou > b.iou;
            if (a.p != b.p) return a.p < b.p;
            return a.g < b.g;
        });
        std::vector<char> p_used(preds.size(), 0), g_used(gts.size(), 0);
        std::int64_t matched_here = 0;
        for (const auto& c : cands) {
            if (p_used[c.p] || g_used[c.g]) continue;
            p_used[c.p] = g_used[c.g] = 1;
            ++matched_here;
            iou_sum += c.iou;
            if (c.iou >= 0.5) ++tp50;
        }
        score.matched += matched_here;
        score.false_positives += static_cast<std::int64_t>(preds.size()) - matched_here;
        score.false_negatives += static_cast<std::int64_t>(gts.size()) - matched_here;
    }
    // Sub-threshold greedy matches count against AP50 as both FP and FN.
    const std::int64_t weak = score.matched - tp50;
    const std::int64_t denom = tp50 + score.false_positives + score.false_negatives + 2 * weak;
    if (score.matched == 0 && score.false_positives == 0 && score.false_negatives == 0) {
        score.mean_iou = 1.0;  // both empty: nothing to disagree about
        score.ap50 = 1.0;
    } else {
        score.mean_iou = score.matched ? iou_sum / static_cast<double>(score.matched) : 0.0;
        score.ap50 = denom ? static_cast<double>(tp50) / static_cast<double>(denom) : 0.0;
    }
    return score;
}

Raster salt_pepper(const Raster& mask, double p, std::uint64_t seed) {
    if (p < 0 || p > 1) throw std::invalid_argument("salt_pepper: p must be in [0,1]");
    std::mt19937_64 rng(seed ^ 0x5A17ull);
    Raster out = mask;
    for (auto& v : out.values) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        if (u < p) v = (rng() & 1) ? 1.f : 0.f;
    }
    return out;
}

void save_dae(const std::filesystem::path& path, const Dae& dae) {
    nlohmann::json header{{"format_version", 1}, {"kind", "dae"}};
    nlohmann::json manifest = nlohmann::json::array();
    const auto state = dae.state();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : state) {
        manifest.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.numel()}});
        offset += static_cast<std::uint64_t>(t.numel());
    }
    header["params"] = manifest;
    const std::string text = header.dump();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write DAE checkpoint: " + path.string());
    f.write("FDCD", 4);
    const std::uint64_t hlen = text.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : state)
        f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(sizeof(float) * t.numel()));
    if (!f) throw std::runtime_error("short write on DAE checkpoint: " + path.string());
}

Dae load_dae(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open DAE checkpoint: " + path.string());
    char magic[4];
    f.read(magic, 4);
    if (!f || std::string(magic, 4) != "FDCD") throw FormatError("bad magic in DAE checkpoint: " + path.string());
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    if (!f || hlen > (1ull << 24)) throw FormatError("bad DAE checkpoint header: " + path.string());
    std::string text(static_cast<size_t>(hlen), '\0');
    f.read(text.data(), static_cast<std::streamsize>(text.size()));
    nlohmann::json header = nlohmann::json::parse(text, nullptr, false);
    if (header.is_discarded()) throw FormatError("corrupt DAE checkpoint header: " + path.string());
    std::vector<std::pair<std::string, Tensor>> blobs;
    for (const auto& e : header.at("params")) {
        Tensor t(e.at("shape").get<Shape>());
        f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(sizeof(float) * t.numel()));
        if (!f) throw FormatError("truncated DAE checkpoint: " + path.string());
        blobs.emplace_back(e.at("name").get<std::string>(), std::move(t));
    }
    Dae dae(DaeConfig{}, 0);
    dae.load_state(blobs);
    return dae;
}

}  // namespace fdc
