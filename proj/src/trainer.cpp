#include "fdc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <random>

namespace fdc {

std::vector<TrainingPair> make_training_pairs(const SequenceData& seq, int t_len, int k,
                                              const NormalizationParams& norm) {
    std::vector<TrainingPair> pairs;
    const int len = seq.length();
    if (len < t_len + k) return pairs;
    const int h = seq.flows[0].height, w = seq.flows[0].width;
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;

    // Normalize every frame once, then assemble windows.
    std::vector<Tensor> frames;
    frames.reserve(static_cast<size_t>(len));
    for (int f = 0; f < len; ++f) frames.push_back(make_frame(seq.flows[f], seq.depths[f], norm));

    for (int t = t_len - 1; t + k < len; ++t) {
        TrainingPair pair;
        pair.window = Tensor({t_len, 3, h, w});
        for (int i = 0; i < t_len; ++i)
            std::copy_n(frames[static_cast<size_t>(t - t_len + 1 + i)].data(), 3 * hw,
                        pair.window.data() + static_cast<std::int64_t>(i) * 3 * hw);
        pair.flow_target = Tensor({2 * k, h, w});
        pair.depth_target = Tensor({k, h, w});
        for (int i = 0; i < k; ++i) {
            const Tensor& fut = frames[static_cast<size_t>(t + 1 + i)];
            std::copy_n(fut.data(), 2 * hw, pair.flow_target.data() + static_cast<std::int64_t>(2 * i) * hw);
            std::copy_n(fut.data() + 2 * hw, hw, pair.depth_target.data() + static_cast<std::int64_t>(i) * hw);
        }
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

std::vector<TrainingPair> load_training_pairs(const std::filesystem::path& root, int t_len, int k,
                                              const NormalizationParams& norm) {
    std::vector<TrainingPair> pairs;
    for (const auto& id : list_sequences(root)) {
        auto seq_pairs = make_training_pairs(load_sequence(root / id), t_len, k, norm);
        std::move(seq_pairs.begin(), seq_pairs.end(), std::back_inserter(pairs));
    }
    return pairs;
}

TrainResult train(FlodcastModel& model, const std::vector<TrainingPair>& pairs, const TrainConfig& cfg,
                  const NormalizationParams& norm, int start_epoch, Adam<float>* resume_opt,
                  const StepCallback& on_step) {
    cfg.validate();
    if (pairs.empty()) throw std::invalid_argument("train: empty dataset");
    const auto& mc = model.config();
    const int h = mc.height, w = mc.width, k = mc.k, t_len = mc.t;
    for (const auto& p : pairs)
        if (p.window.dim(0) != t_len || p.window.dim(2) != h || p.window.dim(3) != w ||
            p.flow_target.dim(0) != 2 * k)
            throw std::invalid_argument("train: pair shape does not match model config");

    Adam<float> local_opt(model.named_params(), cfg.learning_rate);
    Adam<float>& opt = resume_opt ? *resume_opt : local_opt;
    std::filesystem::create_directories(cfg.checkpoint_dir);
    std::ofstream log(std::filesystem::path(cfg.checkpoint_dir) / "train.log", std::ios::app);

    // Ablated variants train on the remaining modality's loss alone.
    LossWeights w_eff = cfg.weights;
    if (cfg.ablation == Ablation::no_flow) w_eff.alpha = 0;
    if (cfg.ablation == Ablation::no_depth) w_eff.beta = 0;
    w_eff.validate();

    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    std::vector<size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), size_t{0});

    TrainResult result;
    int global_step = opt.step_count() ? static_cast<int>(opt.step_count()) : 0;
    const auto t0 = std::chrono::steady_clock::now();

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        opt.set_lr(cfg.lr_at(epoch));
        // Permutation derived from (seed, epoch) so resumed runs shuffle identically.
        std::mt19937_64 rng(cfg.seed * 0x100000001B3ull + static_cast<std::uint64_t>(epoch) + 1);
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

        double epoch_loss = 0;
        int batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            const int n = static_cast<int>(end - start);
            Tensor x({n, t_len, 3, h, w});
            Tensor flow_t({n, 2 * k, h, w});
            Tensor depth_t({n, k, h, w});
            for (int b = 0; b < n; ++b) {
                const auto& pair = pairs[order[start + b]];
                std::copy_n(pair.window.data(), static_cast<std::int64_t>(t_len) * 3 * hw,
                            x.data() + static_cast<std::int64_t>(b) * t_len * 3 * hw);
                std::copy_n(pair.flow_target.data(), static_cast<std::int64_t>(2 * k) * hw,
                            flow_t.data() + static_cast<std::int64_t>(b) * 2 * k * hw);
                std::copy_n(pair.depth_target.data(), static_cast<std::int64_t>(k) * hw,
                            depth_t.data() + static_cast<std::int64_t>(b) * k * hw);
            }
            model.zero_grad();
            auto out = model.forward(x);
            Var lf = berhu_mean(out.flows, flow_t);
            Var ld = berhu_mean(out.depths, depth_t);
            Var loss = add(scale(lf, static_cast<float>(w_eff.alpha)), scale(ld, static_cast<float>(w_eff.beta)));
            backward(loss);
            if (cfg.grad_clip > 0) {
                for (auto& [name, p] : model.named_params()) {
                    if (p.grad().numel() != p.value().numel()) continue;
                    for (std::int64_t j = 0; j < p.grad().numel(); ++j)
                        p.node()->grad[j] = std::clamp(p.node()->grad[j], -static_cast<float>(cfg.grad_clip),
                                                       static_cast<float>(cfg.grad_clip));
                }
            }
            if (cfg.weight_decay > 0) {
                for (auto& [name, p] : model.named_params()) {
                    if (p.grad().numel() != p.value().numel()) continue;
                    for (std::int64_t j = 0; j < p.value().numel(); ++j)
                        p.node()->grad[j] += static_cast<float>(cfg.weight_decay) * p.value()[j];
                }
            }
            opt.step(model.named_params());
            ++global_step;
            ++batches;
            epoch_loss += loss.value()[0];

            StepStats stats{epoch, global_step, static_cast<double>(loss.value()[0]),
                            static_cast<double>(lf.value()[0]), static_cast<double>(ld.value()[0])};
            if (on_step) on_step(stats);
            if (log && cfg.log_every > 0 && global_step % cfg.log_every == 0) {
                const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                    std::chrono::steady_clock::now() - t0)
                                    .count();
                log << epoch << " " << global_step << " " << stats.loss << " " << stats.flow_loss << " "
                    << stats.depth_loss << " " << ms << "\n";
            }
        }
        result.epoch_loss.push_back(epoch_loss / std::max(1, batches));

        Checkpoint ckpt;
        ckpt.config = mc;
        ckpt.epoch = epoch + 1;
        ckpt.norm = norm;
        ckpt.params = model.state();
        ckpt.opt_state = opt.state(model.named_params());
        ckpt.adam = opt.meta();
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%04d.fdck", epoch + 1);
        save_checkpoint(std::filesystem::path(cfg.checkpoint_dir) / name, ckpt);
        save_checkpoint(std::filesystem::path(cfg.checkpoint_dir) / "latest.fdck", ckpt);
        result.final_checkpoint = std::filesystem::path(cfg.checkpoint_dir) / "latest.fdck";
        log.flush();
    }
    return result;
}

}  // namespace fdc
