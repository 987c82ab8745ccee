#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fdc/autograd.hpp"
#include "fdc/checkpoint.hpp"
#include "fdc/dataset.hpp"
#include "fdc/losses.hpp"
#include "fdc/model.hpp"
#include "fdc/pipeline.hpp"

namespace fdc {

template <class S>
class Adam {
public:
    Adam(const std::vector<std::pair<std::string, VarT<S>>>& params, double lr, double beta1 = 0.9,
         double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& [name, p] : params) {
            m_.emplace_back(p.value().shape());
            v_.emplace_back(p.value().shape());
        }
    }

    void step(std::vector<std::pair<std::string, VarT<S>>>& params) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i].second;
            if (p.grad().numel() != p.value().numel()) continue;  // never touched by backward
            TensorT<S>& m = m_[i];
            TensorT<S>& v = v_[i];
            const std::int64_t n = p.value().numel();
            for (std::int64_t j = 0; j < n; ++j) {
                const double g = static_cast<double>(p.grad()[j]);
                const double mj = beta1_ * m[j] + (1 - beta1_) * g;
                const double vj = beta2_ * v[j] + (1 - beta2_) * g * g;
                m[j] = static_cast<S>(mj);
                v[j] = static_cast<S>(vj);
                p.value()[j] -= static_cast<S>(lr_ * (mj / bc1) / (std::sqrt(vj / bc2) + eps_));
            }
        }
    }

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    std::int64_t step_count() const { return t_; }

    AdamMeta meta() const { return AdamMeta{beta1_, beta2_, eps_, lr_, t_}; }

    std::vector<std::pair<std::string, Tensor>> state(
        const std::vector<std::pair<std::string, VarT<S>>>& params) const {
        std::vector<std::pair<std::string, Tensor>> out;
        for (size_t i = 0; i < params.size(); ++i) {
            out.emplace_back("adam.m." + params[i].first, m_[i].template cast<float>());
            out.emplace_back("adam.v." + params[i].first, v_[i].template cast<float>());
        }
        return out;
    }

    void load_state(const std::vector<std::pair<std::string, Tensor>>& blobs, const AdamMeta& meta,
                    const std::vector<std::pair<std::string, VarT<S>>>& params) {
        if (blobs.size() != 2 * params.size()) throw std::runtime_error("optimizer state size mismatch");
        for (size_t i = 0; i < params.size(); ++i) {
            if (blobs[2 * i].first != "adam.m." + params[i].first ||
                blobs[2 * i + 1].first != "adam.v." + params[i].first)
                throw std::runtime_error("optimizer state name mismatch at " + blobs[2 * i].first);
            m_[i] = blobs[2 * i].second.cast<S>();
            v_[i] = blobs[2 * i + 1].second.cast<S>();
        }
        beta1_ = meta.beta1;
        beta2_ = meta.beta2;
        eps_ = meta.eps;
        lr_ = meta.lr;
        t_ = meta.step;
    }

private:
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<TensorT<S>> m_, v_;
};

enum class LrSchedule { constant, cosine };

struct TrainConfig {
    int epochs = 30;
    double learning_rate = 1e-4;
    int batch_size = 12;
    std::uint64_t seed = 0;
    LossWeights weights;
    std::string dataset_root;
    std::string checkpoint_dir;
    int log_every = 10;
    Ablation ablation = Ablation::none;
    // Optional knobs, all off by default.
    double weight_decay = 0;
    double grad_clip = 0;
    LrSchedule lr_schedule = LrSchedule::constant;
    double lr_min = 0;  // cosine floor

    double lr_at(int epoch) const {
        if (lr_schedule == LrSchedule::constant || epochs <= 1) return learning_rate;
        const double t = static_cast<double>(epoch) / (epochs - 1);
        return lr_min + 0.5 * (learning_rate - lr_min) * (1 + std::cos(3.14159265358979323846 * t));
    }

    void validate() const {
        if (epochs <= 0 || batch_size <= 0 || !(learning_rate >= 0))
            throw std::invalid_argument("train config: epochs, batch size and learning rate must be positive");
        if (lr_min < 0 || lr_min > learning_rate)
            throw std::invalid_argument("train config: lr_min must be in [0, learning_rate]");
        weights.validate();
    }
};

/// One supervised example: T normalized input frames and the K future
/// normalized targets, laid out to match the model's head channels.
struct TrainingPair {
    Tensor window;        // [T,3,H,W]
    Tensor flow_target;   // [2K,H,W], channels u0,v0,u1,v1,...
    Tensor depth_target;  // [K,H,W]
};

/// Sliding windows with stride 1; sequences shorter than T+K yield none.
std::vector<TrainingPair> make_training_pairs(const SequenceData& seq, int t_len, int k,
                                              const NormalizationParams& norm);

struct StepStats {
    int epoch = 0;
    int step = 0;  // global step
    double loss = 0, flow_loss = 0, depth_loss = 0;
};

struct TrainResult {
    std::filesystem::path final_checkpoint;
    std::vector<double> epoch_loss;
};

using StepCallback = std::function<void(const StepStats&)>;

/// Full training run per the configured recipe: shuffled batches from a
/// per-epoch seed permutation, BerHu compound loss, Adam updates, one
/// checkpoint per epoch plus `latest.fdck`, append-only text log.
TrainResult train(FlodcastModel& model, const std::vector<TrainingPair>& pairs, const TrainConfig& cfg,
                  const NormalizationParams& norm, int start_epoch = 0, Adam<float>* resume_opt = nullptr,
                  const StepCallback& on_step = nullptr);

/// Load every sequence under the dataset root and window it.
std::vector<TrainingPair> load_training_pairs(const std::filesystem::path& root, int t_len, int k,
                                              const NormalizationParams& norm);

}  // namespace fdc
