#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fdc/rollout.hpp"
#include "fdc/synthetic.hpp"
#include "fdc/trainer.hpp"

using namespace fdc;

namespace {

const NormalizationParams kNorm{-8, 8, 150};

SequenceData scene_data(std::uint64_t seed, int length, int h = 32, int w = 64) {
    SceneRandomParams sp;
    sp.length = length;
    sp.height = h;
    sp.width = w;
    SequenceData data;
    const auto seq = synth_scene(seed, sp);
    data.id = "s" + std::to_string(seed);
    for (const auto& f : seq.frames) {
        data.flows.push_back(f.flow);
        data.depths.push_back(f.depth);
    }
    data.masks.resize(seq.frames.size());
    return data;
}

ModelConfig small_cfg() {
    ModelConfig cfg = ModelConfig::tiny();
    cfg.height = 32;
    cfg.width = 64;
    return cfg;
}

}  // namespace

TEST_CASE("make_training_pairs window counts") {
    CHECK(make_training_pairs(scene_data(1, 6), 3, 3, kNorm).size() == 1);
    CHECK(make_training_pairs(scene_data(1, 10), 3, 3, kNorm).size() == 5);
    CHECK(make_training_pairs(scene_data(1, 5), 3, 3, kNorm).empty());
}

TEST_CASE("training pair targets align with the source frames") {
    const SequenceData d = scene_data(2, 7);
    const auto pairs = make_training_pairs(d, 3, 3, kNorm);
    REQUIRE(pairs.size() == 2);
    // pair 0: window frames 0..2, targets 3..5; check depth channel of target 0
    const Tensor expect = make_frame(d.flows[3], d.depths[3], kNorm);
    const std::int64_t hw = 32 * 64;
    for (std::int64_t i = 0; i < hw; ++i) {
        CHECK(pairs[0].depth_target[i] == expect[2 * hw + i]);
        CHECK(pairs[0].flow_target[i] == expect[i]);            // u of step 1
        CHECK(pairs[0].flow_target[hw + i] == expect[hw + i]);  // v of step 1
    }
}

TEST_CASE("two runs with the same seed produce identical parameters") {
    const auto pairs = make_training_pairs(scene_data(3, 8), 3, 3, kNorm);
    const auto dir = std::filesystem::temp_directory_path() / "fdc_train_det";
    std::filesystem::remove_all(dir);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 2;
    cfg.seed = 11;
    cfg.checkpoint_dir = (dir / "a").string();
    FlodcastModel m1(small_cfg(), 5);
    train(m1, pairs, cfg, kNorm);
    cfg.checkpoint_dir = (dir / "b").string();
    FlodcastModel m2(small_cfg(), 5);
    train(m2, pairs, cfg, kNorm);
    for (size_t i = 0; i < m1.named_params().size(); ++i)
        CHECK(m1.named_params()[i].second.value().storage() == m2.named_params()[i].second.value().storage());
}

TEST_CASE("gradient step with learning rate 0 leaves parameters bit-identical") {
    const auto pairs = make_training_pairs(scene_data(4, 6), 3, 3, kNorm);
    FlodcastModel model(small_cfg(), 6);
    const auto before = model.state();
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.learning_rate = 0;
    cfg.batch_size = 4;
    cfg.checkpoint_dir = (std::filesystem::temp_directory_path() / "fdc_train_lr0").string();
    train(model, pairs, cfg, kNorm);
    const auto after = model.state();
    for (size_t i = 0; i < before.size(); ++i) CHECK(before[i].second.storage() == after[i].second.storage());
}

TEST_CASE("loss decreases over the first 10 steps for most seeds") {
    int improved = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::vector<TrainingPair> pairs;
        for (std::uint64_t s = 0; s < 3; ++s) {
            auto p = make_training_pairs(scene_data(40 + seed * 3 + s, 8), 3, 3, kNorm);
            std::move(p.begin(), p.end(), std::back_inserter(pairs));
        }
        FlodcastModel model(small_cfg(), seed);
        TrainConfig cfg;
        cfg.epochs = 2;  // 9 pairs, batch 2 -> 5 steps/epoch
        cfg.learning_rate = 1e-3;
        cfg.batch_size = 2;
        cfg.seed = seed;
        cfg.checkpoint_dir =
            (std::filesystem::temp_directory_path() / ("fdc_train_dec" + std::to_string(seed))).string();
        std::vector<double> losses;
        train(model, pairs, cfg, kNorm, 0, nullptr, [&](const StepStats& s) { losses.push_back(s.loss); });
        REQUIRE(losses.size() >= 10);
        double first = (losses[0] + losses[1] + losses[2]) / 3;
        double last = (losses[7] + losses[8] + losses[9]) / 3;
        improved += last < first;
    }
    CHECK(improved >= 9);
}

TEST_CASE("resume from a checkpoint reproduces the uninterrupted run") {
    const auto pairs = make_training_pairs(scene_data(5, 9), 3, 3, kNorm);
    const auto dir = std::filesystem::temp_directory_path() / "fdc_train_resume";
    std::filesystem::remove_all(dir);

    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 2;
    cfg.seed = 17;
    cfg.checkpoint_dir = (dir / "full").string();
    FlodcastModel full(small_cfg(), 8);
    train(full, pairs, cfg, kNorm);

    // interrupted: run 2 epochs, then resume for the 3rd from the checkpoint
    cfg.epochs = 2;
    cfg.checkpoint_dir = (dir / "part").string();
    FlodcastModel part(small_cfg(), 8);
    Adam<float> opt(part.named_params(), cfg.learning_rate);
    train(part, pairs, cfg, kNorm, 0, &opt);

    const Checkpoint ckpt = load_checkpoint(std::filesystem::path(cfg.checkpoint_dir) / "latest.fdck");
    REQUIRE(ckpt.epoch == 2);
    FlodcastModel resumed(ckpt.config, 0);
    resumed.load_state(ckpt.params);
    Adam<float> opt2(resumed.named_params(), ckpt.adam->lr);
    opt2.load_state(ckpt.opt_state, *ckpt.adam, resumed.named_params());
    cfg.epochs = 3;
    cfg.checkpoint_dir = (dir / "resumed").string();
    train(resumed, pairs, cfg, kNorm, ckpt.epoch, &opt2);

    for (size_t i = 0; i < full.named_params().size(); ++i)
        CHECK(full.named_params()[i].second.value().storage() ==
              resumed.named_params()[i].second.value().storage());
}

TEST_CASE("ablation training: the excluded head receives zero gradient") {
    const auto pairs = make_training_pairs(scene_data(6, 6), 3, 3, kNorm);
    ModelConfig cfg = small_cfg();
    cfg.ablation = Ablation::no_depth;  // train flow only
    FlodcastModel model(cfg, 9);

    Tensor x({1, 3, 3, 32, 64}, pairs[0].window.storage());
    model.zero_grad();
    auto out = model.forward(x);
    Var lf = berhu_mean(out.flows, Tensor({1, 6, 32, 64}, pairs[0].flow_target.storage()));
    backward(lf);  // flow loss only, as the no_depth trainer does
    bool flow_head_touched = false;
    for (auto& [name, p] : model.named_params()) {
        if (name.rfind("head.depth", 0) == 0) {
            // never part of the loss graph: gradient absent or all zero
            if (p.grad().numel() == p.value().numel())
                for (std::int64_t i = 0; i < p.grad().numel(); ++i) CHECK(p.grad()[i] == 0.f);
        } else if (name.rfind("head.flow", 0) == 0 && p.grad().numel() == p.value().numel()) {
            for (std::int64_t i = 0; i < p.grad().numel(); ++i)
                flow_head_touched = flow_head_touched || p.grad()[i] != 0.f;
        }
    }
    CHECK(flow_head_touched);
}

TEST_CASE("training log lines carry epoch step and loss terms") {
    const auto pairs = make_training_pairs(scene_data(7, 6), 3, 3, kNorm);
    const auto dir = std::filesystem::temp_directory_path() / "fdc_train_log";
    std::filesystem::remove_all(dir);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 1;
    cfg.log_every = 1;
    cfg.checkpoint_dir = dir.string();
    FlodcastModel model(small_cfg(), 10);
    train(model, pairs, cfg, kNorm);
    std::ifstream log(dir / "train.log");
    REQUIRE(log.good());
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) {
        int epoch, step;
        double loss, fl, dl, ms;
        REQUIRE(std::sscanf(line.c_str(), "%d %d %lf %lf %lf %lf", &epoch, &step, &loss, &fl, &dl, &ms) == 6);
        ++lines;
    }
    CHECK(lines == 1);  // one pair, batch 1, one step
}
