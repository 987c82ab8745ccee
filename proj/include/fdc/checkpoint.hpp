#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fdc/model.hpp"
#include "fdc/pipeline.hpp"

namespace fdc {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AdamMeta {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lr = 1e-4;
    std::int64_t step = 0;
};

/// Everything needed to resume or rerun: structured header (config, epoch,
/// normalization) plus named float32 parameter blobs and, when training,
/// the optimizer state.
struct Checkpoint {
    ModelConfig config;
    int epoch = 0;
    NormalizationParams norm;
    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, Tensor>> opt_state;
    std::optional<AdamMeta> adam;
};

// FDCK archive: magic "FDCK", version u32=1, u64 header length, JSON header
// (config, epoch, norm params, tensor manifest with offsets), then raw
// little-endian float32 blobs. Key names are stable; see README.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fdc
