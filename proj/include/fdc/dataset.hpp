#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fdc/pipeline.hpp"
#include "fdc/raster.hpp"
#include "fdc/synthetic.hpp"

namespace fdc {

/// Key-value manifest at the dataset root. Flow min/max are the global
/// scalars used for normalization, computed over the training set.
struct Manifest {
    double flow_min = -1;
    double flow_max = 1;
    double depth_cap = 150;
    double fps = 17;
    int height = 0;
    int width = 0;

    NormalizationParams norm() const { return NormalizationParams{flow_min, flow_max, depth_cap}; }
};

void write_manifest(const std::filesystem::path& root, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& root);

/// One sequence directory: flow_%04d.fdcr, depth_%04d.fdcr, and optional
/// mask_%04d_%02d.fdcr files.
struct SequenceData {
    std::string id;
    std::vector<FlowField> flows;
    std::vector<DepthMap> depths;
    std::vector<std::vector<InstanceMask>> masks;  // per frame, may be empty
    int length() const { return static_cast<int>(flows.size()); }
};

std::filesystem::path flow_path(const std::filesystem::path& seq_dir, int frame);
std::filesystem::path depth_path(const std::filesystem::path& seq_dir, int frame);
std::filesystem::path mask_path(const std::filesystem::path& seq_dir, int frame, int instance);

void write_sequence(const std::filesystem::path& root, const std::string& id, const SyntheticSequence& seq,
                    bool with_masks = true);
SequenceData load_sequence(const std::filesystem::path& seq_dir, bool with_masks = false);

std::vector<std::string> list_sequences(const std::filesystem::path& root);

}  // namespace fdc
