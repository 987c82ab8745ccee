#include "fdc/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fdc {

namespace {

std::string frame_name(const char* stem, int frame) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04d.fdcr", stem, frame);
    return buf;
}

}  // namespace

void write_manifest(const std::filesystem::path& root, const Manifest& m) {
    std::filesystem::create_directories(root);
    std::ofstream out(root / "manifest");
    if (!out) throw FormatError("cannot write manifest under " + root.string());
    out.precision(17);
    out << "flow_min=" << m.flow_min << "\n";
    out << "flow_max=" << m.flow_max << "\n";
    out << "depth_cap=" << m.depth_cap << "\n";
    out << "fps=" << m.fps << "\n";
    out << "resolution=" << m.height << "x" << m.width << "\n";
}

Manifest read_manifest(const std::filesystem::path& root) {
    std::ifstream in(root / "manifest");
    if (!in) throw FormatError("missing manifest in " + root.string());
    Manifest m;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("malformed manifest line: " + line);
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        try {
            if (key == "flow_min")
                m.flow_min = std::stod(val);
            else if (key == "flow_max")
                m.flow_max = std::stod(val);
            else if (key == "depth_cap")
                m.depth_cap = std::stod(val);
            else if (key == "fps")
                m.fps = std::stod(val);
            else if (key == "resolution") {
                const auto x = val.find('x');
                if (x == std::string::npos) throw FormatError("malformed manifest resolution: " + val);
                m.height = std::stoi(val.substr(0, x));
                m.width = std::stoi(val.substr(x + 1));
            } else {
                throw FormatError("unknown manifest key: " + key);
            }
        } catch (const std::invalid_argument&) {
            throw FormatError("malformed manifest value for " + key + ": " + val);
        }
    }
    if (!(m.flow_min < m.flow_max)) throw FormatError("manifest flow_min must be < flow_max");
    if (!(m.depth_cap > 0)) throw FormatError("manifest depth_cap must be > 0");
    return m;
}

std::filesystem::path flow_path(const std::filesystem::path& seq_dir, int frame) {
    return seq_dir / frame_name("flow", frame);
}
std::filesystem::path depth_path(const std::filesystem::path& seq_dir, int frame) {
    return seq_dir / frame_name("depth", frame);
}
std::filesystem::path mask_path(const std::filesystem::path& seq_dir, int frame, int instance) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "mask_%04d_%02d.fdcr", frame, instance);
    return seq_dir / buf;
}

void write_sequence(const std::filesystem::path& root, const std::string& id, const SyntheticSequence& seq,
                    bool with_masks) {
    const auto dir = root / id;
    std::filesystem::create_directories(dir);
    for (size_t f = 0; f < seq.frames.size(); ++f) {
        const auto& frame = seq.frames[f];
        write_raster(flow_path(dir, static_cast<int>(f)), frame.flow);
        write_raster(depth_path(dir, static_cast<int>(f)), frame.depth);
        if (with_masks)
            for (size_t i = 0; i < frame.masks.size(); ++i)
                write_raster(mask_path(dir, static_cast<int>(f), static_cast<int>(i)), frame.masks[i]);
    }
}

SequenceData load_sequence(const std::filesystem::path& seq_dir, bool with_masks) {
    SequenceData data;
    data.id = seq_dir.filename().string();
    for (int f = 0;; ++f) {
        const auto fp = flow_path(seq_dir, f);
        const auto dp = depth_path(seq_dir, f);
        const bool have_flow = std::filesystem::exists(fp);
        const bool have_depth = std::filesystem::exists(dp);
        if (!have_flow && !have_depth) break;
        if (!have_flow || !have_depth)
            throw FormatError("sequence " + data.id + " frame " + std::to_string(f) +
                              " has unpaired flow/depth rasters");
        data.flows.push_back(read_flow(fp));
        data.depths.push_back(read_depth(dp));
        std::vector<InstanceMask> frame_masks;
        if (with_masks) {
            for (int i = 0;; ++i) {
                const auto mp = mask_path(seq_dir, f, i);
                if (!std::filesystem::exists(mp)) break;
                InstanceMask m = read_mask(mp);
                m.instance_id = i;
                m.frame_index = f;
                frame_masks.push_back(std::move(m));
            }
        }
        data.masks.push_back(std::move(frame_masks));
    }
    if (data.flows.empty()) throw FormatError("sequence directory has no frames: " + seq_dir.string());
    return data;
}

std::vector<std::string> list_sequences(const std::filesystem::path& root) {
    std::vector<std::string> ids;
    if (!std::filesystem::is_directory(root)) throw FormatError("dataset root is not a directory: " + root.string());
    for (const auto& entry : std::filesystem::directory_iterator(root))
        if (entry.is_directory()) ids.push_back(entry.path().filename().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace fdc
