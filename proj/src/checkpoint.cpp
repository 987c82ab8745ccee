#include "fdc/checkpoint.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstring>
#include <memory>

namespace fdc {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'F', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

json config_to_json(const ModelConfig& c) {
    return json{{"t", c.t},
                {"k", c.k},
                {"unet_widths", c.unet_widths},
                {"head_widths", c.head_widths},
                {"feature_channels", c.feature_channels},
                {"recurrent_hidden_channels", c.recurrent_hidden_channels},
                {"height", c.height},
                {"width", c.width},
                {"ablation", ablation_name(c.ablation)}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.t = j.at("t");
    c.k = j.at("k");
    c.unet_widths = j.at("unet_widths");
    c.head_widths = j.at("head_widths");
    c.feature_channels = j.at("feature_channels");
    c.recurrent_hidden_channels = j.at("recurrent_hidden_channels");
    c.height = j.at("height");
    c.width = j.at("width");
    c.ablation = ablation_from_name(j.at("ablation"));
    return c;
}

json tensor_manifest(const std::vector<std::pair<std::string, Tensor>>& tensors, std::uint64_t& offset) {
    json arr = json::array();
    for (const auto& [name, t] : tensors) {
        arr.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.numel()}});
        offset += static_cast<std::uint64_t>(t.numel());
    }
    return arr;
}

}  // namespace

Ablation ablation_from_name(const std::string& s) {
    if (s == "none") return Ablation::none;
    if (s == "no_flow") return Ablation::no_flow;
    if (s == "no_depth") return Ablation::no_depth;
    throw std::invalid_argument("unknown ablation: " + s);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::uint64_t offset = 0;
    json header{{"format_version", kVersion},
                {"config", config_to_json(ckpt.config)},
                {"epoch", ckpt.epoch},
                {"norm",
                 {{"flow_min", ckpt.norm.flow_min}, {"flow_max", ckpt.norm.flow_max}, {"depth_cap", ckpt.norm.depth_cap}}},
                {"params", tensor_manifest(ckpt.params, offset)},
                {"opt_state", tensor_manifest(ckpt.opt_state, offset)}};
    if (ckpt.adam) {
        header["optimizer"] = {{"type", "adam"}, {"beta1", ckpt.adam->beta1}, {"beta2", ckpt.adam->beta2},
                               {"eps", ckpt.adam->eps},  {"lr", ckpt.adam->lr},       {"step", ckpt.adam->step}};
    }
    const std::string text = header.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    FilePtr f(std::fopen(path.string().c_str(), "wb"));
    if (!f) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
    auto put = [&](const void* p, size_t n) {
        if (std::fwrite(p, 1, n, f.get()) != n) throw CheckpointError("short write: " + path.string());
    };
    put(kMagic, 4);
    const std::uint32_t ver = kVersion;
    put(&ver, 4);
    const std::uint64_t hlen = text.size();
    put(&hlen, 8);
    put(text.data(), text.size());
    for (const auto* list : {&ckpt.params, &ckpt.opt_state})
        for (const auto& [name, t] : *list) put(t.data(), sizeof(float) * static_cast<size_t>(t.numel()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    FilePtr f(std::fopen(path.string().c_str(), "rb"));
    if (!f) throw CheckpointError("cannot open checkpoint: " + path.string());
    auto get = [&](void* p, size_t n, const char* what) {
        if (std::fread(p, 1, n, f.get()) != n)
            throw CheckpointError("truncated checkpoint (" + std::string(what) + "): " + path.string());
    };
    char magic[4];
    get(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("bad magic in checkpoint: " + path.string());
    std::uint32_t ver = 0;
    get(&ver, 4, "version");
    if (ver != kVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(ver) + ": " + path.string());
    std::uint64_t hlen = 0;
    get(&hlen, 8, "header length");
    if (hlen > (1ull << 24)) throw CheckpointError("oversized checkpoint header: " + path.string());
    std::string text(static_cast<size_t>(hlen), '\0');
    get(text.data(), text.size(), "header");

    json header;
    try {
        header = json::parse(text);
    } catch (const json::exception& e) {
        throw CheckpointError("corrupt checkpoint header (" + std::string(e.what()) + "): " + path.string());
    }

    Checkpoint ckpt;
    try {
        ckpt.config = config_from_json(header.at("config"));
        ckpt.epoch = header.at("epoch");
        const auto& n = header.at("norm");
        ckpt.norm = NormalizationParams{n.at("flow_min"), n.at("flow_max"), n.at("depth_cap")};
        if (header.contains("optimizer")) {
            const auto& o = header.at("optimizer");
            ckpt.adam = AdamMeta{o.at("beta1"), o.at("beta2"), o.at("eps"), o.at("lr"), o.at("step")};
        }
        auto read_list = [&](const json& arr, std::vector<std::pair<std::string, Tensor>>& out) {
            for (const auto& e : arr) {
                Shape shape = e.at("shape").get<Shape>();
                Tensor t(shape);
                get(t.data(), sizeof(float) * static_cast<size_t>(t.numel()), "tensor blob");
                if (t.numel() != e.at("count").get<std::int64_t>())
                    throw CheckpointError("tensor count mismatch for " + e.at("name").get<std::string>());
                out.emplace_back(e.at("name").get<std::string>(), std::move(t));
            }
        };
        read_list(header.at("params"), ckpt.params);
        read_list(header.at("opt_state"), ckpt.opt_state);
    } catch (const json::exception& e) {
        throw CheckpointError("corrupt checkpoint header (" + std::string(e.what()) + "): " + path.string());
    }
    if (std::fgetc(f.get()) != EOF) throw CheckpointError("trailing bytes in checkpoint: " + path.string());
    return ckpt;
}

}  // namespace fdc
