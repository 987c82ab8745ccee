#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace fdc {

/// Error for malformed on-disk data; the message names the offending field.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Row-major, channel-interleaved float raster (H x W x C), the in-memory
/// twin of the FDC file format.
struct Raster {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> values;  // values[(y*width + x)*channels + c]

    Raster() = default;
    Raster(int h, int w, int c, float fill = 0.f)
        : height(h), width(w), channels(c), values(static_cast<size_t>(h) * w * c, fill) {
        if (h <= 0 || w <= 0 || c <= 0) throw std::invalid_argument("raster dims must be positive");
    }

    float& at(int y, int x, int c = 0) {
        return values[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    float at(int y, int x, int c = 0) const {
        return values[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    std::int64_t pixel_count() const { return static_cast<std::int64_t>(height) * width; }
    bool same_dims(const Raster& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

/// Per-pixel (u,v) displacement in pixels. C=2, u then v.
struct FlowField : Raster {
    FlowField() = default;
    FlowField(int h, int w) : Raster(h, w, 2) {}
    explicit FlowField(Raster r);
    float& u(int y, int x) { return at(y, x, 0); }
    float u(int y, int x) const { return at(y, x, 0); }
    float& v(int y, int x) { return at(y, x, 1); }
    float v(int y, int x) const { return at(y, x, 1); }
};

/// Per-pixel metric depth in meters; 0 marks an invalid measurement. C=1.
struct DepthMap : Raster {
    DepthMap() = default;
    DepthMap(int h, int w) : Raster(h, w, 1) {}
    explicit DepthMap(Raster r);
    float& d(int y, int x) { return at(y, x, 0); }
    float d(int y, int x) const { return at(y, x, 0); }
};

/// Binary per-object mask, values 0.0/1.0 (or probabilities before
/// binarization). C=1.
struct InstanceMask : Raster {
    InstanceMask() = default;
    InstanceMask(int h, int w) : Raster(h, w, 1) {}
    explicit InstanceMask(Raster r);
    int instance_id = 0;
    int frame_index = 0;
};

void validate_finite(const Raster& r, const std::string& what);

// FDC raster file format: magic "FDCR", version u32=1, H u32, W u32, C u32,
// then H*W*C float32 values, row-major, channel-interleaved, little-endian.
void write_raster(const std::filesystem::path& path, const Raster& r);
Raster read_raster(const std::filesystem::path& path);

FlowField read_flow(const std::filesystem::path& path);
DepthMap read_depth(const std::filesystem::path& path);
InstanceMask read_mask(const std::filesystem::path& path);

}  // namespace fdc
