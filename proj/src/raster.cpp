#include "fdc/raster.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <memory>

namespace fdc {

namespace {

constexpr char kMagic[4] = {'F', 'D', 'C', 'R'};
constexpr std::uint32_t kVersion = 1;
// Generous sanity bound on a single dimension; catches corrupt headers
// before a huge allocation.
constexpr std::uint32_t kMaxDim = 1u << 20;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint32_t read_u32(std::FILE* f, const std::filesystem::path& path, const char* field) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4)
        throw FormatError("truncated raster file (while reading " + std::string(field) + "): " + path.string());
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

void write_u32(std::FILE* f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    if (std::fwrite(b, 1, 4, f) != 4) throw FormatError("short write on raster file");
}

bool host_is_little_endian() {
    const std::uint32_t probe = 1;
    return *reinterpret_cast<const unsigned char*>(&probe) == 1;
}

}  // namespace

FlowField::FlowField(Raster r) {
    if (r.channels != 2) throw FormatError("flow raster must have C=2, got C=" + std::to_string(r.channels));
    static_cast<Raster&>(*this) = std::move(r);
}

DepthMap::DepthMap(Raster r) {
    if (r.channels != 1) throw FormatError("depth raster must have C=1, got C=" + std::to_string(r.channels));
    static_cast<Raster&>(*this) = std::move(r);
}

InstanceMask::InstanceMask(Raster r) {
    if (r.channels != 1) throw FormatError("mask raster must have C=1, got C=" + std::to_string(r.channels));
    static_cast<Raster&>(*this) = std::move(r);
}

void validate_finite(const Raster& r, const std::string& what) {
    for (float v : r.values)
        if (!std::isfinite(v)) throw std::invalid_argument(what + " contains non-finite values");
}

void write_raster(const std::filesystem::path& path, const Raster& r) {
    if (r.height <= 0 || r.width <= 0 || r.channels <= 0)
        throw std::invalid_argument("write_raster: empty raster");
    FilePtr f(std::fopen(path.string().c_str(), "wb"));
    if (!f) throw FormatError("cannot open raster file for writing: " + path.string());
    if (std::fwrite(kMagic, 1, 4, f.get()) != 4) throw FormatError("short write on raster file");
    write_u32(f.get(), kVersion);
    write_u32(f.get(), static_cast<std::uint32_t>(r.height));
    write_u32(f.get(), static_cast<std::uint32_t>(r.width));
    write_u32(f.get(), static_cast<std::uint32_t>(r.channels));
    if (host_is_little_endian()) {
        if (std::fwrite(r.values.data(), sizeof(float), r.values.size(), f.get()) != r.values.size())
            throw FormatError("short write on raster payload: " + path.string());
    } else {
        for (float v : r.values) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            write_u32(f.get(), bits);
        }
    }
}

Raster read_raster(const std::filesystem::path& path) {
    FilePtr f(std::fopen(path.string().c_str(), "rb"));
    if (!f) throw FormatError("cannot open raster file: " + path.string());
    char magic[4];
    if (std::fread(magic, 1, 4, f.get()) != 4) throw FormatError("truncated raster file (magic): " + path.string());
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic in raster file: " + path.string());
    const std::uint32_t version = read_u32(f.get(), path, "version");
    if (version != kVersion)
        throw FormatError("unsupported raster version " + std::to_string(version) + ": " + path.string());
    const std::uint32_t h = read_u32(f.get(), path, "height");
    const std::uint32_t w = read_u32(f.get(), path, "width");
    const std::uint32_t c = read_u32(f.get(), path, "channels");
    if (h == 0 || w == 0 || c == 0 || h > kMaxDim || w > kMaxDim || c > 64)
        throw FormatError("raster shape overflow (H=" + std::to_string(h) + " W=" + std::to_string(w) +
                          " C=" + std::to_string(c) + "): " + path.string());
    const std::uint64_t count = static_cast<std::uint64_t>(h) * w * c;
    if (count > (1ull << 31))
        throw FormatError("raster shape overflow (payload too large): " + path.string());
    Raster r(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    if (host_is_little_endian()) {
        if (std::fread(r.values.data(), sizeof(float), r.values.size(), f.get()) != r.values.size())
            throw FormatError("truncated raster payload: " + path.string());
    } else {
        for (auto& v : r.values) {
            const std::uint32_t bits = read_u32(f.get(), path, "payload");
            std::memcpy(&v, &bits, 4);
        }
    }
    if (std::fgetc(f.get()) != EOF) throw FormatError("trailing bytes after raster payload: " + path.string());
    return r;
}

FlowField read_flow(const std::filesystem::path& path) { return FlowField(read_raster(path)); }
DepthMap read_depth(const std::filesystem::path& path) { return DepthMap(read_raster(path)); }
InstanceMask read_mask(const std::filesystem::path& path) { return InstanceMask(read_raster(path)); }

}  // namespace fdc
