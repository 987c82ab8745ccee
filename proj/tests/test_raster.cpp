#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "fdc/raster.hpp"

using namespace fdc;
namespace fs = std::filesystem;

namespace {

fs::path tmpdir() {
    const auto dir = fs::temp_directory_path() / "fdc_raster_test";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("raster write-then-read is bit-exact") {
    const auto path = tmpdir() / "roundtrip.fdcr";
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 8; ++trial) {
        const int h = 1 + static_cast<int>(rng() % 9);
        const int w = 1 + static_cast<int>(rng() % 9);
        const int c = 1 + static_cast<int>(rng() % 3);
        Raster r(h, w, c);
        for (auto& v : r.values) {
            std::uint32_t bits = static_cast<std::uint32_t>(rng());
            float f;
            std::memcpy(&f, &bits, 4);
            if (!std::isfinite(f)) f = static_cast<float>(rng() % 1000) * 0.25f;
            v = f;
        }
        write_raster(path, r);
        const Raster back = read_raster(path);
        REQUIRE(back.height == h);
        REQUIRE(back.width == w);
        REQUIRE(back.channels == c);
        for (size_t i = 0; i < r.values.size(); ++i) {
            std::uint32_t a, b;
            std::memcpy(&a, &r.values[i], 4);
            std::memcpy(&b, &back.values[i], 4);
            CHECK(a == b);
        }
    }
}

TEST_CASE("flow field round-trips through C=2 raster") {
    const auto path = tmpdir() / "flow.fdcr";
    FlowField f(2, 2);
    f.u(0, 0) = 1.5f;
    f.v(1, 1) = -2.25f;
    write_raster(path, f);
    const FlowField back = read_flow(path);
    CHECK(back.u(0, 0) == 1.5f);
    CHECK(back.v(1, 1) == -2.25f);
    CHECK(back.u(1, 0) == 0.f);
}

TEST_CASE("depth map round-trips through C=1 raster") {
    const auto path = tmpdir() / "depth.fdcr";
    DepthMap d(3, 4);
    d.d(2, 3) = 42.f;
    write_raster(path, d);
    CHECK(read_depth(path).d(2, 3) == 42.f);
}

TEST_CASE("wrong magic is a format error") {
    const auto path = tmpdir() / "badmagic.fdcr";
    std::ofstream out(path, std::ios::binary);
    out << "NOPE" << std::string(16, '\0');
    out.close();
    CHECK_THROWS_WITH_AS(read_raster(path), doctest::Contains("bad magic"), FormatError);
}

TEST_CASE("truncated payload is a format error") {
    const auto path = tmpdir() / "trunc.fdcr";
    Raster r(4, 4, 2);
    write_raster(path, r);
    fs::resize_file(path, fs::file_size(path) - 7);
    CHECK_THROWS_WITH_AS(read_raster(path), doctest::Contains("truncated"), FormatError);
}

TEST_CASE("shape overflow is a format error naming the field") {
    const auto path = tmpdir() / "overflow.fdcr";
    std::ofstream out(path, std::ios::binary);
    out << "FDCR";
    const std::uint32_t vals[4] = {1, 0x7FFFFFFFu, 4, 1};
    out.write(reinterpret_cast<const char*>(vals), sizeof(vals));
    out.close();
    CHECK_THROWS_WITH_AS(read_raster(path), doctest::Contains("shape overflow"), FormatError);
}

TEST_CASE("channel mismatch rejected by typed readers") {
    const auto path = tmpdir() / "c3.fdcr";
    write_raster(path, Raster(2, 2, 3));
    CHECK_THROWS_AS(read_flow(path), FormatError);
    CHECK_THROWS_AS(read_depth(path), FormatError);
}
