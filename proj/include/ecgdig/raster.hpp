#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <png.h>

#include "ecgdig/error.hpp"

namespace ecgdig {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Row-major 8-bit RGB image.
class RgbRaster {
public:
    RgbRaster() = default;
    RgbRaster(int width, int height, Rgb fill = {255, 255, 255}) : width_(width), height_(height) {
        require(width >= 1 && height >= 1, "raster dimensions must be >= 1");
        data_.resize(static_cast<std::size_t>(width) * height * 3);
        for (std::size_t i = 0; i < data_.size(); i += 3) {
            data_[i] = fill.r;
            data_[i + 1] = fill.g;
            data_[i + 2] = fill.b;
        }
    }
    RgbRaster(int width, int height, std::vector<std::uint8_t> data)
        : width_(width), height_(height), data_(std::move(data)) {
        require(width >= 1 && height >= 1, "raster dimensions must be >= 1");
        require(data_.size() == static_cast<std::size_t>(width) * height * 3, "raster data size mismatch");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return data_.empty(); }

    Rgb at(int x, int y) const {
        const std::size_t i = index(x, y);
        return {data_[i], data_[i + 1], data_[i + 2]};
    }
    void set(int x, int y, Rgb c) {
        const std::size_t i = index(x, y);
        data_[i] = c.r;
        data_[i + 1] = c.g;
        data_[i + 2] = c.b;
    }

    std::span<const std::uint8_t> data() const { return data_; }
    std::span<std::uint8_t> data() { return data_; }

    friend bool operator==(const RgbRaster&, const RgbRaster&) = default;

private:
    std::size_t index(int x, int y) const { return (static_cast<std::size_t>(y) * width_ + x) * 3; }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Channel order of the segmentation probability map.
enum class Channel : int { kBackground = 0, kGrid = 1, kSignal = 2, kText = 3 };
inline constexpr int kSegmentationChannels = 4;

/// Read-only view of one plane of a ProbMap.
struct PlaneView {
    int width = 0;
    int height = 0;
    std::span<const float> data;

    float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

/// Channel-planar per-pixel probabilities. Channels are independent, not a simplex.
class ProbMap {
public:
    ProbMap() = default;
    ProbMap(int width, int height, int channels) : width_(width), height_(height), channels_(channels) {
        require(width >= 1 && height >= 1 && channels >= 1, "probmap dimensions must be >= 1");
        data_.assign(plane_size() * channels, 0.0f);
    }
    ProbMap(int width, int height, int channels, std::vector<float> data)
        : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
        require(width >= 1 && height >= 1 && channels >= 1, "probmap dimensions must be >= 1");
        require(data_.size() == plane_size() * channels, "probmap data size mismatch");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    std::size_t plane_size() const { return static_cast<std::size_t>(width_) * height_; }

    float at(int c, int x, int y) const { return data_[offset(c, x, y)]; }
    float& at(int c, int x, int y) { return data_[offset(c, x, y)]; }
    float at(Channel c, int x, int y) const { return at(static_cast<int>(c), x, y); }
    float& at(Channel c, int x, int y) { return at(static_cast<int>(c), x, y); }

    std::span<const float> plane(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }
    std::span<float> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
    PlaneView view(int c) const { return {width_, height_, plane(c)}; }
    PlaneView view(Channel c) const { return view(static_cast<int>(c)); }

    std::span<const float> data() const { return data_; }
    std::span<float> data() { return data_; }

    /// True when every value is finite and inside [0, 1].
    bool valid() const {
        return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v) && v >= 0.0f && v <= 1.0f; });
    }

    friend bool operator==(const ProbMap&, const ProbMap&) = default;

private:
    std::size_t offset(int c, int x, int y) const {
        return c * plane_size() + static_cast<std::size_t>(y) * width_ + x;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

/// Uniformly sampled series; NaN marks undefined samples.
struct Series1D {
    std::vector<double> values;
    double sample_rate = 1000.0;

    std::size_t size() const { return values.size(); }
};

// ---------------------------------------------------------------------------
// PNG

namespace detail {

inline void check_readable(const std::filesystem::path& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) fail(ErrorCode::kIo, "cannot open " + path.string());
}

}  // namespace detail

/// Decodes a PNG file into RGB. Grayscale and palette inputs are expanded.
inline RgbRaster load_image(const std::filesystem::path& path) {
    detail::check_readable(path);

    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        std::string msg = image.message;
        png_image_free(&image);
        fail(ErrorCode::kDecode, path.string() + ": " + msg);
    }
    image.format = PNG_FORMAT_RGB;
    if (image.width == 0 || image.height == 0 ||
        image.width > static_cast<png_uint_32>(std::numeric_limits<int>::max() / 3) ||
        image.height > static_cast<png_uint_32>(std::numeric_limits<int>::max())) {
        png_image_free(&image);
        fail(ErrorCode::kDecode, path.string() + ": unsupported dimensions");
    }
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        fail(ErrorCode::kDecode, path.string() + ": " + msg);
    }
    const int w = static_cast<int>(image.width);
    const int h = static_cast<int>(image.height);
    png_image_free(&image);
    return RgbRaster(w, h, std::move(buffer));
}

inline void save_png(const RgbRaster& raster, const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(raster.width());
    image.height = static_cast<png_uint_32>(raster.height());
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, raster.data().data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        fail(ErrorCode::kIo, path.string() + ": " + msg);
    }
}

/// Writes a single plane as an 8-bit grayscale PNG, scaling [0, 1] to [0, 255].
inline void save_plane_png(PlaneView plane, const std::filesystem::path& path) {
    std::vector<std::uint8_t> gray(plane.data.size());
    for (std::size_t i = 0; i < gray.size(); ++i)
        gray[i] = static_cast<std::uint8_t>(std::lround(std::clamp(plane.data[i], 0.0f, 1.0f) * 255.0f));
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(plane.width);
    image.height = static_cast<png_uint_32>(plane.height);
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, gray.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        fail(ErrorCode::kIo, path.string() + ": " + msg);
    }
}

// ---------------------------------------------------------------------------
// PMAP: "PMAP", u32le width, height, channels, then channel-planar f32le values.

namespace detail {

inline void put_u32le(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b.data(), 4);
}

inline std::uint32_t get_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline constexpr std::array<char, 4> kProbMapMagic{'P', 'M', 'A', 'P'};

inline void write_probmap(const ProbMap& map, const std::filesystem::path& path) {
    require(map.channels() >= 1, "empty probmap");
    if (!map.valid()) fail(ErrorCode::kInvalidArgument, "probmap values must be finite and within [0,1]");

    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
    out.write(kProbMapMagic.data(), 4);
    detail::put_u32le(out, static_cast<std::uint32_t>(map.width()));
    detail::put_u32le(out, static_cast<std::uint32_t>(map.height()));
    detail::put_u32le(out, static_cast<std::uint32_t>(map.channels()));
    for (float v : map.data()) detail::put_u32le(out, std::bit_cast<std::uint32_t>(v));
    if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

inline ProbMap read_probmap(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 16 || !std::equal(kProbMapMagic.begin(), kProbMapMagic.end(), bytes.begin(),
                                         [](char a, unsigned char b) { return static_cast<unsigned char>(a) == b; }))
        fail(ErrorCode::kFormat, path.string() + ": bad magic");

    const std::uint64_t w = detail::get_u32le(&bytes[4]);
    const std::uint64_t h = detail::get_u32le(&bytes[8]);
    const std::uint64_t c = detail::get_u32le(&bytes[12]);
    if (w == 0 || h == 0 || c == 0 || w > std::numeric_limits<int>::max() || h > std::numeric_limits<int>::max() ||
        c > 64)
        fail(ErrorCode::kFormat, path.string() + ": bad dimensions");
    const std::uint64_t count = w * h * c;
    if (count > (std::uint64_t{1} << 34) || bytes.size() != 16 + count * 4)
        fail(ErrorCode::kFormat, path.string() + ": payload size does not match header");

    std::vector<float> values(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const float v = std::bit_cast<float>(detail::get_u32le(&bytes[16 + 4 * i]));
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f) fail(ErrorCode::kFormat, path.string() + ": value outside [0,1]");
        values[i] = v;
    }
    return ProbMap(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c), std::move(values));
}

}  // namespace ecgdig
