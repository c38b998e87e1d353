#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>

#include <Eigen/Dense>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ecgdig/error.hpp"
#include "ecgdig/raster.hpp"

namespace ecgdig {

enum class SegmenterMode { kClassical, kExternal };

struct SegmenterConfig {
    SegmenterMode mode = SegmenterMode::kClassical;
    // Reference inks; each pixel is unmixed into coverages of these against the paper color.
    Rgb paper_color{255, 255, 255};
    Rgb grid_color{235, 110, 110};
    Rgb trace_color{0, 0, 0};
    Rgb text_color{40, 70, 200};
    /// Trace coverage at which the signal probability crosses 0.5.
    double trace_darkness_threshold = 0.5;
    /// Coverages below this are treated as sensor noise.
    double noise_floor = 0.08;
    std::optional<std::filesystem::path> external_path;
};

inline void validate(const SegmenterConfig& cfg) {
    require(cfg.trace_darkness_threshold > 0.0 && cfg.trace_darkness_threshold < 1.0,
            "trace_darkness_threshold must lie in (0,1)");
    require(cfg.noise_floor >= 0.0 && cfg.noise_floor < 0.5, "noise_floor must lie in [0,0.5)");
    if (cfg.mode == SegmenterMode::kExternal)
        require(cfg.external_path.has_value(), "external segmentation needs a probmap path");
}

namespace detail {

inline Rgb parse_rgb(const std::string& text) {
    std::istringstream ss(text);
    int r = -1, g = -1, b = -1;
    char c1 = 0, c2 = 0;
    ss >> r >> c1 >> g >> c2 >> b;
    require(ss && c1 == ',' && c2 == ',' && r >= 0 && r <= 255 && g >= 0 && g <= 255 && b >= 0 && b <= 255,
            "expected a color as r,g,b: " + text);
    return {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
}

}  // namespace detail

/// Reads the `[segmentation]` section of an INI file; missing keys keep their defaults.
inline SegmenterConfig load_segmenter_config(const std::filesystem::path& path, SegmenterConfig cfg = {}) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        fail(ErrorCode::kInvalidArgument, std::string("config: ") + e.what());
    }
    const auto section = tree.get_child_optional("segmentation");
    if (!section) return cfg;
    try {
        if (auto mode = section->get_optional<std::string>("mode")) {
            if (*mode == "classical") cfg.mode = SegmenterMode::kClassical;
            else if (*mode == "external") cfg.mode = SegmenterMode::kExternal;
            else fail(ErrorCode::kInvalidArgument, "config: unknown segmentation mode " + *mode);
        }
        if (auto v = section->get_optional<std::string>("paper_color")) cfg.paper_color = detail::parse_rgb(*v);
        if (auto v = section->get_optional<std::string>("grid_color")) cfg.grid_color = detail::parse_rgb(*v);
        if (auto v = section->get_optional<std::string>("trace_color")) cfg.trace_color = detail::parse_rgb(*v);
        if (auto v = section->get_optional<std::string>("text_color")) cfg.text_color = detail::parse_rgb(*v);
        if (auto v = section->get_optional<double>("trace_darkness_threshold")) cfg.trace_darkness_threshold = *v;
        if (auto v = section->get_optional<double>("noise_floor")) cfg.noise_floor = *v;
        if (auto v = section->get_optional<std::string>("external_path")) cfg.external_path = *v;
    } catch (const boost::property_tree::ptree_error& e) {
        fail(ErrorCode::kInvalidArgument, std::string("config: ") + e.what());
    }
    validate(cfg);
    return cfg;
}

/// Classical segmenter: per-pixel linear unmixing of (pixel - paper) into grid, trace and
/// text ink coverages.
inline ProbMap segment_classical(const RgbRaster& image, const SegmenterConfig& cfg) {
    validate(cfg);
    auto diff = [&](Rgb c) {
        return Eigen::Vector3d(c.r - cfg.paper_color.r, c.g - cfg.paper_color.g, c.b - cfg.paper_color.b);
    };
    Eigen::Matrix3d m;
    m.col(0) = diff(cfg.grid_color);
    m.col(1) = diff(cfg.trace_color);
    m.col(2) = diff(cfg.text_color);
    const Eigen::FullPivLU<Eigen::Matrix3d> lu(m);
    require(lu.isInvertible() && std::abs(m.determinant()) > 1.0, "segmentation colors are not separable");
    const Eigen::Matrix3f unmix = lu.inverse().cast<float>();

    const int w = image.width(), h = image.height();
    ProbMap out(w, h, kSegmentationChannels);
    auto bg = out.plane(static_cast<int>(Channel::kBackground));
    auto grid = out.plane(static_cast<int>(Channel::kGrid));
    auto sig = out.plane(static_cast<int>(Channel::kSignal));
    auto text = out.plane(static_cast<int>(Channel::kText));
    const auto px = image.data();
    const float floor = static_cast<float>(cfg.noise_floor);
    const float shift = static_cast<float>(0.5 - cfg.trace_darkness_threshold);
    const Eigen::Vector3f paper(cfg.paper_color.r, cfg.paper_color.g, cfg.paper_color.b);

    auto clean = [floor](float a) { return a < floor ? 0.0f : std::min(a, 1.0f); };
    for (std::size_t i = 0; i < out.plane_size(); ++i) {
        const Eigen::Vector3f c(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
        const Eigen::Vector3f a = unmix * (c - paper);
        const float ag = clean(a(0));
        const float at = clean(a(1));
        const float ax = clean(a(2));
        grid[i] = ag;
        sig[i] = at > 0.0f ? std::clamp(at + shift, 0.0f, 1.0f) : 0.0f;
        text[i] = ax;
        bg[i] = 1.0f - std::max({grid[i], sig[i], text[i]});
    }
    return out;
}

inline ProbMap segment(const RgbRaster& image, const SegmenterConfig& cfg) {
    require(!image.empty(), "empty image");
    if (cfg.mode == SegmenterMode::kClassical) return segment_classical(image, cfg);

    validate(cfg);
    ProbMap map;
    try {
        map = read_probmap(*cfg.external_path);
    } catch (const Error& e) {
        fail(ErrorCode::kIngestion, e.what());
    }
    if (map.width() != image.width() || map.height() != image.height())
        fail(ErrorCode::kIngestion, cfg.external_path->string() + ": probmap is " + std::to_string(map.width()) +
                                        "x" + std::to_string(map.height()) + ", image is " +
                                        std::to_string(image.width()) + "x" + std::to_string(image.height()));
    if (map.channels() != kSegmentationChannels)
        fail(ErrorCode::kIngestion, cfg.external_path->string() + ": expected 4 channels");
    return map;
}

}  // namespace ecgdig
