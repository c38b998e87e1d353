#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "ecgdig/raster.hpp"

namespace ecgdig {

struct Pixel {
    int x = 0;
    int y = 0;
    float p = 0.0f;
};

struct PixelPos {
    int x = 0;
    int y = 0;
    friend bool operator==(const PixelPos&, const PixelPos&) = default;
};

/// 8-connected pixel set with cached extent and endpoints.
struct Component {
    int id = 0;
    std::vector<Pixel> pixels;
    PixelPos left_end;   // leftmost pixel, smaller y on ties
    PixelPos right_end;  // rightmost pixel, smaller y on ties
    int x_min = 0, x_max = -1, y_min = 0, y_max = -1;

    int x_span() const { return x_max - x_min + 1; }
    std::size_t size() const { return pixels.size(); }
    double mean_y() const {
        double s = 0.0;
        for (const auto& p : pixels) s += p.y;
        return pixels.empty() ? 0.0 : s / static_cast<double>(pixels.size());
    }
};

/// Recomputes bounds and endpoints from the pixel list.
inline void finalize(Component& c) {
    if (c.pixels.empty()) {
        c.x_min = c.y_min = 0;
        c.x_max = c.y_max = -1;
        return;
    }
    const Pixel& first = c.pixels.front();
    c.x_min = c.x_max = first.x;
    c.y_min = c.y_max = first.y;
    c.left_end = c.right_end = {first.x, first.y};
    for (const auto& p : c.pixels) {
        c.x_min = std::min(c.x_min, p.x);
        c.x_max = std::max(c.x_max, p.x);
        c.y_min = std::min(c.y_min, p.y);
        c.y_max = std::max(c.y_max, p.y);
        if (p.x < c.left_end.x || (p.x == c.left_end.x && p.y < c.left_end.y)) c.left_end = {p.x, p.y};
        if (p.x > c.right_end.x || (p.x == c.right_end.x && p.y < c.right_end.y)) c.right_end = {p.x, p.y};
    }
}

/// Labels 8-connected components of a binary mask given as a predicate over a w x h grid.
/// Components are returned in raster order of their first pixel; each pixel list is sorted
/// by (x, y).
template <typename Inside, typename Value>
std::vector<Component> label_components(int width, int height, Inside inside, Value value, std::size_t min_size) {
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(width) * height, 0);
    std::vector<Component> out;
    std::vector<PixelPos> stack;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * width + x;
            if (seen[idx] || !inside(x, y)) continue;
            Component c;
            seen[idx] = 1;
            stack.push_back({x, y});
            while (!stack.empty()) {
                const PixelPos q = stack.back();
                stack.pop_back();
                c.pixels.push_back({q.x, q.y, value(q.x, q.y)});
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = q.x + dx, ny = q.y + dy;
                        if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
                        const std::size_t n = static_cast<std::size_t>(ny) * width + nx;
                        if (seen[n] || !inside(nx, ny)) continue;
                        seen[n] = 1;
                        stack.push_back({nx, ny});
                    }
            }
            if (c.pixels.size() < min_size) continue;
            std::sort(c.pixels.begin(), c.pixels.end(),
                      [](const Pixel& a, const Pixel& b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
            finalize(c);
            c.id = static_cast<int>(out.size());
            out.push_back(std::move(c));
        }
    return out;
}

/// Components of pixels with probability >= threshold.
inline std::vector<Component> threshold_components(PlaneView plane, float threshold, std::size_t min_size) {
    return label_components(
        plane.width, plane.height, [&](int x, int y) { return plane.at(x, y) >= threshold; },
        [&](int x, int y) { return plane.at(x, y); }, min_size);
}

}  // namespace ecgdig
