#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "ecgdig/error.hpp"
#include "ecgdig/geometry.hpp"
#include "ecgdig/raster.hpp"

namespace ecgdig {

/// Angle-radius accumulator for lines y sin(theta) + x cos(theta) = rho.
struct HoughAccumulator {
    std::vector<double> thetas;
    double rho_min = 0.0;
    double rho_step = 1.0;
    int rho_count = 0;
    std::vector<double> bins;  // thetas.size() x rho_count, row-major

    double rho(int k) const { return rho_min + k * rho_step; }
    double rho_max() const { return rho(rho_count - 1); }
    double at(int t, int k) const { return bins[static_cast<std::size_t>(t) * rho_count + k]; }
    double& at(int t, int k) { return bins[static_cast<std::size_t>(t) * rho_count + k]; }
};

/// Evenly spaced angles over [lo, hi).
inline std::vector<double> theta_grid(double lo, double hi, int count) {
    require(count >= 1 && hi > lo, "bad angle grid");
    std::vector<double> out(count);
    for (int i = 0; i < count; ++i) out[i] = lo + (hi - lo) * i / count;
    return out;
}

inline HoughAccumulator hough(PlaneView plane, const std::vector<double>& thetas) {
    require(!thetas.empty(), "no angles given");
    require(std::is_sorted(thetas.begin(), thetas.end()), "angles must be increasing");
    const int w = plane.width, h = plane.height;
    HoughAccumulator acc;
    acc.thetas = thetas;
    double lo = 0.0, hi = 0.0;
    for (double t : thetas)
        for (const auto& [x, y] : std::array<std::pair<double, double>, 4>{
                 {{0, 0}, {w - 1.0, 0}, {0, h - 1.0}, {w - 1.0, h - 1.0}}}) {
            const double r = x * std::cos(t) + y * std::sin(t);
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
    acc.rho_min = std::floor(lo) - 1.0;
    acc.rho_count = static_cast<int>(std::ceil(hi) + 1.0 - acc.rho_min) + 1;
    acc.bins.assign(thetas.size() * acc.rho_count, 0.0);

    struct Sample {
        float x, y, v;
    };
    std::vector<Sample> samples;
    double mass = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float v = plane.at(x, y);
            if (v <= 0.0f) continue;
            mass += v;
            samples.push_back({static_cast<float>(x), static_cast<float>(y), v});
        }
    for (std::size_t t = 0; t < thetas.size(); ++t) {
        const double c = std::cos(thetas[t]), sn = std::sin(thetas[t]);
        double* row = &acc.bins[t * acc.rho_count];
        for (const Sample& p : samples) {
            const double pos = p.x * c + p.y * sn - acc.rho_min;
            const int k = static_cast<int>(pos);
            const double f = pos - k;
            row[k] += p.v * (1.0 - f);
            row[k + 1] += p.v * f;
        }
    }
    if (!(mass > 0.0)) fail(ErrorCode::kDegenerateInput, "grid channel is empty");
    return acc;
}

/// Variance of accumulator values along straight lines joining (theta_i, rho_min) and
/// (theta_j, rho_max). Pairs with |i - j| > max_offset are left at zero.
struct AngleAnglePlane {
    std::vector<double> thetas_bottom;  // index i: angle at rho_min
    std::vector<double> thetas_top;     // index j: angle at rho_max
    std::vector<double> variance;       // i-major

    double at(int i, int j) const { return variance[static_cast<std::size_t>(i) * thetas_top.size() + j]; }
};

inline AngleAnglePlane angle_angle(const HoughAccumulator& acc, int max_offset = std::numeric_limits<int>::max()) {
    const int n = static_cast<int>(acc.thetas.size());
    AngleAnglePlane plane;
    plane.thetas_bottom = acc.thetas;
    plane.thetas_top = acc.thetas;
    plane.variance.assign(static_cast<std::size_t>(n) * n, 0.0);
    const int m = acc.rho_count;
    // Per-row prefix sums of values and squares; the path from (i, rho_min) to (j, rho_max)
    // visits each row in one contiguous run of radius bins.
    std::vector<double> s1(static_cast<std::size_t>(n) * (m + 1), 0.0), s2(s1.size(), 0.0);
    for (int t = 0; t < n; ++t) {
        double* a = &s1[static_cast<std::size_t>(t) * (m + 1)];
        double* b = &s2[static_cast<std::size_t>(t) * (m + 1)];
        for (int k = 0; k < m; ++k) {
            const double v = acc.at(t, k);
            a[k + 1] = a[k] + v;
            b[k + 1] = b[k] + v * v;
        }
    }
    const int band = std::min(max_offset, n);
    for (int i = 0; i < n; ++i)
        for (int j = std::max(0, i - band); j < std::min(n, i + band + 1); ++j) {
            auto row_at = [&](int k) {
                const double frac = m > 1 ? static_cast<double>(k) / (m - 1) : 0.0;
                return static_cast<int>(std::lround(i + (j - i) * frac));
            };
            double sum = 0.0, sum2 = 0.0;
            for (int k = 0; k < m;) {
                const int t = row_at(k);
                int end = m;
                if (j != i) {
                    const double edge = (j > i ? t + 0.5 - i : i - t + 0.5) / std::abs(j - i) * (m - 1);
                    end = std::clamp(static_cast<int>(std::ceil(edge)), k + 1, m);
                    while (end < m && row_at(end) == t) ++end;
                    while (end > k + 1 && row_at(end - 1) != t) --end;
                }
                const std::size_t base = static_cast<std::size_t>(t) * (m + 1);
                sum += s1[base + end] - s1[base + k];
                sum2 += s2[base + end] - s2[base + k];
                k = end;
            }
            const double mean = sum / m;
            plane.variance[static_cast<std::size_t>(i) * n + j] = std::max(0.0, sum2 / m - mean * mean);
        }
    return plane;
}

/// Subtracts a centered running mean of `window` radius bins from every angle row, so the
/// variance reflects sharp line peaks rather than the slowly varying extent of the paper.
inline HoughAccumulator detrend_rows(const HoughAccumulator& acc, int window) {
    HoughAccumulator out = acc;
    const int m = acc.rho_count;
    const int half = std::max(1, window / 2);
    std::vector<double> prefix(m + 1);
    for (std::size_t t = 0; t < acc.thetas.size(); ++t) {
        prefix[0] = 0.0;
        for (int k = 0; k < m; ++k) prefix[k + 1] = prefix[k] + acc.at(static_cast<int>(t), k);
        for (int k = 0; k < m; ++k) {
            const int lo = std::max(0, k - half), hi = std::min(m, k + half + 1);
            out.at(static_cast<int>(t), k) = acc.at(static_cast<int>(t), k) - (prefix[hi] - prefix[lo]) / (hi - lo);
        }
    }
    return out;
}

/// One family of near-parallel grid lines, as the Hough angle at each end of the radius range.
struct LineFamily {
    double theta_at_rho_min = 0.0;
    double theta_at_rho_max = 0.0;
    double rho_min = 0.0;
    double rho_max = 0.0;
    double score = 0.0;

    double theta_at(double rho) const {
        const double f = (rho - rho_min) / (rho_max - rho_min);
        return theta_at_rho_min + (theta_at_rho_max - theta_at_rho_min) * f;
    }
    double midline() const { return 0.5 * (theta_at_rho_min + theta_at_rho_max); }
};

struct GridAxes {
    LineFamily axis_a;  // lines that become vertical (constant x)
    LineFamily axis_b;  // lines that become horizontal (constant y)
    Mat3 rectify = Mat3::Identity();  // input pixel -> rectified pixel
    int width = 0;                    // rectified extent
    int height = 0;
};

struct PerspectiveOptions {
    int max_side = 1024;
    int coarse_bins = 360;
    int fine_bins = 256;
    double fine_margin = deg_to_rad(2.0);
    /// Largest angle change across one line family searched in the coarse angle-angle plane.
    double max_family_spread = deg_to_rad(12.0);
    int detrend_window = 41;
};

namespace detail {

struct Downsampled {
    std::vector<float> data;
    int width = 0, height = 0, factor = 1;
    PlaneView view() const { return {width, height, data}; }
};

inline Downsampled area_downsample(PlaneView plane, int max_side) {
    Downsampled out;
    out.factor = std::max(1, static_cast<int>(std::ceil(std::max(plane.width, plane.height) / double(max_side))));
    const int f = out.factor;
    out.width = plane.width / f;
    out.height = plane.height / f;
    require(out.width >= 1 && out.height >= 1, "plane too small");
    out.data.assign(static_cast<std::size_t>(out.width) * out.height, 0.0f);
    const float norm = 1.0f / static_cast<float>(f * f);
    for (int y = 0; y < out.height * f; ++y)
        for (int x = 0; x < out.width * f; ++x)
            out.data[static_cast<std::size_t>(y / f) * out.width + x / f] += plane.at(x, y) * norm;
    return out;
}

struct Peak {
    int i = -1, j = -1;
    double value = 0.0;
};

inline Peak best_peak(const AngleAnglePlane& plane, std::optional<double> avoid_midline, double min_separation) {
    Peak best;
    const int n = static_cast<int>(plane.thetas_bottom.size());
    const int m = static_cast<int>(plane.thetas_top.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            const double v = plane.at(i, j);
            // Near-ties (a family whose lines only cover part of the radius range) go to the
            // pair with the smaller angle spread.
            const bool tie = best.i >= 0 && std::abs(v - best.value) <= 1e-4 * std::abs(best.value);
            const bool better = tie ? std::abs(i - j) < std::abs(best.i - best.j) : v > best.value;
            if (!better) continue;
            if (avoid_midline) {
                const double mid = 0.5 * (plane.thetas_bottom[i] + plane.thetas_top[j]);
                if (angle_distance(mid, *avoid_midline) < min_separation) continue;
            }
            best = {i, j, v};
        }
    return best;
}

// Re-runs the transform over a narrow angle window and returns the refined family.
inline LineFamily refine_family(PlaneView plane, double lo, double hi, int bins, int detrend_window) {
    const HoughAccumulator acc = detrend_rows(hough(plane, theta_grid(lo, hi, bins)), detrend_window);
    const AngleAnglePlane aa = angle_angle(acc);
    const Peak p = best_peak(aa, std::nullopt, 0.0);
    LineFamily f;
    f.theta_at_rho_min = aa.thetas_bottom[p.i];
    f.theta_at_rho_max = aa.thetas_top[p.j];
    f.rho_min = acc.rho_min;
    f.rho_max = acc.rho_max();
    f.score = p.value;
    return f;
}

// Maps a family found on a plane downsampled by `factor` back to full-resolution pixels.
inline LineFamily upscale_family(const LineFamily& f, int factor) {
    if (factor == 1) return f;
    const double c0 = (factor - 1) / 2.0;
    LineFamily out = f;
    const auto lift = [&](double theta, double rho) {
        return factor * rho + c0 * (std::cos(theta) + std::sin(theta));
    };
    out.rho_min = lift(f.theta_at_rho_min, f.rho_min);
    out.rho_max = lift(f.theta_at_rho_max, f.rho_max);
    return out;
}

inline Vec3 homogeneous_line(double theta, double rho) { return {std::cos(theta), std::sin(theta), -rho}; }

// Common point of the family: the intersection of its lines at the two ends of the image's
// radius range for that angle.
inline Vec3 vanishing_point(const LineFamily& f, int width, int height) {
    const double theta = f.midline();
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& [x, y] : std::array<std::pair<double, double>, 4>{
             {{0, 0}, {width - 1.0, 0}, {0, height - 1.0}, {width - 1.0, height - 1.0}}}) {
        const double r = x * std::cos(theta) + y * std::sin(theta);
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    const Vec3 l1 = homogeneous_line(f.theta_at(lo), lo);
    const Vec3 l2 = homogeneous_line(f.theta_at(hi), hi);
    return l1.cross(l2).normalized();
}

}  // namespace detail

/// Projective rectification taking both vanishing points to infinity and their directions to
/// the image axes, followed by a translation to the bounding box of the warped input.
inline GridAxes rectification_from_families(const LineFamily& vertical_lines, const LineFamily& horizontal_lines,
                                            int width, int height) {
    GridAxes axes;
    axes.axis_a = vertical_lines;
    axes.axis_b = horizontal_lines;
    const Vec3 va = detail::vanishing_point(vertical_lines, width, height);
    const Vec3 vb = detail::vanishing_point(horizontal_lines, width, height);
    const Vec3 center((width - 1) / 2.0, (height - 1) / 2.0, 1.0);

    Mat3 p = Mat3::Identity();
    Vec3 horizon = va.cross(vb);
    const double hc = horizon.dot(center);
    if (horizon.head<2>().norm() > 1e-12 * std::abs(hc) && std::abs(hc) > 1e-12) {
        horizon /= hc;
        p.row(2) = horizon.transpose();
    }
    Vec2 da = (p * va).head<2>();
    Vec2 db = (p * vb).head<2>();
    if (da.norm() < 1e-12 || db.norm() < 1e-12) fail(ErrorCode::kPerspectiveFailure, "degenerate vanishing points");
    da.normalize();
    db.normalize();
    if (da.y() < 0) da = -da;
    if (db.x() < 0) db = -db;
    Eigen::Matrix2d basis;
    basis.col(0) = db;
    basis.col(1) = da;
    if (std::abs(basis.determinant()) < std::sin(deg_to_rad(30.0)))
        fail(ErrorCode::kPerspectiveFailure, "grid directions are too close to each other");
    Mat3 a = Mat3::Identity();
    a.topLeftCorner<2, 2>() = basis.inverse();

    const Mat3 ap = a * p;
    double minx = std::numeric_limits<double>::infinity(), miny = minx, maxx = -minx, maxy = -minx;
    for (const auto& c : {Vec2(0, 0), Vec2(width - 1, 0), Vec2(0, height - 1), Vec2(width - 1, height - 1)}) {
        const Vec3 q = ap * Vec3(c.x(), c.y(), 1.0);
        if (!(q.z() > 0)) fail(ErrorCode::kPerspectiveFailure, "rectification folds the image");
        minx = std::min(minx, q.x() / q.z());
        miny = std::min(miny, q.y() / q.z());
        maxx = std::max(maxx, q.x() / q.z());
        maxy = std::max(maxy, q.y() / q.z());
    }
    const double out_w = maxx - minx + 1, out_h = maxy - miny + 1;
    if (!(out_w * out_h < 4.0 * width * height + 1e6))
        fail(ErrorCode::kPerspectiveFailure, "rectified image would be implausibly large");
    axes.rectify = translation(-minx, -miny) * ap;
    axes.width = static_cast<int>(std::ceil(out_w));
    axes.height = static_cast<int>(std::ceil(out_h));
    return axes;
}

/// Intermediate planes of the coarse pass, kept for debugging dumps.
struct PerspectiveDebug {
    HoughAccumulator coarse;
    AngleAnglePlane angle_angle;
};

/// Two-pass search for the grid's two line families on the grid channel.
inline GridAxes find_grid_axes(PlaneView grid, const PerspectiveOptions& opt = {}, PerspectiveDebug* debug = nullptr) {
    const detail::Downsampled small = detail::area_downsample(grid, opt.max_side);
    const PlaneView view = small.view();
    const HoughAccumulator coarse =
        detrend_rows(hough(view, theta_grid(-kPi / 4, 3 * kPi / 4, opt.coarse_bins)), opt.detrend_window);
    const double step = kPi / opt.coarse_bins;
    const AngleAnglePlane aa =
        angle_angle(coarse, static_cast<int>(std::ceil(opt.max_family_spread / step)));
    if (debug) {
        debug->coarse = coarse;
        debug->angle_angle = aa;
    }

    const detail::Peak first = detail::best_peak(aa, std::nullopt, 0.0);
    if (first.i < 0) fail(ErrorCode::kPerspectiveFailure, "no grid direction found");
    const double mid1 = 0.5 * (aa.thetas_bottom[first.i] + aa.thetas_top[first.j]);
    const detail::Peak second = detail::best_peak(aa, mid1, kPi / 4);
    if (second.i < 0 || second.value < 1e-3 * first.value)
        fail(ErrorCode::kPerspectiveFailure, "only one grid direction found");

    std::array<LineFamily, 2> families;
    for (int k = 0; k < 2; ++k) {
        const detail::Peak& p = k == 0 ? first : second;
        const double t0 = aa.thetas_bottom[p.i], t1 = aa.thetas_top[p.j];
        const double lo = std::min(t0, t1) - opt.fine_margin;
        const double hi = std::max(t0, t1) + opt.fine_margin;
        families[k] = detail::upscale_family(detail::refine_family(view, lo, hi, opt.fine_bins, opt.detrend_window), small.factor);
    }
    // The family whose normals point along x consists of the (near-)vertical lines.
    auto verticalness = [](const LineFamily& f) { return std::abs(std::cos(f.midline())); };
    if (verticalness(families[1]) > verticalness(families[0])) std::swap(families[0], families[1]);
    return rectification_from_families(families[0], families[1], grid.width, grid.height);
}

// ---------------------------------------------------------------------------
// Resampling

struct CropRect {
    int x = 0, y = 0, width = 0, height = 0;
};

/// Pulls every channel of `map` through `rectify` into `rect` (rectified coordinates).
/// Samples that fall outside the source are zero, except the background channel (one).
inline ProbMap warp_probmap(const ProbMap& map, const Mat3& rectify, const CropRect& rect,
                            std::optional<int> only_channel = std::nullopt) {
    const Mat3 pull = rectify.inverse();
    const int channels = only_channel ? 1 : map.channels();
    ProbMap out(rect.width, rect.height, channels);
    const int w = map.width(), h = map.height();
    std::vector<const float*> src(channels);
    std::vector<float*> dst(channels);
    std::vector<float> outside(channels);
    for (int c = 0; c < channels; ++c) {
        const int src_c = only_channel ? *only_channel : c;
        src[c] = map.plane(src_c).data();
        dst[c] = out.plane(c).data();
        outside[c] = src_c == static_cast<int>(Channel::kBackground) ? 1.0f : 0.0f;
    }
    for (int v = 0; v < rect.height; ++v) {
        const Vec3 row0 = pull * Vec3(rect.x, v + rect.y, 1.0);
        const Vec3 step = pull.col(0);
        for (int u = 0; u < rect.width; ++u) {
            const Vec3 q = row0 + static_cast<double>(u) * step;
            const double sx = q.x() / q.z(), sy = q.y() / q.z();
            const std::size_t o = static_cast<std::size_t>(v) * rect.width + u;
            if (!(sx >= -0.5 && sy >= -0.5 && sx <= w - 0.5 && sy <= h - 0.5)) {
                for (int c = 0; c < channels; ++c) dst[c][o] = outside[c];
                continue;
            }
            const double cx = std::clamp(sx, 0.0, w - 1.0), cy = std::clamp(sy, 0.0, h - 1.0);
            const int x0 = std::min(static_cast<int>(cx), std::max(0, w - 2));
            const int y0 = std::min(static_cast<int>(cy), std::max(0, h - 2));
            const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
            const float fx = static_cast<float>(cx - x0), fy = static_cast<float>(cy - y0);
            const std::size_t i00 = static_cast<std::size_t>(y0) * w + x0, i10 = static_cast<std::size_t>(y0) * w + x1;
            const std::size_t i01 = static_cast<std::size_t>(y1) * w + x0, i11 = static_cast<std::size_t>(y1) * w + x1;
            for (int c = 0; c < channels; ++c) {
                const float* p = src[c];
                const float val = (1 - fy) * ((1 - fx) * p[i00] + fx * p[i10]) + fy * ((1 - fx) * p[i01] + fx * p[i11]);
                dst[c][o] = std::clamp(val, 0.0f, 1.0f);
            }
        }
    }
    return out;
}

/// Bounding box, in rectified coordinates, of source pixels with signal probability >= 0.5.
inline std::optional<CropRect> signal_bounds(const ProbMap& map, const Mat3& rectify, int width, int height) {
    const PlaneView sig = map.view(Channel::kSignal);
    double minx = std::numeric_limits<double>::infinity(), miny = minx, maxx = -minx, maxy = -minx;
    bool any = false;
    for (int y = 0; y < sig.height; ++y)
        for (int x = 0; x < sig.width; ++x) {
            if (sig.at(x, y) < 0.5f) continue;
            const Vec2 q = apply(rectify, Vec2(x, y));
            minx = std::min(minx, q.x());
            miny = std::min(miny, q.y());
            maxx = std::max(maxx, q.x());
            maxy = std::max(maxy, q.y());
            any = true;
        }
    if (!any) return std::nullopt;
    CropRect r;
    r.x = std::clamp(static_cast<int>(std::floor(minx)), 0, width - 1);
    r.y = std::clamp(static_cast<int>(std::floor(miny)), 0, height - 1);
    r.width = std::clamp(static_cast<int>(std::ceil(maxx)), r.x, width - 1) - r.x + 1;
    r.height = std::clamp(static_cast<int>(std::ceil(maxy)), r.y, height - 1) - r.y + 1;
    return r;
}

inline CropRect expand(const CropRect& r, int margin, int width, int height) {
    CropRect out;
    out.x = std::max(0, r.x - margin);
    out.y = std::max(0, r.y - margin);
    out.width = std::min(width, r.x + r.width + margin) - out.x;
    out.height = std::min(height, r.y + r.height + margin) - out.y;
    return out;
}

struct DewarpResult {
    ProbMap map;
    Mat3 transform = Mat3::Identity();  // input pixel -> output pixel (rectify then crop offset)
    CropRect crop;
};

/// Rectifies and crops to the signal extent grown by `margin_px` on every side. Without any
/// signal the full rectified extent is kept.
inline DewarpResult dewarp_and_crop(const ProbMap& map, const GridAxes& axes, int margin_px) {
    require(margin_px >= 0, "crop margin must be non-negative");
    const CropRect full{0, 0, axes.width, axes.height};
    const auto bounds = signal_bounds(map, axes.rectify, axes.width, axes.height);
    const CropRect crop = bounds ? expand(*bounds, margin_px, axes.width, axes.height) : full;
    DewarpResult out;
    out.map = warp_probmap(map, axes.rectify, crop);
    out.transform = translation(-crop.x, -crop.y) * axes.rectify;
    out.crop = crop;
    return out;
}

}  // namespace ecgdig
