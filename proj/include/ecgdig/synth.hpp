#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ecgdig/error.hpp"
#include "ecgdig/geometry.hpp"
#include "ecgdig/glyphs.hpp"
#include "ecgdig/layout_spec.hpp"
#include "ecgdig/leads.hpp"
#include "ecgdig/raster.hpp"
#include "ecgdig/signal_io.hpp"

namespace ecgdig {

// ---------------------------------------------------------------------------
// Source signals

namespace detail {

struct WaveShape {
    double p, q, r, s, t;  // mV
};

// Typical per-lead amplitudes; bounded so adjacent rows at >= 22.5 mm pitch never touch.
inline constexpr std::array<WaveShape, kLeadCount> kLeadShapes{{
    {0.10, -0.05, 0.80, -0.15, 0.25},   // I
    {0.15, -0.05, 1.00, -0.20, 0.30},   // II
    {0.05, -0.05, 0.50, -0.20, 0.10},   // III
    {-0.10, 0.05, -0.80, 0.15, -0.25},  // aVR
    {0.05, -0.05, 0.45, -0.10, 0.10},   // aVL
    {0.10, -0.05, 0.70, -0.20, 0.20},   // aVF
    {0.08, 0.00, 0.30, -0.75, 0.10},    // V1
    {0.10, 0.00, 0.50, -0.75, 0.30},    // V2
    {0.10, -0.05, 0.80, -0.60, 0.35},   // V3
    {0.10, -0.10, 1.05, -0.40, 0.35},   // V4
    {0.10, -0.10, 1.00, -0.30, 0.30},   // V5
    {0.10, -0.08, 0.80, -0.20, 0.25},   // V6
}};

inline double gauss(double t, double mu, double sigma) {
    const double z = (t - mu) / sigma;
    return std::exp(-0.5 * z * z);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * std::generate_canonical<double, 53>(rng);
}

}  // namespace detail

inline constexpr double kMaxSyntheticAmplitudeMv = 2.0;

/// Deterministic ECG-like signals in mV, one per lead in standard order (I, II, ..., V6).
inline std::vector<Series1D> synthesize_signals(std::uint64_t seed, int n_leads, double duration_s, double fs) {
    require(duration_s > 0.0, "duration must be positive");
    require(fs >= 100.0, "sample rate must be >= 100 Hz");
    require(n_leads >= 1 && n_leads <= kLeadCount, "lead count must be within 1..12");

    std::mt19937_64 rng(seed);
    const double rate_bpm = detail::uniform(rng, 60.0, 95.0);
    const double period = 60.0 / rate_bpm;
    const double first_beat = detail::uniform(rng, 0.0, period);
    const double scale = detail::uniform(rng, 0.75, 1.05);
    const double wander_f = detail::uniform(rng, 0.15, 0.4);
    const double wander_phase = detail::uniform(rng, 0.0, 2.0 * kPi);

    std::vector<double> beats;
    for (double t = first_beat - period; t < duration_s + period; t += period * detail::uniform(rng, 0.97, 1.03))
        beats.push_back(t);

    const auto n = static_cast<std::size_t>(std::llround(duration_s * fs));
    std::vector<Series1D> out;
    for (int lead = 0; lead < n_leads; ++lead) {
        const detail::WaveShape& w = detail::kLeadShapes[lead];
        const double lead_gain = scale * detail::uniform(rng, 0.9, 1.1);
        const double wander = detail::uniform(rng, 0.0, 0.05);
        Series1D s;
        s.sample_rate = fs;
        s.values.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double t = static_cast<double>(k) / fs;
            double v = wander * std::sin(2.0 * kPi * wander_f * t + wander_phase + lead);
            for (double b : beats) {
                if (std::abs(t - b) > 0.6) continue;
                v += lead_gain * (w.p * detail::gauss(t, b - 0.18, 0.025) + w.q * detail::gauss(t, b - 0.035, 0.010) +
                                  w.r * detail::gauss(t, b, 0.012) + w.s * detail::gauss(t, b + 0.035, 0.012) +
                                  w.t * detail::gauss(t, b + 0.28, 0.05));
            }
            s.values[k] = std::clamp(v, -kMaxSyntheticAmplitudeMv, kMaxSyntheticAmplitudeMv);
        }
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rendering

struct RenderSpec {
    double grid_minor_px = 10.0;
    double paper_speed = 25.0;  // mm/s
    double gain = 10.0;         // mm/mV
    LayoutSpec layout;
    double line_width_px = 2.0;
    Rgb trace_color{0, 0, 0};
    Rgb grid_color{235, 110, 110};
    Rgb text_color{40, 70, 200};
    Rgb paper_color{255, 255, 255};
    Rgb background_color{205, 205, 205};
    /// Maps output pixel coordinates to paper pixel coordinates (pull warp).
    Mat3 homography = Mat3::Identity();
    int output_width = 0;  // 0: same as paper
    int output_height = 0;
    double noise_level = 0.0;  // Gaussian sigma as a fraction of full scale
    std::uint64_t rng_seed = 0;
    bool draw_markers = true;
    std::vector<int> hidden_markers;  // panel indices whose marker is not drawn
    double margin_mm = 8.0;
    double glyph_cell_mm = 0.4;
};

inline void validate(const RenderSpec& spec) {
    require(spec.grid_minor_px > 2.0, "grid_minor_px must exceed 2");
    require(spec.paper_speed == 25.0 || spec.paper_speed == 50.0, "paper speed must be 25 or 50 mm/s");
    require(spec.gain > 0.0, "gain must be positive");
    require(spec.line_width_px > 0.0, "line width must be positive");
    require(spec.noise_level >= 0.0, "noise level must be non-negative");
    validate(spec.layout);
    const double det = spec.homography.topLeftCorner<2, 2>().determinant();
    require(std::isfinite(det) && std::abs(det) > 1e-6 && std::abs(spec.homography.determinant()) > 1e-12,
            "homography must be invertible");
}

/// Paper-space placement of the traces.
struct PaperGeometry {
    int width = 0;
    int height = 0;
    double trace_x0 = 0.0;
    double px_per_s = 0.0;
    double px_per_mv = 0.0;
    std::vector<double> baselines;  // per layout row
};

inline PaperGeometry paper_geometry(const RenderSpec& spec) {
    const double d = spec.grid_minor_px;
    const LayoutSpec& layout = spec.layout;
    PaperGeometry g;
    g.width = static_cast<int>(std::lround((2.0 * spec.margin_mm + layout.duration_s() * spec.paper_speed) * d));
    g.height = static_cast<int>(std::lround((2.0 * spec.margin_mm + layout.rows() * layout.row_pitch_mm) * d));
    g.trace_x0 = spec.margin_mm * d;
    g.px_per_s = spec.paper_speed * d;
    g.px_per_mv = spec.gain * d;
    for (int r = 0; r < layout.rows(); ++r)
        g.baselines.push_back((spec.margin_mm + (r + 0.56) * layout.row_pitch_mm) * d);
    return g;
}

struct MarkerTruth {
    LeadName lead = LeadName::I;
    int panel = 0;
    double x = 0.0, y = 0.0;          // paper pixels, ink-weighted centroid
    double image_x = 0.0, image_y = 0.0;  // output pixels
    double box_x = 0.0, box_y = 0.0, box_w = 0.0, box_h = 0.0;  // paper pixels
};

struct PanelTruth {
    LeadName lead = LeadName::I;
    int row = 0;
    int column = 0;
    double start_s = 0.0;
    double end_s = 0.0;
    bool rhythm = false;
    std::vector<int> clipped;  // sample indices (into the lead's source signal) outside the paper
};

struct GroundTruth {
    std::vector<Series1D> signals;  // indexed by LeadName; empty when the lead is not rendered
    std::vector<PanelTruth> panels;
    std::vector<MarkerTruth> markers;
    double grid_minor_px = 0.0;
    double paper_speed = 25.0;
    double gain = 10.0;
    Mat3 homography = Mat3::Identity();
    std::string layout_name;
    std::string style = "scan";
    int paper_width = 0, paper_height = 0;
    int image_width = 0, image_height = 0;
    double trace_x0 = 0.0;
    std::vector<double> baselines;
    double line_width_px = 0.0;

    /// Paper-space trace row position for `panel` at paper column x, or nullopt outside the panel.
    std::optional<double> trace_y(int panel, double x) const {
        const PanelTruth& p = panels.at(panel);
        const double px_per_s = paper_speed * grid_minor_px;
        const double t = (x - trace_x0) / px_per_s;
        if (t < p.start_s || t > p.end_s) return std::nullopt;
        const Series1D& s = signals.at(static_cast<int>(p.lead));
        const double pos = t * s.sample_rate;
        const auto k = static_cast<std::size_t>(std::floor(pos));
        if (k + 1 >= s.values.size()) return std::nullopt;
        const double f = pos - static_cast<double>(k);
        const double v = s.values[k] * (1.0 - f) + s.values[k + 1] * f;
        return baselines.at(p.row) - v * gain * grid_minor_px;
    }
};

struct RenderResult {
    RgbRaster image;
    GroundTruth truth;
};

namespace detail {

// Fraction of the pixel [i-0.5, i+0.5] covered by [lo, hi].
inline double span_coverage(double lo, double hi, int i) {
    return std::max(0.0, std::min(hi, i + 0.5) - std::max(lo, i - 0.5));
}

inline std::vector<float> line_profile(int n, double spacing, double minor_w, double major_w) {
    std::vector<float> cov(n, 0.0f);
    for (int k = 0;; ++k) {
        const double c = k * spacing;
        if (c > n) break;
        const double w = (k % 5 == 0) ? major_w : minor_w;
        const int lo = std::max(0, static_cast<int>(std::floor(c - w / 2 - 1)));
        const int hi = std::min(n - 1, static_cast<int>(std::ceil(c + w / 2 + 1)));
        for (int i = lo; i <= hi; ++i)
            cov[i] = std::max(cov[i], static_cast<float>(span_coverage(c - w / 2, c + w / 2, i)));
    }
    return cov;
}

struct Point {
    double x, y;
};

inline double segment_distance(const Point& a, const Point& b, double px, double py) {
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double wx = px - a.x, wy = py - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? (wx * vx + wy * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = wx - t * vx, dy = wy - t * vy;
    return std::sqrt(dx * dx + dy * dy);
}

// Coverage-based anti-aliased polyline; keeps the maximum coverage per pixel.
inline void draw_polyline(std::vector<float>& alpha, int width, int height, const std::vector<Point>& pts,
                          double line_width) {
    const double half = line_width / 2.0;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        const Point& a = pts[k];
        const Point& b = pts[k + 1];
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - half - 1)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + half + 1)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - half - 1)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + half + 1)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double cov = std::clamp(half + 0.5 - segment_distance(a, b, x, y), 0.0, 1.0);
                float& dst = alpha[static_cast<std::size_t>(y) * width + x];
                dst = std::max(dst, static_cast<float>(cov));
            }
    }
}

inline double channel(Rgb c, int i) { return i == 0 ? c.r : (i == 1 ? c.g : c.b); }

}  // namespace detail

/// Renders a paper ECG with known ground truth. `signals` is indexed by LeadName and must
/// contain every lead used by the layout.
inline RenderResult render(const RenderSpec& spec, const std::vector<Series1D>& signals) {
    validate(spec);
    const LayoutSpec& layout = spec.layout;
    for (const auto& p : layout.panels) {
        require(static_cast<int>(p.lead) < static_cast<int>(signals.size()) &&
                    !signals[static_cast<int>(p.lead)].values.empty(),
                "no signal provided for lead " + std::string(to_string(p.lead)));
        const Series1D& s = signals[static_cast<int>(p.lead)];
        require(static_cast<double>(s.values.size()) / s.sample_rate >= p.end_s - 1e-9,
                "signal for lead " + std::string(to_string(p.lead)) + " is shorter than the layout");
    }

    const double d = spec.grid_minor_px;
    const PaperGeometry geo = paper_geometry(spec);
    const int W = geo.width;
    const int H = geo.height;

    GroundTruth truth;
    truth.grid_minor_px = d;
    truth.paper_speed = spec.paper_speed;
    truth.gain = spec.gain;
    truth.homography = spec.homography;
    truth.layout_name = layout.name;
    truth.paper_width = W;
    truth.paper_height = H;
    truth.trace_x0 = geo.trace_x0;
    truth.baselines = geo.baselines;
    truth.line_width_px = spec.line_width_px;
    truth.signals.resize(kLeadCount);
    for (const auto& p : layout.panels) truth.signals[static_cast<int>(p.lead)] = signals[static_cast<int>(p.lead)];

    // Trace polylines, one per row; consecutive panels are joined like a continuous pen.
    std::vector<std::vector<detail::Point>> rows(layout.rows());
    std::vector<int> panel_order(layout.panels.size());
    for (std::size_t i = 0; i < panel_order.size(); ++i) panel_order[i] = static_cast<int>(i);
    std::sort(panel_order.begin(), panel_order.end(), [&](int a, int b) {
        const Panel& pa = layout.panels[a];
        const Panel& pb = layout.panels[b];
        return pa.row != pb.row ? pa.row < pb.row : pa.column < pb.column;
    });
    truth.panels.resize(layout.panels.size());
    for (int idx : panel_order) {
        const Panel& p = layout.panels[idx];
        const Series1D& s = signals[static_cast<int>(p.lead)];
        PanelTruth& pt = truth.panels[idx];
        pt = {p.lead, p.row, p.column, p.start_s, p.end_s, p.rhythm, {}};
        const bool last_in_row = p.end_s >= layout.duration_s() - 1e-9;
        const auto k0 = static_cast<std::size_t>(std::ceil(p.start_s * s.sample_rate - 1e-9));
        auto k1 = static_cast<std::size_t>(std::ceil(p.end_s * s.sample_rate - 1e-9));
        if (last_in_row) k1 = std::min(s.values.size(), k1 + 1);
        for (std::size_t k = k0; k < k1; ++k) {
            const double t = static_cast<double>(k) / s.sample_rate;
            const double x = geo.trace_x0 + t * geo.px_per_s;
            const double y = geo.baselines[p.row] - s.values[k] * geo.px_per_mv;
            if (y < 0.0 || y > H - 1) pt.clipped.push_back(static_cast<int>(k));
            rows[p.row].push_back({x, y});
        }
    }

    std::vector<float> trace_alpha(static_cast<std::size_t>(W) * H, 0.0f);
    for (const auto& row : rows) detail::draw_polyline(trace_alpha, W, H, row, spec.line_width_px);

    // Marker placement: first candidate offset whose box stays clear of every trace.
    const std::array<Glyph, kLeadCount>& glyphs = glyph_library();
    const double cell = spec.glyph_cell_mm * d;
    const double gw = Glyph::kCols * cell;
    const double gh = Glyph::kRows * cell;
    auto box_is_clear = [&](double bx, double by) {
        if (bx < 0 || by < 0 || bx + gw > W - 1 || by + gh > H - 1) return false;
        const double pad = spec.line_width_px + 0.5 * d;
        for (const auto& row : rows)
            for (const auto& pt : row) {
                if (pt.x < bx - pad || pt.x > bx + gw + pad) continue;
                if (pt.y > by - pad && pt.y < by + gh + pad) return false;
            }
        return true;
    };
    if (spec.draw_markers) {
        for (std::size_t i = 0; i < layout.panels.size(); ++i) {
            if (std::find(spec.hidden_markers.begin(), spec.hidden_markers.end(), static_cast<int>(i)) !=
                spec.hidden_markers.end())
                continue;
            const Panel& p = layout.panels[i];
            const double bx = geo.trace_x0 + p.start_s * geo.px_per_s + 1.0 * d;
            double by = geo.baselines[p.row] - 5.0 * d - gh / 2;
            for (double off_mm : {-5.0, -8.0, 5.0, 8.0, -11.0, -3.0, 3.0}) {
                const double cand = geo.baselines[p.row] + off_mm * d - gh / 2;
                if (box_is_clear(bx, cand)) {
                    by = cand;
                    break;
                }
            }
            const auto [cx, cy] = glyph_centroid(glyphs[static_cast<int>(p.lead)]);
            MarkerTruth m;
            m.lead = p.lead;
            m.panel = static_cast<int>(i);
            m.x = bx + cx * cell;
            m.y = by + cy * cell;
            m.box_x = bx;
            m.box_y = by;
            m.box_w = gw;
            m.box_h = gh;
            truth.markers.push_back(m);
        }
    }

    // Composite: paper, grid, opaque marker boxes, then traces.
    const std::vector<float> col_cov = detail::line_profile(W, d, std::max(1.0, 0.1 * d), std::max(1.5, 0.2 * d));
    const std::vector<float> row_cov = detail::line_profile(H, d, std::max(1.0, 0.1 * d), std::max(1.5, 0.2 * d));
    std::vector<float> box_cov(static_cast<std::size_t>(W) * H, 0.0f);
    std::vector<float> ink_cov(static_cast<std::size_t>(W) * H, 0.0f);
    for (const auto& m : truth.markers) {
        const Glyph& g = glyphs[static_cast<int>(m.lead)];
        const int x0 = static_cast<int>(std::floor(m.box_x)), x1 = static_cast<int>(std::ceil(m.box_x + gw));
        const int y0 = static_cast<int>(std::floor(m.box_y)), y1 = static_cast<int>(std::ceil(m.box_y + gh));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double bc = detail::span_coverage(m.box_x, m.box_x + gw, x) *
                                  detail::span_coverage(m.box_y, m.box_y + gh, y);
                if (bc <= 0) continue;
                double ic = 0.0;
                const int c0 = std::max(0, static_cast<int>(std::floor((x - 0.5 - m.box_x) / cell)));
                const int c1 = std::min(Glyph::kCols - 1, static_cast<int>(std::floor((x + 0.5 - m.box_x) / cell)));
                const int r0 = std::max(0, static_cast<int>(std::floor((y - 0.5 - m.box_y) / cell)));
                const int r1 = std::min(Glyph::kRows - 1, static_cast<int>(std::floor((y + 0.5 - m.box_y) / cell)));
                for (int r = r0; r <= r1; ++r)
                    for (int c = c0; c <= c1; ++c)
                        if (g.at(c, r))
                            ic += detail::span_coverage(m.box_x + c * cell, m.box_x + (c + 1) * cell, x) *
                                  detail::span_coverage(m.box_y + r * cell, m.box_y + (r + 1) * cell, y);
                const std::size_t idx = static_cast<std::size_t>(y) * W + x;
                box_cov[idx] = std::min(1.0f, box_cov[idx] + static_cast<float>(bc));
                ink_cov[idx] = std::min(1.0f, ink_cov[idx] + static_cast<float>(ic));
            }
    }

    RgbRaster paper(W, H, spec.paper_color);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * W + x;
            const double ag = 1.0 - (1.0 - col_cov[x]) * (1.0 - row_cov[y]);
            const double ab = box_cov[idx];
            const double ai = ink_cov[idx];
            const double at = trace_alpha[idx];
            std::array<std::uint8_t, 3> out{};
            for (int ch = 0; ch < 3; ++ch) {
                double v = detail::channel(spec.paper_color, ch);
                v = v * (1.0 - ag) + detail::channel(spec.grid_color, ch) * ag;
                v = v * (1.0 - ab) + detail::channel(spec.paper_color, ch) * (ab - ai) +
                    detail::channel(spec.text_color, ch) * ai;
                v = v * (1.0 - at) + detail::channel(spec.trace_color, ch) * at;
                out[ch] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
            paper.set(x, y, {out[0], out[1], out[2]});
        }
    trace_alpha = {};
    box_cov = {};
    ink_cov = {};

    const int out_w = spec.output_width > 0 ? spec.output_width : W;
    const int out_h = spec.output_height > 0 ? spec.output_height : H;
    const bool identity = spec.homography.isApprox(Mat3::Identity(), 1e-15) && out_w == W && out_h == H;
    RgbRaster image = identity ? std::move(paper) : RgbRaster(out_w, out_h, spec.background_color);
    if (!identity) {
        for (int v = 0; v < out_h; ++v)
            for (int u = 0; u < out_w; ++u) {
                const Vec2 src = apply(spec.homography, Vec2(u, v));
                const double sx = src.x(), sy = src.y();
                if (!(sx >= -0.5 && sy >= -0.5 && sx <= W - 0.5 && sy <= H - 0.5)) continue;
                const double cx = std::clamp(sx, 0.0, W - 1.0), cy = std::clamp(sy, 0.0, H - 1.0);
                const int x0 = std::min(static_cast<int>(cx), W - 2 < 0 ? 0 : W - 2);
                const int y0 = std::min(static_cast<int>(cy), H - 2 < 0 ? 0 : H - 2);
                const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
                const double fx = cx - x0, fy = cy - y0;
                const Rgb p00 = paper.at(x0, y0), p10 = paper.at(x1, y0), p01 = paper.at(x0, y1), p11 = paper.at(x1, y1);
                std::array<std::uint8_t, 3> out{};
                for (int ch = 0; ch < 3; ++ch) {
                    const double val = (1 - fy) * ((1 - fx) * detail::channel(p00, ch) + fx * detail::channel(p10, ch)) +
                                       fy * ((1 - fx) * detail::channel(p01, ch) + fx * detail::channel(p11, ch));
                    out[ch] = static_cast<std::uint8_t>(std::lround(std::clamp(val, 0.0, 255.0)));
                }
                image.set(u, v, {out[0], out[1], out[2]});
            }
    }

    if (spec.noise_level > 0.0) {
        std::mt19937_64 rng(spec.rng_seed ^ 0x9e3779b97f4a7c15ULL);
        std::normal_distribution<double> noise(0.0, spec.noise_level * 255.0);
        for (auto& b : image.data()) b = static_cast<std::uint8_t>(std::lround(std::clamp(b + noise(rng), 0.0, 255.0)));
    }

    const Mat3 forward = spec.homography.inverse();
    for (auto& m : truth.markers) {
        const Vec2 q = apply(forward, Vec2(m.x, m.y));
        m.image_x = q.x();
        m.image_y = q.y();
    }
    truth.image_width = image.width();
    truth.image_height = image.height();
    return {std::move(image), std::move(truth)};
}

// ---------------------------------------------------------------------------
// Randomized photo geometry

struct PhotoWarp {
    Mat3 pull = Mat3::Identity();  // output -> paper
    int width = 0;
    int height = 0;
};

/// Rotation about the paper center plus independent corner displacements of at most
/// `corner_fraction` of the paper width, framed with a small border.
inline PhotoWarp make_photo_warp(int paper_w, int paper_h, double rotation_rad, double corner_fraction,
                                 std::mt19937_64& rng, double border_fraction = 0.03) {
    const Vec2 center((paper_w - 1) / 2.0, (paper_h - 1) / 2.0);
    const std::array<Vec2, 4> corners{Vec2(0, 0), Vec2(paper_w - 1, 0), Vec2(paper_w - 1, paper_h - 1),
                                      Vec2(0, paper_h - 1)};
    const Mat3 rot = rotation_about(rotation_rad, center);
    const double max_disp = corner_fraction * paper_w;
    std::array<Vec2, 4> moved{};
    for (int i = 0; i < 4; ++i) {
        const double r = max_disp * std::sqrt(detail::uniform(rng, 0.0, 1.0));
        const double a = detail::uniform(rng, 0.0, 2.0 * kPi);
        moved[i] = apply(rot, corners[i]) + Vec2(r * std::cos(a), r * std::sin(a));
    }
    double minx = 1e300, miny = 1e300, maxx = -1e300, maxy = -1e300;
    for (const auto& p : moved) {
        minx = std::min(minx, p.x());
        miny = std::min(miny, p.y());
        maxx = std::max(maxx, p.x());
        maxy = std::max(maxy, p.y());
    }
    const double border = border_fraction * std::max(paper_w, paper_h);
    for (auto& p : moved) p += Vec2(border - minx, border - miny);
    PhotoWarp w;
    w.width = static_cast<int>(std::ceil(maxx - minx + 2 * border));
    w.height = static_cast<int>(std::ceil(maxy - miny + 2 * border));
    const Mat3 forward = homography_from_points(corners, moved);
    w.pull = forward.inverse();
    w.pull /= w.pull(2, 2);
    return w;
}

// ---------------------------------------------------------------------------
// Ground-truth sidecar: "key = value" lines followed by CSV sections introduced by "[name]".

inline void write_ground_truth(const GroundTruth& truth, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
    out << std::setprecision(17);
    out << "layout = " << truth.layout_name << '\n';
    out << "style = " << truth.style << '\n';
    out << "grid_minor_px = " << truth.grid_minor_px << '\n';
    out << "paper_speed = " << truth.paper_speed << '\n';
    out << "gain = " << truth.gain << '\n';
    out << "paper_width = " << truth.paper_width << '\n';
    out << "paper_height = " << truth.paper_height << '\n';
    out << "image_width = " << truth.image_width << '\n';
    out << "image_height = " << truth.image_height << '\n';
    out << "trace_x0 = " << truth.trace_x0 << '\n';
    out << "line_width_px = " << truth.line_width_px << '\n';
    out << "homography =";
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out << ' ' << truth.homography(r, c);
    out << '\n';
    out << "[rows]\nrow,baseline_px\n";
    for (std::size_t r = 0; r < truth.baselines.size(); ++r) out << r << ',' << truth.baselines[r] << '\n';
    out << "[panels]\nlead,row,column,start_s,end_s,rhythm,clipped_samples\n";
    for (const auto& p : truth.panels) {
        out << to_string(p.lead) << ',' << p.row << ',' << p.column << ',' << p.start_s << ',' << p.end_s << ','
            << (p.rhythm ? 1 : 0) << ',';
        for (std::size_t i = 0; i < p.clipped.size(); ++i) out << (i ? ";" : "") << p.clipped[i];
        out << '\n';
    }
    out << "[markers]\nlead,panel,paper_x,paper_y,image_x,image_y\n";
    for (const auto& m : truth.markers)
        out << to_string(m.lead) << ',' << m.panel << ',' << m.x << ',' << m.y << ',' << m.image_x << ',' << m.image_y
            << '\n';
    if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

/// Reads the key/value header and the panels/markers sections. Signals are stored separately.
inline GroundTruth read_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
    GroundTruth truth;
    std::string line, section;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(s);
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!s.empty() && s.back() == ',') cells.emplace_back();
        return cells;
    };
    bool header_row = false;
    try {
        while (std::getline(in, line)) {
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                section = line.substr(1, line.size() - 2);
                header_row = true;
                continue;
            }
            if (section.empty()) {
                const auto eq = line.find('=');
                if (eq == std::string::npos) fail(ErrorCode::kFormat, path.string() + ": expected key = value");
                const std::string key = trim(line.substr(0, eq));
                const std::string value = trim(line.substr(eq + 1));
                if (key == "layout") truth.layout_name = value;
                else if (key == "style") truth.style = value;
                else if (key == "grid_minor_px") truth.grid_minor_px = std::stod(value);
                else if (key == "paper_speed") truth.paper_speed = std::stod(value);
                else if (key == "gain") truth.gain = std::stod(value);
                else if (key == "paper_width") truth.paper_width = std::stoi(value);
                else if (key == "paper_height") truth.paper_height = std::stoi(value);
                else if (key == "image_width") truth.image_width = std::stoi(value);
                else if (key == "image_height") truth.image_height = std::stoi(value);
                else if (key == "trace_x0") truth.trace_x0 = std::stod(value);
                else if (key == "line_width_px") truth.line_width_px = std::stod(value);
                else if (key == "homography") {
                    std::istringstream ss(value);
                    for (int r = 0; r < 3; ++r)
                        for (int c = 0; c < 3; ++c) ss >> truth.homography(r, c);
                }
                continue;
            }
            if (header_row) {
                header_row = false;
                continue;
            }
            const auto cells = split(line);
            if (section == "rows" && cells.size() >= 2) {
                truth.baselines.push_back(std::stod(cells[1]));
            } else if (section == "panels" && cells.size() >= 6) {
                PanelTruth p;
                p.lead = parse_lead(cells[0]).value();
                p.row = std::stoi(cells[1]);
                p.column = std::stoi(cells[2]);
                p.start_s = std::stod(cells[3]);
                p.end_s = std::stod(cells[4]);
                p.rhythm = cells[5] == "1";
                if (cells.size() > 6 && !cells[6].empty()) {
                    std::istringstream ss(cells[6]);
                    std::string idx;
                    while (std::getline(ss, idx, ';')) p.clipped.push_back(std::stoi(idx));
                }
                truth.panels.push_back(p);
            } else if (section == "markers" && cells.size() >= 6) {
                MarkerTruth m;
                m.lead = parse_lead(cells[0]).value();
                m.panel = std::stoi(cells[1]);
                m.x = std::stod(cells[2]);
                m.y = std::stod(cells[3]);
                m.image_x = std::stod(cells[4]);
                m.image_y = std::stod(cells[5]);
                truth.markers.push_back(m);
            }
        }
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        fail(ErrorCode::kFormat, path.string() + ": " + e.what());
    }
    return truth;
}

/// Reference signals over each lead's longest printed panel, sampled as rendered.
inline SignalTable reference_table(const GroundTruth& truth) {
    SignalTable table;
    double duration = 0.0;
    for (const auto& p : truth.panels) duration = std::max(duration, p.end_s);
    for (LeadName lead : kAllLeads) {
        const PanelTruth* best = nullptr;
        for (const auto& p : truth.panels)
            if (p.lead == lead && (!best || p.end_s - p.start_s > best->end_s - best->start_s)) best = &p;
        if (!best) continue;
        const Series1D& s = truth.signals.at(static_cast<int>(lead));
        if (s.values.empty()) continue;
        table.sample_rate = s.sample_rate;
        const auto k0 = static_cast<std::size_t>(std::ceil(best->start_s * s.sample_rate - 1e-9));
        auto k1 = static_cast<std::size_t>(std::ceil(best->end_s * s.sample_rate - 1e-9));
        k1 = std::min(k1, s.values.size());
        LeadColumn c;
        c.lead = lead;
        c.start_index = k0;
        c.values.assign(s.values.begin() + static_cast<std::ptrdiff_t>(k0), s.values.begin() + static_cast<std::ptrdiff_t>(k1));
        for (int k : best->clipped)
            if (static_cast<std::size_t>(k) >= k0 && static_cast<std::size_t>(k) < k1) c.values[k - k0] = std::nan("");
        table.leads.push_back(std::move(c));
    }
    table.length = static_cast<std::size_t>(std::llround(duration * table.sample_rate));
    return table;
}

}  // namespace ecgdig
