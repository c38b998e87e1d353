#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "ecgdig/components.hpp"
#include "ecgdig/error.hpp"
#include "ecgdig/glyphs.hpp"
#include "ecgdig/layout_spec.hpp"
#include "ecgdig/raster.hpp"

namespace ecgdig {

struct LeadMarker {
    LeadName name = LeadName::I;
    double x = 0.0;  // normalized [0,1]
    double y = 0.0;
    double confidence = 0.0;
    double px = 0.0;  // pixel centroid
    double py = 0.0;
};

struct MarkerOptions {
    float threshold = 0.5f;
    double min_correlation = 0.7;
    double aspect_tolerance = 0.25;
    std::size_t min_pixels = 20;
    double gap_fraction = 0.3;
};

namespace detail {

// Area-averages the box [x0-0.5, x1+0.5] x [y0-0.5, y1+0.5] of a plane onto a cols x rows grid.
inline std::vector<double> resample_box(PlaneView plane, int x0, int y0, int x1, int y1, int cols, int rows) {
    std::vector<double> cells(static_cast<std::size_t>(cols) * rows, 0.0);
    const double bx = x0 - 0.5, by = y0 - 0.5;
    const double cw = (x1 - x0 + 1.0) / cols, ch = (y1 - y0 + 1.0) / rows;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double v = plane.at(x, y);
            if (v == 0.0) continue;
            const double px0 = x - 0.5 - bx, py0 = y - 0.5 - by;
            const int c0 = std::max(0, static_cast<int>(std::floor(px0 / cw)));
            const int c1 = std::min(cols - 1, static_cast<int>(std::floor((px0 + 1.0) / cw)));
            const int r0 = std::max(0, static_cast<int>(std::floor(py0 / ch)));
            const int r1 = std::min(rows - 1, static_cast<int>(std::floor((py0 + 1.0) / ch)));
            for (int r = r0; r <= r1; ++r) {
                const double oy = std::min(py0 + 1.0, (r + 1) * ch) - std::max(py0, r * ch);
                if (oy <= 0) continue;
                for (int c = c0; c <= c1; ++c) {
                    const double ox = std::min(px0 + 1.0, (c + 1) * cw) - std::max(px0, c * cw);
                    if (ox > 0) cells[static_cast<std::size_t>(r) * cols + c] += v * ox * oy / (cw * ch);
                }
            }
        }
    return cells;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
        saa += a[i] * a[i];
        sbb += b[i] * b[i];
        sab += a[i] * b[i];
    }
    const double cov = sab - sa * sb / n;
    const double va = saa - sa * sa / n, vb = sbb - sb * sb / n;
    if (va <= 0 || vb <= 0) return 0.0;
    return cov / std::sqrt(va * vb);
}

}  // namespace detail

/// Best-matching glyph for a cell grid, as (lead, correlation).
inline std::pair<LeadName, double> classify_glyph(const std::vector<double>& cells) {
    LeadName best = LeadName::I;
    double best_r = -1.0;
    for (const Glyph& g : glyph_library()) {
        std::vector<double> ref(g.ink.begin(), g.ink.end());
        const double r = detail::pearson(cells, ref);
        if (r > best_r) {
            best_r = r;
            best = g.lead;
        }
    }
    return {best, best_r};
}

/// Unions text fragments whose bounding boxes lie within `gap_fraction` of the taller one's
/// height, so glyphs with gaps between strokes form one region.
inline std::vector<Component> group_fragments(const std::vector<Component>& comps, double gap_fraction) {
    const std::size_t n = comps.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto root = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const Component& a = comps[i];
            const Component& b = comps[j];
            const double g = gap_fraction * std::max(a.y_max - a.y_min + 1, b.y_max - b.y_min + 1);
            const int gx = std::max(a.x_min, b.x_min) - std::min(a.x_max, b.x_max) - 1;
            const int gy = std::max(a.y_min, b.y_min) - std::min(a.y_max, b.y_max) - 1;
            if (gx <= g && gy <= g) parent[root(j)] = root(i);
        }
    std::vector<Component> groups;
    std::vector<int> slot(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = root(i);
        if (slot[r] < 0) {
            slot[r] = static_cast<int>(groups.size());
            groups.emplace_back();
        }
        auto& px = groups[slot[r]].pixels;
        px.insert(px.end(), comps[i].pixels.begin(), comps[i].pixels.end());
    }
    for (auto& g : groups) finalize(g);
    return groups;
}

/// Detects lead markers as text-channel regions that correlate with a library glyph.
inline std::vector<LeadMarker> markers_from_text_channel(PlaneView text, const MarkerOptions& opt = {}) {
    const std::vector<Component> comps = group_fragments(threshold_components(text, opt.threshold, 1), opt.gap_fraction);
    const double glyph_aspect = static_cast<double>(Glyph::kCols) / Glyph::kRows;
    std::vector<LeadMarker> out;
    for (std::size_t i = 0; i < comps.size(); ++i) {
        const Component& c = comps[i];
        if (c.size() < opt.min_pixels) continue;
        const bool nested = std::any_of(comps.begin(), comps.end(), [&](const Component& o) {
            return &o != &c && o.x_min <= c.x_min && o.x_max >= c.x_max && o.y_min <= c.y_min && o.y_max >= c.y_max;
        });
        if (nested) continue;
        const double w = c.x_span(), h = c.y_max - c.y_min + 1.0;
        if (std::abs(w / h / glyph_aspect - 1.0) > opt.aspect_tolerance) continue;
        const auto cells = detail::resample_box(text, c.x_min, c.y_min, c.x_max, c.y_max, Glyph::kCols, Glyph::kRows);
        const auto [lead, r] = classify_glyph(cells);
        if (r < opt.min_correlation) continue;

        double sw = 0, sx = 0, sy = 0;
        for (int y = c.y_min; y <= c.y_max; ++y)
            for (int x = c.x_min; x <= c.x_max; ++x) {
                const double v = text.at(x, y);
                sw += v;
                sx += v * x;
                sy += v * y;
            }
        LeadMarker m;
        m.name = lead;
        m.confidence = std::clamp(r, 0.0, 1.0);
        m.px = sx / sw;
        m.py = sy / sw;
        m.x = std::clamp(m.px / std::max(1, text.width - 1), 0.0, 1.0);
        m.y = std::clamp(m.py / std::max(1, text.height - 1), 0.0, 1.0);
        out.push_back(m);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Layout matching

/// Per-axis scale and translation applied to marker coordinates.
struct AxisTransform {
    double sx = 1.0, tx = 0.0, sy = 1.0, ty = 0.0;

    std::pair<double, double> apply(double x, double y) const { return {sx * x + tx, sy * y + ty}; }
};

struct SlotMatch {
    int marker = 0;
    int slot = 0;
};

struct MatchResult {
    LayoutSpec layout;
    int layout_index = 0;
    double cost = 0.0;
    std::vector<SlotMatch> matched;
    std::vector<int> missing;  // slot indices
    AxisTransform transform;
    std::vector<double> all_costs;  // per candidate layout, declaration order
};

namespace detail {

inline std::pair<double, double> fit_axis(const std::vector<double>& p, const std::vector<double>& g) {
    const double n = static_cast<double>(p.size());
    if (p.empty()) return {1.0, 0.0};
    double mp = 0, mg = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        mp += p[i];
        mg += g[i];
    }
    mp /= n;
    mg /= n;
    double spp = 0, spg = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        spp += (p[i] - mp) * (p[i] - mp);
        spg += (p[i] - mp) * (g[i] - mg);
    }
    double s = 1.0;
    if (spp > 1e-12 && spg > 0) s = spg / spp;
    return {s, mg - s * mp};
}

}  // namespace detail

/// Least-squares per-axis scale and translation taking markers onto their slots.
inline AxisTransform estimate_transform(const std::vector<LeadMarker>& markers, const std::vector<MarkerSlot>& slots,
                                        const std::vector<SlotMatch>& pairs) {
    std::vector<double> px, py, gx, gy;
    for (const auto& m : pairs) {
        px.push_back(markers[m.marker].x);
        py.push_back(markers[m.marker].y);
        gx.push_back(slots[m.slot].x);
        gy.push_back(slots[m.slot].y);
    }
    AxisTransform t;
    std::tie(t.sx, t.tx) = detail::fit_axis(px, gx);
    std::tie(t.sy, t.ty) = detail::fit_axis(py, gy);
    return t;
}

/// Pairs markers with same-name template slots. Names with a single slot and a single marker
/// pair directly; the rest are resolved greedily by distance after a provisional transform.
inline std::vector<SlotMatch> pair_markers(const std::vector<LeadMarker>& markers,
                                           const std::vector<MarkerSlot>& slots) {
    std::vector<SlotMatch> fixed;
    std::vector<int> ambiguous_markers, ambiguous_slots;
    for (LeadName lead : kAllLeads) {
        std::vector<int> ms, ss;
        for (std::size_t i = 0; i < markers.size(); ++i)
            if (markers[i].name == lead) ms.push_back(static_cast<int>(i));
        for (std::size_t i = 0; i < slots.size(); ++i)
            if (slots[i].lead == lead) ss.push_back(static_cast<int>(i));
        if (ms.empty() || ss.empty()) continue;
        if (ms.size() == 1 && ss.size() == 1) {
            fixed.push_back({ms[0], ss[0]});
        } else {
            ambiguous_markers.insert(ambiguous_markers.end(), ms.begin(), ms.end());
            ambiguous_slots.insert(ambiguous_slots.end(), ss.begin(), ss.end());
        }
    }
    if (ambiguous_markers.empty()) return fixed;

    const AxisTransform provisional = estimate_transform(markers, slots, fixed);
    struct Candidate {
        double dist;
        int row;
        int marker;
        int slot;
    };
    std::vector<Candidate> cands;
    for (int m : ambiguous_markers)
        for (int s : ambiguous_slots) {
            if (markers[m].name != slots[s].lead) continue;
            const auto [x, y] = provisional.apply(markers[m].x, markers[m].y);
            cands.push_back({std::hypot(x - slots[s].x, y - slots[s].y), slots[s].row, m, s});
        }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        if (a.row != b.row) return a.row < b.row;
        return a.marker != b.marker ? a.marker < b.marker : a.slot < b.slot;
    });
    std::vector<char> used_m(markers.size(), 0), used_s(slots.size(), 0);
    for (const auto& c : cands) {
        if (used_m[c.marker] || used_s[c.slot]) continue;
        used_m[c.marker] = used_s[c.slot] = 1;
        fixed.push_back({c.marker, c.slot});
    }
    std::sort(fixed.begin(), fixed.end(), [](const SlotMatch& a, const SlotMatch& b) { return a.slot < b.slot; });
    return fixed;
}

/// Matching cost of one layout: (lambda * missing + sum of residual distances) / |G|.
inline MatchResult score_layout(const std::vector<LeadMarker>& markers, const LayoutSpec& layout, double lambda) {
    const std::vector<MarkerSlot> slots = generate_layout(layout);
    MatchResult r;
    r.layout = layout;
    r.matched = pair_markers(markers, slots);
    r.transform = estimate_transform(markers, slots, r.matched);
    std::vector<char> hit(slots.size(), 0);
    double sum = 0.0;
    for (const auto& m : r.matched) {
        hit[m.slot] = 1;
        const auto [x, y] = r.transform.apply(markers[m.marker].x, markers[m.marker].y);
        sum += std::hypot(x - slots[m.slot].x, y - slots[m.slot].y);
    }
    for (std::size_t s = 0; s < slots.size(); ++s)
        if (!hit[s]) r.missing.push_back(static_cast<int>(s));
    r.cost = (lambda * static_cast<double>(r.missing.size()) + sum) / static_cast<double>(slots.size());
    return r;
}

/// Chooses the layout with the smallest matching cost. Detections outside a layout cost
/// nothing, so a layout listing a subset of the page's leads can tie with the full one; among
/// layouts within `coverage_tolerance` of the minimum the one matching the most markers wins,
/// then the lower cost, then the earlier layout.
inline MatchResult match_layout(const std::vector<LeadMarker>& markers, const std::vector<LayoutSpec>& layouts,
                                double lambda = 0.5, double coverage_tolerance = 0.1) {
    if (markers.size() < 2) fail(ErrorCode::kLayoutFailure, "fewer than two lead markers detected");
    require(!layouts.empty(), "no candidate layouts");
    std::vector<MatchResult> results;
    std::vector<double> costs;
    for (std::size_t i = 0; i < layouts.size(); ++i) {
        results.push_back(score_layout(markers, layouts[i], lambda));
        results.back().layout_index = static_cast<int>(i);
        costs.push_back(results.back().cost);
    }
    const double min_cost = *std::min_element(costs.begin(), costs.end());
    std::size_t best = layouts.size();
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (results[i].cost > min_cost + coverage_tolerance) continue;
        if (best == layouts.size() || results[i].matched.size() > results[best].matched.size() ||
            (results[i].matched.size() == results[best].matched.size() && results[i].cost < results[best].cost))
            best = i;
    }
    MatchResult out = std::move(results[best]);
    out.all_costs = std::move(costs);
    return out;
}

}  // namespace ecgdig
