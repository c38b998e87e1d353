#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ecgdig/assignment.hpp"
#include "ecgdig/components.hpp"
#include "ecgdig/error.hpp"
#include "ecgdig/grid_scale.hpp"
#include "ecgdig/layout_spec.hpp"
#include "ecgdig/raster.hpp"
#include "ecgdig/signal_io.hpp"

namespace ecgdig {

struct TraceOptions {
    float threshold = 0.5f;
    std::size_t min_size = 10;
    int max_iterations = 10;
    double thick_factor = 3.0;
    double flag_fraction = 0.1;
    double w_x = 1.0;
    double w_y = 2.0;
    double backward_factor = 2.0;
    /// Cost of starting plus ending a chain, in pixels; a join is kept when cheaper.
    double chain_break_cost = 50.0;
    /// Single-component chains narrower than this fraction of the image width are noise.
    double min_chain_fraction = 0.02;
};

/// Components of the signal channel; throws when nothing is found.
inline std::vector<Component> connected_components(PlaneView signal, float threshold = 0.5f,
                                                   std::size_t min_size = 10) {
    std::vector<Component> comps = threshold_components(signal, threshold, min_size);
    if (comps.empty()) fail(ErrorCode::kTraceFailure, "no signal components found");
    return comps;
}

// ---------------------------------------------------------------------------
// Column structure

struct Run {
    int y0, y1;
    int length() const { return y1 - y0 + 1; }
};

struct ColumnRuns {
    int x;
    std::vector<Run> runs;
    int count() const {
        int n = 0;
        for (const auto& r : runs) n += r.length();
        return n;
    }
};

/// Vertical runs per occupied column; relies on pixels sorted by (x, y).
inline std::vector<ColumnRuns> column_runs(const Component& c) {
    std::vector<ColumnRuns> cols;
    for (const auto& p : c.pixels) {
        if (cols.empty() || cols.back().x != p.x) cols.push_back({p.x, {}});
        auto& runs = cols.back().runs;
        if (!runs.empty() && runs.back().y1 + 1 == p.y)
            runs.back().y1 = p.y;
        else
            runs.push_back({p.y, p.y});
    }
    return cols;
}

/// Median vertical run length over all components (stroke thickness estimate).
inline double median_thickness(const std::vector<Component>& comps) {
    std::vector<int> lengths;
    for (const auto& c : comps)
        for (const auto& col : column_runs(c))
            for (const auto& r : col.runs) lengths.push_back(r.length());
    if (lengths.empty()) return 1.0;
    std::nth_element(lengths.begin(), lengths.begin() + lengths.size() / 2, lengths.end());
    return lengths[lengths.size() / 2];
}

struct ColumnStats {
    int thick = 0;
    int multi = 0;
    int span = 0;
};

inline ColumnStats column_stats(const Component& c, double thickness, double factor) {
    ColumnStats s;
    s.span = c.x_span();
    for (const auto& col : column_runs(c)) {
        if (col.count() > factor * thickness) ++s.thick;
        if (col.runs.size() >= 2) ++s.multi;
    }
    return s;
}

/// Components that need snipping. A component qualifies when many of its columns hold two
/// separate strokes, or when it is unusually thick over many columns and has a few split
/// columns. With fewer components than expected rows, the component most likely to hold two
/// traces qualifies too, provided it shows split columns or is thick throughout.
inline std::vector<char> flag_problematic(const std::vector<Component>& comps, int expected,
                                          const TraceOptions& opt = {}) {
    std::vector<char> flags(comps.size(), 0);
    const double thickness = median_thickness(comps);
    int candidate = -1;
    std::pair<int, double> candidate_key{-1, -1.0};
    bool candidate_ok = false;
    for (std::size_t i = 0; i < comps.size(); ++i) {
        const ColumnStats s = column_stats(comps[i], thickness, opt.thick_factor);
        const double limit = opt.flag_fraction * s.span;
        const bool some_split = s.multi >= std::max(3.0, 0.02 * s.span);
        if (s.multi > limit || (s.thick > limit && some_split)) flags[i] = 1;
        const double mean_count = static_cast<double>(comps[i].size()) / s.span;
        const std::pair<int, double> key{s.multi, mean_count};
        if (key > candidate_key) {
            candidate_key = key;
            candidate = static_cast<int>(i);
            candidate_ok = some_split || mean_count > opt.thick_factor * thickness;
        }
    }
    if (static_cast<int>(comps.size()) < expected && candidate >= 0 && candidate_ok) flags[candidate] = 1;
    return flags;
}

// ---------------------------------------------------------------------------
// Snipping

/// Splits a component along a left-to-right path of least signal probability chosen greedily
/// with one step of lookahead. Returns the input unchanged when no split results.
inline std::vector<Component> snip(const Component& c, std::size_t min_size = 10) {
    const int w = c.x_span(), h = c.y_max - c.y_min + 1;
    if (h < 2 || w < 1) return {c};
    std::vector<float> prob(static_cast<std::size_t>(w) * h, 0.0f);
    auto at = [&](int x, int y) -> float {
        if (x < c.x_min || x > c.x_max || y < c.y_min || y > c.y_max) return 0.0f;
        return prob[static_cast<std::size_t>(y - c.y_min) * w + (x - c.x_min)];
    };
    for (const auto& p : c.pixels) prob[static_cast<std::size_t>(p.y - c.y_min) * w + (p.x - c.x_min)] = p.p;

    const std::vector<ColumnRuns> cols = column_runs(c);
    int start_x = -1, start_y = 0;
    for (const auto& col : cols) {
        if (col.runs.size() < 2) continue;
        int best_gap = -1;
        for (std::size_t k = 0; k + 1 < col.runs.size(); ++k) {
            const int gap = col.runs[k + 1].y0 - col.runs[k].y1 - 1;
            if (gap > best_gap) {
                best_gap = gap;
                start_y = (col.runs[k].y1 + col.runs[k + 1].y0) / 2;
            }
        }
        start_x = col.x;
        break;
    }
    if (start_x < 0) {
        int best = -1;
        for (const auto& col : cols)
            if (col.count() > best) {
                best = col.count();
                start_x = col.x;
                const Run& r = *std::max_element(col.runs.begin(), col.runs.end(),
                                                 [](const Run& a, const Run& b) { return a.length() < b.length(); });
                start_y = (r.y0 + r.y1) / 2;
            }
    }

    std::vector<int> path(w, 0);
    path[start_x - c.x_min] = start_y;
    auto step = [&](int x_next, int dir, int y) {
        double best_cost = std::numeric_limits<double>::infinity();
        int best_y = y;
        for (int dy : {0, -1, 1}) {
            const int cand = std::clamp(y + dy, c.y_min, c.y_max);
            double look = std::numeric_limits<double>::infinity();
            for (int dy2 : {-1, 0, 1}) look = std::min(look, static_cast<double>(at(x_next + dir, cand + dy2)));
            const double cost = at(x_next, cand) + look;
            const bool better = cost < best_cost - 1e-9 ||
                                (std::abs(cost - best_cost) < 1e-9 && std::abs(cand - start_y) < std::abs(best_y - start_y));
            if (better) {
                best_cost = cost;
                best_y = cand;
            }
        }
        return best_y;
    };
    for (int x = start_x + 1; x <= c.x_max; ++x) path[x - c.x_min] = step(x, 1, path[x - 1 - c.x_min]);
    for (int x = start_x - 1; x >= c.x_min; --x) path[x - c.x_min] = step(x, -1, path[x + 1 - c.x_min]);

    std::vector<Component> out;
    for (int side : {-1, 1}) {
        auto inside = [&](int lx, int ly) {
            const int y = ly + c.y_min;
            if (prob[static_cast<std::size_t>(ly) * w + lx] <= 0.0f) return false;
            const int py = path[lx];
            return side < 0 ? y < py : y > py;
        };
        auto value = [&](int lx, int ly) { return prob[static_cast<std::size_t>(ly) * w + lx]; };
        std::vector<Component> part = label_components(w, h, inside, value, min_size);
        for (auto& pc : part) {
            for (auto& p : pc.pixels) {
                p.x += c.x_min;
                p.y += c.y_min;
            }
            finalize(pc);
            out.push_back(std::move(pc));
        }
    }
    if (out.size() < 2) return {c};
    return out;
}

struct IterationResult {
    std::vector<Component> components;
    int iterations = 0;
};

/// Detect, flag and snip until nothing changes or the iteration cap is reached.
inline IterationResult iterate_components(PlaneView signal, int expected_leads, const TraceOptions& opt = {}) {
    require(expected_leads >= 1, "expected lead count must be >= 1");
    IterationResult r;
    r.components = connected_components(signal, opt.threshold, opt.min_size);
    for (r.iterations = 1; r.iterations <= opt.max_iterations; ++r.iterations) {
        const std::vector<char> flags = flag_problematic(r.components, expected_leads, opt);
        bool changed = false;
        std::vector<Component> next;
        for (std::size_t i = 0; i < r.components.size(); ++i) {
            if (!flags[i]) {
                next.push_back(std::move(r.components[i]));
                continue;
            }
            std::vector<Component> parts = snip(r.components[i], opt.min_size);
            changed = changed || parts.size() > 1;
            for (auto& p : parts) next.push_back(std::move(p));
        }
        r.components = std::move(next);
        if (!changed || r.iterations == opt.max_iterations) break;
    }
    std::sort(r.components.begin(), r.components.end(), [](const Component& a, const Component& b) {
        return a.left_end.x != b.left_end.x ? a.left_end.x < b.left_end.x : a.left_end.y < b.left_end.y;
    });
    for (std::size_t i = 0; i < r.components.size(); ++i) r.components[i].id = static_cast<int>(i);
    return r;
}

// ---------------------------------------------------------------------------
// Merging

/// Cost of continuing from the right end `r` of one component to the left end `l` of another.
inline double continuation_cost(PixelPos r, PixelPos l, const TraceOptions& opt = {}) {
    const double base = opt.w_x * std::abs(l.x - r.x) + opt.w_y * std::abs(l.y - r.y);
    return l.x < r.x ? opt.backward_factor * base : base;
}

/// Orders components into chains via minimum-cost assignment of right ends to left ends.
/// Rows n..2n-1 of the cost matrix are chain starts, columns n..2n-1 are chain ends; both cost
/// half the break cost, so a join is kept only when cheaper than ending and restarting.
inline std::vector<std::vector<int>> merge_components(const std::vector<Component>& comps, int image_width,
                                                      const TraceOptions& opt = {}) {
    require(!comps.empty(), "no components to merge");
    const int n = static_cast<int>(comps.size());
    constexpr double kForbidden = 1e12;
    const double half = opt.chain_break_cost / 2;
    CostMatrix cost(2 * n, 2 * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            cost(i, j) = i == j ? kForbidden : continuation_cost(comps[i].right_end, comps[j].left_end, opt);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            cost(i, n + k) = half;
            cost(n + k, i) = half;
        }
    const Assignment a = solve_assignment(cost);

    std::vector<int> next(n, -1), prev(n, -1);
    for (int i = 0; i < n; ++i) {
        const int j = a.col_for_row[i];
        if (j >= 0 && j < n && cost(i, j) < kForbidden) {
            next[i] = j;
            prev[j] = i;
        }
    }
    // Break any cycle at its most expensive link.
    std::vector<char> visited(n, 0);
    for (int s = 0; s < n; ++s) {
        if (visited[s] || prev[s] < 0) continue;
        int k = s;
        std::vector<int> seen;
        while (k >= 0 && !visited[k]) {
            visited[k] = 1;
            seen.push_back(k);
            k = next[k];
        }
        if (k >= 0 && std::find(seen.begin(), seen.end(), k) != seen.end()) {
            int worst = k;
            int q = k;
            do {
                if (cost(q, next[q]) > cost(worst, next[worst])) worst = q;
                q = next[q];
            } while (q != k);
            prev[next[worst]] = -1;
            next[worst] = -1;
        }
    }

    std::vector<std::vector<int>> chains;
    for (int s = 0; s < n; ++s) {
        if (prev[s] >= 0) continue;
        std::vector<int> chain;
        for (int k = s; k >= 0; k = next[k]) chain.push_back(k);
        if (chain.size() == 1 && comps[s].x_span() < opt.min_chain_fraction * image_width) continue;
        chains.push_back(std::move(chain));
    }
    return chains;
}

// ---------------------------------------------------------------------------
// Rows and extraction

/// Pixel-weighted mean y of a chain.
inline double chain_mean_y(const std::vector<Component>& comps, const std::vector<int>& chain) {
    double s = 0, n = 0;
    for (int k : chain)
        for (const auto& p : comps[k].pixels) {
            s += p.y;
            n += 1;
        }
    return n > 0 ? s / n : 0.0;
}

inline int chain_span(const std::vector<Component>& comps, const std::vector<int>& chain) {
    int lo = std::numeric_limits<int>::max(), hi = std::numeric_limits<int>::min();
    for (int k : chain) {
        lo = std::min(lo, comps[k].x_min);
        hi = std::max(hi, comps[k].x_max);
    }
    return hi - lo + 1;
}

/// Row anchors (y positions) from the widest chains, one per distinct row, sorted top down.
inline std::vector<double> row_anchors(const std::vector<Component>& comps,
                                       const std::vector<std::vector<int>>& chains, int rows, int image_height) {
    std::vector<int> order(chains.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return chain_span(comps, chains[a]) > chain_span(comps, chains[b]); });
    const double min_sep = 0.3 * image_height / std::max(1, rows);
    std::vector<double> anchors;
    for (int idx : order) {
        if (static_cast<int>(anchors.size()) == rows) break;
        const double y = chain_mean_y(comps, chains[idx]);
        if (std::all_of(anchors.begin(), anchors.end(), [&](double a) { return std::abs(a - y) >= min_sep; }))
            anchors.push_back(y);
    }
    std::sort(anchors.begin(), anchors.end());
    return anchors;
}

/// Assigns each chain to the nearest anchor; returns chain indices per layout row.
inline std::vector<std::vector<int>> assign_rows(const std::vector<Component>& comps,
                                                 const std::vector<std::vector<int>>& chains,
                                                 const std::vector<double>& anchors, int rows) {
    std::vector<std::vector<int>> out(rows);
    if (anchors.empty()) return out;
    // With missing rows the detected anchors are placed by the median pitch, starting at row 0.
    std::vector<int> row_of(anchors.size());
    std::iota(row_of.begin(), row_of.end(), 0);
    if (static_cast<int>(anchors.size()) < rows && anchors.size() >= 2) {
        std::vector<double> gaps;
        for (std::size_t k = 1; k < anchors.size(); ++k) gaps.push_back(anchors[k] - anchors[k - 1]);
        std::nth_element(gaps.begin(), gaps.begin(), gaps.end());
        const double pitch = gaps.front();
        for (std::size_t k = 0; k < anchors.size(); ++k)
            row_of[k] = std::min(rows - 1, static_cast<int>(std::lround((anchors[k] - anchors[0]) / pitch)));
    }
    const double limit = anchors.size() >= 2 ? 0.75 * (anchors.back() - anchors.front()) / (anchors.size() - 1)
                                             : std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < chains.size(); ++c) {
        const double y = chain_mean_y(comps, chains[c]);
        std::size_t best = 0;
        for (std::size_t k = 1; k < anchors.size(); ++k)
            if (std::abs(anchors[k] - y) < std::abs(anchors[best] - y)) best = k;
        if (std::abs(anchors[best] - y) > limit) continue;
        out[row_of[best]].push_back(static_cast<int>(c));
    }
    return out;
}

/// Per-column pixel trace over [x_begin, x_begin + y_px.size()).
struct LeadTrace {
    LeadName lead = LeadName::I;
    int x_begin = 0;
    std::vector<double> y_px;  // NaN where no pixels
    double baseline_y = std::numeric_limits<double>::quiet_NaN();
};

/// Probability-weighted mean row per column of a pixel set, over columns [x_begin, x_end].
inline std::vector<double> column_means(const std::vector<const Component*>& parts, int x_begin, int x_end) {
    const int n = std::max(0, x_end - x_begin + 1);
    std::vector<double> sw(n, 0.0), sy(n, 0.0);
    for (const Component* c : parts)
        for (const auto& p : c->pixels) {
            if (p.x < x_begin || p.x > x_end) continue;
            sw[p.x - x_begin] += p.p;
            sy[p.x - x_begin] += p.p * p.y;
        }
    std::vector<double> y(n, std::numeric_limits<double>::quiet_NaN());
    for (int i = 0; i < n; ++i)
        if (sw[i] > 0) y[i] = sy[i] / sw[i];
    return y;
}

inline double nan_median(std::vector<double> v) {
    v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
}

/// Column trace of a chain over [x_begin, x_end] with its median row as baseline.
inline LeadTrace extract_trace(const std::vector<Component>& comps, const std::vector<int>& chain, int x_begin,
                               int x_end, LeadName lead = LeadName::I) {
    require(!chain.empty(), "empty chain");
    std::vector<const Component*> parts;
    for (int k : chain) parts.push_back(&comps[k]);
    LeadTrace t;
    t.lead = lead;
    t.x_begin = x_begin;
    t.y_px = column_means(parts, x_begin, x_end);
    t.baseline_y = nan_median(t.y_px);
    return t;
}

// ---------------------------------------------------------------------------
// Calibration

struct LeadSeries {
    LeadName lead = LeadName::I;
    double start_s = 0.0;
    std::vector<double> values;  // mV, NaN where undefined
};

struct DigitizedECG {
    double sample_rate = 1000.0;
    double duration_s = 0.0;
    std::vector<LeadSeries> leads;
    double paper_speed = 25.0;
    double gain = 10.0;
    GridSpacing spacing;
    std::string layout_name;

    SignalTable table() const {
        SignalTable t;
        t.sample_rate = sample_rate;
        t.length = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
        for (LeadName lead : kAllLeads)
            for (const auto& s : leads)
                if (s.lead == lead) {
                    LeadColumn c;
                    c.lead = lead;
                    c.start_index = static_cast<std::size_t>(std::llround(s.start_s * sample_rate));
                    c.values = s.values;
                    t.leads.push_back(std::move(c));
                }
        return t;
    }
};

/// Column trace of one panel positioned on the time axis: column x_origin is t = 0.
struct PanelTrace {
    LeadTrace trace;
    double x_origin = 0.0;
    double start_s = 0.0;
    double end_s = 0.0;
    bool include_end = false;
};

/// Resamples a panel trace to `fs`: t = (column - x_origin) / (speed * d_x) and
/// v = (baseline - y) / (gain * d_y). Gaps wider than one column plus two output samples
/// stay NaN; the panel edges may extend the nearest column by at most one column.
inline LeadSeries to_physical(const PanelTrace& panel, const GridSpacing& spacing, double speed, double gain,
                              double fs) {
    require(speed == 25.0 || speed == 50.0, "paper speed must be 25 or 50 mm/s");
    require(spacing.d_x > 2.0 && spacing.d_y > 2.0, "grid spacing must exceed 2 px");
    require(fs >= 100.0 && fs <= 2000.0, "sample rate must lie in [100, 2000] Hz");
    const double px_per_s = speed * spacing.d_x;
    const double px_per_mv = gain * spacing.d_y;
    const LeadTrace& tr = panel.trace;
    const int n_cols = static_cast<int>(tr.y_px.size());

    // Nearest valid column at or left of / at or right of each column.
    std::vector<int> left(n_cols, -1), right(n_cols, -1);
    for (int i = 0, last = -1; i < n_cols; ++i) {
        if (!std::isnan(tr.y_px[i])) last = i;
        left[i] = last;
    }
    for (int i = n_cols - 1, last = -1; i >= 0; --i) {
        if (!std::isnan(tr.y_px[i])) last = i;
        right[i] = last;
    }
    const double max_gap = 1.0 + 2.0 * px_per_s / fs;

    LeadSeries out;
    out.lead = tr.lead;
    out.start_s = panel.start_s;
    const auto k0 = static_cast<long long>(std::llround(panel.start_s * fs));
    auto k1 = static_cast<long long>(std::llround(panel.end_s * fs));
    if (panel.include_end) k1 = std::max(k1, k0 + 1);
    out.values.assign(static_cast<std::size_t>(std::max(0LL, k1 - k0)), std::numeric_limits<double>::quiet_NaN());
    if (std::isnan(tr.baseline_y) || n_cols == 0) return out;
    for (long long k = k0; k < k1; ++k) {
        const double col = panel.x_origin + (static_cast<double>(k) / fs) * px_per_s - tr.x_begin;
        double y = std::numeric_limits<double>::quiet_NaN();
        const int cl = static_cast<int>(std::floor(col));
        const int l = cl >= 0 && cl < n_cols ? left[cl] : (cl >= n_cols ? left[n_cols - 1] : -1);
        const int r = cl + 1 >= 0 && cl + 1 < n_cols ? right[cl + 1] : (cl + 1 < 0 ? right[0] : -1);
        if (cl >= 0 && cl < n_cols && col == cl && !std::isnan(tr.y_px[cl])) {
            y = tr.y_px[cl];
        } else if (l >= 0 && r >= 0 && r - l <= max_gap) {
            const double f = r == l ? 0.0 : std::clamp((col - l) / (r - l), 0.0, 1.0);
            y = tr.y_px[l] * (1.0 - f) + tr.y_px[r] * f;
        } else if (l >= 0 && r < 0 && col - l <= 1.0) {
            y = tr.y_px[l];
        } else if (r >= 0 && l < 0 && r - col <= 1.0) {
            y = tr.y_px[r];
        }
        if (!std::isnan(y)) out.values[static_cast<std::size_t>(k - k0)] = (tr.baseline_y - y) / px_per_mv;
    }
    return out;
}

/// All-NaN output covering every panel of `layout`, or all 12 leads over `duration_s`.
inline DigitizedECG nan_ecg(const LayoutSpec* layout, double duration_s, double fs) {
    DigitizedECG e;
    e.sample_rate = fs;
    e.duration_s = layout ? layout->duration_s() : duration_s;
    for (LeadName lead : kAllLeads) {
        double start = 0.0, end = e.duration_s;
        bool present = layout == nullptr;
        if (layout)
            for (const auto& p : layout->panels)
                if (p.lead == lead && (!present || p.end_s - p.start_s > end - start)) {
                    start = p.start_s;
                    end = p.end_s;
                    present = true;
                }
        if (!present) continue;
        LeadSeries s;
        s.lead = lead;
        s.start_s = start;
        s.values.assign(static_cast<std::size_t>(std::llround((end - start) * fs)),
                        std::numeric_limits<double>::quiet_NaN());
        e.leads.push_back(std::move(s));
    }
    if (layout) e.layout_name = layout->name;
    return e;
}

}  // namespace ecgdig
