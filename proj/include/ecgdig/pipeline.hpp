#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ecgdig/components.hpp"
#include "ecgdig/error.hpp"
#include "ecgdig/grid_scale.hpp"
#include "ecgdig/layout.hpp"
#include "ecgdig/layout_spec.hpp"
#include "ecgdig/perspective.hpp"
#include "ecgdig/raster.hpp"
#include "ecgdig/segmentation.hpp"
#include "ecgdig/trace.hpp"

namespace ecgdig {

struct PipelineConfig {
    double paper_speed = 25.0;  // mm/s
    double gain = 10.0;         // mm/mV
    double target_fs = 1000.0;  // Hz
    double mm_per_minor = 1.0;
    std::vector<LayoutSpec> layouts = default_layouts();
    std::optional<std::string> force_layout;
    SegmenterConfig segmentation;
    /// Used when the grid spacing cannot be estimated; otherwise that is a failure.
    std::optional<double> fallback_d_px;
    /// Output length of an all-NaN result when no layout could be determined.
    double fallback_duration_s = 10.0;
    double layout_lambda = 0.5;
    PerspectiveOptions perspective;
    SpacingOptions spacing;
    MarkerOptions markers;
    TraceOptions trace;
    std::optional<std::filesystem::path> debug_dir;
};

inline void validate(const PipelineConfig& cfg) {
    require(cfg.paper_speed == 25.0 || cfg.paper_speed == 50.0, "paper speed must be 25 or 50 mm/s");
    require(cfg.gain > 0.0, "gain must be positive");
    require(cfg.target_fs >= 100.0 && cfg.target_fs <= 2000.0, "sample rate must lie in [100, 2000] Hz");
    require(cfg.mm_per_minor > 0.0, "grid mm per minor cell must be positive");
    require(!cfg.layouts.empty(), "no candidate layouts");
    for (const auto& l : cfg.layouts) validate(l);
    if (cfg.force_layout)
        require(find_layout(cfg.layouts, *cfg.force_layout) != nullptr, "unknown forced layout " + *cfg.force_layout);
    if (cfg.fallback_d_px) require(*cfg.fallback_d_px > 2.0, "fallback grid spacing must exceed 2 px");
    if (cfg.segmentation.mode == SegmenterMode::kClassical) validate(cfg.segmentation);
}

/// Per-image outcome; deterministic (no timings) so reports compare byte for byte.
struct DigitizeReport {
    std::string id;
    std::optional<ErrorCode> error;
    std::string message;
    std::string layout;
    double d_x = std::nan("");
    double d_y = std::nan("");
    double fit_score_x = std::nan("");
    double fit_score_y = std::nan("");
    double axis_a_deg = std::nan("");
    double axis_b_deg = std::nan("");
    int markers = 0;
    int components = 0;
    int iterations = 0;
    int chains = 0;
    double nan_fraction = 1.0;
};

struct DigitizeResult {
    DigitizedECG ecg;
    DigitizeReport report;
};

namespace detail {

inline std::vector<float> normalized(const std::vector<double>& v) {
    double lo = 0.0, hi = 0.0;
    if (!v.empty()) {
        const auto [a, b] = std::minmax_element(v.begin(), v.end());
        lo = *a;
        hi = *b;
    }
    std::vector<float> out(v.size(), 0.0f);
    if (hi > lo)
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>((v[i] - lo) / (hi - lo));
    return out;
}

inline void dump_probmap(const ProbMap& map, const std::filesystem::path& dir, const std::string& prefix) {
    static constexpr std::array<const char*, 4> kNames{"background", "grid", "signal", "text"};
    for (int c = 0; c < std::min(map.channels(), 4); ++c)
        save_plane_png(map.view(static_cast<Channel>(c)), dir / (prefix + "_" + kNames[c] + ".png"));
}

inline void dump_perspective(const PerspectiveDebug& dbg, const std::filesystem::path& dir) {
    const auto& acc = dbg.coarse;
    if (!acc.bins.empty()) {
        const std::vector<float> img = normalized(acc.bins);
        save_plane_png({acc.rho_count, static_cast<int>(acc.thetas.size()), img}, dir / "hough_coarse.png");
    }
    const auto& aa = dbg.angle_angle;
    if (!aa.variance.empty()) {
        const std::vector<float> img = normalized(aa.variance);
        save_plane_png({static_cast<int>(aa.thetas_top.size()), static_cast<int>(aa.thetas_bottom.size()), img},
                       dir / "angle_angle.png");
    }
}

inline double fraction_nan(const DigitizedECG& ecg) {
    std::size_t total = 0, nan = 0;
    for (const auto& s : ecg.leads) {
        total += s.values.size();
        for (double v : s.values) nan += std::isnan(v) ? 1 : 0;
    }
    return total == 0 ? 1.0 : static_cast<double>(nan) / static_cast<double>(total);
}

// Provisional spacing from a central window of the rectified grid channel; sets the crop margin.
inline std::optional<double> provisional_spacing(const ProbMap& map, const GridAxes& axes, const SpacingOptions& opt) {
    CropRect window;
    window.width = std::min(axes.width, 1536);
    window.height = std::min(axes.height, 1536);
    window.x = (axes.width - window.width) / 2;
    window.y = (axes.height - window.height) / 2;
    try {
        const ProbMap grid = warp_probmap(map, axes.rectify, window, static_cast<int>(Channel::kGrid));
        const GridSpacing g = estimate_grid_spacing(grid.view(Channel::kBackground), opt);
        return std::max(g.d_x, g.d_y);
    } catch (const Error&) {
        return std::nullopt;
    }
}

}  // namespace detail

/// Builds per-lead series from the rows of a layout. Rows with no trace give NaN panels; a lead
/// printed twice keeps its longest panel.
inline DigitizedECG assemble_ecg(const std::vector<Component>& comps, const std::vector<std::vector<int>>& chains,
                                 const std::vector<std::vector<int>>& rows, const LayoutSpec& layout,
                                 const GridSpacing& spacing, const PipelineConfig& cfg, int image_width) {
    const double px_per_s = cfg.paper_speed / cfg.mm_per_minor * spacing.d_x;
    const double thickness = median_thickness(comps);

    std::vector<std::vector<double>> row_y(rows.size());
    std::vector<double> starts;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].empty()) continue;
        std::vector<const Component*> parts;
        for (int c : rows[r])
            for (int k : chains[c]) parts.push_back(&comps[k]);
        row_y[r] = column_means(parts, 0, image_width - 1);
        const auto first = std::find_if(row_y[r].begin(), row_y[r].end(), [](double y) { return !std::isnan(y); });
        if (first != row_y[r].end()) starts.push_back(static_cast<double>(first - row_y[r].begin()) + thickness / 2);
    }
    const double x_origin = nan_median(starts);

    GridSpacing scaled = spacing;
    scaled.d_x = spacing.d_x / cfg.mm_per_minor;
    scaled.d_y = spacing.d_y / cfg.mm_per_minor;

    std::vector<LeadSeries> best(kLeadCount);
    std::vector<double> best_span(kLeadCount, -1.0);
    for (const Panel& p : layout.panels) {
        const int li = static_cast<int>(p.lead);
        if (p.duration_s() <= best_span[li]) continue;
        LeadSeries series;
        const bool have_row = p.row < static_cast<int>(row_y.size()) && !row_y[p.row].empty() && !std::isnan(x_origin);
        PanelTrace panel;
        panel.start_s = p.start_s;
        panel.end_s = p.end_s;
        panel.include_end = p.end_s >= layout.duration_s() - 1e-9;
        panel.x_origin = have_row ? x_origin : 0.0;
        panel.trace.lead = p.lead;
        if (have_row) {
            const int c0 = std::clamp(static_cast<int>(std::floor(x_origin + p.start_s * px_per_s)) - 1, 0, image_width - 1);
            const int c1 = std::clamp(static_cast<int>(std::ceil(x_origin + p.end_s * px_per_s)) + 1, c0, image_width - 1);
            panel.trace.x_begin = c0;
            panel.trace.y_px.assign(row_y[p.row].begin() + c0, row_y[p.row].begin() + c1 + 1);
            panel.trace.baseline_y = nan_median(panel.trace.y_px);
        }
        series = to_physical(panel, scaled, cfg.paper_speed, cfg.gain, cfg.target_fs);
        best[li] = std::move(series);
        best_span[li] = p.duration_s();
    }

    DigitizedECG ecg;
    ecg.sample_rate = cfg.target_fs;
    ecg.duration_s = layout.duration_s();
    ecg.paper_speed = cfg.paper_speed;
    ecg.gain = cfg.gain;
    ecg.spacing = spacing;
    ecg.layout_name = layout.name;
    for (int li = 0; li < kLeadCount; ++li)
        if (best_span[li] >= 0.0) ecg.leads.push_back(std::move(best[li]));
    return ecg;
}

/// Runs the full pipeline on a probability map. Failures are caught and reported; the
/// output then holds NaN for every expected sample.
inline DigitizeResult digitize_probmap(const ProbMap& map, const PipelineConfig& cfg, const std::string& id = {}) {
    DigitizeResult result;
    DigitizeReport& rep = result.report;
    rep.id = id;
    const LayoutSpec* forced = cfg.force_layout ? find_layout(cfg.layouts, *cfg.force_layout) : nullptr;
    const LayoutSpec* chosen = forced;
    std::optional<std::filesystem::path> dbg;
    if (cfg.debug_dir) {
        dbg = *cfg.debug_dir / (id.empty() ? std::string("image") : id);
        std::filesystem::create_directories(*dbg);
    }
    try {
        require(map.channels() == kSegmentationChannels, "probability map needs 4 channels");
        if (dbg) detail::dump_probmap(map, *dbg, "input");

        PerspectiveDebug pdbg;
        const GridAxes axes = find_grid_axes(map.view(Channel::kGrid), cfg.perspective, dbg ? &pdbg : nullptr);
        if (dbg) detail::dump_perspective(pdbg, *dbg);
        rep.axis_a_deg = rad_to_deg(axes.axis_a.midline());
        rep.axis_b_deg = rad_to_deg(axes.axis_b.midline());

        const std::optional<double> d0 = detail::provisional_spacing(map, axes, cfg.spacing);
        const int margin = d0 ? static_cast<int>(std::lround(10.0 * *d0)) : 100;
        const DewarpResult dewarped = dewarp_and_crop(map, axes, margin);
        if (dbg) detail::dump_probmap(dewarped.map, *dbg, "dewarped");
        const PlaneView grid = dewarped.map.view(Channel::kGrid);
        const PlaneView signal = dewarped.map.view(Channel::kSignal);
        const int width = dewarped.map.width(), height = dewarped.map.height();

        GridSpacing spacing;
        try {
            spacing = estimate_grid_spacing(grid, cfg.spacing);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::kSpacingFailure || !cfg.fallback_d_px) throw;
            spacing = {*cfg.fallback_d_px, *cfg.fallback_d_px, 0.0, 0.0};
        }
        rep.d_x = spacing.d_x;
        rep.d_y = spacing.d_y;
        rep.fit_score_x = spacing.fit_score_x;
        rep.fit_score_y = spacing.fit_score_y;

        if (!forced) {
            const std::vector<LeadMarker> markers = markers_from_text_channel(dewarped.map.view(Channel::kText), cfg.markers);
            rep.markers = static_cast<int>(markers.size());
            const MatchResult match = match_layout(markers, cfg.layouts, cfg.layout_lambda);
            chosen = &cfg.layouts[match.layout_index];
        }
        rep.layout = chosen->name;

        TraceOptions topt = cfg.trace;
        topt.chain_break_cost = 10.0 * spacing.d_x;
        const IterationResult it = iterate_components(signal, chosen->rows(), topt);
        rep.components = static_cast<int>(it.components.size());
        rep.iterations = it.iterations;
        const auto chains = merge_components(it.components, width, topt);
        rep.chains = static_cast<int>(chains.size());
        const auto anchors = row_anchors(it.components, chains, chosen->rows(), height);
        const auto rows = assign_rows(it.components, chains, anchors, chosen->rows());
        result.ecg = assemble_ecg(it.components, chains, rows, *chosen, spacing, cfg, width);
    } catch (const Error& e) {
        rep.error = e.code();
        rep.message = e.what();
        result.ecg = nan_ecg(chosen, cfg.fallback_duration_s, cfg.target_fs);
    } catch (const std::bad_alloc&) {
        rep.error = ErrorCode::kDegenerateInput;
        rep.message = "out of memory";
        result.ecg = nan_ecg(chosen, cfg.fallback_duration_s, cfg.target_fs);
    }
    result.ecg.sample_rate = cfg.target_fs;
    rep.nan_fraction = detail::fraction_nan(result.ecg);
    return result;
}

/// Segments an image and digitizes it.
inline DigitizeResult digitize_image(const RgbRaster& image, const PipelineConfig& cfg, const std::string& id = {}) {
    ProbMap map;
    try {
        map = segment(image, cfg.segmentation);
    } catch (const Error& e) {
        DigitizeResult r;
        r.report.id = id;
        r.report.error = e.code();
        r.report.message = e.what();
        const LayoutSpec* forced = cfg.force_layout ? find_layout(cfg.layouts, *cfg.force_layout) : nullptr;
        r.ecg = nan_ecg(forced, cfg.fallback_duration_s, cfg.target_fs);
        r.report.nan_fraction = 1.0;
        return r;
    }
    return digitize_probmap(map, cfg, id);
}

/// Runs `job(i)` for i in [0, count) on up to `workers` threads. Each index is processed
/// exactly once; callers store results by index, so the outcome does not depend on scheduling.
inline void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& job) {
    const auto n_threads = static_cast<std::size_t>(std::max(1, workers));
    if (n_threads == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(n_threads, count); ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) job(i);
        });
}

}  // namespace ecgdig
