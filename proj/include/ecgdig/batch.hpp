#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecgdig/error.hpp"
#include "ecgdig/eval.hpp"
#include "ecgdig/layout_spec.hpp"
#include "ecgdig/pipeline.hpp"
#include "ecgdig/signal_io.hpp"
#include "ecgdig/synth.hpp"

namespace ecgdig {

// ---------------------------------------------------------------------------
// Synthetic sample generation

/// Parameter ranges for synthetic renders. JSON keys match the field names.
struct SynthSpec {
    std::vector<std::string> layouts{"3x4_rhythm_II", "6x2", "12x1"};
    double d_min = 8.0;
    double d_max = 20.0;
    /// "scan" renders are unwarped; "photo" renders get rotation and corner displacement.
    std::string style = "scan";
    double rotation_max_deg = 10.0;
    double corner_max_fraction = 0.03;
    double noise_max = 0.0;
    int hidden_markers_max = 0;
    bool draw_markers = true;
    double paper_speed = 25.0;
    double gain = 10.0;
    double sample_rate = 1000.0;
    double line_width_px = 2.0;
};

inline void validate(const SynthSpec& s, const std::vector<LayoutSpec>& layouts) {
    require(!s.layouts.empty(), "synthesis spec lists no layouts");
    for (const auto& name : s.layouts) require(find_layout(layouts, name) != nullptr, "unknown layout " + name);
    require(s.d_min > 2.0 && s.d_max >= s.d_min, "grid spacing range must satisfy 2 < d_min <= d_max");
    require(s.style == "scan" || s.style == "photo", "style must be scan or photo");
    require(s.rotation_max_deg >= 0.0 && s.rotation_max_deg <= 45.0, "rotation_max_deg must lie in [0, 45]");
    require(s.corner_max_fraction >= 0.0 && s.corner_max_fraction <= 0.2, "corner_max_fraction must lie in [0, 0.2]");
    require(s.noise_max >= 0.0 && s.noise_max <= 0.5, "noise_max must lie in [0, 0.5]");
    require(s.hidden_markers_max >= 0, "hidden_markers_max must be non-negative");
    require(s.paper_speed == 25.0 || s.paper_speed == 50.0, "paper speed must be 25 or 50 mm/s");
    require(s.gain > 0.0, "gain must be positive");
    require(s.sample_rate >= 100.0 && s.sample_rate <= 2000.0, "sample rate must lie in [100, 2000] Hz");
    require(s.line_width_px > 0.0, "line width must be positive");
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    SynthSpec s;
    try {
        s.layouts = j.value("layouts", s.layouts);
        s.d_min = j.value("d_min", s.d_min);
        s.d_max = j.value("d_max", s.d_max);
        s.style = j.value("style", s.style);
        s.rotation_max_deg = j.value("rotation_max_deg", s.rotation_max_deg);
        s.corner_max_fraction = j.value("corner_max_fraction", s.corner_max_fraction);
        s.noise_max = j.value("noise_max", s.noise_max);
        s.hidden_markers_max = j.value("hidden_markers_max", s.hidden_markers_max);
        s.draw_markers = j.value("draw_markers", s.draw_markers);
        s.paper_speed = j.value("paper_speed", s.paper_speed);
        s.gain = j.value("gain", s.gain);
        s.sample_rate = j.value("sample_rate", s.sample_rate);
        s.line_width_px = j.value("line_width_px", s.line_width_px);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kInvalidArgument, std::string("synthesis spec: ") + e.what());
    }
    return s;
}

inline SynthSpec load_synth_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
    }
    return synth_spec_from_json(j);
}

struct SynthSample {
    std::string id;
    RenderResult render;
};

/// Deterministic sample `index` of a synthesis run: every random choice derives from
/// (seed, index) only.
inline SynthSample make_sample(const SynthSpec& spec, const std::vector<LayoutSpec>& layouts, std::uint64_t seed,
                               std::size_t index) {
    validate(spec, layouts);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    std::mt19937_64 rng(seq);
    RenderSpec r;
    r.layout = *find_layout(layouts, spec.layouts[index % spec.layouts.size()]);
    r.grid_minor_px = detail::uniform(rng, spec.d_min, spec.d_max);
    r.paper_speed = spec.paper_speed;
    r.gain = spec.gain;
    r.line_width_px = spec.line_width_px;
    r.draw_markers = spec.draw_markers;
    r.noise_level = detail::uniform(rng, 0.0, spec.noise_max);
    r.rng_seed = rng();
    const std::uint64_t signal_seed = rng();
    if (spec.hidden_markers_max > 0) {
        std::uniform_int_distribution<int> count(0, spec.hidden_markers_max);
        const int hide = std::min(count(rng), static_cast<int>(r.layout.panels.size()) - 2);
        std::vector<int> panels(r.layout.panels.size());
        std::iota(panels.begin(), panels.end(), 0);
        std::shuffle(panels.begin(), panels.end(), rng);
        r.hidden_markers.assign(panels.begin(), panels.begin() + std::max(0, hide));
    }
    if (spec.style == "photo") {
        const PaperGeometry g = paper_geometry(r);
        const double rot = deg_to_rad(detail::uniform(rng, -spec.rotation_max_deg, spec.rotation_max_deg));
        const double corner = detail::uniform(rng, 0.0, spec.corner_max_fraction);
        const PhotoWarp w = make_photo_warp(g.width, g.height, rot, corner, rng);
        r.homography = w.pull;
        r.output_width = w.width;
        r.output_height = w.height;
    }
    const auto signals = synthesize_signals(signal_seed, kLeadCount, r.layout.duration_s(), spec.sample_rate);
    SynthSample out;
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04zu", index);
    out.id = id;
    out.render = render(r, signals);
    out.render.truth.style = spec.style;
    return out;
}

/// Writes `<id>.png`, `<id>.truth.txt` and `<id>.csv` (reference signals) into `dir`.
inline void write_sample(const SynthSample& s, const std::filesystem::path& dir) {
    save_png(s.render.image, dir / (s.id + ".png"));
    write_ground_truth(s.render.truth, dir / (s.id + ".truth.txt"));
    write_signal_csv(reference_table(s.render.truth), dir / (s.id + ".csv"));
}

// ---------------------------------------------------------------------------
// Reports

inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

/// One row per image in input order; status is "ok" or the error code.
inline void write_run_report(const std::vector<DigitizeReport>& reports, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
    std::size_t failures = 0;
    for (const auto& r : reports) failures += r.error ? 1 : 0;
    out << "# images=" << reports.size() << " failures=" << failures << '\n';
    out << "id,status,layout,d_x,d_y,fit_x,fit_y,axis_a_deg,axis_b_deg,markers,components,iterations,chains,"
           "nan_fraction,message\n";
    for (const auto& r : reports)
        out << csv_quote(r.id) << ',' << (r.error ? std::string(to_string(*r.error)) : "ok") << ',' << r.layout << ','
            << format_number(r.d_x) << ',' << format_number(r.d_y) << ',' << format_number(r.fit_score_x) << ','
            << format_number(r.fit_score_y) << ',' << format_number(r.axis_a_deg) << ','
            << format_number(r.axis_b_deg) << ',' << r.markers << ',' << r.components << ',' << r.iterations << ','
            << r.chains << ',' << format_number(r.nan_fraction) << ',' << csv_quote(r.message) << '\n';
    if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Evaluation tables

struct MetricsRow {
    std::string record;
    std::string style;
    LeadName lead = LeadName::I;
    std::optional<ErrorCode> error;  // set when the lead could not be scored
    LeadMetrics metrics;
};

/// Scores every reference lead of one record against a prediction table.
inline std::vector<MetricsRow> evaluate_record(const std::string& record, const std::string& style,
                                               const SignalTable& reference, const SignalTable& prediction,
                                               double max_shift_ms = 100.0) {
    std::vector<MetricsRow> rows;
    for (const auto& ref : reference.leads) {
        MetricsRow row;
        row.record = record;
        row.style = style;
        row.lead = ref.lead;
        row.metrics.lead = ref.lead;
        const LeadColumn* est = prediction.find(ref.lead);
        row.metrics.nan_fraction = nan_fraction(ref, est);
        if (!est) {
            row.error = ErrorCode::kAlignment;
        } else {
            try {
                row.metrics = evaluate_lead(ref, *est, reference.sample_rate, max_shift_ms);
            } catch (const Error& e) {
                row.error = e.code();
            }
        }
        if (row.error) {
            row.metrics.snr_db = row.metrics.rmse_uv = row.metrics.correlation = row.metrics.shift_ms = std::nan("");
        }
        rows.push_back(row);
    }
    return rows;
}

inline void write_metrics(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
    out << "record,style,lead,snr_db,rmse_uv,corr,shift_ms,nan_frac,status\n";
    for (const auto& r : rows)
        out << csv_quote(r.record) << ',' << r.style << ',' << to_string(r.lead) << ','
            << format_number(r.metrics.snr_db) << ',' << format_number(r.metrics.rmse_uv) << ','
            << format_number(r.metrics.correlation) << ',' << format_number(r.metrics.shift_ms) << ','
            << format_number(r.metrics.nan_fraction) << ',' << (r.error ? std::string(to_string(*r.error)) : "ok")
            << '\n';
    if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

/// Mean and sample standard deviation; NaN when empty.
struct MeanSd {
    double mean = std::nan("");
    double sd = std::nan("");
    std::size_t n = 0;
};

inline MeanSd mean_sd(const std::vector<double>& v) {
    MeanSd m;
    m.n = v.size();
    if (v.empty()) return m;
    double s = 0.0;
    for (double x : v) s += x;
    m.mean = s / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    return m;
}

/// Per-style aggregate. SNR statistics use finite values; perfect reconstructions are counted
/// in n_inf and unscorable leads in n_failed.
struct StyleSummary {
    std::string style;
    std::size_t n_leads = 0;
    std::size_t n_inf = 0;
    std::size_t n_failed = 0;
    MeanSd snr, rmse, corr, nan_frac;
};

inline std::vector<StyleSummary> summarize(const std::vector<MetricsRow>& rows) {
    std::map<std::string, std::vector<const MetricsRow*>> by_style;
    for (const auto& r : rows) by_style[r.style].push_back(&r);
    std::vector<StyleSummary> out;
    for (const auto& [style, group] : by_style) {
        StyleSummary s;
        s.style = style;
        s.n_leads = group.size();
        std::vector<double> snr, rmse, corr, nanf;
        for (const MetricsRow* r : group) {
            nanf.push_back(r->metrics.nan_fraction);
            if (r->error) {
                ++s.n_failed;
                continue;
            }
            if (std::isinf(r->metrics.snr_db))
                ++s.n_inf;
            else
                snr.push_back(r->metrics.snr_db);
            rmse.push_back(r->metrics.rmse_uv);
            corr.push_back(r->metrics.correlation);
        }
        s.snr = mean_sd(snr);
        s.rmse = mean_sd(rmse);
        s.corr = mean_sd(corr);
        s.nan_frac = mean_sd(nanf);
        out.push_back(s);
    }
    return out;
}

inline void write_summary(const std::vector<StyleSummary>& summary, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
    out << "style,n_leads,n_inf,n_failed,snr_mean,snr_sd,rmse_mean,rmse_sd,corr_mean,corr_sd,nan_frac_mean\n";
    for (const auto& s : summary)
        out << s.style << ',' << s.n_leads << ',' << s.n_inf << ',' << s.n_failed << ',' << format_number(s.snr.mean)
            << ',' << format_number(s.snr.sd) << ',' << format_number(s.rmse.mean) << ','
            << format_number(s.rmse.sd) << ',' << format_number(s.corr.mean) << ',' << format_number(s.corr.sd)
            << ',' << format_number(s.nan_frac.mean) << '\n';
    if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace ecgdig
