#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ecgdig/ecgdig.hpp"

namespace fs = std::filesystem;
using namespace ecgdig;

namespace {

constexpr int kExitConfig = 2;

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

/// Expands directories into their PNG files (sorted); files are kept in the given order.
std::vector<fs::path> collect_inputs(const std::vector<std::string>& inputs) {
    std::vector<fs::path> out;
    for (const auto& in : inputs) {
        const fs::path p(in);
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(p))
                if (e.is_regular_file() && lower(e.path().extension().string()) == ".png") found.push_back(e.path());
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        } else {
            out.push_back(p);
        }
    }
    return out;
}

/// Applies the `[pipeline]` and `[segmentation]` sections of an INI file.
void apply_config_file(const fs::path& path, PipelineConfig& cfg) {
    if (!fs::is_regular_file(path)) fail(ErrorCode::kIo, "cannot open config " + path.string());
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        fail(ErrorCode::kInvalidArgument, std::string("config: ") + e.what());
    }
    cfg.segmentation = load_segmenter_config(path, cfg.segmentation);
    const auto section = tree.get_child_optional("pipeline");
    if (!section) return;
    try {
        if (auto v = section->get_optional<double>("paper_speed")) cfg.paper_speed = *v;
        if (auto v = section->get_optional<double>("gain")) cfg.gain = *v;
        if (auto v = section->get_optional<double>("target_fs")) cfg.target_fs = *v;
        if (auto v = section->get_optional<double>("grid_mm_per_minor")) cfg.mm_per_minor = *v;
        if (auto v = section->get_optional<double>("fallback_d_px")) cfg.fallback_d_px = *v;
        if (auto v = section->get_optional<std::string>("layouts")) cfg.layouts = load_layouts(*v);
        if (auto v = section->get_optional<std::string>("force_layout")) cfg.force_layout = *v;
    } catch (const boost::property_tree::ptree_error& e) {
        fail(ErrorCode::kInvalidArgument, std::string("config: ") + e.what());
    }
}

struct DigitizeArgs {
    std::vector<std::string> inputs;
    std::string out = "out";
    std::optional<std::string> config;
    std::optional<double> speed, gain, fs, mm_per_minor, fallback_d_px;
    std::optional<std::string> layouts, force_layout, segmentation, probmap_dir, debug_dir;
    int workers = 1;
};

int run_digitize(const DigitizeArgs& a) {
    PipelineConfig cfg;
    std::vector<fs::path> inputs;
    try {
        if (a.config) apply_config_file(*a.config, cfg);
        if (a.speed) cfg.paper_speed = *a.speed;
        if (a.gain) cfg.gain = *a.gain;
        if (a.fs) cfg.target_fs = *a.fs;
        if (a.mm_per_minor) cfg.mm_per_minor = *a.mm_per_minor;
        if (a.fallback_d_px) cfg.fallback_d_px = *a.fallback_d_px;
        if (a.layouts) cfg.layouts = load_layouts(*a.layouts);
        if (a.force_layout) cfg.force_layout = *a.force_layout;
        if (a.segmentation)
            cfg.segmentation.mode = *a.segmentation == "external" ? SegmenterMode::kExternal : SegmenterMode::kClassical;
        if (a.debug_dir) cfg.debug_dir = fs::path(*a.debug_dir);
        if (cfg.segmentation.mode == SegmenterMode::kExternal && !a.probmap_dir)
            fail(ErrorCode::kInvalidArgument, "external segmentation needs --probmap-dir");
        if (a.probmap_dir && !fs::is_directory(*a.probmap_dir))
            fail(ErrorCode::kIo, "probmap directory not found: " + *a.probmap_dir);
        validate(cfg);
        require(a.workers >= 1, "--workers must be at least 1");
        inputs = collect_inputs(a.inputs);
        fs::create_directories(a.out);
    } catch (const Error& e) {
        std::cerr << "ecgdig: " << e.what() << '\n';
        return kExitConfig;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "ecgdig: " << e.what() << '\n';
        return kExitConfig;
    }

    const bool external = cfg.segmentation.mode == SegmenterMode::kExternal;
    std::vector<DigitizeReport> reports(inputs.size());
    parallel_for(inputs.size(), a.workers, [&](std::size_t i) {
        const std::string id = inputs[i].stem().string();
        DigitizeReport& rep = reports[i];
        rep.id = id;
        try {
            DigitizeResult result;
            if (external) {
                ProbMap map;
                try {
                    map = read_probmap(fs::path(*a.probmap_dir) / (id + ".pmap"));
                } catch (const Error& e) {
                    fail(ErrorCode::kIngestion, e.what());
                }
                result = digitize_probmap(map, cfg, id);
            } else {
                result = digitize_image(load_image(inputs[i]), cfg, id);
            }
            write_signal_csv(result.ecg.table(), fs::path(a.out) / (id + ".csv"));
            rep = std::move(result.report);
        } catch (const Error& e) {
            rep.error = e.code();
            rep.message = e.what();
            rep.nan_fraction = 1.0;
        } catch (const std::exception& e) {
            rep.error = ErrorCode::kIo;
            rep.message = e.what();
            rep.nan_fraction = 1.0;
        }
    });

    try {
        write_run_report(reports, fs::path(a.out) / "report.csv");
    } catch (const Error& e) {
        std::cerr << "ecgdig: " << e.what() << '\n';
        return 1;
    }
    std::size_t failures = 0;
    for (const auto& r : reports)
        if (r.error) {
            ++failures;
            std::cerr << r.id << ": " << r.message << '\n';
        }
    std::cout << inputs.size() << " images, " << failures << " failures\n";
    return 0;
}

struct EvaluateArgs {
    std::string pred, truth, out = "metrics.csv";
    std::optional<std::string> summary;
    double max_shift_ms = 100.0;
};

int run_evaluate(const EvaluateArgs& a) {
    if (!fs::is_directory(a.pred) || !fs::is_directory(a.truth)) {
        std::cerr << "ecgdig: --pred and --truth must be directories\n";
        return kExitConfig;
    }
    std::map<std::string, fs::path> truth_files;
    for (const auto& e : fs::directory_iterator(a.truth))
        if (e.is_regular_file() && e.path().extension() == ".csv") truth_files[e.path().stem().string()] = e.path();

    std::vector<MetricsRow> rows;
    std::vector<std::string> unmatched;
    for (const auto& [record, ref_path] : truth_files) {
        const fs::path pred_path = fs::path(a.pred) / (record + ".csv");
        if (!fs::exists(pred_path)) {
            unmatched.push_back(record);
            continue;
        }
        std::string style = "unknown";
        const fs::path sidecar = fs::path(a.truth) / (record + ".truth.txt");
        try {
            if (fs::exists(sidecar)) style = read_ground_truth(sidecar).style;
            const SignalTable ref = read_signal_csv(ref_path);
            const SignalTable pred = read_signal_csv(pred_path);
            if (pred.sample_rate != ref.sample_rate)
                fail(ErrorCode::kFormat, record + ": sample rates differ");
            const auto r = evaluate_record(record, style, ref, pred, a.max_shift_ms);
            rows.insert(rows.end(), r.begin(), r.end());
        } catch (const Error& e) {
            std::cerr << record << ": " << e.what() << '\n';
            unmatched.push_back(record);
        }
    }
    for (const auto& e : fs::directory_iterator(a.pred)) {
        const std::string stem = e.path().stem().string();
        if (e.path().extension() == ".csv" && stem != "report" && !truth_files.count(stem)) unmatched.push_back(stem);
    }
    std::sort(unmatched.begin(), unmatched.end());
    try {
        write_metrics(rows, a.out);
        const auto summary = summarize(rows);
        fs::path summary_path = a.summary ? fs::path(*a.summary) : fs::path(a.out);
        if (!a.summary) summary_path.replace_filename(summary_path.stem().string() + "_summary.csv");
        write_summary(summary, summary_path);
        for (const auto& s : summary)
            std::cout << s.style << ": " << s.n_leads << " leads, SNR " << format_number(s.snr.mean) << " +- "
                      << format_number(s.snr.sd) << " dB (" << s.n_inf << " perfect, " << s.n_failed
                      << " failed)\n";
    } catch (const Error& e) {
        std::cerr << "ecgdig: " << e.what() << '\n';
        return 1;
    }
    for (const auto& u : unmatched) std::cerr << "unmatched record skipped: " << u << '\n';
    return 0;
}

struct SynthesizeArgs {
    std::optional<std::string> spec, layouts;
    std::size_t count = 1;
    std::string out = "synth";
    std::uint64_t seed = 0;
    int workers = 1;
};

int run_synthesize(const SynthesizeArgs& a) {
    SynthSpec spec;
    std::vector<LayoutSpec> layouts = default_layouts();
    try {
        if (a.spec) spec = load_synth_spec(*a.spec);
        if (a.layouts) layouts = load_layouts(*a.layouts);
        validate(spec, layouts);
        fs::create_directories(a.out);
    } catch (const Error& e) {
        std::cerr << "ecgdig: " << e.what() << '\n';
        return kExitConfig;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "ecgdig: " << e.what() << '\n';
        return kExitConfig;
    }
    std::vector<std::string> errors(a.count);
    parallel_for(a.count, a.workers, [&](std::size_t i) {
        try {
            write_sample(make_sample(spec, layouts, a.seed, i), a.out);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    int failed = 0;
    for (const auto& e : errors)
        if (!e.empty()) {
            std::cerr << "ecgdig: " << e << '\n';
            ++failed;
        }
    std::cout << a.count - static_cast<std::size_t>(failed) << " samples written to " << a.out << '\n';
    return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Digitize paper ECG images into calibrated multi-lead time series"};
    app.require_subcommand(1);

    DigitizeArgs d;
    auto* dig = app.add_subcommand("digitize", "Digitize PNG images (files or directories)");
    dig->add_option("inputs", d.inputs, "Input PNG files or directories")->required();
    dig->add_option("--out", d.out, "Output directory")->capture_default_str();
    dig->add_option("--config", d.config, "INI file with [pipeline] and [segmentation] sections");
    dig->add_option("--speed", d.speed, "Paper speed in mm/s (25 or 50)");
    dig->add_option("--gain", d.gain, "Gain in mm/mV");
    dig->add_option("--fs", d.fs, "Output sample rate in Hz");
    dig->add_option("--grid-mm-per-minor", d.mm_per_minor, "Millimetres per minor grid cell");
    dig->add_option("--fallback-d-px", d.fallback_d_px, "Grid spacing used when estimation fails");
    dig->add_option("--layouts", d.layouts, "Layouts JSON file");
    dig->add_option("--force-layout", d.force_layout, "Skip layout identification and use this layout");
    dig->add_option("--segmentation", d.segmentation, "Segmentation mode")
        ->check(CLI::IsMember({"classical", "external"}));
    dig->add_option("--probmap-dir", d.probmap_dir, "Directory of <stem>.pmap files for external segmentation");
    dig->add_option("--workers", d.workers, "Images processed in parallel")->capture_default_str();
    dig->add_option("--debug-dir", d.debug_dir, "Dump intermediate maps and accumulators here");

    EvaluateArgs e;
    auto* ev = app.add_subcommand("evaluate", "Score digitized CSVs against reference CSVs");
    ev->add_option("--pred", e.pred, "Directory of digitized CSVs")->required();
    ev->add_option("--truth", e.truth, "Directory of reference CSVs and sidecars")->required();
    ev->add_option("--out", e.out, "Per-lead metrics CSV")->capture_default_str();
    ev->add_option("--summary", e.summary, "Per-style summary CSV (default: <out>_summary.csv)");
    ev->add_option("--max-shift-ms", e.max_shift_ms, "Alignment search range")->capture_default_str();

    SynthesizeArgs s;
    auto* syn = app.add_subcommand("synthesize", "Render synthetic ECG images with ground truth");
    syn->add_option("--spec", s.spec, "JSON synthesis spec");
    syn->add_option("--count", s.count, "Number of images")->capture_default_str();
    syn->add_option("--out", s.out, "Output directory")->capture_default_str();
    syn->add_option("--seed", s.seed, "Random seed")->capture_default_str();
    syn->add_option("--layouts", s.layouts, "Layouts JSON file");
    syn->add_option("--workers", s.workers, "Images rendered in parallel")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : kExitConfig;
    }
    if (*dig) return run_digitize(d);
    if (*ev) return run_evaluate(e);
    return run_synthesize(s);
}
