#include <fstream>

#include "test_util.hpp"

using namespace ecgdig;
using ecgdig::test::TempDir;

TEST(Segmentation, WhiteImageIsBackground) {
    const ProbMap m = segment(RgbRaster(20, 10, Rgb{255, 255, 255}), {});
    EXPECT_EQ(m.width(), 20);
    EXPECT_EQ(m.height(), 10);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 20; ++x) {
            EXPECT_GE(m.at(Channel::kBackground, x, y), 0.9f);
            EXPECT_LE(m.at(Channel::kGrid, x, y), 0.1f);
            EXPECT_LE(m.at(Channel::kSignal, x, y), 0.1f);
            EXPECT_LE(m.at(Channel::kText, x, y), 0.1f);
        }
}

TEST(Segmentation, RenderedInksLandInTheirChannels) {
    RenderSpec spec;
    spec.layout = default_layouts()[0];
    spec.grid_minor_px = 6.0;
    const auto sig = synthesize_signals(3, 12, 10.0, 1000.0);
    const RenderResult r = render(spec, sig);

    // Masks from renders that isolate one ink each.
    RenderSpec grid_only = spec;
    grid_only.trace_color = spec.paper_color;
    grid_only.draw_markers = false;
    const RenderResult g = render(grid_only, sig);
    RenderSpec trace_only = spec;
    trace_only.grid_color = spec.paper_color;
    trace_only.draw_markers = false;
    const RenderResult t = render(trace_only, sig);

    const ProbMap m = segment(r.image, {});
    ASSERT_TRUE(m.valid());
    int grid_pixels = 0, grid_hits = 0, trace_pixels = 0, trace_hits = 0;
    for (int y = 0; y < r.image.height(); ++y)
        for (int x = 0; x < r.image.width(); ++x) {
            const bool pure_grid = g.image.at(x, y) == spec.grid_color && t.image.at(x, y) == spec.paper_color;
            const bool pure_trace = t.image.at(x, y) == spec.trace_color;
            const bool in_box = std::any_of(r.truth.markers.begin(), r.truth.markers.end(), [&](const MarkerTruth& mk) {
                return x >= mk.box_x - 1 && x <= mk.box_x + mk.box_w + 1 && y >= mk.box_y - 1 &&
                       y <= mk.box_y + mk.box_h + 1;
            });
            if (in_box) continue;
            if (pure_grid) {
                ++grid_pixels;
                grid_hits += m.at(Channel::kGrid, x, y) >= 0.9f;
            }
            if (pure_trace) {
                ++trace_pixels;
                trace_hits += m.at(Channel::kSignal, x, y) >= 0.9f;
            }
        }
    ASSERT_GT(grid_pixels, 1000);
    ASSERT_GT(trace_pixels, 1000);
    EXPECT_EQ(grid_hits, grid_pixels);
    EXPECT_EQ(trace_hits, trace_pixels);
}

TEST(Segmentation, TextInkIsText) {
    RgbRaster img(4, 4, Rgb{255, 255, 255});
    const SegmenterConfig cfg;
    img.set(1, 1, cfg.text_color);
    const ProbMap m = segment(img, cfg);
    EXPECT_GE(m.at(Channel::kText, 1, 1), 0.9f);
    EXPECT_LE(m.at(Channel::kSignal, 1, 1), 0.1f);
}

TEST(Segmentation, ThresholdMonotone) {
    const RenderResult r = ecgdig::test::render_layout("6x2", 5.0, 2);
    std::size_t previous = std::numeric_limits<std::size_t>::max();
    for (double thr : {0.2, 0.35, 0.5, 0.65, 0.8}) {
        SegmenterConfig cfg;
        cfg.trace_darkness_threshold = thr;
        const ProbMap m = segment(r.image, cfg);
        std::size_t n = 0;
        for (float v : m.plane(static_cast<int>(Channel::kSignal))) n += v >= 0.5f;
        EXPECT_LE(n, previous) << "threshold " << thr;
        previous = n;
    }
}

TEST(Segmentation, ExternalDimensionMismatchIsIngestionError) {
    TempDir dir("seg");
    write_probmap(ProbMap(5, 4, 4), dir / "m.pmap");
    SegmenterConfig cfg;
    cfg.mode = SegmenterMode::kExternal;
    cfg.external_path = dir / "m.pmap";
    try {
        segment(RgbRaster(6, 4), cfg);
        FAIL() << "expected an ingestion error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kIngestion);
    }
}

TEST(Segmentation, ExternalMissingFileIsIngestionError) {
    SegmenterConfig cfg;
    cfg.mode = SegmenterMode::kExternal;
    cfg.external_path = "/nonexistent/m.pmap";
    try {
        segment(RgbRaster(6, 4), cfg);
        FAIL() << "expected an ingestion error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kIngestion);
    }
}

TEST(Segmentation, ExternalMapIsPassedThrough) {
    TempDir dir("seg");
    ProbMap m(6, 4, 4);
    m.at(Channel::kSignal, 2, 3) = 0.75f;
    write_probmap(m, dir / "m.pmap");
    SegmenterConfig cfg;
    cfg.mode = SegmenterMode::kExternal;
    cfg.external_path = dir / "m.pmap";
    EXPECT_EQ(segment(RgbRaster(6, 4), cfg), m);
}

TEST(SegmenterConfigFile, ReadsSectionAndRejectsBadValues) {
    TempDir dir("seg");
    std::ofstream(dir / "ok.ini") << "[segmentation]\ngrid_color = 200,100,100\nnoise_floor = 0.1\n";
    const SegmenterConfig cfg = load_segmenter_config(dir / "ok.ini");
    EXPECT_EQ(cfg.grid_color, (Rgb{200, 100, 100}));
    EXPECT_DOUBLE_EQ(cfg.noise_floor, 0.1);

    std::ofstream(dir / "bad.ini") << "[segmentation]\ntrace_darkness_threshold = 1.5\n";
    EXPECT_THROW(load_segmenter_config(dir / "bad.ini"), Error);
    std::ofstream(dir / "color.ini") << "[segmentation]\ntrace_color = 1,2\n";
    EXPECT_THROW(load_segmenter_config(dir / "color.ini"), Error);
}
