#include "test_util.hpp"

using namespace ecgdig;
using ecgdig::test::Plane;

namespace {

std::vector<LeadMarker> markers_at_slots(const LayoutSpec& layout, double s = 1.0, double tx = 0.0, double ty = 0.0) {
    std::vector<LeadMarker> out;
    for (const auto& slot : generate_layout(layout)) {
        LeadMarker m;
        m.name = slot.lead;
        m.x = s * slot.x + tx;
        m.y = s * slot.y + ty;
        m.confidence = 1.0;
        out.push_back(m);
    }
    return out;
}

const LayoutSpec& layout_named(const std::string& name) {
    static const std::vector<LayoutSpec> all = default_layouts();
    return *find_layout(all, name);
}

std::vector<LayoutSpec> main_three() {
    return {layout_named("6x2"), layout_named("3x4_rhythm_II"), layout_named("12x1")};
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
        saa += a[i] * a[i];
        sbb += b[i] * b[i];
        sab += a[i] * b[i];
    }
    return (sab - sa * sb / n) / std::sqrt((saa - sa * sa / n) * (sbb - sb * sb / n));
}

std::vector<double> cells_of(const Glyph& g) { return {g.ink.begin(), g.ink.end()}; }

}  // namespace

TEST(Glyphs, AllDistinctAndWellSeparated) {
    const auto& lib = glyph_library();
    for (int i = 0; i < kLeadCount; ++i) {
        EXPECT_EQ(lib[i].lead, static_cast<LeadName>(i));
        for (int j = i + 1; j < kLeadCount; ++j) {
            EXPECT_NE(lib[i].ink, lib[j].ink);
            EXPECT_LT(pearson(cells_of(lib[i]), cells_of(lib[j])), 0.4) << i << " vs " << j;
        }
    }
}

TEST(Glyphs, ClassifyExact) {
    for (const Glyph& g : glyph_library()) {
        const auto [lead, r] = classify_glyph(cells_of(g));
        EXPECT_EQ(lead, g.lead);
        EXPECT_NEAR(r, 1.0, 1e-12);
    }
}

TEST(Glyphs, HalfOccludedNeverMisclassified) {
    std::mt19937 rng(77);
    const double threshold = MarkerOptions{}.min_correlation;
    int dropped = 0, kept = 0;
    for (const Glyph& g : glyph_library()) {
        std::vector<std::vector<char>> masks;
        for (int side = 0; side < 4; ++side) {
            std::vector<char> m(Glyph::kCols * Glyph::kRows, 0);
            for (int r = 0; r < Glyph::kRows; ++r)
                for (int c = 0; c < Glyph::kCols; ++c) {
                    const bool hide = side == 0   ? c < Glyph::kCols / 2
                                      : side == 1 ? c >= (Glyph::kCols + 1) / 2
                                      : side == 2 ? r < Glyph::kRows / 2
                                                  : r >= (Glyph::kRows + 1) / 2;
                    m[r * Glyph::kCols + c] = hide;
                }
            masks.push_back(m);
        }
        for (int k = 0; k < 200; ++k) {
            std::vector<char> m(Glyph::kCols * Glyph::kRows, 0);
            std::fill(m.begin(), m.begin() + static_cast<long>(m.size() / 2), 1);
            std::shuffle(m.begin(), m.end(), rng);
            masks.push_back(m);
        }
        for (const auto& mask : masks) {
            std::vector<double> cells = cells_of(g);
            for (std::size_t i = 0; i < cells.size(); ++i)
                if (mask[i]) cells[i] = 0.0;
            const auto [lead, r] = classify_glyph(cells);
            if (r < threshold) {
                ++dropped;
                continue;
            }
            ++kept;
            EXPECT_EQ(lead, g.lead) << "misclassified " << to_string(g.lead) << " as " << to_string(lead);
        }
    }
    EXPECT_GT(dropped + kept, 0);
}

TEST(Markers, BlankTextChannelGivesNone) {
    Plane p(200, 100);
    EXPECT_TRUE(markers_from_text_channel(p.view()).empty());
}

TEST(Markers, OracleRenderFindsAllThirteen) {
    const RenderResult r = ecgdig::test::render_layout("3x4_rhythm_II", 8.0, 5);
    const ProbMap m = segment(r.image, {});
    const auto markers = markers_from_text_channel(m.view(Channel::kText));
    ASSERT_EQ(markers.size(), 13u);
    for (const auto& t : r.truth.markers) {
        double best = 1e9;
        for (const auto& d : markers)
            if (d.name == t.lead) best = std::min(best, std::hypot(d.px - t.image_x, d.py - t.image_y));
        EXPECT_LE(best, 3.0) << to_string(t.lead);
    }
}

TEST(LayoutMatch, ExactThreeByFourHasZeroCost) {
    const auto markers = markers_at_slots(layout_named("3x4_rhythm_II"));
    const MatchResult r = match_layout(markers, main_three());
    EXPECT_EQ(r.layout.name, "3x4_rhythm_II");
    EXPECT_NEAR(r.cost, 0.0, 1e-12);
    EXPECT_TRUE(r.missing.empty());
}

TEST(LayoutMatch, OneMissingMarkerCostsLambdaOverSlots) {
    auto markers = markers_at_slots(layout_named("3x4_rhythm_II"));
    markers.erase(markers.begin() + 5);
    const MatchResult r = score_layout(markers, layout_named("3x4_rhythm_II"), 0.5);
    EXPECT_NEAR(r.cost, 0.5 / 13.0, 1e-12);
    EXPECT_NEAR(r.cost, 0.03846, 1e-5);
    EXPECT_EQ(r.missing.size(), 1u);
}

TEST(LayoutMatch, SixByTwoWinsUnderGlobalScale) {
    for (double s : {0.5, 1.0, 2.0}) {
        const auto markers = markers_at_slots(layout_named("6x2"), s);
        const MatchResult r = match_layout(markers, main_three());
        EXPECT_EQ(r.layout.name, "6x2") << "scale " << s;
        EXPECT_NEAR(r.cost, 0.0, 1e-12);
    }
}

TEST(LayoutMatch, InvariantToTranslationAndAxisScale) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.3, 3.0), t(-2.0, 2.0);
    for (const auto& layout : main_three())
        for (int k = 0; k < 10; ++k) {
            auto markers = markers_at_slots(layout);
            const double sx = u(rng), sy = u(rng), tx = t(rng), ty = t(rng);
            for (auto& m : markers) {
                m.x = sx * m.x + tx;
                m.y = sy * m.y + ty;
            }
            const MatchResult r = match_layout(markers, default_layouts());
            EXPECT_EQ(r.layout.name, layout.name);
            EXPECT_NEAR(r.cost, 0.0, 1e-9);
        }
}

TEST(LayoutMatch, UpToTwoDeletedMarkersStillIdentified) {
    for (const auto& layout : main_three()) {
        const auto full = markers_at_slots(layout);
        for (std::size_t a = 0; a < full.size(); ++a)
            for (std::size_t b = a; b < full.size(); ++b) {
                auto markers = full;
                markers.erase(markers.begin() + static_cast<long>(b));
                if (a != b) markers.erase(markers.begin() + static_cast<long>(a));
                const MatchResult r = match_layout(markers, default_layouts());
                EXPECT_EQ(r.layout.name, layout.name) << "deleted " << a << "," << b;
            }
    }
}

TEST(LayoutMatch, SpuriousMarkerWithAbsentNameKeepsWinner) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const std::string name : {"6x1_limb", "6x1_precordial"}) {
        const LayoutSpec& layout = layout_named(name);
        for (LeadName extra : kAllLeads) {
            const auto leads = layout.leads();
            if (std::find(leads.begin(), leads.end(), extra) != leads.end()) continue;
            auto markers = markers_at_slots(layout);
            LeadMarker m;
            m.name = extra;
            m.x = u(rng);
            m.y = u(rng);
            markers.push_back(m);
            EXPECT_EQ(match_layout(markers, default_layouts()).layout.name, name);
        }
    }
}

TEST(LayoutMatch, TooFewMarkersIsLayoutFailure) {
    std::vector<LeadMarker> one(1);
    try {
        match_layout(one, default_layouts());
        FAIL() << "expected layout failure";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kLayoutFailure);
    }
}

TEST(LayoutMatch, AllCostsReportedInDeclarationOrder) {
    const auto markers = markers_at_slots(layout_named("12x1"));
    const MatchResult r = match_layout(markers, default_layouts());
    ASSERT_EQ(r.all_costs.size(), 5u);
    EXPECT_EQ(r.layout_index, 2);
    EXPECT_NEAR(r.all_costs[2], 0.0, 1e-12);
}

TEST(LayoutSpecFile, ShippedFileMatchesDefaults) {
    const auto file = load_layouts(ECGDIG_SOURCE_DIR "/data/layouts.json");
    const auto defaults = default_layouts();
    ASSERT_EQ(file.size(), defaults.size());
    for (std::size_t i = 0; i < file.size(); ++i) {
        EXPECT_EQ(file[i].name, defaults[i].name);
        ASSERT_EQ(file[i].panels.size(), defaults[i].panels.size());
        for (std::size_t p = 0; p < file[i].panels.size(); ++p) {
            EXPECT_EQ(file[i].panels[p].lead, defaults[i].panels[p].lead);
            EXPECT_DOUBLE_EQ(file[i].panels[p].end_s, defaults[i].panels[p].end_s);
            EXPECT_EQ(file[i].panels[p].rhythm, defaults[i].panels[p].rhythm);
        }
    }
}

TEST(LayoutSpecFile, JsonRoundTrip) {
    for (const auto& l : default_layouts()) {
        const LayoutSpec back = layout_from_json(layout_to_json(l));
        EXPECT_EQ(back.name, l.name);
        EXPECT_EQ(back.rows(), l.rows());
        EXPECT_EQ(back.leads(), l.leads());
    }
}

TEST(LayoutSpecFile, InvalidLayoutsRejected) {
    EXPECT_THROW(layout_from_json(nlohmann::json::parse(R"({"name": "x", "duration_s": 10, "rows": []})")), Error);
    EXPECT_THROW(layout_from_json(nlohmann::json::parse(
                     R"({"name": "x", "duration_s": 10, "rows": [{"leads": ["I", "V9"]}]})")),
                 Error);
}
