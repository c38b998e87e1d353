#include "test_util.hpp"

using namespace ecgdig;
using ecgdig::test::Plane;

namespace {

std::pair<int, int> argmax(const HoughAccumulator& acc) {
    int bt = 0, bk = 0;
    for (int t = 0; t < static_cast<int>(acc.thetas.size()); ++t)
        for (int k = 0; k < acc.rho_count; ++k)
            if (acc.at(t, k) > acc.at(bt, bk)) {
                bt = t;
                bk = k;
            }
    return {bt, bk};
}

const std::vector<double>& coarse_thetas() {
    static const std::vector<double> t = theta_grid(-kPi / 4, 3 * kPi / 4, 360);
    return t;
}

double deg_err(double a, double b) { return rad_to_deg(angle_distance(a, b)); }

/// Largest deviation from the axes of the image of the paper axes after rectification, sampled
/// at several points; `pull` maps image pixels to paper pixels.
double axis_error_deg(const GridAxes& axes, const Mat3& pull, const std::vector<Vec2>& paper_points) {
    const Mat3 comp = axes.rectify * pull.inverse();
    double err = 0.0;
    for (const Vec2& p : paper_points) {
        const Vec2 a = apply(comp, p), bx = apply(comp, p + Vec2(1, 0)), by = apply(comp, p + Vec2(0, 1));
        err = std::max(err, std::abs(rad_to_deg(std::atan2((bx - a).y(), (bx - a).x()))));
        err = std::max(err, std::abs(rad_to_deg(std::atan2((by - a).x(), (by - a).y()))));
    }
    return err;
}

}  // namespace

TEST(Hough, HorizontalRowPeaksAtHalfPi) {
    Plane p(40, 30);
    for (int x = 0; x < 40; ++x) p.at(x, 5) = 1.0f;
    const HoughAccumulator acc = hough(p.view(), coarse_thetas());
    const auto [t, k] = argmax(acc);
    EXPECT_NEAR(acc.thetas[t], kPi / 2, 1e-9);
    EXPECT_NEAR(acc.rho(k), 5.0, 1e-9);
}

TEST(Hough, VerticalColumnPeaksAtZero) {
    Plane p(40, 30);
    for (int y = 0; y < 30; ++y) p.at(3, y) = 1.0f;
    const HoughAccumulator acc = hough(p.view(), coarse_thetas());
    const auto [t, k] = argmax(acc);
    EXPECT_NEAR(acc.thetas[t], 0.0, 1e-9);
    EXPECT_NEAR(acc.rho(k), 3.0, 1e-9);
}

TEST(Hough, TwoParallelRowsGiveTwoMaxima) {
    Plane p(40, 30);
    for (int x = 0; x < 40; ++x) p.at(x, 5) = p.at(x, 15) = 1.0f;
    const HoughAccumulator acc = hough(p.view(), coarse_thetas());
    const auto [t, k] = argmax(acc);
    EXPECT_NEAR(acc.thetas[t], kPi / 2, 1e-9);
    const double top = acc.at(t, k);
    std::vector<double> rhos;
    for (int kk = 0; kk < acc.rho_count; ++kk)
        if (acc.at(t, kk) == top) rhos.push_back(acc.rho(kk));
    EXPECT_EQ(rhos, (std::vector<double>{5.0, 15.0}));
}

TEST(Hough, MassIsConservedPerAngle) {
    std::mt19937 rng(5);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Plane p(37, 23);
    for (auto& v : p.data) v = u(rng) < 0.3f ? u(rng) : 0.0f;
    double mass = 0.0;
    for (float v : p.data) mass += v;
    const HoughAccumulator acc = hough(p.view(), theta_grid(-kPi / 4, 3 * kPi / 4, 90));
    for (std::size_t t = 0; t < acc.thetas.size(); ++t) {
        double row = 0.0;
        for (int k = 0; k < acc.rho_count; ++k) row += acc.at(static_cast<int>(t), k);
        EXPECT_NEAR(row / mass, 1.0, 1e-6);
    }
}

TEST(Hough, EmptyPlaneIsDegenerate) {
    Plane p(10, 10);
    try {
        hough(p.view(), coarse_thetas());
        FAIL() << "expected degenerate input";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kDegenerateInput);
    }
}

TEST(AngleAngle, ConstantAccumulatorHasZeroVariance) {
    HoughAccumulator acc;
    acc.thetas = theta_grid(0, 1, 12);
    acc.rho_count = 30;
    acc.bins.assign(12 * 30, 2.5);
    const AngleAnglePlane aa = angle_angle(acc);
    for (double v : aa.variance) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(AngleAngle, MatchesDirectLineSampling) {
    std::mt19937 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    HoughAccumulator acc;
    acc.thetas = theta_grid(0, 1, 9);
    acc.rho_count = 23;
    acc.bins.resize(9 * 23);
    for (auto& v : acc.bins) v = u(rng);
    const AngleAnglePlane aa = angle_angle(acc);
    const int m = acc.rho_count;
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 9; ++j) {
            double s = 0, s2 = 0;
            for (int k = 0; k < m; ++k) {
                const int t = static_cast<int>(std::lround(i + (j - i) * static_cast<double>(k) / (m - 1)));
                s += acc.at(t, k);
                s2 += acc.at(t, k) * acc.at(t, k);
            }
            EXPECT_NEAR(aa.at(i, j), s2 / m - (s / m) * (s / m), 1e-12) << i << "," << j;
        }
}

namespace {

std::pair<double, double> top_two_diagonal_angles(const Plane& grid, int max_spread = 0) {
    const HoughAccumulator acc = detrend_rows(hough(grid.view(), coarse_thetas()), 41);
    const AngleAnglePlane aa = angle_angle(acc, 20);
    const detail::Peak first = detail::best_peak(aa, std::nullopt, 0.0);
    const double mid = 0.5 * (aa.thetas_bottom[first.i] + aa.thetas_top[first.j]);
    const detail::Peak second = detail::best_peak(aa, mid, kPi / 4);
    EXPECT_LE(std::abs(first.i - first.j), max_spread);
    EXPECT_LE(std::abs(second.i - second.j), max_spread);
    return {mid, 0.5 * (aa.thetas_bottom[second.i] + aa.thetas_top[second.j])};
}

}  // namespace

TEST(AngleAngle, AlignedGridPeaksOnDiagonalAtAxes) {
    const Plane g = ecgdig::test::grid_plane(300, 200, 7.0, 7.0);
    auto [a, b] = top_two_diagonal_angles(g);
    if (a > b) std::swap(a, b);
    EXPECT_NEAR(a, 0.0, 1e-9);
    EXPECT_NEAR(b, kPi / 2, 1e-9);
}

TEST(AngleAngle, RotatedGridPeaksNearRotation) {
    const Plane g = ecgdig::test::rotated_grid_plane(300, 240, 7.0, deg_to_rad(5.0));
    auto [a, b] = top_two_diagonal_angles(g, 2);
    if (a > b) std::swap(a, b);
    const double step = 180.0 / 360;
    EXPECT_LE(deg_err(a, deg_to_rad(5.0)), step);
    EXPECT_LE(deg_err(b, deg_to_rad(95.0)), step);
}

TEST(GridAxes, IdentityRenderRecoversAxes) {
    const RenderResult r = ecgdig::test::render_layout("3x4_rhythm_II", 6.0, 1);
    const GridAxes axes = find_grid_axes(segment(r.image, {}).view(Channel::kGrid));
    EXPECT_LE(deg_err(axes.axis_a.theta_at_rho_min, 0.0), 0.1);
    EXPECT_LE(deg_err(axes.axis_a.theta_at_rho_max, 0.0), 0.1);
    EXPECT_LE(deg_err(axes.axis_b.theta_at_rho_min, kPi / 2), 0.1);
    EXPECT_LE(deg_err(axes.axis_b.theta_at_rho_max, kPi / 2), 0.1);
}

TEST(GridAxes, TenDegreeRotationWithinHalfDegree) {
    RenderSpec spec;
    spec.layout = default_layouts()[1];
    spec.grid_minor_px = 6.0;
    const PaperGeometry g = paper_geometry(spec);
    std::mt19937_64 rng(1);
    const PhotoWarp w = make_photo_warp(g.width, g.height, deg_to_rad(10.0), 0.0, rng);
    spec.homography = w.pull;
    spec.output_width = w.width;
    spec.output_height = w.height;
    const RenderResult r = render(spec, synthesize_signals(4, 12, 10.0, 500.0));
    const GridAxes axes = find_grid_axes(segment(r.image, {}).view(Channel::kGrid));
    EXPECT_LE(deg_err(axes.axis_a.midline(), deg_to_rad(10.0)), 0.5);
    EXPECT_LE(deg_err(axes.axis_b.midline(), deg_to_rad(100.0)), 0.5);
    const Vec2 c(g.width / 2.0, g.height / 2.0);
    EXPECT_LE(axis_error_deg(axes, w.pull, {c}), 0.5);
}

TEST(GridAxes, PerspectiveTiltRecovered) {
    RenderSpec spec;
    spec.layout = default_layouts()[0];
    spec.grid_minor_px = 6.0;
    const PaperGeometry g = paper_geometry(spec);
    std::mt19937_64 rng(12);
    const PhotoWarp w = make_photo_warp(g.width, g.height, deg_to_rad(-3.0), 0.03, rng);
    spec.homography = w.pull;
    spec.output_width = w.width;
    spec.output_height = w.height;
    const RenderResult r = render(spec, synthesize_signals(6, 12, 10.0, 500.0));
    const GridAxes axes = find_grid_axes(segment(r.image, {}).view(Channel::kGrid));
    EXPECT_NE(axes.axis_a.theta_at_rho_min, axes.axis_a.theta_at_rho_max);
    const double m = g.trace_x0;
    const std::vector<Vec2> pts{{g.width / 2.0, g.height / 2.0}, {m, m}, {g.width - m, m},
                                {m, g.height - m}, {g.width - m, g.height - m}};
    EXPECT_LE(axis_error_deg(axes, w.pull, pts), 0.5);
}

TEST(GridAxes, RotationEquivariance) {
    const double fine_step = rad_to_deg(PerspectiveOptions{}.fine_margin * 2) / PerspectiveOptions{}.fine_bins;
    const GridAxes base = find_grid_axes(ecgdig::test::rotated_grid_plane(640, 480, 8.0, 0.0).view());
    for (double phi : {3.0, 7.0}) {
        const GridAxes rot = find_grid_axes(ecgdig::test::rotated_grid_plane(640, 480, 8.0, deg_to_rad(phi)).view());
        EXPECT_LE(deg_err(rot.axis_a.midline(), base.axis_a.midline() + deg_to_rad(phi)), 2 * fine_step) << phi;
        EXPECT_LE(deg_err(rot.axis_b.midline(), base.axis_b.midline() + deg_to_rad(phi)), 2 * fine_step) << phi;
    }
}

TEST(GridAxes, EmptyGridIsDegenerate) {
    Plane p(64, 64);
    EXPECT_THROW(find_grid_axes(p.view()), Error);
}

TEST(Dewarp, IdentityAxesKeepTheMap) {
    ProbMap m(30, 20, 4);
    std::mt19937 rng(2);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (auto& v : m.data()) v = u(rng);
    GridAxes axes;
    axes.width = 30;
    axes.height = 20;
    const DewarpResult d = dewarp_and_crop(m, axes, 100);
    ASSERT_EQ(d.map.width(), 30);
    ASSERT_EQ(d.map.height(), 20);
    for (std::size_t i = 0; i < m.data().size(); ++i) EXPECT_NEAR(d.map.data()[i], m.data()[i], 1e-6);
}

TEST(Dewarp, CropFollowsSignalExtent) {
    ProbMap m(50, 40, 4);
    for (int y = 25; y < 35; ++y)
        for (int x = 10; x < 20; ++x) m.at(Channel::kSignal, x, y) = 1.0f;
    GridAxes axes;
    axes.width = 50;
    axes.height = 40;
    const DewarpResult d = dewarp_and_crop(m, axes, 3);
    EXPECT_EQ(d.crop.y, 22);
    EXPECT_EQ(d.crop.x, 7);
    EXPECT_EQ(d.crop.height, 16);
    EXPECT_EQ(d.crop.width, 16);
}

TEST(Dewarp, EmptySignalKeepsFullExtent) {
    ProbMap m(50, 40, 4);
    GridAxes axes;
    axes.width = 50;
    axes.height = 40;
    const DewarpResult d = dewarp_and_crop(m, axes, 3);
    EXPECT_EQ(d.crop.width, 50);
    EXPECT_EQ(d.crop.height, 40);
}

TEST(Dewarp, RectifiedRenderIsAxisAlignedAndStable) {
    RenderSpec spec;
    spec.layout = default_layouts()[1];
    spec.grid_minor_px = 6.0;
    const PaperGeometry g = paper_geometry(spec);
    std::mt19937_64 rng(21);
    const PhotoWarp w = make_photo_warp(g.width, g.height, deg_to_rad(7.0), 0.02, rng);
    spec.homography = w.pull;
    spec.output_width = w.width;
    spec.output_height = w.height;
    const RenderResult r = render(spec, synthesize_signals(9, 12, 10.0, 500.0));
    const ProbMap map = segment(r.image, {});
    const GridAxes axes = find_grid_axes(map.view(Channel::kGrid));
    const DewarpResult once = dewarp_and_crop(map, axes, 60);
    const GridAxes again = find_grid_axes(once.map.view(Channel::kGrid));
    EXPECT_LE(deg_err(again.axis_a.midline(), 0.0), 0.1);
    EXPECT_LE(deg_err(again.axis_b.midline(), kPi / 2), 0.1);
    const DewarpResult twice = dewarp_and_crop(once.map, again, 60);
    const GridAxes third = find_grid_axes(twice.map.view(Channel::kGrid));
    EXPECT_LE(deg_err(third.axis_a.midline(), again.axis_a.midline()), 0.1);
    EXPECT_LE(deg_err(third.axis_b.midline(), again.axis_b.midline()), 0.1);
}
