#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "ecgdig/error.hpp"
#include "ecgdig/raster.hpp"

namespace ecgdig {

enum class Axis { kHorizontal, kVertical };

struct GridSpacing {
    double d_x = 0.0;  // px per minor cell along x
    double d_y = 0.0;
    double fit_score_x = 0.0;
    double fit_score_y = 0.0;
};

struct SpacingFit {
    double d = 0.0;
    double fit_score = 0.0;
};

struct SpacingOptions {
    double d_min = 4.0;
    double d_max = 80.0;
    double coarse_step = 0.5;
    double tolerance = 0.01;
    double major_weight = 4.0;
    double min_score = 0.3;
    int max_lag = 512;
};

/// R[m] = sum_n x[n] x[n+m] for m in [0, max_lag].
inline std::vector<double> autocorrelation(const std::vector<double>& x, int max_lag) {
    const int n = static_cast<int>(x.size());
    const int top = std::min(max_lag, n - 1);
    std::vector<double> r(std::max(0, top + 1), 0.0);
    for (int m = 0; m <= top; ++m) {
        double s = 0.0;
        for (int k = 0; k + m < n; ++k) s += x[k] * x[k + m];
        r[m] = s;
    }
    return r;
}

/// Column sums (horizontal axis) or row sums (vertical axis) of a plane.
inline std::vector<double> axis_profile(PlaneView plane, Axis axis) {
    const int len = axis == Axis::kHorizontal ? plane.width : plane.height;
    std::vector<double> p(len, 0.0);
    for (int y = 0; y < plane.height; ++y)
        for (int x = 0; x < plane.width; ++x) p[axis == Axis::kHorizontal ? x : y] += plane.at(x, y);
    return p;
}

/// Autocorrelation of the mean-subtracted axis profile over lags [0, min(len-1, max_lag)].
inline Series1D axis_autocorrelation(PlaneView grid, Axis axis, int max_lag = 512) {
    std::vector<double> p = axis_profile(grid, axis);
    if (p.size() < 32) fail(ErrorCode::kDegenerateInput, "grid axis shorter than 32 px");
    const double mean = std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
    for (double& v : p) v -= mean;
    Series1D s;
    s.values = autocorrelation(p, max_lag);
    s.sample_rate = 1.0;
    return s;
}

namespace detail {

inline double comb_template(double lag, double d, double half_width, double major_weight) {
    double v = 0.0;
    const int k0 = std::max(1, static_cast<int>(std::floor((lag - half_width) / d)));
    const int k1 = static_cast<int>(std::ceil((lag + half_width) / d));
    for (int k = k0; k <= k1; ++k) {
        const double tri = 1.0 - std::abs(lag - k * d) / half_width;
        if (tri > 0.0) v += (k % 5 == 0 ? major_weight : 1.0) * tri;
    }
    return v;
}

// Pearson correlation between r[lo..hi] and the comb template for spacing d.
inline double template_ncc(const std::vector<double>& r, double d, int hi, double half_width, double major_weight) {
    const int lo = 4;
    if (hi - lo < 3) return -1.0;
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    const int n = hi - lo + 1;
    for (int m = lo; m <= hi; ++m) {
        const double a = r[m];
        const double b = comb_template(m, d, half_width, major_weight);
        sa += a;
        sb += b;
        saa += a * a;
        sbb += b * b;
        sab += a * b;
    }
    const double cov = sab - sa * sb / n;
    const double va = saa - sa * sa / n, vb = sbb - sb * sb / n;
    if (va <= 0 || vb <= 0) return 0.0;
    return cov / std::sqrt(va * vb);
}

inline double half_width_for(double d) { return std::max(d / 10.0, 1.0); }

template <typename F>
double golden_max(F f, double a, double b, double tol) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    return fc >= fd ? c : d;
}

// Least-squares spacing through the autocorrelation peaks near k*d, k = 1, 2, ...
inline double refine_from_peaks(const std::vector<double>& r, double d) {
    const int top = static_cast<int>(r.size()) - 2;
    double skk = 0.0, skp = 0.0;
    double est = d;
    for (int k = 1;; ++k) {
        const double centre = k * est;
        const int lo = std::max(1, static_cast<int>(std::ceil(centre - 0.3 * est)));
        const int hi = std::min(top, static_cast<int>(std::floor(centre + 0.3 * est)));
        if (centre + 0.3 * est > top || hi <= lo) break;
        int best = lo;
        for (int m = lo; m <= hi; ++m)
            if (r[m] > r[best]) best = m;
        if (best == lo || best == hi) continue;
        const double y0 = r[best - 1], y1 = r[best], y2 = r[best + 1];
        const double den = y0 - 2 * y1 + y2;
        const double off = den < 0 ? 0.5 * (y0 - y2) / den : 0.0;
        const double pos = best + std::clamp(off, -0.5, 0.5);
        skk += static_cast<double>(k) * k;
        skp += k * pos;
        est = skp / skk;
    }
    return est;
}

}  // namespace detail

/// Fits the minor spacing d to an autocorrelation by correlating it with a comb template
/// (unit peaks at multiples of d, weighted peaks at multiples of 5d).
inline SpacingFit fit_grid_spacing(const Series1D& autocorr, const SpacingOptions& opt = {}) {
    const std::vector<double>& r = autocorr.values;
    const int m_max = static_cast<int>(r.size()) - 1;
    if (m_max < 8) fail(ErrorCode::kDegenerateInput, "autocorrelation too short");

    // Each coarse cell is refined on the first few periods, where a half-step error cannot
    // drift out of phase; candidates are then ranked on the full lag range.
    auto short_range = [&](double d) {
        const int hi = std::min(m_max, static_cast<int>(std::ceil(6.5 * d)));
        return detail::template_ncc(r, d, hi, std::max(detail::half_width_for(d), 1.5), opt.major_weight);
    };
    auto full_range = [&](double d) {
        return detail::template_ncc(r, d, m_max, detail::half_width_for(d), opt.major_weight);
    };
    double best_d = 0.0, best_score = -2.0;
    for (double c = opt.d_min; c <= opt.d_max + 1e-9; c += opt.coarse_step) {
        if (6.0 * c > m_max && c > opt.d_min) break;
        const double lo = std::max(opt.d_min, c - opt.coarse_step / 2);
        const double hi = std::min(opt.d_max, c + opt.coarse_step / 2);
        const double local = detail::golden_max(short_range, lo, hi, opt.tolerance);
        if (short_range(local) <= 0.0) continue;
        const double d = detail::refine_from_peaks(r, local);
        if (!(d >= opt.d_min && d <= opt.d_max)) continue;
        const double score = full_range(d);
        if (score > best_score) {
            best_score = score;
            best_d = d;
        }
    }
    if (best_score <= -2.0) return {opt.d_min, 0.0};
    const double d = best_d;
    const double score = best_score;
    // A lattice finer than d_min otherwise aliases to one of its multiples inside the range.
    auto at = [&](double lag) {
        const int i = static_cast<int>(lag);
        return i + 1 > m_max ? r[m_max] : r[i] + (lag - i) * (r[i + 1] - r[i]);
    };
    for (int k = 2; k <= 5; ++k) {
        const double sub = d / k;
        if (sub >= opt.d_min || sub < 2.0) continue;
        double on = 0.0, between = 0.0;
        int n_on = 0, n_between = 0;
        for (int m = 1; m * sub <= m_max - 1; ++m) {
            if (m % k == 0) {
                on += at(m * sub);
                ++n_on;
            } else {
                between += at(m * sub);
                ++n_between;
            }
        }
        if (n_on > 0 && n_between > 0 && between / n_between > 0.5 * on / n_on) return {d, 0.0};
    }
    return {d, std::clamp(score, 0.0, 1.0)};
}

/// Refines d from the positions of the grid lines themselves: every line centroid near
/// phase + k*d enters a least-squares fit, outliers are rejected once.
inline double refine_from_lines(const std::vector<double>& profile, double d) {
    const int n = static_cast<int>(profile.size());
    if (n < 3 * d) return d;
    std::vector<double> sorted = profile;
    std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
    const double floor = sorted[n / 2];

    double best_phase = 0.0, best_sum = -1.0;
    for (double phase = 0.0; phase < d; phase += 0.25) {
        double s = 0.0;
        for (double x = phase; x < n; x += d) s += profile[static_cast<int>(std::lround(x)) % n];
        if (s > best_sum) {
            best_sum = s;
            best_phase = phase;
        }
    }

    struct LinePos {
        double k, x;
    };
    double phase = best_phase, spacing = d;
    std::vector<LinePos> lines;
    for (int pass = 0; pass < 3; ++pass) {
        lines.clear();
        for (int k = 0;; ++k) {
            const double c = phase + k * spacing;
            if (c > n - 1) break;
            const int lo = std::max(0, static_cast<int>(std::ceil(c - spacing / 3)));
            const int hi = std::min(n - 1, static_cast<int>(std::floor(c + spacing / 3)));
            double sw = 0.0, sx = 0.0;
            for (int x = lo; x <= hi; ++x) {
                const double w = std::max(0.0, profile[x] - floor);
                sw += w;
                sx += w * x;
            }
            if (sw > 0.0) lines.push_back({static_cast<double>(k), sx / sw});
        }
        if (lines.size() < 3) return d;
        auto fit = [&](const std::vector<LinePos>& pts) {
            double sk = 0, sx = 0, skk = 0, skx = 0;
            for (const auto& p : pts) {
                sk += p.k;
                sx += p.x;
                skk += p.k * p.k;
                skx += p.k * p.x;
            }
            const double m = static_cast<double>(pts.size());
            const double slope = (m * skx - sk * sx) / (m * skk - sk * sk);
            return std::pair{slope, (sx - slope * sk) / m};
        };
        auto [slope, icpt] = fit(lines);
        std::vector<LinePos> kept;
        for (const auto& p : lines)
            if (std::abs(p.x - (icpt + slope * p.k)) < 0.15 * slope) kept.push_back(p);
        if (kept.size() >= 3) std::tie(slope, icpt) = fit(kept);
        spacing = slope;
        phase = icpt;
    }
    return std::abs(spacing - d) < 0.05 * d ? spacing : d;
}

/// Spacing along one axis of a dewarped grid channel: template fit, then line-position refinement.
inline SpacingFit estimate_axis_spacing(PlaneView grid, Axis axis, const SpacingOptions& opt = {}) {
    const Series1D r = axis_autocorrelation(grid, axis, opt.max_lag);
    SpacingFit fit = fit_grid_spacing(r, opt);
    if (fit.fit_score < opt.min_score)
        fail(ErrorCode::kSpacingFailure, "grid template fit score " + std::to_string(fit.fit_score) + " below " +
                                             std::to_string(opt.min_score));
    fit.d = refine_from_lines(axis_profile(grid, axis), fit.d);
    return fit;
}

inline GridSpacing estimate_grid_spacing(PlaneView grid, const SpacingOptions& opt = {}) {
    const SpacingFit fx = estimate_axis_spacing(grid, Axis::kHorizontal, opt);
    const SpacingFit fy = estimate_axis_spacing(grid, Axis::kVertical, opt);
    return {fx.d, fy.d, fx.fit_score, fy.fit_score};
}

}  // namespace ecgdig
