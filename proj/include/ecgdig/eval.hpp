#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <vector>

#include "ecgdig/error.hpp"
#include "ecgdig/leads.hpp"
#include "ecgdig/signal_io.hpp"

namespace ecgdig {

/// SNR of a perfect reconstruction; written as "inf" in reports.
inline constexpr double kSnrPerfect = std::numeric_limits<double>::infinity();

struct LeadMetrics {
    LeadName lead = LeadName::I;
    double snr_db = 0.0;
    double rmse_uv = 0.0;
    double correlation = 0.0;
    double shift_ms = 0.0;
    double nan_fraction = 0.0;
};

/// Zero-centred pair over the samples where both series are defined.
struct AlignedPair {
    std::vector<double> y;
    std::vector<double> y_hat;
    int shift = 0;  // samples; y[t] is compared with y_hat[t + shift]
    double shift_ms = 0.0;
};

/// SNR, RMSE and Pearson correlation of an aligned pair; NaN samples are skipped.
/// Values are in mV, RMSE is reported in microvolts.
inline LeadMetrics score(const std::vector<double>& y, const std::vector<double>& y_hat) {
    require(y.size() == y_hat.size(), "score needs equal-length series");
    double syy = 0, see = 0, sy = 0, sh = 0, shh = 0, syh = 0, n = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (std::isnan(y[i]) || std::isnan(y_hat[i])) continue;
        const double e = y[i] - y_hat[i];
        syy += y[i] * y[i];
        see += e * e;
        sy += y[i];
        sh += y_hat[i];
        shh += y_hat[i] * y_hat[i];
        syh += y[i] * y_hat[i];
        n += 1;
    }
    if (n == 0 || syy == 0.0) fail(ErrorCode::kUndefinedSnr, "reference signal has zero power");
    LeadMetrics m;
    m.snr_db = see == 0.0 ? kSnrPerfect : 10.0 * std::log10(syy / see);
    m.rmse_uv = 1000.0 * std::sqrt(see / n);
    const double vy = syy - sy * sy / n, vh = shh - sh * sh / n;
    m.correlation = vy > 0 && vh > 0 ? std::clamp((syh - sy * sh / n) / std::sqrt(vy * vh), -1.0, 1.0) : 0.0;
    return m;
}

namespace detail {

struct ShiftStats {
    double snr = -std::numeric_limits<double>::infinity();
    std::size_t pairs = 0;
    bool usable = false;
};

inline ShiftStats shift_snr(const LeadColumn& ref, const LeadColumn& est, long long s) {
    const auto r0 = static_cast<long long>(ref.start_index), e0 = static_cast<long long>(est.start_index);
    const auto rn = static_cast<long long>(ref.values.size()), en = static_cast<long long>(est.values.size());
    double sy = 0, sh = 0, n = 0;
    for (long long i = 0; i < rn; ++i) {
        const long long j = r0 + i + s - e0;
        if (j < 0 || j >= en) continue;
        const double a = ref.values[i], b = est.values[j];
        if (std::isnan(a) || std::isnan(b)) continue;
        sy += a;
        sh += b;
        n += 1;
    }
    ShiftStats st;
    st.pairs = static_cast<std::size_t>(n);
    if (n == 0) return st;
    const double my = sy / n, mh = sh / n;
    double syy = 0, see = 0;
    for (long long i = 0; i < rn; ++i) {
        const long long j = r0 + i + s - e0;
        if (j < 0 || j >= en) continue;
        const double a = ref.values[i], b = est.values[j];
        if (std::isnan(a) || std::isnan(b)) continue;
        syy += (a - my) * (a - my);
        see += (a - my - b + mh) * (a - my - b + mh);
    }
    if (syy == 0.0) return st;
    st.usable = true;
    st.snr = see == 0.0 ? kSnrPerfect : 10.0 * std::log10(syy / see);
    return st;
}

inline std::size_t count_defined(const std::vector<double>& v) {
    std::size_t n = 0;
    for (double x : v) n += std::isnan(x) ? 0 : 1;
    return n;
}

}  // namespace detail

/// Chooses the integer shift within +-max_shift_ms that maximizes SNR (ties: smallest |shift|,
/// then negative first) and returns the zero-centred overlapping pair.
inline AlignedPair align(const LeadColumn& ref, const LeadColumn& est, double sample_rate,
                         double max_shift_ms = 100.0) {
    require(sample_rate > 0.0, "sample rate must be positive");
    const auto max_shift = static_cast<long long>(std::floor(max_shift_ms * sample_rate / 1000.0 + 1e-9));
    const std::size_t needed =
        (std::min(detail::count_defined(ref.values), detail::count_defined(est.values)) + 1) / 2;
    long long best_s = 0;
    detail::ShiftStats best;
    bool found = false;
    std::vector<long long> order{0};
    for (long long a = 1; a <= max_shift; ++a) {
        order.push_back(-a);
        order.push_back(a);
    }
    for (long long s : order) {
        const detail::ShiftStats st = detail::shift_snr(ref, est, s);
        if (!st.usable || st.pairs == 0 || st.pairs < needed) continue;
        if (!found || st.snr > best.snr) {
            best = st;
            best_s = s;
            found = true;
        }
    }
    if (!found) fail(ErrorCode::kAlignment, "overlap after shifting is below 50% of the defined samples");

    AlignedPair out;
    out.shift = static_cast<int>(best_s);
    out.shift_ms = 1000.0 * static_cast<double>(best_s) / sample_rate;
    const auto r0 = static_cast<long long>(ref.start_index), e0 = static_cast<long long>(est.start_index);
    for (long long i = 0; i < static_cast<long long>(ref.values.size()); ++i) {
        const long long j = r0 + i + best_s - e0;
        if (j < 0 || j >= static_cast<long long>(est.values.size())) continue;
        if (std::isnan(ref.values[i]) || std::isnan(est.values[j])) continue;
        out.y.push_back(ref.values[i]);
        out.y_hat.push_back(est.values[j]);
    }
    double my = 0, mh = 0;
    for (std::size_t k = 0; k < out.y.size(); ++k) {
        my += out.y[k];
        mh += out.y_hat[k];
    }
    my /= static_cast<double>(out.y.size());
    mh /= static_cast<double>(out.y.size());
    for (std::size_t k = 0; k < out.y.size(); ++k) {
        out.y[k] -= my;
        out.y_hat[k] -= mh;
    }
    return out;
}

/// Fraction of the reference's defined span where the estimate is NaN or absent.
inline double nan_fraction(const LeadColumn& ref, const LeadColumn* est) {
    std::size_t total = 0, missing = 0;
    for (std::size_t i = 0; i < ref.values.size(); ++i) {
        if (std::isnan(ref.values[i])) continue;
        ++total;
        const std::size_t t = ref.start_index + i;
        const bool have = est && t >= est->start_index && t < est->start_index + est->values.size() &&
                          !std::isnan(est->values[t - est->start_index]);
        if (!have) ++missing;
    }
    return total == 0 ? 0.0 : static_cast<double>(missing) / static_cast<double>(total);
}

/// Aligns and scores one lead.
inline LeadMetrics evaluate_lead(const LeadColumn& ref, const LeadColumn& est, double sample_rate,
                                 double max_shift_ms = 100.0) {
    const AlignedPair pair = align(ref, est, sample_rate, max_shift_ms);
    LeadMetrics m = score(pair.y, pair.y_hat);
    m.lead = ref.lead;
    m.shift_ms = pair.shift_ms;
    m.nan_fraction = nan_fraction(ref, &est);
    return m;
}

}  // namespace ecgdig
