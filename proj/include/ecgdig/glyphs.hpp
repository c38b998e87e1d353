#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <string_view>
#include <vector>

#include "ecgdig/leads.hpp"

namespace ecgdig {

/// Binary lead-marker bitmap: a solid box with the lead label knocked out in a 3x5 font and a
/// per-lead bit pattern in the two rows above and below the label.
struct Glyph {
    static constexpr int kCols = 15;
    static constexpr int kRows = 9;

    LeadName lead = LeadName::I;
    std::array<std::uint8_t, kCols * kRows> ink{};

    bool at(int col, int row) const { return ink[row * kCols + col] != 0; }
};

namespace detail {

inline const char* font_rows(char ch) {
    // 5 rows of 3 columns, concatenated.
    switch (ch) {
        case 'I': return "###.#..#..#.###";
        case 'V': return "#.##.##.##.#.#.";
        case 'a': return "...##..###.####";
        case 'R': return "##.#.###.#.##.#";
        case 'L': return "#..#..#..#..###";
        case 'F': return "####..##.#..#..";
        case '1': return ".#.##..#..#.###";
        case '2': return "##...#.#.#..###";
        case '3': return "##...#.#...###.";
        case '4': return "#.##.####..#..#";
        case '5': return "####..##...###.";
        case '6': return ".###..##.#.#.#.";
        default: return "...............";
    }
}

// 26-bit patterns chosen by search so that no two glyphs correlate above 0.39.
inline constexpr std::array<std::uint32_t, kLeadCount> kGlyphCodes{
    0x32dc25d, 0x1ce06d3, 0x2324ddd, 0x0f7ba4e, 0x2916d99, 0x16a45f6,
    0x1d53a38, 0x3b344dc, 0x07e350f, 0x3a3b733, 0x00beaff, 0x2e4db46};

inline Glyph make_glyph(LeadName lead) {
    Glyph g;
    g.lead = lead;
    g.ink.fill(1);
    const std::string_view label = to_string(lead);
    const int n = static_cast<int>(label.size());
    const int text_w = 4 * n - 1;
    const int left = (Glyph::kCols - text_w) / 2;
    const int top = 2;
    for (int k = 0; k < n; ++k) {
        const char* rows = font_rows(label[k]);
        for (int r = 0; r < 5; ++r)
            for (int c = 0; c < 3; ++c)
                if (rows[r * 3 + c] == '#') g.ink[(top + r) * Glyph::kCols + left + 4 * k + c] = 0;
    }
    const std::uint32_t code = kGlyphCodes[static_cast<int>(lead)];
    for (int i = 0; i < 13; ++i) {
        const std::uint8_t lo = (code >> i) & 1u, hi = (code >> (13 + i)) & 1u;
        g.ink[0 * Glyph::kCols + 1 + i] = lo;
        g.ink[8 * Glyph::kCols + 13 - i] = lo;
        g.ink[1 * Glyph::kCols + 1 + i] = hi;
        g.ink[7 * Glyph::kCols + 13 - i] = hi;
    }
    return g;
}

}  // namespace detail

/// One glyph per lead, indexed by LeadName.
inline const std::array<Glyph, kLeadCount>& glyph_library() {
    static const std::array<Glyph, kLeadCount> lib = [] {
        std::array<Glyph, kLeadCount> out;
        for (int i = 0; i < kLeadCount; ++i) out[i] = detail::make_glyph(static_cast<LeadName>(i));
        return out;
    }();
    return lib;
}

/// Ink-weighted centroid in cell units (cell centers at c + 0.5).
inline std::pair<double, double> glyph_centroid(const Glyph& g) {
    double sx = 0, sy = 0, n = 0;
    for (int r = 0; r < Glyph::kRows; ++r)
        for (int c = 0; c < Glyph::kCols; ++c)
            if (g.at(c, r)) {
                sx += c + 0.5;
                sy += r + 0.5;
                n += 1;
            }
    return {sx / n, sy / n};
}

}  // namespace ecgdig
