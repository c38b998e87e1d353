#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ecgdig/error.hpp"
#include "ecgdig/leads.hpp"

namespace ecgdig {

/// One lead on a shared time axis. Samples exist from `start_index` for `values.size()` steps.
struct LeadColumn {
    LeadName lead = LeadName::I;
    std::size_t start_index = 0;
    std::vector<double> values;
};

/// Multi-lead series sharing a sample rate; the CSV form used for outputs and references.
struct SignalTable {
    double sample_rate = 1000.0;
    std::size_t length = 0;
    std::vector<LeadColumn> leads;

    const LeadColumn* find(LeadName lead) const {
        for (const auto& c : leads)
            if (c.lead == lead) return &c;
        return nullptr;
    }
};

// CSV layout: header "time_s,<lead>,...". A cell is a number, the literal "nan" (sample
// could not be digitized) or empty (the lead was not printed at that time).

inline void write_signal_csv(const SignalTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
    out << "time_s";
    for (const auto& c : table.leads) out << ',' << to_string(c.lead);
    out << '\n';
    char buf[64];
    for (std::size_t k = 0; k < table.length; ++k) {
        std::snprintf(buf, sizeof buf, "%.6f", static_cast<double>(k) / table.sample_rate);
        out << buf;
        for (const auto& c : table.leads) {
            out << ',';
            if (k < c.start_index || k >= c.start_index + c.values.size()) continue;
            const double v = c.values[k - c.start_index];
            if (std::isnan(v)) {
                out << "nan";
            } else {
                std::snprintf(buf, sizeof buf, "%.6f", v);
                out << buf;
            }
        }
        out << '\n';
    }
    if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

inline SignalTable read_signal_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::kFormat, path.string() + ": empty file");

    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(s);
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!s.empty() && s.back() == ',') cells.emplace_back();
        return cells;
    };

    const auto header = split(line);
    if (header.empty() || header[0] != "time_s") fail(ErrorCode::kFormat, path.string() + ": missing time_s column");
    std::vector<LeadName> leads;
    for (std::size_t i = 1; i < header.size(); ++i) {
        const auto lead = parse_lead(header[i]);
        if (!lead) fail(ErrorCode::kFormat, path.string() + ": unknown lead column " + header[i]);
        leads.push_back(*lead);
    }

    std::vector<double> times;
    std::vector<std::vector<double>> cols(leads.size());
    std::vector<std::vector<char>> present(leads.size());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split(line);
        cells.resize(leads.size() + 1);
        try {
            times.push_back(std::stod(cells[0]));
            for (std::size_t i = 0; i < leads.size(); ++i) {
                const std::string& cell = cells[i + 1];
                if (cell.empty()) {
                    cols[i].push_back(std::nan(""));
                    present[i].push_back(0);
                } else if (cell == "nan" || cell == "NaN") {
                    cols[i].push_back(std::nan(""));
                    present[i].push_back(1);
                } else {
                    cols[i].push_back(std::stod(cell));
                    present[i].push_back(1);
                }
            }
        } catch (const std::exception&) {
            fail(ErrorCode::kFormat, path.string() + ": malformed number");
        }
    }

    SignalTable table;
    table.length = times.size();
    if (times.size() >= 2) table.sample_rate = std::round(1.0 / (times[1] - times[0]));
    for (std::size_t i = 0; i < leads.size(); ++i) {
        LeadColumn c;
        c.lead = leads[i];
        std::size_t first = 0, last = 0;
        bool any = false;
        for (std::size_t k = 0; k < present[i].size(); ++k)
            if (present[i][k]) {
                if (!any) first = k;
                last = k;
                any = true;
            }
        if (any) {
            c.start_index = first;
            c.values.assign(cols[i].begin() + static_cast<std::ptrdiff_t>(first),
                            cols[i].begin() + static_cast<std::ptrdiff_t>(last + 1));
        }
        table.leads.push_back(std::move(c));
    }
    return table;
}

}  // namespace ecgdig
