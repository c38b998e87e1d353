#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ecgdig/error.hpp"

namespace ecgdig {

/// Dense row-major cost matrix.
class CostMatrix {
public:
    CostMatrix() = default;
    CostMatrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
        require(rows >= 0 && cols >= 0, "cost matrix dimensions must be non-negative");
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    CostMatrix transposed() const {
        CostMatrix t(cols_, rows_);
        for (int r = 0; r < rows_; ++r)
            for (int c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

struct Assignment {
    std::vector<int> col_for_row;  // -1 when the row is unassigned (only if rows > cols)
    double cost = 0.0;             // sum of assigned entries, accumulated in row order
};

namespace detail {

// Shortest augmenting path search with dual potentials (Jonker-Volgenant family,
// rectangular variant after Crouse). Requires rows <= cols.
inline int augmenting_path(const CostMatrix& cost, int cur_row, std::vector<double>& u, std::vector<double>& v,
                           std::vector<int>& path, const std::vector<int>& row4col,
                           std::vector<double>& shortest, double& min_val, std::vector<char>& sr,
                           std::vector<char>& sc, std::vector<int>& remaining) {
    const int nc = cost.cols();
    constexpr double kInf = std::numeric_limits<double>::infinity();
    min_val = 0.0;
    int num_remaining = nc;
    for (int it = 0; it < nc; ++it) remaining[it] = nc - it - 1;
    std::fill(sr.begin(), sr.end(), 0);
    std::fill(sc.begin(), sc.end(), 0);
    std::fill(shortest.begin(), shortest.end(), kInf);

    int sink = -1;
    int i = cur_row;
    while (sink == -1) {
        int index = -1;
        double lowest = kInf;
        sr[i] = 1;
        for (int it = 0; it < num_remaining; ++it) {
            const int j = remaining[it];
            const double r = min_val + cost(i, j) - u[i] - v[j];
            if (r < shortest[j]) {
                path[j] = i;
                shortest[j] = r;
            }
            if (shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == -1)) {
                lowest = shortest[j];
                index = it;
            }
        }
        min_val = lowest;
        if (!(min_val < kInf)) return -1;
        const int j = remaining[index];
        if (row4col[j] == -1)
            sink = j;
        else
            i = row4col[j];
        sc[j] = 1;
        remaining[index] = remaining[--num_remaining];
    }
    return sink;
}

inline std::vector<int> solve_wide(const CostMatrix& cost) {
    const int nr = cost.rows();
    const int nc = cost.cols();
    std::vector<double> u(nr, 0.0), v(nc, 0.0), shortest(nc);
    std::vector<int> path(nc, -1), col4row(nr, -1), row4col(nc, -1), remaining(nc);
    std::vector<char> sr(nr), sc(nc);

    for (int cur_row = 0; cur_row < nr; ++cur_row) {
        double min_val = 0.0;
        const int sink = augmenting_path(cost, cur_row, u, v, path, row4col, shortest, min_val, sr, sc, remaining);
        if (sink < 0) fail(ErrorCode::kInvalidArgument, "assignment problem is infeasible");

        u[cur_row] += min_val;
        for (int i = 0; i < nr; ++i)
            if (sr[i] && i != cur_row) u[i] += min_val - shortest[col4row[i]];
        for (int j = 0; j < nc; ++j)
            if (sc[j]) v[j] -= min_val - shortest[j];

        int j = sink;
        while (true) {
            const int i = path[j];
            row4col[j] = i;
            std::swap(col4row[i], j);
            if (i == cur_row) break;
        }
    }
    return col4row;
}

}  // namespace detail

/// Exact minimum-cost assignment. For rectangular matrices the smaller side is fully matched.
inline Assignment solve_assignment(const CostMatrix& cost) {
    Assignment result;
    result.col_for_row.assign(cost.rows(), -1);
    if (cost.rows() == 0 || cost.cols() == 0) return result;
    for (int r = 0; r < cost.rows(); ++r)
        for (int c = 0; c < cost.cols(); ++c)
            if (std::isnan(cost(r, c)) || cost(r, c) == -std::numeric_limits<double>::infinity())
                fail(ErrorCode::kInvalidArgument, "cost matrix contains NaN or -inf");

    if (cost.rows() <= cost.cols()) {
        result.col_for_row = detail::solve_wide(cost);
    } else {
        const std::vector<int> row_for_col = detail::solve_wide(cost.transposed());
        for (int c = 0; c < static_cast<int>(row_for_col.size()); ++c) result.col_for_row[row_for_col[c]] = c;
    }
    for (int r = 0; r < cost.rows(); ++r)
        if (result.col_for_row[r] >= 0) result.cost += cost(r, result.col_for_row[r]);
    return result;
}

}  // namespace ecgdig
