#include "centeratt/matching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "centeratt/errors.hpp"

namespace centeratt {
namespace {

struct Vec2 {
    double x, y;
};

// corners in CCW order
std::array<Vec2, 4> bev_corners(const Box3D& b) {
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const double hl = b.l / 2.0, hw = b.w / 2.0;
    const double lx[4] = {hl, -hl, -hl, hl};
    const double ly[4] = {hw, hw, -hw, -hw};
    std::array<Vec2, 4> out;
    for (int i = 0; i < 4; ++i) {
        out[i] = {b.cx + lx[i] * c - ly[i] * s, b.cy + lx[i] * s + ly[i] * c};
    }
    return out;
}

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// keep the part of subject on the left of the directed line a->b
std::vector<Vec2> clip_half_plane(const std::vector<Vec2>& subject, const Vec2& a,
                                  const Vec2& b) {
    std::vector<Vec2> out;
    out.reserve(subject.size() + 1);
    const size_t n = subject.size();
    for (size_t i = 0; i < n; ++i) {
        const Vec2& cur = subject[i];
        const Vec2& nxt = subject[(i + 1) % n];
        const double dc = cross(a, b, cur);
        const double dn = cross(a, b, nxt);
        if (dc >= 0.0) out.push_back(cur);
        if ((dc > 0.0 && dn < 0.0) || (dc < 0.0 && dn > 0.0)) {
            const double t = dc / (dc - dn);
            out.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
        }
    }
    return out;
}

double polygon_area(const std::vector<Vec2>& poly) {
    double a = 0.0;
    for (size_t i = 0; i < poly.size(); ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % poly.size()];
        a += p.x * q.y - q.x * p.y;
    }
    return a / 2.0;
}

double intersection_area_bev(const Box3D& a, const Box3D& b) {
    const auto ca = bev_corners(a);
    const auto cb = bev_corners(b);
    std::vector<Vec2> poly(ca.begin(), ca.end());
    for (int i = 0; i < 4 && !poly.empty(); ++i) {
        poly = clip_half_plane(poly, cb[i], cb[(i + 1) % 4]);
    }
    if (poly.size() < 3) return 0.0;
    return std::max(0.0, polygon_area(poly));
}

void check_box_sizes(const Box3D& b) {
    if (!(b.l > 0.0 && b.w > 0.0 && b.h > 0.0)) {
        throw ConfigError("IoU requires positive box sizes, got l=" + std::to_string(b.l) +
                          " w=" + std::to_string(b.w) + " h=" + std::to_string(b.h));
    }
}

struct SquareSolution {
    std::vector<int> col_of_row;
    std::vector<int> row_of_col;
    std::vector<double> u, v;  // potentials, 0-based
};

// shortest augmenting path with potentials, O(n^3)
SquareSolution solve_square(const std::vector<double>& a, int n) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = a[(i0 - 1) * static_cast<size_t>(n) + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    SquareSolution sol;
    sol.row_of_col.assign(n, -1);
    sol.col_of_row.assign(n, -1);
    for (int j = 1; j <= n; ++j) {
        sol.row_of_col[j - 1] = p[j] - 1;
        sol.col_of_row[p[j] - 1] = j - 1;
    }
    sol.u.assign(n, 0.0);
    sol.v.assign(n, 0.0);
    for (int i = 0; i < n; ++i) sol.u[i] = u[i + 1];
    for (int j = 0; j < n; ++j) sol.v[j] = v[j + 1];
    return sol;
}

bool augment_avoiding_fixed(int row, const std::vector<std::vector<int>>& adj,
                            const std::vector<char>& col_fixed, std::vector<char>& seen,
                            std::vector<int>& row_of_col, std::vector<int>& col_of_row) {
    for (int c : adj[row]) {
        if (col_fixed[c] || seen[c]) continue;
        seen[c] = 1;
        if (row_of_col[c] == -1 ||
            augment_avoiding_fixed(row_of_col[c], adj, col_fixed, seen, row_of_col,
                                   col_of_row)) {
            row_of_col[c] = row;
            col_of_row[row] = c;
            return true;
        }
    }
    return false;
}

// Rewrites the optimal matching into the one whose pair set is
// lexicographically smallest among equal-cost optima. Works on the
// complementary-slackness tight-edge graph, fixing rows in order and testing
// each smaller candidate column with a single augmenting-path exchange.
// Candidate order puts real columns before padding so the rule applies to
// the visible pairs.
void lex_tighten(const std::vector<double>& a, int n, size_t real_cols, SquareSolution& sol) {
    double max_abs = 0.0;
    for (double c : a) max_abs = std::max(max_abs, std::fabs(c));
    const double tol = 1e-9 * (1.0 + max_abs);

    std::vector<std::vector<int>> adj(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (std::fabs(a[i * static_cast<size_t>(n) + j] - sol.u[i] - sol.v[j]) <= tol) {
                adj[i].push_back(j);
            }
        }
        // real columns first, each group ascending
        std::stable_sort(adj[i].begin(), adj[i].end(), [&](int x, int y) {
            const bool rx = static_cast<size_t>(x) < real_cols;
            const bool ry = static_cast<size_t>(y) < real_cols;
            if (rx != ry) return rx;
            return x < y;
        });
    }

    std::vector<int> col_of_row = sol.col_of_row;
    std::vector<int> row_of_col = sol.row_of_col;
    std::vector<char> col_fixed(n, 0);
    std::vector<char> seen(n);

    for (int i = 0; i < n; ++i) {
        for (int j : adj[i]) {
            if (col_fixed[j]) continue;
            if (j == col_of_row[i]) break;
            const int displaced = row_of_col[j];
            const int old_col = col_of_row[i];
            col_of_row[i] = j;
            row_of_col[j] = i;
            col_of_row[displaced] = -1;
            row_of_col[old_col] = -1;
            col_fixed[j] = 1;
            std::fill(seen.begin(), seen.end(), 0);
            if (augment_avoiding_fixed(displaced, adj, col_fixed, seen, row_of_col,
                                       col_of_row)) {
                break;
            }
            col_fixed[j] = 0;
            col_of_row[i] = old_col;
            row_of_col[old_col] = i;
            col_of_row[displaced] = j;
            row_of_col[j] = displaced;
        }
        col_fixed[col_of_row[i]] = 1;
    }

    double before = 0.0, after = 0.0;
    for (int i = 0; i < n; ++i) {
        before += a[i * static_cast<size_t>(n) + sol.col_of_row[i]];
        after += a[i * static_cast<size_t>(n) + col_of_row[i]];
    }
    if (after <= before + tol * n) {
        sol.col_of_row = col_of_row;
        sol.row_of_col = row_of_col;
    }
}

}  // namespace

void MatchConfig::validate() const {
    if (lambda_cls < 0.0 || lambda_iou < 0.0) {
        throw ConfigError("matching lambdas must be >= 0");
    }
    if (lambda_cls == 0.0 && lambda_iou == 0.0) {
        throw ConfigError("matching lambdas must not both be zero");
    }
}

double rotated_iou_bev(const Box3D& a, const Box3D& b) {
    check_box_sizes(a);
    check_box_sizes(b);
    const double inter = intersection_area_bev(a, b);
    const double uni = a.l * a.w + b.l * b.w - inter;
    if (uni < 1e-12) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

double rotated_iou_3d(const Box3D& a, const Box3D& b) {
    check_box_sizes(a);
    check_box_sizes(b);
    const double z_lo = std::max(a.cz - a.h / 2.0, b.cz - b.h / 2.0);
    const double z_hi = std::min(a.cz + a.h / 2.0, b.cz + b.h / 2.0);
    const double inter = intersection_area_bev(a, b) * std::max(0.0, z_hi - z_lo);
    const double uni = a.l * a.w * a.h + b.l * b.w * b.h - inter;
    if (uni < 1e-12) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

CostMatrix build_cost_matrix(const std::vector<ScoredProposal>& proposals,
                             const std::vector<Box3D>& gts, const MatchConfig& cfg) {
    cfg.validate();
    for (const ScoredProposal& p : proposals) {
        for (double s : p.class_scores) {
            if (!(s >= 0.0 && s <= 1.0)) {
                throw ConfigError("class score " + std::to_string(s) + " outside [0, 1]");
            }
        }
    }
    CostMatrix m;
    m.rows = proposals.size();
    m.cols = gts.size();
    m.cost.assign(m.rows * m.cols, 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m.rows); ++i) {
        for (size_t j = 0; j < m.cols; ++j) {
            const double iou = cfg.use_3d_iou ? rotated_iou_3d(proposals[i].box, gts[j])
                                              : rotated_iou_bev(proposals[i].box, gts[j]);
            const double p_cls = proposals[i].class_scores[static_cast<int>(gts[j].cls)];
            m.cost[i * m.cols + j] =
                cfg.lambda_cls * (1.0 - p_cls) + cfg.lambda_iou * (1.0 - iou);
        }
    }
    return m;
}

Assignment hungarian_assign(const CostMatrix& cost) {
    Assignment out;
    const size_t rows = cost.rows, cols = cost.cols;
    if (rows == 0 || cols == 0) {
        for (size_t i = 0; i < rows; ++i) out.unmatched_rows.push_back(i);
        for (size_t j = 0; j < cols; ++j) out.unmatched_cols.push_back(j);
        return out;
    }
    for (double c : cost.cost) {
        if (!std::isfinite(c)) throw ConfigError("cost matrix entries must be finite");
    }

    const int n = static_cast<int>(std::max(rows, cols));
    std::vector<double> padded(static_cast<size_t>(n) * n, 0.0);
    for (size_t i = 0; i < rows; ++i) {
        for (size_t j = 0; j < cols; ++j) padded[i * n + j] = cost.at(i, j);
    }

    SquareSolution sol = solve_square(padded, n);
    if (n <= 256) lex_tighten(padded, n, cols, sol);

    std::vector<char> row_matched(rows, 0), col_matched(cols, 0);
    for (size_t i = 0; i < rows; ++i) {
        const int j = sol.col_of_row[i];
        if (j >= 0 && static_cast<size_t>(j) < cols) {
            out.pairs.emplace_back(i, static_cast<size_t>(j));
            out.total_cost += cost.at(i, j);
            row_matched[i] = 1;
            col_matched[j] = 1;
        }
    }
    for (size_t i = 0; i < rows; ++i) {
        if (!row_matched[i]) out.unmatched_rows.push_back(i);
    }
    for (size_t j = 0; j < cols; ++j) {
        if (!col_matched[j]) out.unmatched_cols.push_back(j);
    }
    return out;
}

double bce(double p, double target) {
    constexpr double eps = 1e-7;
    p = std::clamp(p, eps, 1.0 - eps);
    return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

LossBreakdown second_stage_loss(const std::vector<SecondStagePrediction>& predictions,
                                const std::vector<Box3D>& gts, const Assignment& assignment,
                                const std::vector<std::array<double, 8>>& reg_targets) {
    const size_t n = predictions.size();
    if (reg_targets.size() != assignment.pairs.size()) {
        throw ConfigError("regression targets (" + std::to_string(reg_targets.size()) +
                          ") do not match assignment pairs (" +
                          std::to_string(assignment.pairs.size()) + ")");
    }
    std::vector<int> target_class(n, -1);
    for (const auto& [pi, gi] : assignment.pairs) {
        if (pi >= n || gi >= gts.size()) {
            throw ConfigError("assignment pair (" + std::to_string(pi) + ", " +
                              std::to_string(gi) + ") outside prediction/gt lists");
        }
        if (target_class[pi] != -1) {
            throw ConfigError("proposal " + std::to_string(pi) + " matched twice");
        }
        target_class[pi] = static_cast<int>(gts[gi].cls);
    }

    LossBreakdown r;
    r.matched = assignment.pairs.size();
    r.unmatched = n - r.matched;

    if (n > 0) {
        double cls_sum = 0.0;
        for (size_t i = 0; i < n; ++i) {
            for (int k = 0; k < kNumClasses; ++k) {
                const double target = (k == target_class[i]) ? 1.0 : 0.0;
                cls_sum += bce(predictions[i].class_probs[k], target);
            }
        }
        r.cls_loss = cls_sum / (static_cast<double>(n) * kNumClasses);
    }

    if (!assignment.pairs.empty()) {
        double reg_sum = 0.0;
        for (size_t p = 0; p < assignment.pairs.size(); ++p) {
            const size_t pi = assignment.pairs[p].first;
            for (int d = 0; d < 8; ++d) {
                reg_sum += std::fabs(predictions[pi].deltas[d] - reg_targets[p][d]);
            }
        }
        r.reg_loss = reg_sum / (8.0 * assignment.pairs.size());
    }
    return r;
}

}  // namespace centeratt
