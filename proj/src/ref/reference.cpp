#include "centeratt/ref/reference.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

#include "centeratt/errors.hpp"
#include "centeratt/fp16.hpp"
#include "centeratt/rng.hpp"

namespace centeratt::ref {

uint16_t float_to_half_bits_ref(float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    const uint16_t sign = static_cast<uint16_t>((bits >> 16) & 0x8000u);
    if (std::isnan(f)) {
        return static_cast<uint16_t>(sign | 0x7c00u | 0x200u | ((bits & 0x007fffffu) >> 13));
    }
    if (std::isinf(f)) return static_cast<uint16_t>(sign | 0x7c00u);
    const double a = std::fabs(static_cast<double>(f));
    if (a == 0.0) return sign;

    int e = std::ilogb(a);
    if (e < -14) e = -14;  // the subnormal band shares exponent -14
    // express |f| in units of the target quantum 2^(e-10), then round half
    // to even; a carry out of the 11-bit significand bumps the exponent
    const double scaled = std::ldexp(a, 10 - e);
    const double whole = std::floor(scaled);
    const double frac = scaled - whole;
    uint64_t m = static_cast<uint64_t>(whole);
    if (frac > 0.5 || (frac == 0.5 && (m & 1u))) ++m;
    if (m == 2048) {
        m = 1024;
        ++e;
    }
    if (e > 15) return static_cast<uint16_t>(sign | 0x7c00u);
    if (m < 1024) return static_cast<uint16_t>(sign | static_cast<uint16_t>(m));
    return static_cast<uint16_t>(sign | static_cast<uint16_t>((static_cast<unsigned>(e + 15) << 10) |
                                                              static_cast<unsigned>(m - 1024)));
}

namespace {

inline float maybe_half(float v, bool half) { return half ? quantize_half(v) : v; }

}  // namespace

Tensor conv2d_serial(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                     int padding) {
    if (input.rank() != 3 || weight.rank() != 4) {
        throw ShapeError("conv2d_serial expects input rank 3 and weight rank 4");
    }
    const size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
    const size_t c_out = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    if (weight.dim(1) != c_in || bias.numel() != c_out || stride < 1) {
        throw ShapeError("conv2d_serial parameter mismatch");
    }
    const int64_t ih = static_cast<int64_t>(h), iw = static_cast<int64_t>(w);
    const int64_t oh = (ih + 2 * padding - static_cast<int64_t>(kh)) / stride + 1;
    const int64_t ow = (iw + 2 * padding - static_cast<int64_t>(kw)) / stride + 1;
    if (oh < 1 || ow < 1) throw ShapeError("conv2d_serial output collapses");
    const bool half =
        input.precision == Precision::kHalf || weight.precision == Precision::kHalf;

    Tensor out({c_out, static_cast<size_t>(oh), static_cast<size_t>(ow)},
               half ? Precision::kHalf : Precision::kFloat32);
    for (size_t co = 0; co < c_out; ++co) {
        for (int64_t oy = 0; oy < oh; ++oy) {
            for (int64_t ox = 0; ox < ow; ++ox) {
                float acc = maybe_half(bias(co), half);
                for (size_t ci = 0; ci < c_in; ++ci) {
                    for (size_t ky = 0; ky < kh; ++ky) {
                        const int64_t y = oy * stride - padding + static_cast<int64_t>(ky);
                        if (y < 0 || y >= ih) continue;
                        for (size_t kx = 0; kx < kw; ++kx) {
                            const int64_t x = ox * stride - padding + static_cast<int64_t>(kx);
                            if (x < 0 || x >= iw) continue;
                            acc += maybe_half(input(ci, static_cast<size_t>(y),
                                                    static_cast<size_t>(x)),
                                              half) *
                                   maybe_half(weight(co, ci, ky, kx), half);
                        }
                    }
                }
                out(co, static_cast<size_t>(oy), static_cast<size_t>(ox)) = maybe_half(acc, half);
            }
        }
    }
    return out;
}

VoxelGrid voxelize_serial(const std::vector<Point>& points, const VoxelConfig& cfg) {
    cfg.validate();
    const int dx = cfg.dim_x(), dy = cfg.dim_y(), dz = cfg.dim_z();

    std::map<uint64_t, std::vector<uint32_t>> cells;
    for (size_t i = 0; i < points.size(); ++i) {
        const Point& p = points[i];
        if (p.x < cfg.x_min || p.x >= cfg.x_max || p.y < cfg.y_min || p.y >= cfg.y_max ||
            p.z < cfg.z_min || p.z >= cfg.z_max) {
            continue;
        }
        int ix = static_cast<int>(std::floor((p.x - cfg.x_min) / cfg.voxel_x));
        int iy = static_cast<int>(std::floor((p.y - cfg.y_min) / cfg.voxel_y));
        int iz = static_cast<int>(std::floor((p.z - cfg.z_min) / cfg.voxel_z));
        ix = std::clamp(ix, 0, dx - 1);
        iy = std::clamp(iy, 0, dy - 1);
        iz = std::clamp(iz, 0, dz - 1);
        const uint64_t key =
            (static_cast<uint64_t>(iy) * dx + static_cast<uint64_t>(ix)) * dz +
            static_cast<uint64_t>(iz);
        cells[key].push_back(static_cast<uint32_t>(i));
    }

    VoxelGrid grid;
    grid.config = cfg;
    grid.voxels.reserve(cells.size());
    for (const auto& [key, members] : cells) {
        double sum[4] = {0, 0, 0, 0};
        for (uint32_t idx : members) {
            const Point& p = points[idx];
            sum[0] += p.x;
            sum[1] += p.y;
            sum[2] += p.z;
            sum[3] += p.intensity;
        }
        Voxel v;
        v.linear = key;
        v.count = static_cast<uint32_t>(members.size());
        for (int c = 0; c < 4; ++c) v.mean[c] = sum[c] / static_cast<double>(v.count);
        grid.voxels.push_back(v);
    }
    return grid;
}

Tensor bev_encode_serial(const VoxelGrid& grid) {
    const int dx = grid.config.dim_x();
    const int dy = grid.config.dim_y();
    const int dz = grid.config.dim_z();
    Tensor out = Tensor::zeros({5, static_cast<size_t>(dy), static_cast<size_t>(dx)});

    const auto& vox = grid.voxels;
    size_t lo = 0;
    while (lo < vox.size()) {
        const uint64_t bev = vox[lo].linear / dz;
        size_t hi = lo;
        while (hi < vox.size() && vox[hi].linear / dz == bev) ++hi;
        const int ix = static_cast<int>(bev % static_cast<uint64_t>(dx));
        const int iy = static_cast<int>(bev / static_cast<uint64_t>(dx));
        double sum[4] = {0, 0, 0, 0};
        for (size_t k = lo; k < hi; ++k) {
            for (int c = 0; c < 4; ++c) sum[c] += vox[k].mean[c];
        }
        const double bins = static_cast<double>(hi - lo);
        for (int c = 0; c < 4; ++c) {
            out(static_cast<size_t>(c), iy, ix) = static_cast<float>(sum[c] / bins);
        }
        out(4, iy, ix) = static_cast<float>(bins / static_cast<double>(dz));
        lo = hi;
    }
    return out;
}

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_rows(const Tensor& t) {
    Mat m(t.dim(0), std::vector<double>(t.dim(1)));
    for (size_t i = 0; i < t.dim(0); ++i) {
        for (size_t j = 0; j < t.dim(1); ++j) m[i][j] = t(i, j);
    }
    return m;
}

// y = x W^T + b with W given as a [out, in] tensor
Mat dense_d(const Mat& x, const Tensor& w, const Tensor& b) {
    const size_t n = x.size(), in = x.empty() ? 0 : x[0].size(), out_dim = w.dim(0);
    Mat y(n, std::vector<double>(out_dim));
    for (size_t i = 0; i < n; ++i) {
        for (size_t o = 0; o < out_dim; ++o) {
            double acc = b(o);
            for (size_t j = 0; j < in; ++j) acc += x[i][j] * static_cast<double>(w(o, j));
            y[i][o] = acc;
        }
    }
    return y;
}

Mat layer_norm_d(const Mat& x, const Tensor& gamma, const Tensor& beta) {
    Mat y(x.size(), std::vector<double>(x.empty() ? 0 : x[0].size()));
    for (size_t i = 0; i < x.size(); ++i) {
        const size_t d = x[i].size();
        double mean = 0.0;
        for (double v : x[i]) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : x[i]) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + 1e-5);
        for (size_t j = 0; j < d; ++j) {
            y[i][j] = static_cast<double>(gamma(j)) * (x[i][j] - mean) * inv +
                      static_cast<double>(beta(j));
        }
    }
    return y;
}

}  // namespace

std::vector<double> attention_ref(const Tensor& tokens, const AttentionConfig& cfg,
                                  const AttentionWeights& weights) {
    cfg.validate();
    const size_t n = tokens.dim(0);
    const size_t d = static_cast<size_t>(cfg.model_dim);
    const size_t heads = static_cast<size_t>(cfg.num_heads);
    const size_t hd = d / heads;

    const Mat x = to_rows(tokens);
    const Mat q = dense_d(x, weights.wq, weights.bq);
    const Mat k = dense_d(x, weights.wk, weights.bk);
    const Mat v = dense_d(x, weights.wv, weights.bv);

    Mat ctx(n, std::vector<double>(d, 0.0));
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    for (size_t hi = 0; hi < heads; ++hi) {
        const size_t off = hi * hd;
        for (size_t i = 0; i < n; ++i) {
            std::vector<double> scores(n);
            double max_score = -std::numeric_limits<double>::infinity();
            for (size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (size_t t = 0; t < hd; ++t) s += q[i][off + t] * k[j][off + t];
                scores[j] = s * scale;
                max_score = std::max(max_score, scores[j]);
            }
            double denom = 0.0;
            for (size_t j = 0; j < n; ++j) {
                scores[j] = std::exp(scores[j] - max_score);
                denom += scores[j];
            }
            for (size_t t = 0; t < hd; ++t) {
                double acc = 0.0;
                for (size_t j = 0; j < n; ++j) acc += scores[j] / denom * v[j][off + t];
                ctx[i][off + t] = acc;
            }
        }
    }

    Mat attended = dense_d(ctx, weights.wo, weights.bo);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < d; ++j) attended[i][j] += x[i][j];
    }
    const Mat x1 = layer_norm_d(attended, weights.ln1_gamma, weights.ln1_beta);

    Mat hidden = dense_d(x1, weights.ffn_w1, weights.ffn_b1);
    for (auto& row : hidden) {
        for (double& val : row) val = val > 0.0 ? val : 0.0;
    }
    Mat ffn = dense_d(hidden, weights.ffn_w2, weights.ffn_b2);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < d; ++j) ffn[i][j] += x1[i][j];
    }
    const Mat out = layer_norm_d(ffn, weights.ln2_gamma, weights.ln2_beta);

    std::vector<double> flat;
    flat.reserve(n * d);
    for (const auto& row : out) flat.insert(flat.end(), row.begin(), row.end());
    return flat;
}

std::vector<Peak> decode_peaks_ref(const Tensor& heatmap, const HeadConfig& cfg) {
    const int num_classes = cfg.num_classes;
    const size_t dy = heatmap.dim(1), dx = heatmap.dim(2);
    std::vector<Peak> peaks;
    for (int c = 0; c < num_classes; ++c) {
        for (size_t iy = 0; iy < dy; ++iy) {
            for (size_t ix = 0; ix < dx; ++ix) {
                const double s = heatmap(static_cast<size_t>(c), iy, ix);
                if (s < cfg.score_threshold) continue;
                const size_t rm = iy * dx + ix;
                bool beaten = false;
                for (int ny = -1; ny <= 1 && !beaten; ++ny) {
                    for (int nx = -1; nx <= 1 && !beaten; ++nx) {
                        if (ny == 0 && nx == 0) continue;
                        const int64_t yy = static_cast<int64_t>(iy) + ny;
                        const int64_t xx = static_cast<int64_t>(ix) + nx;
                        if (yy < 0 || yy >= static_cast<int64_t>(dy) || xx < 0 ||
                            xx >= static_cast<int64_t>(dx)) {
                            continue;
                        }
                        const double o = heatmap(static_cast<size_t>(c),
                                                 static_cast<size_t>(yy),
                                                 static_cast<size_t>(xx));
                        const size_t orm = static_cast<size_t>(yy) * dx + static_cast<size_t>(xx);
                        if (o > s || (o == s && orm < rm)) beaten = true;
                    }
                }
                if (!beaten) {
                    peaks.push_back(
                        {c, static_cast<int>(iy), static_cast<int>(ix), s});
                }
            }
        }
    }
    std::stable_sort(peaks.begin(), peaks.end(), [dx](const Peak& a, const Peak& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.cls != b.cls) return a.cls < b.cls;
        return static_cast<size_t>(a.iy) * dx + a.ix < static_cast<size_t>(b.iy) * dx + b.ix;
    });
    if (peaks.size() > static_cast<size_t>(cfg.max_proposals)) {
        peaks.resize(static_cast<size_t>(cfg.max_proposals));
    }
    return peaks;
}

namespace {

double bisect_radius(double lo, double hi, double overlap, double (*iou_of)(double, double, double),
                     double l, double w) {
    // iou_of is 1 at r=0 and decreases; find the r where it crosses overlap
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (iou_of(mid, l, w) >= overlap) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

double iou_shifted(double r, double l, double w) {
    const double inter = (l - r) * (w - r);
    return inter / (2.0 * l * w - inter);
}

double iou_shrunk(double r, double l, double w) { return (l - 2.0 * r) * (w - 2.0 * r) / (l * w); }

double iou_grown(double r, double l, double w) {
    return l * w / ((l + 2.0 * r) * (w + 2.0 * r));
}

}  // namespace

double gaussian_radius_ref(double l_cells, double w_cells, double overlap) {
    const double l = l_cells, w = w_cells;
    const double shift = bisect_radius(0.0, std::min(l, w), overlap, iou_shifted, l, w);
    const double shrink = bisect_radius(0.0, 0.5 * std::min(l, w), overlap, iou_shrunk, l, w);
    double hi = std::max(l, w);
    while (iou_grown(hi, l, w) >= overlap) hi *= 2.0;
    const double grow = bisect_radius(0.0, hi, overlap, iou_grown, l, w);
    return std::min({shift, shrink, grow});
}

bool point_in_bev_box(double x, double y, const Box3D& box) {
    const double dx = x - box.cx, dy = y - box.cy;
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    const double lx = dx * c + dy * s;
    const double ly = -dx * s + dy * c;
    return std::fabs(lx) <= 0.5 * box.l && std::fabs(ly) <= 0.5 * box.w;
}

McIou rotated_iou_mc(const Box3D& a, const Box3D& b, int64_t samples, uint64_t seed) {
    if (samples < 1) throw std::invalid_argument("rotated_iou_mc needs samples >= 1");
    Rng rng(seed);
    const double ca = std::cos(a.yaw), sa = std::sin(a.yaw);
    int64_t hits = 0;
    for (int64_t i = 0; i < samples; ++i) {
        const double u = rng.uniform(-0.5 * a.l, 0.5 * a.l);
        const double v = rng.uniform(-0.5 * a.w, 0.5 * a.w);
        const double x = a.cx + u * ca - v * sa;
        const double y = a.cy + u * sa + v * ca;
        if (point_in_bev_box(x, y, b)) ++hits;
    }
    const double area_a = a.l * a.w;
    const double area_b = b.l * b.w;
    const double p = static_cast<double>(hits) / static_cast<double>(samples);
    const double inter = p * area_a;
    const double total = area_a + area_b;
    const double uni = total - inter;
    McIou out;
    out.iou = uni > 0.0 ? inter / uni : 0.0;
    // iou = inter/(total - inter), so d(iou)/d(inter) = total/(total - inter)^2
    const double sigma_inter = area_a * std::sqrt(p * (1.0 - p) / static_cast<double>(samples));
    out.sigma = uni > 0.0 ? sigma_inter * total / (uni * uni) : 0.0;
    return out;
}

Assignment assign_exhaustive(const CostMatrix& cost) {
    const size_t rows = cost.rows, cols = cost.cols;
    const size_t n = std::max(rows, cols);
    if (n > 8) throw std::invalid_argument("assign_exhaustive is capped at 8x8");

    Assignment out;
    if (rows == 0 || cols == 0) {
        for (size_t i = 0; i < rows; ++i) out.unmatched_rows.push_back(i);
        for (size_t j = 0; j < cols; ++j) out.unmatched_cols.push_back(j);
        return out;
    }

    std::vector<double> padded(n * n, 0.0);
    for (size_t i = 0; i < rows; ++i) {
        for (size_t j = 0; j < cols; ++j) padded[i * n + j] = cost.at(i, j);
    }

    std::vector<size_t> perm(n), best(n);
    for (size_t i = 0; i < n; ++i) perm[i] = i;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (size_t i = 0; i < n; ++i) total += padded[i * n + perm[i]];
        if (total < best_cost) {
            best_cost = total;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    std::vector<char> col_used(cols, 0);
    for (size_t i = 0; i < rows; ++i) {
        if (best[i] < cols) {
            out.pairs.emplace_back(i, best[i]);
            out.total_cost += cost.at(i, best[i]);
            col_used[best[i]] = 1;
        } else {
            out.unmatched_rows.push_back(i);
        }
    }
    for (size_t j = 0; j < cols; ++j) {
        if (!col_used[j]) out.unmatched_cols.push_back(j);
    }
    return out;
}

LossBreakdown loss_ref(const std::vector<SecondStagePrediction>& predictions,
                       const std::vector<Box3D>& gts, const Assignment& assignment,
                       const std::vector<std::array<double, 8>>& reg_targets) {
    static constexpr double eps = 1e-7;
    const auto bce_term = [](double p, double t) {
        p = std::clamp(p, eps, 1.0 - eps);
        return -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
    };

    LossBreakdown r;
    r.matched = assignment.pairs.size();
    r.unmatched = predictions.size() - r.matched;

    double cls_sum = 0.0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        for (int k = 0; k < kNumClasses; ++k) {
            double target = 0.0;
            for (const auto& [pi, gi] : assignment.pairs) {
                if (pi == i && static_cast<int>(gts[gi].cls) == k) target = 1.0;
            }
            cls_sum += bce_term(predictions[i].class_probs[k], target);
        }
    }
    if (!predictions.empty()) {
        r.cls_loss = cls_sum / (static_cast<double>(predictions.size()) * kNumClasses);
    }

    double reg_sum = 0.0;
    for (size_t p = 0; p < assignment.pairs.size(); ++p) {
        for (int d = 0; d < 8; ++d) {
            reg_sum += std::fabs(predictions[assignment.pairs[p].first].deltas[d] -
                                 reg_targets[p][d]);
        }
    }
    if (!assignment.pairs.empty()) {
        r.reg_loss = reg_sum / (8.0 * static_cast<double>(assignment.pairs.size()));
    }
    return r;
}

std::pair<double, double> ap_aph_ref(std::vector<ScoredDet> dets, size_t num_gt) {
    if (num_gt == 0) return {0.0, 0.0};
    std::stable_sort(dets.begin(), dets.end(),
                     [](const ScoredDet& a, const ScoredDet& b) { return a.score > b.score; });

    const size_t n = dets.size();
    std::vector<double> prec(n), hprec(n);
    std::vector<size_t> cumtp(n);
    size_t tp = 0;
    double htp = 0.0;
    for (size_t i = 0; i < n; ++i) {
        if (dets[i].tp) {
            ++tp;
            htp += 1.0 - dets[i].dyaw / M_PI;
        }
        cumtp[i] = tp;
        prec[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        hprec[i] = htp / static_cast<double>(i + 1);
    }

    double ap = 0.0, aph = 0.0;
    for (size_t g = 1; g <= num_gt; ++g) {
        double best = 0.0, hbest = 0.0;
        for (size_t i = 0; i < n; ++i) {
            if (cumtp[i] >= g) {
                best = std::max(best, prec[i]);
                hbest = std::max(hbest, hprec[i]);
            }
        }
        ap += best;
        aph += hbest;
    }
    return {ap / static_cast<double>(num_gt), aph / static_cast<double>(num_gt)};
}

}  // namespace centeratt::ref
