#include "centeratt/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "centeratt/errors.hpp"
#include "centeratt/fp16.hpp"
#include "centeratt/kernels.hpp"
#include "centeratt/matching.hpp"

namespace centeratt {
namespace {

double rel_diff(double a, double b, double scale) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), scale});
}

void update(EquivalenceEntry& e, double abs, double rel) {
    e.max_abs = std::max(e.max_abs, abs);
    e.max_rel = std::max(e.max_rel, rel);
}

}  // namespace

std::pair<Tensor, Tensor> fold_batchnorm(const Tensor& weight, const Tensor& bias,
                                         const Tensor& gamma, const Tensor& beta,
                                         const Tensor& mean, const Tensor& var, double eps) {
    if (weight.rank() != 4) {
        throw ShapeError("fold_batchnorm weight must be [C_out,C_in,kh,kw], got " +
                         weight.shape_str());
    }
    const size_t c_out = weight.dim(0);
    for (const auto* t : {&bias, &gamma, &beta, &mean, &var}) {
        if (t->rank() != 1 || t->dim(0) != c_out) {
            throw ShapeError("fold_batchnorm channel vectors must have length " +
                             std::to_string(c_out) + ", got " + t->shape_str());
        }
    }
    if (!(eps > 0.0)) throw ConfigError("fold_batchnorm eps must be > 0");

    Tensor w = weight;
    Tensor b = bias;
    const size_t per_channel = weight.numel() / c_out;
    for (size_t c = 0; c < c_out; ++c) {
        const double s = gamma(c) / std::sqrt(static_cast<double>(var(c)) + eps);
        for (size_t k = 0; k < per_channel; ++k) {
            w.data[c * per_channel + k] =
                static_cast<float>(s * static_cast<double>(w.data[c * per_channel + k]));
        }
        b.data[c] = static_cast<float>(s * (static_cast<double>(bias(c)) - mean(c)) + beta(c));
    }
    return {std::move(w), std::move(b)};
}

WeightStore fold_pipeline_batchnorm(const WeightStore& store) {
    WeightStore out = store;
    std::vector<std::string> prefixes;
    const std::string marker = ".bn.gamma";
    for (const auto& [name, tensor] : store) {
        if (name.size() > marker.size() &&
            name.compare(name.size() - marker.size(), marker.size(), marker) == 0) {
            prefixes.push_back(name.substr(0, name.size() - marker.size()));
        }
    }
    for (const std::string& p : prefixes) {
        const Tensor& eps = fetch_weight(out, p + ".bn.eps");
        if (eps.numel() != 1) throw ShapeError(p + ".bn.eps must hold a single value");
        auto [w, b] = fold_batchnorm(fetch_weight(out, p + ".conv.weight"),
                                     fetch_weight(out, p + ".conv.bias"),
                                     fetch_weight(out, p + ".bn.gamma"),
                                     fetch_weight(out, p + ".bn.beta"),
                                     fetch_weight(out, p + ".bn.mean"),
                                     fetch_weight(out, p + ".bn.var"), eps.data[0]);
        out[p + ".conv.weight"] = std::move(w);
        out[p + ".conv.bias"] = std::move(b);
        for (const char* suffix : {".bn.gamma", ".bn.beta", ".bn.mean", ".bn.var", ".bn.eps"}) {
            out.erase(p + suffix);
        }
    }
    return out;
}

WeightStore convert_pipeline_precision(const WeightStore& store, Precision target) {
    WeightStore out = store;
    if (target == Precision::kFloat32) {
        for (auto& [name, tensor] : out) tensor.precision = Precision::kFloat32;
        return out;
    }
    std::vector<std::string> overflowed;
    for (auto& [name, tensor] : out) {
        if (name.find(".bn.") != std::string::npos || name.find(".ln") != std::string::npos) {
            continue;  // normalization statistics stay fp32
        }
        Tensor q = quantize_fp16(tensor);
        bool inf = false;
        for (float v : q.data) {
            if (std::isinf(v)) {
                inf = true;
                break;
            }
        }
        if (inf) {
            overflowed.push_back(name);
        } else {
            tensor = std::move(q);
        }
    }
    if (!overflowed.empty()) {
        std::string msg = "half-precision overflow in weight tensor(s):";
        for (const std::string& n : overflowed) msg += " " + n;
        throw ConfigError(msg);
    }
    return out;
}

EquivalenceReport equivalence_check(const DetectorFn& a, const DetectorFn& b,
                                    const std::vector<Scene>& scenes, double tolerance) {
    if (scenes.empty()) throw ConfigError("equivalence_check needs at least one scene");
    EquivalenceReport report;
    report.tolerance = tolerance;
    report.entries = {{"score", 0, 0}, {"center", 0, 0}, {"size", 0, 0}, {"yaw", 0, 0}};
    EquivalenceEntry& score = report.entries[0];
    EquivalenceEntry& center = report.entries[1];
    EquivalenceEntry& size = report.entries[2];
    EquivalenceEntry& yaw = report.entries[3];

    for (const Scene& scene : scenes) {
        const std::vector<Box3D> da = a(scene);
        const std::vector<Box3D> db = b(scene);

        struct Cand {
            double iou;
            size_t ia, ib;
        };
        std::vector<Cand> cands;
        for (size_t i = 0; i < da.size(); ++i) {
            for (size_t j = 0; j < db.size(); ++j) {
                const double iou = rotated_iou_bev(da[i], db[j]);
                if (iou > 0.0) cands.push_back({iou, i, j});
            }
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
            if (x.iou != y.iou) return x.iou > y.iou;
            if (x.ia != y.ia) return x.ia < y.ia;
            return x.ib < y.ib;
        });
        std::vector<char> used_a(da.size(), 0), used_b(db.size(), 0);
        size_t matched = 0;
        for (const Cand& c : cands) {
            if (used_a[c.ia] || used_b[c.ib]) continue;
            used_a[c.ia] = used_b[c.ib] = 1;
            ++matched;
            const Box3D& x = da[c.ia];
            const Box3D& y = db[c.ib];

            update(score, std::fabs(x.score - y.score), rel_diff(x.score, y.score, 1e-12));
            const double dist = std::sqrt((x.cx - y.cx) * (x.cx - y.cx) +
                                          (x.cy - y.cy) * (x.cy - y.cy) +
                                          (x.cz - y.cz) * (x.cz - y.cz));
            update(center, dist, dist / std::max(1e-12, x.bev_diag()));
            for (const auto& [sx, sy] : {std::pair{x.l, y.l}, {x.w, y.w}, {x.h, y.h}}) {
                update(size, std::fabs(sx - sy), rel_diff(sx, sy, 1e-12));
            }
            const double dyaw = std::fabs(wrap_angle(x.yaw - y.yaw));
            update(yaw, dyaw, dyaw / M_PI);
        }
        report.compared += matched;
        report.count_mismatch += (da.size() - matched) + (db.size() - matched);
    }

    for (const EquivalenceEntry& e : report.entries) {
        report.max_abs = std::max(report.max_abs, e.max_abs);
        if (e.max_rel >= report.max_rel) {
            report.max_rel = e.max_rel;
            report.worst = e.name;
        }
    }
    if (report.worst.empty()) report.worst = "score";
    report.pass = report.max_rel <= tolerance;
    return report;
}

std::string format_equivalence_table(const EquivalenceReport& report) {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof(line), "%-8s %14s %14s\n", "metric", "max_abs", "max_rel");
    os << line;
    for (const EquivalenceEntry& e : report.entries) {
        std::snprintf(line, sizeof(line), "%-8s %14.6e %14.6e\n", e.name.c_str(), e.max_abs,
                      e.max_rel);
        os << line;
    }
    std::snprintf(line, sizeof(line),
                  "worst %s  compared %zu  count_mismatch %zu  tolerance %g  %s\n",
                  report.worst.c_str(), report.compared, report.count_mismatch, report.tolerance,
                  report.pass ? "PASS" : "FAIL");
    os << line;
    return os.str();
}

void write_equivalence_csv(const std::string& path, const EquivalenceReport& report) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << "tensor,metric,value\n";
    char line[160];
    for (const EquivalenceEntry& e : report.entries) {
        std::snprintf(line, sizeof(line), "%s,max_abs,%.17g\n", e.name.c_str(), e.max_abs);
        f << line;
        std::snprintf(line, sizeof(line), "%s,max_rel,%.17g\n", e.name.c_str(), e.max_rel);
        f << line;
    }
    std::snprintf(line, sizeof(line), "overall,compared,%zu\n", report.compared);
    f << line;
    std::snprintf(line, sizeof(line), "overall,count_mismatch,%zu\n", report.count_mismatch);
    f << line;
    std::snprintf(line, sizeof(line), "overall,pass,%d\n", report.pass ? 1 : 0);
    f << line;
    if (!f) throw IoError("short write to " + path);
}

}  // namespace centeratt
