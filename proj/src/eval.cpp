#include "centeratt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "centeratt/errors.hpp"
#include "centeratt/matching.hpp"

namespace centeratt {

void EvalConfig::validate() const {
    for (double t : iou_thresholds) {
        if (!(t > 0.0 && t <= 1.0)) {
            throw ConfigError("eval iou thresholds must be in (0, 1]");
        }
    }
}

std::vector<DetMatch> match_detections(const std::vector<Box3D>& dets,
                                       const std::vector<Box3D>& gts, double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
        throw ConfigError("iou_threshold must be in (0, 1]");
    }
    std::vector<char> gt_taken(gts.size(), 0);
    std::vector<DetMatch> out;
    out.reserve(dets.size());
    for (size_t i = 0; i < dets.size(); ++i) {
        DetMatch m;
        m.det = i;
        double best_iou = 0.0;
        size_t best_gt = 0;
        bool found = false;
        for (size_t j = 0; j < gts.size(); ++j) {
            if (gt_taken[j] || gts[j].cls != dets[i].cls) continue;
            const double iou = rotated_iou_bev(dets[i], gts[j]);
            if (iou < iou_threshold) continue;
            if (!found || iou > best_iou) {
                best_iou = iou;
                best_gt = j;
                found = true;
            }
        }
        if (found) {
            gt_taken[best_gt] = 1;
            m.matched = true;
            m.gt = best_gt;
            m.iou = best_iou;
            m.dyaw = std::fabs(wrap_angle(dets[i].yaw - gts[best_gt].yaw));
        }
        out.push_back(m);
    }
    return out;
}

void EvalAccumulator::add_scene(const std::vector<Box3D>& scene_dets,
                                const std::vector<Box3D>& scene_gts, const EvalConfig& cfg) {
    cfg.validate();
    for (int k = 0; k < kNumClasses; ++k) {
        const ObjectClass cls = static_cast<ObjectClass>(k);
        std::vector<Box3D> cd, cg;
        for (const Box3D& d : scene_dets) {
            if (d.cls == cls) cd.push_back(d);
        }
        for (const Box3D& g : scene_gts) {
            if (g.cls == cls) cg.push_back(g);
        }
        std::stable_sort(cd.begin(), cd.end(),
                         [](const Box3D& a, const Box3D& b) { return a.score > b.score; });
        const std::vector<DetMatch> matches =
            match_detections(cd, cg, cfg.iou_thresholds[static_cast<size_t>(k)]);
        for (const DetMatch& m : matches) {
            dets[static_cast<size_t>(k)].push_back({cd[m.det].score, m.matched, m.dyaw});
        }
        num_gt[static_cast<size_t>(k)] += cg.size();
    }
}

EvalResult compute_ap_aph(const std::array<std::vector<ScoredDet>, kNumClasses>& dets_per_class,
                          const std::array<size_t, kNumClasses>& num_gt_per_class) {
    EvalResult result;
    double ap_sum = 0.0, aph_sum = 0.0;
    for (int k = 0; k < kNumClasses; ++k) {
        ClassEval& ce = result.per_class[static_cast<size_t>(k)];
        ce.num_gt = num_gt_per_class[static_cast<size_t>(k)];
        if (ce.num_gt == 0) continue;
        ce.evaluated = true;
        ++result.classes_evaluated;

        std::vector<ScoredDet> dets = dets_per_class[static_cast<size_t>(k)];
        std::stable_sort(dets.begin(), dets.end(),
                         [](const ScoredDet& a, const ScoredDet& b) { return a.score > b.score; });

        const size_t n = dets.size();
        std::vector<double> recall(n), prec(n), hprec(n);
        double tp = 0.0, heading = 0.0;
        for (size_t i = 0; i < n; ++i) {
            if (dets[i].tp) {
                tp += 1.0;
                heading += 1.0 - dets[i].dyaw / M_PI;
            }
            recall[i] = tp / static_cast<double>(ce.num_gt);
            prec[i] = tp / static_cast<double>(i + 1);
            hprec[i] = heading / static_cast<double>(i + 1);
        }
        // upper envelope from the right, then area under the stepwise curve
        double env_p = 0.0, env_hp = 0.0;
        std::vector<double> penv(n), hpenv(n);
        for (size_t i = n; i-- > 0;) {
            env_p = std::max(env_p, prec[i]);
            env_hp = std::max(env_hp, hprec[i]);
            penv[i] = env_p;
            hpenv[i] = env_hp;
        }
        double prev_r = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double dr = recall[i] - prev_r;
            if (dr > 0.0) {
                ce.ap += dr * penv[i];
                ce.aph += dr * hpenv[i];
                prev_r = recall[i];
            }
        }
        ap_sum += ce.ap;
        aph_sum += ce.aph;
    }
    if (result.classes_evaluated == 0) {
        throw ConfigError("no class has ground truth to evaluate");
    }
    result.map = ap_sum / result.classes_evaluated;
    result.maph = aph_sum / result.classes_evaluated;
    return result;
}

void write_eval_csv(const std::string& path, const EvalResult& result) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << "class,ap,aph\n";
    char line[128];
    for (int k = 0; k < kNumClasses; ++k) {
        const ClassEval& ce = result.per_class[static_cast<size_t>(k)];
        if (!ce.evaluated) {
            std::snprintf(line, sizeof(line), "%s,-,-\n",
                          class_name(static_cast<ObjectClass>(k)));
        } else {
            std::snprintf(line, sizeof(line), "%s,%.1f,%.1f\n",
                          class_name(static_cast<ObjectClass>(k)), 100.0 * ce.ap,
                          100.0 * ce.aph);
        }
        f << line;
    }
    std::snprintf(line, sizeof(line), "mAP,%.1f\n", 100.0 * result.map);
    f << line;
    std::snprintf(line, sizeof(line), "mAPH,%.1f\n", 100.0 * result.maph);
    f << line;
    if (!f) throw IoError("short write to " + path);
}

std::string format_eval_table(const EvalResult& result) {
    std::ostringstream os;
    char line[128];
    std::snprintf(line, sizeof(line), "%-12s %6s %6s %8s\n", "class", "AP", "APH", "gt");
    os << line;
    for (int k = 0; k < kNumClasses; ++k) {
        const ClassEval& ce = result.per_class[static_cast<size_t>(k)];
        if (!ce.evaluated) {
            std::snprintf(line, sizeof(line), "%-12s %6s %6s %8zu (no gt, excluded)\n",
                          class_name(static_cast<ObjectClass>(k)), "-", "-", ce.num_gt);
        } else {
            std::snprintf(line, sizeof(line), "%-12s %6.1f %6.1f %8zu\n",
                          class_name(static_cast<ObjectClass>(k)), 100.0 * ce.ap,
                          100.0 * ce.aph, ce.num_gt);
        }
        os << line;
    }
    std::snprintf(line, sizeof(line), "mAP %.1f  mAPH %.1f\n", 100.0 * result.map,
                  100.0 * result.maph);
    os << line;
    return os.str();
}

}  // namespace centeratt
