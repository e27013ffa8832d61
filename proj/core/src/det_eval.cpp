#include "pgd/det_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <stdexcept>

#include "pgd/grid.hpp"
#include "pgd/quality.hpp"

namespace pgd {

namespace {

std::vector<std::size_t> score_order(std::span<const Detection> dets) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
    return order;
}

// AP of one class at one IoU threshold.
double class_ap(std::span<const Detection> dets, std::span<const Box> gts, double threshold) {
    const auto order = score_order(dets);
    std::vector<bool> matched(gts.size(), false);
    std::vector<double> precision, recall;
    precision.reserve(order.size());
    recall.reserve(order.size());
    std::size_t tp = 0;
    for (std::size_t n = 0; n < order.size(); ++n) {
        const Box& d = dets[order[n]].box;
        double best = -1.0;
        std::size_t best_gt = gts.size();
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (matched[g]) continue;
            const double o = iou(d, gts[g]);
            if (o >= threshold && o > best) {
                best = o;
                best_gt = g;
            }
        }
        if (best_gt < gts.size()) {
            matched[best_gt] = true;
            ++tp;
        }
        precision.push_back(static_cast<double>(tp) / static_cast<double>(n + 1));
        recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
    }
    for (std::size_t n = precision.size(); n-- > 1;) precision[n - 1] = std::max(precision[n - 1], precision[n]);

    double sum = 0.0;
    std::size_t n = 0;
    for (int r = 0; r <= 100; ++r) {
        const double level = r / 100.0;
        while (n < recall.size() && recall[n] < level) ++n;
        if (n < recall.size()) sum += precision[n];
    }
    return sum / 101.0;
}

} // namespace

double iou(const Box& a, const Box& b) {
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = std::max(a.area(), 0.0) + std::max(b.area(), 0.0) - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw std::invalid_argument("nms: threshold must lie in (0, 1]");
    std::vector<Detection> kept;
    for (std::size_t idx : score_order(dets)) {
        const Detection& d = dets[idx];
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
            return k.box.category == d.box.category && iou(k.box, d.box) >= iou_threshold;
        });
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

std::vector<double> coco_iou_thresholds() {
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
    return t;
}

double average_precision(std::span<const Detection> dets, std::span<const Box> gts,
                         std::span<const double> iou_thresholds) {
    if (iou_thresholds.empty()) throw std::invalid_argument("average_precision: no IoU thresholds");
    if (gts.empty()) return dets.empty() ? 1.0 : 0.0;

    std::set<int> classes;
    for (const auto& g : gts) classes.insert(g.category);

    double sum = 0.0;
    for (int c : classes) {
        std::vector<Detection> class_dets;
        std::vector<Box> class_gts;
        for (const auto& d : dets)
            if (d.box.category == c) class_dets.push_back(d);
        for (const auto& g : gts)
            if (g.category == c) class_gts.push_back(g);
        for (double t : iou_thresholds) sum += class_ap(class_dets, class_gts, t);
    }
    return sum / static_cast<double>(classes.size() * iou_thresholds.size());
}

std::vector<RankedCell> rank_positive_cells(const SceneBundle& bundle, double xi) {
    const auto fields = quality_fields(bundle, xi);
    std::vector<RankedCell> cells;
    for (std::size_t l = 0; l < bundle.levels.size(); ++l) {
        const auto& lv = bundle.levels[l];
        for (int i = 0; i < lv.height; ++i) {
            for (int j = 0; j < lv.width; ++j) {
                double q = 0.0;
                for (const auto& f : fields) q = std::max(q, f.levels[l].at(i, j));
                if (q > 0.0) cells.push_back({{static_cast<int>(l), i, j}, q});
            }
        }
    }
    std::sort(cells.begin(), cells.end(), [](const RankedCell& a, const RankedCell& b) {
        if (a.quality != b.quality) return a.quality > b.quality;
        return a.cell < b.cell;
    });
    return cells;
}

std::vector<Detection> flatten_predictions(const SceneBundle& bundle, std::span<const CellIndex> masked) {
    std::vector<std::vector<char>> is_masked(bundle.levels.size());
    for (std::size_t l = 0; l < bundle.levels.size(); ++l) is_masked[l].assign(bundle.levels[l].cells(), 0);
    for (const auto& c : masked)
        is_masked[static_cast<std::size_t>(c.level)][static_cast<std::size_t>(c.row) * bundle.levels[c.level].width + c.col] = 1;

    std::vector<Detection> dets;
    for (std::size_t l = 0; l < bundle.levels.size(); ++l) {
        const auto& lv = bundle.levels[l];
        const auto& preds = bundle.teacher_preds.levels[l];
        for (int i = 0; i < lv.height; ++i) {
            for (int j = 0; j < lv.width; ++j) {
                if (is_masked[l][static_cast<std::size_t>(i) * lv.width + j]) continue;
                for (int a = 0; a < preds.anchors; ++a) {
                    Box box = preds.box(a, i, j);
                    if (!box.valid()) continue;
                    int best = 0;
                    for (int c = 1; c < preds.num_classes; ++c)
                        if (preds.prob(a, c, i, j) > preds.prob(a, best, i, j)) best = c;
                    box.category = best;
                    dets.push_back({box, preds.prob(a, best, i, j)});
                }
            }
        }
    }
    return dets;
}

MaskoutCurve maskout_experiment(const SceneBundle& bundle, std::span<const double> ratios, double xi,
                                double nms_threshold, int workers) {
    if (ratios.empty() || ratios.front() != 0.0) throw std::invalid_argument("maskout: ratios must start at 0");
    for (std::size_t r = 1; r < ratios.size(); ++r)
        if (!(ratios[r] > ratios[r - 1])) throw std::invalid_argument("maskout: ratios must strictly increase");
    if (ratios.back() > 100.0) throw std::invalid_argument("maskout: ratios must not exceed 100");

    const auto ranked = rank_positive_cells(bundle, xi);
    const auto thresholds = coco_iou_thresholds();
    const double count = static_cast<double>(ranked.size());

    MaskoutCurve curve;
    curve.points.resize(ratios.size());
    parallel_for(ratios.size(), workers, [&](std::size_t r) {
        // The epsilon keeps e.g. 1% of 300 at exactly 3 despite rounding.
        const double want = std::ceil(ratios[r] * count / 100.0 - 1e-9);
        const auto n = static_cast<std::size_t>(std::clamp(want, 0.0, count));
        std::vector<CellIndex> masked;
        masked.reserve(n);
        for (std::size_t i = 0; i < n; ++i) masked.push_back(ranked[i].cell);
        const auto dets = flatten_predictions(bundle, masked);
        const auto kept = nms(dets, nms_threshold);
        curve.points[r] = {ratios[r], average_precision(kept, bundle.gt, thresholds)};
    });
    return curve;
}

std::string maskout_csv(const MaskoutCurve& curve) {
    std::string out = "ratio_percent,ap\n";
    char line[96];
    for (const auto& p : curve.points) {
        std::snprintf(line, sizeof line, "%.6f,%.6f\n", p.ratio_percent, p.ap);
        out += line;
    }
    return out;
}

} // namespace pgd
