#include "pgd/quality.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pgd/det_eval.hpp"

namespace pgd {

double box_quality(double p, double iou, bool inside, double xi) {
    if (!inside) return 0.0;
    // pow(x, 0) == 1 for every x including 0, and pow(x, 1) == x.
    return std::pow(p, 1.0 - xi) * std::pow(iou, xi);
}

QualityField object_quality_field(const SceneBundle& bundle, int object_index, double xi) {
    if (object_index < 0 || static_cast<std::size_t>(object_index) >= bundle.gt.size())
        throw std::out_of_range("object_quality_field: object index out of range");
    const Box& object = bundle.gt[static_cast<std::size_t>(object_index)];

    QualityField field{object_index, zero_maps(bundle.levels)};
    for (std::size_t l = 0; l < bundle.levels.size(); ++l) {
        const auto& lv = bundle.levels[l];
        const auto& preds = bundle.teacher_preds.levels[l];
        Grid& q = field.levels[l];
        for (int i = 0; i < lv.height; ++i) {
            for (int j = 0; j < lv.width; ++j) {
                if (!point_in_box(cell_center(lv, i, j), object)) continue;
                double best = 0.0;
                for (int a = 0; a < preds.anchors; ++a) {
                    const double p = preds.prob(a, object.category, i, j);
                    const double overlap = iou(object, preds.box(a, i, j));
                    best = std::max(best, box_quality(p, overlap, true, xi));
                }
                q.at(i, j) = best;
            }
        }
    }
    return field;
}

std::vector<QualityField> quality_fields(const SceneBundle& bundle, double xi, int workers) {
    std::vector<QualityField> fields(bundle.gt.size());
    parallel_for(fields.size(), workers,
                 [&](std::size_t o) { fields[o] = object_quality_field(bundle, static_cast<int>(o), xi); });
    return fields;
}

Grid collapse_to_finest(std::span<const QualityField> fields, std::span<const LevelGeometry> levels) {
    if (levels.empty()) throw std::invalid_argument("collapse_to_finest: no levels");
    const auto& finest = levels.front();
    Grid out(finest.height, finest.width);
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const auto& lv = levels[l];
        for (int i = 0; i < finest.height; ++i) {
            const Point c = cell_center(finest, i, 0);
            const int row = std::min(static_cast<int>(std::floor(c.y / lv.stride)), lv.height - 1);
            for (int j = 0; j < finest.width; ++j) {
                const double cx = finest.stride * (j + 0.5);
                const int col = std::min(static_cast<int>(std::floor(cx / lv.stride)), lv.width - 1);
                double& cell = out.at(i, j);
                for (const auto& f : fields) cell = std::max(cell, f.levels[l].at(row, col));
            }
        }
    }
    return out;
}

Grid quality_heatmap(const SceneBundle& bundle, double xi) {
    const auto fields = quality_fields(bundle, xi);
    return collapse_to_finest(fields, bundle.levels);
}

} // namespace pgd
