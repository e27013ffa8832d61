#pragma once

#include <span>
#include <vector>

#include "pgd/grid.hpp"
#include "pgd/types.hpp"

namespace pgd {

/// Quality of one predicted box against a ground-truth box:
///   1[inside] * p^(1 - xi) * iou^xi,   with 0^0 = 1.
/// xi = 0 reduces exactly to 1[inside] * p, xi = 1 to 1[inside] * iou.
double box_quality(double p, double iou, bool inside, double xi);

/// Per-level quality of every cell with respect to one GT object: the max
/// box_quality over the anchors predicted at that cell, scored with the
/// probability of the object's category. Zero outside the object's box.
struct QualityField {
    int object_index = 0;
    LevelMaps levels;
};

QualityField object_quality_field(const SceneBundle& bundle, int object_index, double xi);

/// One field per GT object, in GT order.
std::vector<QualityField> quality_fields(const SceneBundle& bundle, double xi, int workers = 1);

/// Collapses fields onto the finest grid: every finest cell takes the max
/// over all fields and levels, where a coarse cell covers the finest cells
/// whose centers fall inside it (block replication).
Grid collapse_to_finest(std::span<const QualityField> fields, std::span<const LevelGeometry> levels);

/// Cross-level, cross-object quality heatmap at finest-level resolution.
Grid quality_heatmap(const SceneBundle& bundle, double xi);

} // namespace pgd
