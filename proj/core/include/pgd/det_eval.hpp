#pragma once

#include <span>
#include <string>
#include <vector>

#include "pgd/types.hpp"

namespace pgd {

/// Intersection over union; 0 for disjoint or degenerate boxes.
double iou(const Box& a, const Box& b);

/// A scored box. The class id is box.category.
struct Detection {
    Box box;
    double score = 0.0;

    friend bool operator==(const Detection&, const Detection&) = default;
};

/// Class-wise greedy NMS. Detections are visited in descending score order
/// (ties by input index) and kept iff their IoU with every kept detection of
/// the same class is below the threshold. Output is in visiting order.
std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold);

/// 0.50, 0.55, ..., 0.95.
std::vector<double> coco_iou_thresholds();

/// COCO-style AP with 101-point interpolation, averaged over the classes
/// present in `gts` and over `iou_thresholds`. No area split and no
/// detection cap. Empty GT scores 1 with no detections and 0 otherwise.
double average_precision(std::span<const Detection> dets, std::span<const Box> gts,
                         std::span<const double> iou_thresholds);

/// A position with positive quality for at least one object, with the best
/// quality over objects.
struct RankedCell {
    CellIndex cell;
    double quality = 0.0;
};

/// Positions with quality > 0, by descending quality, ties by (level, row, col).
std::vector<RankedCell> rank_positive_cells(const SceneBundle& bundle, double xi);

/// Flattens the teacher predictions into detections (score = max class
/// probability, class = its argmax), skipping every anchor at the masked
/// cells and any degenerate box.
std::vector<Detection> flatten_predictions(const SceneBundle& bundle, std::span<const CellIndex> masked = {});

struct MaskoutPoint {
    double ratio_percent = 0.0;
    double ap = 0.0;
};

struct MaskoutCurve {
    std::vector<MaskoutPoint> points;
};

/// Removes the predictions at the top ceil(X% * count) positive-quality
/// positions for each ratio X, runs NMS on the rest and scores AP at
/// 0.50:0.05:0.95. Ratios must start at 0, strictly increase and be <= 100.
MaskoutCurve maskout_experiment(const SceneBundle& bundle, std::span<const double> ratios_percent, double xi,
                                double nms_threshold, int workers = 1);

/// "ratio_percent,ap" header, one row per point, 6 decimals.
std::string maskout_csv(const MaskoutCurve& curve);

} // namespace pgd
