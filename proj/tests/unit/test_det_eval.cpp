#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "pgd/det_eval.hpp"
#include "pgd/quality.hpp"
#include "reference.hpp"

using namespace pgd;
using namespace pgd::testing;

namespace {

const std::vector<double> kAll = coco_iou_thresholds();
const std::vector<double> kHalf{0.5};

Box random_box(std::mt19937_64& rng, int category) {
    std::uniform_real_distribution<double> pos(0.0, 80.0), side(4.0, 30.0);
    const double x = pos(rng), y = pos(rng);
    return {x, y, x + side(rng), y + side(rng), category};
}

// GT plus detections that are jittered copies, duplicates and clutter.
struct MicroScene {
    std::vector<Box> gt;
    std::vector<Detection> dets;
};

MicroScene micro_scene(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> ngt(1, 6), ncls(1, 3);
    std::uniform_real_distribution<double> u(0.0, 1.0), jitter(-3.0, 3.0);
    MicroScene s;
    const int classes = ncls(rng);
    std::uniform_int_distribution<int> cls(0, classes - 1);
    const int n = ngt(rng);
    for (int g = 0; g < n; ++g) s.gt.push_back(random_box(rng, cls(rng)));
    for (const auto& g : s.gt) {
        const int copies = static_cast<int>(u(rng) * 3);
        for (int c = 0; c < copies; ++c) {
            Box b = g;
            b.x1 += jitter(rng);
            b.y1 += jitter(rng);
            b.x2 += jitter(rng);
            b.y2 += jitter(rng);
            if (u(rng) < 0.15) b.category = cls(rng);
            s.dets.push_back({b, std::round(u(rng) * 20) / 20}); // coarse scores force ties
        }
    }
    const int clutter = static_cast<int>(u(rng) * 5);
    for (int c = 0; c < clutter; ++c) s.dets.push_back({random_box(rng, cls(rng)), u(rng)});
    return s;
}

} // namespace

TEST(Iou, Examples) {
    EXPECT_DOUBLE_EQ(iou({0, 0, 2, 2, 0}, {1, 1, 3, 3, 0}), 1.0 / 7.0);
    EXPECT_EQ(iou({0, 0, 2, 2, 0}, {0, 0, 2, 2, 0}), 1.0);
    EXPECT_EQ(iou({0, 0, 2, 2, 0}, {2, 0, 4, 2, 0}), 0.0); // touching edge
    EXPECT_EQ(iou({0, 0, 2, 2, 0}, {5, 5, 6, 6, 0}), 0.0);
    EXPECT_EQ(iou({0, 0, 0, 2, 0}, {0, 0, 2, 2, 0}), 0.0);
    EXPECT_DOUBLE_EQ(iou({0, 0, 4, 4, 0}, {1, 1, 3, 3, 0}), 0.25);
}

TEST(Iou, SymmetricBoundedAndMatchesReference) {
    std::mt19937_64 rng(31);
    for (int n = 0; n < 500; ++n) {
        const Box a = random_box(rng, 0), b = random_box(rng, 0);
        const double v = iou(a, b);
        EXPECT_EQ(v, iou(b, a));
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_NEAR(v, ref::iou(a, b), 1e-15);
    }
}

TEST(Nms, SuppressesOverlapsWithinAClass) {
    const std::vector<Detection> dets{{{0, 0, 10, 10, 0}, 0.9}, {{1, 0, 11, 10, 0}, 0.8}, {{1, 0, 11, 10, 1}, 0.7},
                                      {{50, 50, 60, 60, 0}, 0.95}};
    const auto kept = nms(dets, 0.6);
    ASSERT_EQ(kept.size(), 3u);
    EXPECT_EQ(kept[0], dets[3]);
    EXPECT_EQ(kept[1], dets[0]);
    EXPECT_EQ(kept[2], dets[2]);
}

TEST(Nms, ThresholdIsInclusive) {
    // IoU of these two is exactly 0.5
    const std::vector<Detection> dets{{{0, 0, 3, 1, 0}, 0.9}, {{1, 0, 4, 1, 0}, 0.8}};
    ASSERT_EQ(iou(dets[0].box, dets[1].box), 0.5);
    EXPECT_EQ(nms(dets, 0.5).size(), 1u);
    EXPECT_EQ(nms(dets, 0.51).size(), 2u);
}

TEST(Nms, TiesKeepInputOrder) {
    const std::vector<Detection> dets{{{0, 0, 10, 10, 0}, 0.5}, {{0, 0, 10, 10, 0}, 0.5}, {{0, 0, 10, 10, 0}, 0.5}};
    const std::vector<Detection> b{{{0, 0, 10, 10, 0}, 0.5}, {{20, 0, 30, 10, 0}, 0.5}};
    EXPECT_EQ(nms(dets, 0.6).size(), 1u);
    const auto kept = nms(b, 0.6);
    EXPECT_EQ(kept, b);
}

TEST(Nms, RejectsBadThreshold) {
    EXPECT_THROW(nms({}, 0.0), std::invalid_argument);
    EXPECT_THROW(nms({}, 1.5), std::invalid_argument);
}

TEST(Nms, IdempotentSubsetAndSeparated) {
    std::mt19937_64 rng(32);
    for (int n = 0; n < 100; ++n) {
        const MicroScene s = micro_scene(rng);
        const auto kept = nms(s.dets, 0.6);
        EXPECT_EQ(nms(kept, 0.6), kept);
        for (const auto& k : kept) EXPECT_NE(std::find(s.dets.begin(), s.dets.end(), k), s.dets.end());
        for (std::size_t a = 0; a < kept.size(); ++a) {
            if (a > 0) EXPECT_GE(kept[a - 1].score, kept[a].score);
            for (std::size_t b = a + 1; b < kept.size(); ++b)
                if (kept[a].box.category == kept[b].box.category) EXPECT_LT(iou(kept[a].box, kept[b].box), 0.6);
        }
    }
}

TEST(CocoThresholds, TenSteps) {
    ASSERT_EQ(kAll.size(), 10u);
    EXPECT_EQ(kAll.front(), 0.5);
    EXPECT_EQ(kAll.back(), 0.95);
    for (std::size_t i = 1; i < kAll.size(); ++i) EXPECT_NEAR(kAll[i] - kAll[i - 1], 0.05, 1e-12);
}

TEST(AveragePrecision, Examples) {
    const std::vector<Box> one{{0, 0, 10, 10, 0}};
    const std::vector<Detection> perfect{{one[0], 0.9}};
    EXPECT_EQ(average_precision(perfect, one, kAll), 1.0);
    EXPECT_EQ(average_precision({}, one, kAll), 0.0);

    // a false positive ranked first halves precision at every recall level
    const std::vector<Detection> fp_first{{{50, 50, 60, 60, 0}, 0.9}, {one[0], 0.8}};
    EXPECT_DOUBLE_EQ(average_precision(fp_first, one, kHalf), 0.5);
    const std::vector<Detection> fp_last{{one[0], 0.9}, {{50, 50, 60, 60, 0}, 0.8}};
    EXPECT_EQ(average_precision(fp_last, one, kHalf), 1.0);

    // half the objects found: recall points 0..50 score 1
    const std::vector<Box> two{{0, 0, 10, 10, 0}, {30, 30, 40, 40, 0}};
    EXPECT_DOUBLE_EQ(average_precision(perfect, two, kHalf), 51.0 / 101.0);
}

TEST(AveragePrecision, EmptyGroundTruth) {
    EXPECT_EQ(average_precision({}, {}, kAll), 1.0);
    const std::vector<Detection> d{{{0, 0, 1, 1, 0}, 0.1}};
    EXPECT_EQ(average_precision(d, {}, kAll), 0.0);
    EXPECT_THROW(average_precision(d, {}, {}), std::invalid_argument);
}

TEST(AveragePrecision, ThresholdsSeparateLooseMatches) {
    const std::vector<Box> gt{{0, 0, 10, 10, 0}};
    const std::vector<Detection> loose{{{0, 0, 10, 7, 0}, 0.9}}; // IoU 0.7
    // matches at 0.50 .. 0.70: five of ten thresholds
    EXPECT_DOUBLE_EQ(average_precision(loose, gt, kAll), 0.5);
}

TEST(AveragePrecision, AbsentClassesAreIgnored) {
    const std::vector<Box> gt{{0, 0, 10, 10, 0}};
    std::vector<Detection> d{{gt[0], 0.5}};
    const double before = average_precision(d, gt, kAll);
    d.push_back({{0, 0, 10, 10, 4}, 0.99});
    EXPECT_EQ(average_precision(d, gt, kAll), before);
}

TEST(AveragePrecision, MatchesBruteForceExactly) {
    std::mt19937_64 rng(33);
    for (int n = 0; n < 200; ++n) {
        const MicroScene s = micro_scene(rng);
        EXPECT_EQ(average_precision(s.dets, s.gt, kAll), ref::average_precision(s.dets, s.gt, kAll)) << n;
    }
}

TEST(AveragePrecision, TrailingFalsePositiveChangesNothing) {
    std::mt19937_64 rng(34);
    for (int n = 0; n < 100; ++n) {
        MicroScene s = micro_scene(rng);
        const double before = average_precision(s.dets, s.gt, kAll);
        // a duplicate of the first GT below every score can only be a false positive or a late match
        s.dets.push_back({s.gt[0], -1.0});
        EXPECT_GE(average_precision(s.dets, s.gt, kAll), before);
        s.dets.push_back({{500, 500, 510, 510, s.gt[0].category}, -2.0});
        const double with_tail = average_precision(s.dets, s.gt, kAll);
        s.dets.pop_back();
        EXPECT_EQ(with_tail, average_precision(s.dets, s.gt, kAll));
    }
}

TEST(AveragePrecision, BoundedAndOrderFree) {
    std::mt19937_64 rng(35);
    for (int n = 0; n < 100; ++n) {
        MicroScene s = micro_scene(rng);
        for (auto& d : s.dets) d.score += 1e-6 * static_cast<double>(&d - s.dets.data()); // distinct scores
        const double ap = average_precision(s.dets, s.gt, kAll);
        EXPECT_GE(ap, 0.0);
        EXPECT_LE(ap, 1.0);
        std::shuffle(s.dets.begin(), s.dets.end(), rng);
        EXPECT_EQ(average_precision(s.dets, s.gt, kAll), ap);
    }
}

TEST(RankPositiveCells, SortedAndComplete) {
    std::mt19937_64 rng(36);
    for (int n = 0; n < 10; ++n) {
        const SceneBundle b = generate_bundle(random_spec(rng));
        const auto cells = rank_positive_cells(b, 0.8);
        const auto fields = quality_fields(b, 0.8);
        std::size_t positive = 0;
        for (std::size_t l = 0; l < b.levels.size(); ++l)
            for (std::size_t x = 0; x < b.levels[l].cells(); ++x) {
                double q = 0;
                for (const auto& f : fields) q = std::max(q, f.levels[l].values()[x]);
                positive += q > 0;
            }
        EXPECT_EQ(cells.size(), positive);
        for (std::size_t i = 1; i < cells.size(); ++i) {
            EXPECT_GE(cells[i - 1].quality, cells[i].quality);
            if (cells[i - 1].quality == cells[i].quality) EXPECT_LT(cells[i - 1].cell, cells[i].cell);
        }
    }
}

TEST(FlattenPredictions, OneDetectionPerAnchorMinusMasked) {
    TinyScene s;
    s.anchors = 2;
    s.num_classes = 3;
    SceneBundle b = make_bundle(s);
    set_prediction(b, 0, 1, 2, 2, {8, 8, 30, 30, 0}, {0.1f, 0.7f, 0.2f});
    const auto all = flatten_predictions(b);
    EXPECT_EQ(all.size(), 32u);
    const auto it = std::find_if(all.begin(), all.end(), [](const Detection& d) { return d.box.x2 == 30; });
    ASSERT_NE(it, all.end());
    EXPECT_EQ(it->box.category, 1);
    EXPECT_FLOAT_EQ(static_cast<float>(it->score), 0.7f);

    const std::vector<CellIndex> masked{{0, 2, 2}, {0, 0, 0}};
    EXPECT_EQ(flatten_predictions(b, masked).size(), 28u);

    set_prediction(b, 0, 0, 1, 1, {5, 5, 5, 9, 0}, {0.9f, 0.0f, 0.0f}); // degenerate
    EXPECT_EQ(flatten_predictions(b).size(), 31u);
}

TEST(Maskout, RatioZeroIsTheBaseline) {
    const SceneBundle b = generate_bundle(SynthSpec{});
    const std::vector<double> ratios{0, 1, 2, 5, 10, 20, 50, 100};
    const MaskoutCurve c = maskout_experiment(b, ratios, 0.8, 0.6);
    ASSERT_EQ(c.points.size(), ratios.size());
    const auto kept = nms(flatten_predictions(b), 0.6);
    EXPECT_EQ(c.points[0].ap, average_precision(kept, b.gt, kAll));
    for (std::size_t r = 0; r < ratios.size(); ++r) EXPECT_EQ(c.points[r].ratio_percent, ratios[r]);
}

TEST(Maskout, MasksCeilOfTheRatio) {
    const SceneBundle b = generate_bundle(SynthSpec{});
    const auto ranked = rank_positive_cells(b, 0.8);
    ASSERT_GT(ranked.size(), 10u);
    for (double ratio : {1.0, 5.0, 33.0, 100.0}) {
        const std::size_t n = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(ranked.size()) / 100.0 - 1e-9));
        std::vector<CellIndex> masked;
        for (std::size_t i = 0; i < n; ++i) masked.push_back(ranked[i].cell);
        const double want = average_precision(nms(flatten_predictions(b, masked), 0.6), b.gt, kAll);
        const std::vector<double> ratios{0.0, ratio};
        EXPECT_EQ(maskout_experiment(b, ratios, 0.8, 0.6).points[1].ap, want);
    }
}

TEST(Maskout, DefaultSceneCollapsesAtOnePercent) {
    SynthSpec spec;
    spec.quality_concentration = 8.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        spec.seed = seed;
        const SceneBundle b = generate_bundle(spec);
        const std::vector<double> ratios{0, 1, 2, 5, 10};
        const MaskoutCurve c = maskout_experiment(b, ratios, 0.8, 0.6);
        EXPECT_LE(c.points[1].ap, 0.6 * c.points[0].ap) << seed;
        for (std::size_t r = 1; r < c.points.size(); ++r) EXPECT_LE(c.points[r].ap, c.points[r - 1].ap);
    }
}

TEST(Maskout, WorkerCountDoesNotMatter) {
    const SceneBundle b = generate_bundle(SynthSpec{});
    const std::vector<double> ratios{0, 1, 2, 5, 10, 20, 50, 100};
    EXPECT_EQ(maskout_csv(maskout_experiment(b, ratios, 0.8, 0.6, 1)),
              maskout_csv(maskout_experiment(b, ratios, 0.8, 0.6, 4)));
}

TEST(Maskout, RatioValidation) {
    const SceneBundle b = generate_bundle(small_spec(0));
    EXPECT_THROW(maskout_experiment(b, std::vector<double>{1, 2}, 0.8, 0.6), std::invalid_argument);
    EXPECT_THROW(maskout_experiment(b, std::vector<double>{0, 5, 5}, 0.8, 0.6), std::invalid_argument);
    EXPECT_THROW(maskout_experiment(b, std::vector<double>{0, 101}, 0.8, 0.6), std::invalid_argument);
    EXPECT_THROW(maskout_experiment(b, std::vector<double>{}, 0.8, 0.6), std::invalid_argument);
}

TEST(Maskout, CsvFormat) {
    MaskoutCurve c;
    c.points = {{0.0, 1.0}, {1.0, 0.25}, {50.0, 0.1234567}};
    EXPECT_EQ(maskout_csv(c), "ratio_percent,ap\n0.000000,1.000000\n1.000000,0.250000\n50.000000,0.123457\n");
}
