#include <gtest/gtest.h>

#include <set>
#include <utility>

#include "fixtures.hpp"
#include "pgd/grid.hpp"
#include "pgd/types.hpp"

using namespace pgd;
using pgd::testing::make_bundle;
using pgd::testing::TinyScene;

TEST(CellCenter, HalfCellOffset) {
    const LevelGeometry s8{0, 8, 4, 4};
    const LevelGeometry s16{1, 16, 2, 2};
    EXPECT_EQ(cell_center(s8, 0, 0), (Point{4.0, 4.0}));
    EXPECT_EQ(cell_center(s8, 2, 3), (Point{28.0, 20.0}));
    EXPECT_EQ(cell_center(s16, 0, 1), (Point{24.0, 8.0}));
}

TEST(CellCenter, RejectsOutOfRange) {
    const LevelGeometry lv{0, 8, 4, 5};
    EXPECT_THROW(cell_center(lv, 4, 0), std::out_of_range);
    EXPECT_THROW(cell_center(lv, 0, 5), std::out_of_range);
    EXPECT_THROW(cell_center(lv, -1, 0), std::out_of_range);
}

TEST(CellCenter, InjectiveAtStrideSpacing) {
    const LevelGeometry lv{0, 8, 6, 7};
    std::set<std::pair<double, double>> seen;
    for (int i = 0; i < lv.height; ++i) {
        for (int j = 0; j < lv.width; ++j) {
            const Point c = cell_center(lv, i, j);
            EXPECT_TRUE(seen.insert({c.x, c.y}).second);
            if (j > 0) EXPECT_EQ(c.x - cell_center(lv, i, j - 1).x, 8.0);
            if (i > 0) EXPECT_EQ(c.y - cell_center(lv, i - 1, j).y, 8.0);
        }
    }
}

TEST(PointInBox, ClosedOnEveryEdge) {
    const Box b{0, 0, 10, 10, 0};
    EXPECT_TRUE(point_in_box({5, 5}, b));
    EXPECT_TRUE(point_in_box({10, 10}, b));
    EXPECT_TRUE(point_in_box({0, 7}, b));
    EXPECT_FALSE(point_in_box({11, 5}, b));
    EXPECT_FALSE(point_in_box({5, -0.001}, b));
}

TEST(DistillConfig, DefaultsAndDerivedWeights) {
    const DistillConfig c;
    EXPECT_EQ(c.k, 30);
    EXPECT_EQ(c.xi_cls, 0.8);
    EXPECT_EQ(c.xi_reg, 0.6);
    EXPECT_EQ(c.tau, 0.8);
    EXPECT_EQ(c.alpha, 0.8);
    EXPECT_DOUBLE_EQ(c.beta, 0.5 * c.alpha);
    EXPECT_DOUBLE_EQ(c.gamma, 1.6 * c.alpha);
    EXPECT_EQ(c.delta, 0.0008);

    const DistillConfig free_form = DistillConfig::with_alpha(0.4);
    EXPECT_DOUBLE_EQ(free_form.beta, 0.2);
    EXPECT_DOUBLE_EQ(free_form.gamma, 0.64);
}

TEST(DistillConfig, ValidateRejectsOutOfRange) {
    auto bad = [](auto mutate) {
        DistillConfig c;
        mutate(c);
        return c;
    };
    EXPECT_NO_THROW(DistillConfig{}.validate());
    EXPECT_THROW(bad([](DistillConfig& c) { c.xi_cls = 1.5; }).validate(), std::invalid_argument);
    EXPECT_THROW(bad([](DistillConfig& c) { c.xi_reg = -0.1; }).validate(), std::invalid_argument);
    EXPECT_THROW(bad([](DistillConfig& c) { c.k = 0; }).validate(), std::invalid_argument);
    EXPECT_THROW(bad([](DistillConfig& c) { c.gamma = -1; }).validate(), std::invalid_argument);
    EXPECT_THROW(bad([](DistillConfig& c) { c.tau = 0; }).validate(), std::invalid_argument);
}

TEST(FeatureTensor, RejectsBadShape) {
    EXPECT_THROW(FeatureTensor(0, 1, 1), std::invalid_argument);
    EXPECT_THROW(FeatureTensor(1, 2, 2, std::vector<float>(3)), std::invalid_argument);
    FeatureTensor t(2, 1, 1, {1.0f, 2.0f});
    EXPECT_EQ(t.at(1, 0, 0), 2.0f);
    EXPECT_TRUE(t.all_finite());
}

TEST(Validation, ValidSceneHasNoViolations) {
    TinyScene s;
    s.gt = {{4, 4, 20, 20, 0}};
    EXPECT_TRUE(bundle_violations(make_bundle(s)).empty());
}

TEST(Validation, ReportsEveryViolation) {
    TinyScene s;
    s.num_classes = 2;
    s.gt = {{4, 4, 20, 20, 0}};
    SceneBundle b = make_bundle(s);
    b.gt.push_back({10, 10, 40, 20, 0});  // outside the 32x32 image
    b.gt.push_back({5, 5, 5, 9, 1});      // degenerate
    b.gt.push_back({1, 1, 3, 3, 7});      // bad category
    b.student_cls_feats[0] = FeatureTensor(3, 4, 4); // channel mismatch
    b.teacher_preds.levels[0].class_probs[0] = 1.5f;
    const auto v = bundle_violations(b);
    EXPECT_EQ(v.size(), 5u);
    try {
        validate_bundle(b);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.violations(), v);
    }
}

TEST(Validation, RejectsNonIncreasingStrides) {
    TinyScene s;
    s.strides = {8, 16};
    SceneBundle b = make_bundle(s);
    b.levels[1].stride = 8;
    EXPECT_FALSE(bundle_violations(b).empty());
}

TEST(Validation, RejectsNonFiniteFeatures) {
    SceneBundle b = make_bundle(TinyScene{});
    b.teacher_reg_feats[0].values()[3] = std::numeric_limits<float>::quiet_NaN();
    EXPECT_FALSE(bundle_violations(b).empty());
}

TEST(Grid, SumAndPositiveCount) {
    Grid g(2, 3);
    g.at(0, 1) = 0.5;
    g.at(1, 2) = 0.25;
    EXPECT_EQ(g.sum(), 0.75);
    EXPECT_EQ(g.count_positive(), 2u);
}

TEST(ParallelFor, ResultsIndependentOfWorkerCount) {
    std::vector<double> one(1000), many(1000);
    parallel_for(one.size(), 1, [&](std::size_t i) { one[i] = std::sqrt(static_cast<double>(i)); });
    parallel_for(many.size(), 7, [&](std::size_t i) { many[i] = std::sqrt(static_cast<double>(i)); });
    EXPECT_EQ(one, many);
}

TEST(ParallelFor, RethrowsLowestIndexFailure) {
    try {
        parallel_for(100, 4, [](std::size_t i) {
            if (i == 17 || i == 60) throw std::runtime_error("fail " + std::to_string(i));
        });
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_STREQ(e.what(), "fail 17");
    }
}
