#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pgd/attention.hpp"
#include "pgd/grid.hpp"
#include "pgd/pgw.hpp"
#include "pgd/types.hpp"

namespace pgd {

/// One loss term: the level-summed value and its per-level parts.
struct LossTerm {
    double value = 0.0;
    std::vector<double> per_level;
};

/// sum (alpha*M + beta*N) * P_t * A_t * (F_t - F_s)^2 over levels, channels, cells.
LossTerm fea_cls_loss(std::span<const Volume> teacher, std::span<const Volume> student, const WeightMask& mask_cls,
                      const LevelMaps& background, std::span<const AttentionPair> teacher_att, double alpha,
                      double beta);

/// sum gamma * M_reg * A_t * (F_t - F_s)^2.
LossTerm fea_reg_loss(std::span<const Volume> teacher, std::span<const Volume> student, const WeightMask& mask_reg,
                      std::span<const AttentionPair> teacher_att, double gamma);

/// Per level: delta/(HW) sum |P_t - P_s| + delta/(CHW) sum |A_t - A_s|.
LossTerm att_cls_loss(std::span<const AttentionPair> teacher, std::span<const AttentionPair> student, double delta);

/// Per level: delta/(C * |support|) sum over support of |A_t - A_s|; zero for
/// an empty support.
LossTerm att_reg_loss(std::span<const AttentionPair> teacher, std::span<const AttentionPair> student,
                      const WeightMask& mask_reg, double delta);

struct LossReport {
    LossTerm fea_cls;
    LossTerm fea_reg;
    LossTerm att_cls;
    LossTerm att_reg;
    double total = 0.0; // fea_cls + fea_reg + att_cls + att_reg, in that order
    std::size_t cls_support = 0;
    std::size_t reg_support = 0;
    std::size_t background_cells = 0;
};

/// Everything the loss needs, widened to 64-bit. Masks and teacher
/// attentions are constants with respect to the student features.
struct DistillInputs {
    std::vector<Volume> teacher_cls;
    std::vector<Volume> teacher_reg;
    std::vector<Volume> student_cls;
    std::vector<Volume> student_reg;
    WeightMask mask_cls;
    WeightMask mask_reg;
    LevelMaps background;
    std::vector<AttentionPair> teacher_cls_att;
    std::vector<AttentionPair> teacher_reg_att;
};

DistillInputs prepare_inputs(const SceneBundle& bundle, const DistillConfig& config);

LossReport evaluate_loss(const DistillInputs& inputs, const DistillConfig& config);

/// PGW masks (xi_cls, xi_reg), attentions and all four terms.
LossReport total_loss(const SceneBundle& bundle, const DistillConfig& config);

/// d(total)/d(student features), per level, for the cls and reg heads.
struct LossGradients {
    std::vector<Volume> student_cls;
    std::vector<Volume> student_reg;
};

LossGradients loss_gradients(const DistillInputs& inputs, const DistillConfig& config);
LossGradients loss_gradients(const SceneBundle& bundle, const DistillConfig& config);

/// Analytic vs. central-difference comparison over every student feature.
struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    /// Elements whose difference stencil straddles a kink of |.| (a feature
    /// or an attention gap changes sign between x-h and x+h).
    std::size_t skipped = 0;
};

/// Relative error is |a - n| / max(|a|, |n|, kGradCheckFloor).
inline constexpr double kGradCheckFloor = 1e-10;

GradCheckResult check_gradients(const DistillInputs& inputs, const DistillConfig& config, double step = 1e-3,
                                int workers = 1);
GradCheckResult check_gradients(const SceneBundle& bundle, const DistillConfig& config, double step = 1e-3,
                                int workers = 1);

/// Config document: any subset of xi_cls, xi_reg, k, alpha, beta, gamma,
/// delta, tau. A given alpha re-derives omitted beta (0.5 alpha) and
/// gamma (1.6 alpha). Unknown keys are rejected.
DistillConfig parse_config_json(std::string_view text);
DistillConfig read_config(const std::filesystem::path& path);

/// LossReport as JSON with full double precision.
std::string loss_report_json(const LossReport& report, const DistillConfig& config);

} // namespace pgd
