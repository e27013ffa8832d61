#pragma once

// Per-level loss pieces shared by the loss terms and the gradient checker.

#include <cstddef>

#include "pgd/distill_loss.hpp"

namespace pgd::detail {

double fea_cls_level(const Volume& t, const Volume& s, const Grid& m, const Grid& n, const AttentionPair& ta,
                     double alpha, double beta);
double fea_reg_level(const Volume& t, const Volume& s, const Grid& m, const Volume& ta_channel, double gamma);
double att_cls_level(const AttentionPair& t, const AttentionPair& s, double delta);
double att_reg_level(const Volume& ta, const Volume& sa, const Grid& m, double delta);

Volume cls_level_gradient(const DistillInputs& in, std::size_t level, const DistillConfig& cfg);
Volume reg_level_gradient(const DistillInputs& in, std::size_t level, const DistillConfig& cfg);

} // namespace pgd::detail
