#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "loss_levels.hpp"
#include "pgd/distill_loss.hpp"

namespace pgd {

namespace {

int sgn(double x) { return (x > 0.0) - (x < 0.0); }

struct Probe {
    double loss = 0.0;
    AttentionPair att;
};

enum class Part { Cls, Reg };

Probe probe(const DistillInputs& in, Part part, std::size_t l, const Volume& s, const DistillConfig& cfg) {
    Probe p;
    if (part == Part::Cls) {
        p.att = attention_pair(s, cfg.tau);
        p.loss = detail::fea_cls_level(in.teacher_cls[l], s, in.mask_cls.levels[l], in.background[l],
                                       in.teacher_cls_att[l], cfg.alpha, cfg.beta) +
                 detail::att_cls_level(in.teacher_cls_att[l], p.att, cfg.delta);
    } else {
        p.att.channel = channel_attention(s, cfg.tau);
        p.loss = detail::fea_reg_level(in.teacher_reg[l], s, in.mask_reg.levels[l], in.teacher_reg_att[l].channel,
                                       cfg.gamma) +
                 detail::att_reg_level(in.teacher_reg_att[l].channel, p.att.channel, in.mask_reg.levels[l], cfg.delta);
    }
    return p;
}

// True when some |.| inside the loss changes branch between the two probes,
// which makes the central difference meaningless there.
bool straddles(const Probe& lo, const Probe& hi, const AttentionPair& teacher, Part part, const Grid& reg_mask, int i,
               int j) {
    if (part == Part::Cls) {
        const auto a = lo.att.spatial.values();
        const auto b = hi.att.spatial.values();
        const auto t = teacher.spatial.values();
        for (std::size_t x = 0; x < t.size(); ++x)
            if (sgn(a[x] - t[x]) != sgn(b[x] - t[x])) return true;
    } else if (!(reg_mask.at(i, j) > 0.0)) {
        return false;
    }
    for (int k = 0; k < teacher.channel.channels(); ++k) {
        const double t = teacher.channel.at(k, i, j);
        if (sgn(lo.att.channel.at(k, i, j) - t) != sgn(hi.att.channel.at(k, i, j) - t)) return true;
    }
    return false;
}

struct Outcome {
    double error = 0.0;
    bool skipped = false;
};

void check_level(const DistillInputs& in, Part part, std::size_t l, const DistillConfig& cfg, double h, int workers,
                 GradCheckResult& result) {
    const Volume& s = part == Part::Cls ? in.student_cls[l] : in.student_reg[l];
    const AttentionPair& teacher = part == Part::Cls ? in.teacher_cls_att[l] : in.teacher_reg_att[l];
    const Grid& reg_mask = in.mask_reg.levels[l];
    const Volume analytic =
        part == Part::Cls ? detail::cls_level_gradient(in, l, cfg) : detail::reg_level_gradient(in, l, cfg);

    std::vector<Outcome> out(s.size());
    parallel_for(s.size(), workers, [&](std::size_t idx) {
        const int plane = s.height() * s.width();
        const int k = static_cast<int>(idx) / plane;
        const int i = (static_cast<int>(idx) % plane) / s.width();
        const int j = static_cast<int>(idx) % s.width();
        Volume v = s;
        const double x = s.at(k, i, j);
        v.at(k, i, j) = x + h;
        const Probe hi = probe(in, part, l, v, cfg);
        v.at(k, i, j) = x - h;
        const Probe lo = probe(in, part, l, v, cfg);
        if (cfg.delta != 0.0 && (sgn(x + h) != sgn(x - h) || straddles(lo, hi, teacher, part, reg_mask, i, j))) {
            out[idx].skipped = true;
            return;
        }
        const double numeric = (hi.loss - lo.loss) / (2.0 * h);
        const double a = analytic.at(k, i, j);
        out[idx].error = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
    });
    for (const auto& o : out) {
        if (o.skipped) {
            ++result.skipped;
            continue;
        }
        ++result.checked;
        result.max_relative_error = std::max(result.max_relative_error, o.error);
    }
}

} // namespace

GradCheckResult check_gradients(const DistillInputs& in, const DistillConfig& config, double step, int workers) {
    if (!(step > 0.0)) throw std::invalid_argument("gradient check: step must be positive");
    GradCheckResult r;
    for (std::size_t l = 0; l < in.student_cls.size(); ++l) check_level(in, Part::Cls, l, config, step, workers, r);
    for (std::size_t l = 0; l < in.student_reg.size(); ++l) check_level(in, Part::Reg, l, config, step, workers, r);
    return r;
}

GradCheckResult check_gradients(const SceneBundle& bundle, const DistillConfig& config, double step, int workers) {
    return check_gradients(prepare_inputs(bundle, config), config, step, workers);
}

} // namespace pgd
