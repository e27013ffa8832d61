#include "pgd/distill_loss.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "loss_levels.hpp"

namespace pgd {

namespace detail {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

} // namespace

double fea_cls_level(const Volume& t, const Volume& s, const Grid& m, const Grid& n, const AttentionPair& ta,
                     double alpha, double beta) {
    require(t.same_shape(s), "fea_cls_loss: teacher/student shape mismatch");
    require(m.height() == t.height() && m.width() == t.width(), "fea_cls_loss: mask shape mismatch");
    require(n.same_shape(m), "fea_cls_loss: background shape mismatch");
    require(ta.channel.same_shape(t) && ta.spatial.same_shape(m), "fea_cls_loss: attention shape mismatch");
    double sum = 0.0;
    for (int k = 0; k < t.channels(); ++k) {
        for (int i = 0; i < t.height(); ++i) {
            for (int j = 0; j < t.width(); ++j) {
                const double w = (alpha * m.at(i, j) + beta * n.at(i, j)) * ta.spatial.at(i, j) * ta.channel.at(k, i, j);
                const double d = t.at(k, i, j) - s.at(k, i, j);
                sum += w * d * d;
            }
        }
    }
    return sum;
}

double fea_reg_level(const Volume& t, const Volume& s, const Grid& m, const Volume& ta_channel, double gamma) {
    require(t.same_shape(s), "fea_reg_loss: teacher/student shape mismatch");
    require(m.height() == t.height() && m.width() == t.width(), "fea_reg_loss: mask shape mismatch");
    require(ta_channel.same_shape(t), "fea_reg_loss: attention shape mismatch");
    double sum = 0.0;
    for (int k = 0; k < t.channels(); ++k) {
        for (int i = 0; i < t.height(); ++i) {
            for (int j = 0; j < t.width(); ++j) {
                if (m.at(i, j) == 0.0) continue;
                const double d = t.at(k, i, j) - s.at(k, i, j);
                sum += gamma * m.at(i, j) * ta_channel.at(k, i, j) * d * d;
            }
        }
    }
    return sum;
}

double att_cls_level(const AttentionPair& t, const AttentionPair& s, double delta) {
    require(t.spatial.same_shape(s.spatial) && t.channel.same_shape(s.channel), "att_cls_loss: attention shape mismatch");
    require(t.channel.height() == t.spatial.height() && t.channel.width() == t.spatial.width(),
            "att_cls_loss: spatial/channel grids differ");
    double p = 0.0;
    const auto tp = t.spatial.values();
    const auto sp = s.spatial.values();
    for (std::size_t x = 0; x < tp.size(); ++x) p += std::abs(tp[x] - sp[x]);
    double a = 0.0;
    const auto ta = t.channel.values();
    const auto sa = s.channel.values();
    for (std::size_t x = 0; x < ta.size(); ++x) a += std::abs(ta[x] - sa[x]);
    const double hw = static_cast<double>(t.spatial.size());
    const double chw = static_cast<double>(t.channel.size());
    return delta / hw * p + delta / chw * a;
}

double att_reg_level(const Volume& ta, const Volume& sa, const Grid& m, double delta) {
    require(ta.same_shape(sa), "att_reg_loss: attention shape mismatch");
    require(m.height() == ta.height() && m.width() == ta.width(), "att_reg_loss: mask shape mismatch");
    const std::size_t count = m.count_positive();
    if (count == 0) return 0.0;
    double sum = 0.0;
    for (int k = 0; k < ta.channels(); ++k)
        for (int i = 0; i < ta.height(); ++i)
            for (int j = 0; j < ta.width(); ++j)
                if (m.at(i, j) > 0.0) sum += std::abs(ta.at(k, i, j) - sa.at(k, i, j));
    return delta / (static_cast<double>(ta.channels()) * static_cast<double>(count)) * sum;
}

} // namespace detail

namespace {

void require_levels(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw std::invalid_argument(what);
}

LossTerm finish(std::vector<double> per_level) {
    LossTerm t;
    for (double v : per_level) t.value += v;
    t.per_level = std::move(per_level);
    return t;
}

std::vector<Volume> widen(const std::vector<FeatureTensor>& feats) {
    std::vector<Volume> out;
    out.reserve(feats.size());
    for (const auto& f : feats) out.push_back(Volume::from(f));
    return out;
}

std::vector<AttentionPair> attentions(const std::vector<Volume>& feats, double tau) {
    std::vector<AttentionPair> out;
    out.reserve(feats.size());
    for (const auto& f : feats) out.push_back(attention_pair(f, tau));
    return out;
}

double sign(double x) { return (x > 0.0) - (x < 0.0); }

} // namespace

LossTerm fea_cls_loss(std::span<const Volume> teacher, std::span<const Volume> student, const WeightMask& mask_cls,
                      const LevelMaps& background, std::span<const AttentionPair> teacher_att, double alpha,
                      double beta) {
    require_levels(teacher.size(), student.size(), "fea_cls_loss: level count mismatch");
    require_levels(teacher.size(), mask_cls.levels.size(), "fea_cls_loss: mask level count mismatch");
    require_levels(teacher.size(), background.size(), "fea_cls_loss: background level count mismatch");
    require_levels(teacher.size(), teacher_att.size(), "fea_cls_loss: attention level count mismatch");
    std::vector<double> per;
    for (std::size_t l = 0; l < teacher.size(); ++l)
        per.push_back(detail::fea_cls_level(teacher[l], student[l], mask_cls.levels[l], background[l], teacher_att[l],
                                            alpha, beta));
    return finish(std::move(per));
}

LossTerm fea_reg_loss(std::span<const Volume> teacher, std::span<const Volume> student, const WeightMask& mask_reg,
                      std::span<const AttentionPair> teacher_att, double gamma) {
    require_levels(teacher.size(), student.size(), "fea_reg_loss: level count mismatch");
    require_levels(teacher.size(), mask_reg.levels.size(), "fea_reg_loss: mask level count mismatch");
    require_levels(teacher.size(), teacher_att.size(), "fea_reg_loss: attention level count mismatch");
    std::vector<double> per;
    for (std::size_t l = 0; l < teacher.size(); ++l)
        per.push_back(detail::fea_reg_level(teacher[l], student[l], mask_reg.levels[l], teacher_att[l].channel, gamma));
    return finish(std::move(per));
}

LossTerm att_cls_loss(std::span<const AttentionPair> teacher, std::span<const AttentionPair> student, double delta) {
    require_levels(teacher.size(), student.size(), "att_cls_loss: level count mismatch");
    std::vector<double> per;
    for (std::size_t l = 0; l < teacher.size(); ++l) per.push_back(detail::att_cls_level(teacher[l], student[l], delta));
    return finish(std::move(per));
}

LossTerm att_reg_loss(std::span<const AttentionPair> teacher, std::span<const AttentionPair> student,
                      const WeightMask& mask_reg, double delta) {
    require_levels(teacher.size(), student.size(), "att_reg_loss: level count mismatch");
    require_levels(teacher.size(), mask_reg.levels.size(), "att_reg_loss: mask level count mismatch");
    std::vector<double> per;
    for (std::size_t l = 0; l < teacher.size(); ++l)
        per.push_back(detail::att_reg_level(teacher[l].channel, student[l].channel, mask_reg.levels[l], delta));
    return finish(std::move(per));
}

DistillInputs prepare_inputs(const SceneBundle& bundle, const DistillConfig& config) {
    config.validate();
    validate_bundle(bundle);
    DistillInputs in;
    in.teacher_cls = widen(bundle.teacher_cls_feats);
    in.teacher_reg = widen(bundle.teacher_reg_feats);
    in.student_cls = widen(bundle.student_cls_feats);
    in.student_reg = widen(bundle.student_reg_feats);
    in.mask_cls = pgw_mask(bundle, config.xi_cls, config.k);
    in.mask_reg = pgw_mask(bundle, config.xi_reg, config.k);
    in.background = background_mask(bundle);
    in.teacher_cls_att = attentions(in.teacher_cls, config.tau);
    in.teacher_reg_att = attentions(in.teacher_reg, config.tau);
    return in;
}

LossReport evaluate_loss(const DistillInputs& in, const DistillConfig& config) {
    const auto student_cls_att = attentions(in.student_cls, config.tau);
    const auto student_reg_att = attentions(in.student_reg, config.tau);
    LossReport r;
    r.fea_cls = fea_cls_loss(in.teacher_cls, in.student_cls, in.mask_cls, in.background, in.teacher_cls_att,
                             config.alpha, config.beta);
    r.fea_reg = fea_reg_loss(in.teacher_reg, in.student_reg, in.mask_reg, in.teacher_reg_att, config.gamma);
    r.att_cls = att_cls_loss(in.teacher_cls_att, student_cls_att, config.delta);
    r.att_reg = att_reg_loss(in.teacher_reg_att, student_reg_att, in.mask_reg, config.delta);
    r.total = r.fea_cls.value + r.fea_reg.value + r.att_cls.value + r.att_reg.value;
    r.cls_support = in.mask_cls.support_size();
    r.reg_support = in.mask_reg.support_size();
    for (const auto& g : in.background) r.background_cells += g.count_positive();
    return r;
}

LossReport total_loss(const SceneBundle& bundle, const DistillConfig& config) {
    return evaluate_loss(prepare_inputs(bundle, config), config);
}

namespace detail {

// Adds d/dS of delta/(HW) sum |P_t - P_s| + delta/(CHW) sum |A_t - A_s| (or the
// masked channel-only variant) into grad. The spatial part is skipped when
// spatial_weight is 0.
void attention_backward(const Volume& s, const AttentionPair& t, const AttentionPair& sa, double spatial_weight,
                        const Grid* channel_mask, double channel_weight, double tau, Volume& grad) {
    const int C = s.channels();
    const int H = s.height();
    const int W = s.width();
    if (spatial_weight != 0.0) {
        const double hw = static_cast<double>(H) * W;
        double gp = 0.0;
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j)
                gp += spatial_weight * sign(sa.spatial.at(i, j) - t.spatial.at(i, j)) * sa.spatial.at(i, j);
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) {
                const double g = spatial_weight * sign(sa.spatial.at(i, j) - t.spatial.at(i, j));
                const double ds = sa.spatial.at(i, j) * (g - gp / hw);
                for (int k = 0; k < C; ++k) grad.at(k, i, j) += ds * sign(s.at(k, i, j)) / tau;
            }
        }
    }
    if (channel_weight == 0.0) return;
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            if (channel_mask && !(channel_mask->at(i, j) > 0.0)) continue;
            double ga = 0.0;
            for (int k = 0; k < C; ++k)
                ga += channel_weight * sign(sa.channel.at(k, i, j) - t.channel.at(k, i, j)) * sa.channel.at(k, i, j);
            for (int k = 0; k < C; ++k) {
                const double g = channel_weight * sign(sa.channel.at(k, i, j) - t.channel.at(k, i, j));
                const double du = sa.channel.at(k, i, j) * (g - ga / C);
                grad.at(k, i, j) += du * sign(s.at(k, i, j)) / tau;
            }
        }
    }
}

Volume cls_level_gradient(const DistillInputs& in, std::size_t l, const DistillConfig& cfg) {
    const Volume& t = in.teacher_cls[l];
    const Volume& s = in.student_cls[l];
    const Grid& m = in.mask_cls.levels[l];
    const Grid& n = in.background[l];
    const AttentionPair& ta = in.teacher_cls_att[l];
    Volume g(s.channels(), s.height(), s.width());
    for (int k = 0; k < s.channels(); ++k) {
        for (int i = 0; i < s.height(); ++i) {
            for (int j = 0; j < s.width(); ++j) {
                const double w = (cfg.alpha * m.at(i, j) + cfg.beta * n.at(i, j)) * ta.spatial.at(i, j) * ta.channel.at(k, i, j);
                g.at(k, i, j) = -2.0 * w * (t.at(k, i, j) - s.at(k, i, j));
            }
        }
    }
    if (cfg.delta != 0.0) {
        const double hw = static_cast<double>(s.height()) * s.width();
        const auto sa = attention_pair(s, cfg.tau);
        attention_backward(s, ta, sa, cfg.delta / hw, nullptr, cfg.delta / (hw * s.channels()), cfg.tau, g);
    }
    return g;
}

Volume reg_level_gradient(const DistillInputs& in, std::size_t l, const DistillConfig& cfg) {
    const Volume& t = in.teacher_reg[l];
    const Volume& s = in.student_reg[l];
    const Grid& m = in.mask_reg.levels[l];
    const AttentionPair& ta = in.teacher_reg_att[l];
    Volume g(s.channels(), s.height(), s.width());
    for (int k = 0; k < s.channels(); ++k)
        for (int i = 0; i < s.height(); ++i)
            for (int j = 0; j < s.width(); ++j)
                if (m.at(i, j) != 0.0)
                    g.at(k, i, j) = -2.0 * cfg.gamma * m.at(i, j) * ta.channel.at(k, i, j) * (t.at(k, i, j) - s.at(k, i, j));
    const std::size_t count = m.count_positive();
    if (cfg.delta != 0.0 && count > 0) {
        AttentionPair sa{Grid{}, channel_attention(s, cfg.tau), cfg.tau};
        attention_backward(s, ta, sa, 0.0, &m, cfg.delta / (static_cast<double>(s.channels()) * count), cfg.tau, g);
    }
    return g;
}

} // namespace detail

LossGradients loss_gradients(const DistillInputs& in, const DistillConfig& config) {
    LossGradients out;
    for (std::size_t l = 0; l < in.student_cls.size(); ++l) out.student_cls.push_back(detail::cls_level_gradient(in, l, config));
    for (std::size_t l = 0; l < in.student_reg.size(); ++l) out.student_reg.push_back(detail::reg_level_gradient(in, l, config));
    return out;
}

LossGradients loss_gradients(const SceneBundle& bundle, const DistillConfig& config) {
    return loss_gradients(prepare_inputs(bundle, config), config);
}

DistillConfig parse_config_json(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
    if (!doc.is_object()) throw FormatError("config: top level must be an object");
    DistillConfig c;
    bool has_alpha = false;
    bool has_beta = false;
    bool has_gamma = false;
    for (const auto& [key, value] : doc.items()) {
        auto real = [&]() {
            if (!value.is_number()) throw FormatError("config: '" + key + "' must be a number");
            return value.get<double>();
        };
        if (key == "xi_cls") c.xi_cls = real();
        else if (key == "xi_reg") c.xi_reg = real();
        else if (key == "k") {
            if (!value.is_number_integer()) throw FormatError("config: 'k' must be an integer");
            c.k = value.get<int>();
        } else if (key == "alpha") c.alpha = real(), has_alpha = true;
        else if (key == "beta") c.beta = real(), has_beta = true;
        else if (key == "gamma") c.gamma = real(), has_gamma = true;
        else if (key == "delta") c.delta = real();
        else if (key == "tau") c.tau = real();
        else throw FormatError("config: unknown key '" + key + "'");
    }
    if (has_alpha && !has_beta) c.beta = 0.5 * c.alpha;
    if (has_alpha && !has_gamma) c.gamma = 1.6 * c.alpha;
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
    return c;
}

DistillConfig read_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path.string() + ": cannot open config");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_json(ss.str());
}

std::string loss_report_json(const LossReport& r, const DistillConfig& c) {
    nlohmann::ordered_json doc;
    doc["fea_cls"] = r.fea_cls.value;
    doc["fea_reg"] = r.fea_reg.value;
    doc["att_cls"] = r.att_cls.value;
    doc["att_reg"] = r.att_reg.value;
    doc["total"] = r.total;
    doc["per_level"] = {{"fea_cls", r.fea_cls.per_level},
                        {"fea_reg", r.fea_reg.per_level},
                        {"att_cls", r.att_cls.per_level},
                        {"att_reg", r.att_reg.per_level}};
    doc["support"] = {{"cls_mask", r.cls_support}, {"reg_mask", r.reg_support}, {"background", r.background_cells}};
    doc["config"] = {{"xi_cls", c.xi_cls}, {"xi_reg", c.xi_reg}, {"k", c.k},         {"alpha", c.alpha},
                     {"beta", c.beta},     {"gamma", c.gamma},   {"delta", c.delta}, {"tau", c.tau}};
    return doc.dump(2) + "\n";
}

} // namespace pgd
