#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pgd/det_eval.hpp"
#include "pgd/distill_loss.hpp"
#include "pgd/pgm.hpp"
#include "pgd/pgw.hpp"
#include "pgd/quality.hpp"
#include "pgd/synth.hpp"
#include "pgd/tensor_io.hpp"

namespace pgd::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
    int threads = 1;
    std::string bundle;
    std::string out;
    std::string config;
    std::string spec;
    std::string strategy = "PGW";
    std::string head = "cls";
    double xi = -1.0; // unset: per-head default from the config
    int k = DistillConfig{}.k;
    std::vector<double> ratios{0, 1, 2, 5, 10, 20, 50, 100};
    double nms = 0.6;
    double step = 1e-3;
};

// Thrown for option combinations CLI11 cannot express (wrong output suffix).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError(path.string() + ": cannot open for writing");
    f << text;
    if (!f) throw FormatError(path.string() + ": write failed");
}

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

DistillConfig load_config(const Options& o) { return o.config.empty() ? DistillConfig{} : read_config(o.config); }

int cmd_quality(const Options& o, std::ostream& out) {
    const fs::path dest(o.out);
    const auto ext = dest.extension();
    if (ext != ".pgm" && ext != ".bin") throw UsageError("--out must end in .pgm or .bin");
    const SceneBundle b = read_bundle(o.bundle);
    const double xi = o.xi < 0.0 ? DistillConfig{}.xi_cls : o.xi;
    const Grid heat = collapse_to_finest(quality_fields(b, xi, o.threads), b.levels);
    if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
    if (ext == ".pgm") write_pgm(dest, heat, max_scale(heat));
    else write_grid(dest, heat);
    out << "wrote " << dest.string() << " (" << heat.height() << "x" << heat.width() << ")\n";
    return kOk;
}

int cmd_mask(const Options& o, std::ostream& out) {
    const SceneBundle b = read_bundle(o.bundle);
    DistillConfig cfg;
    cfg.k = o.k;
    const Head head = o.head == "reg" ? Head::Reg : Head::Cls;
    if (o.xi >= 0.0) (head == Head::Cls ? cfg.xi_cls : cfg.xi_reg) = o.xi;
    cfg.validate();
    const WeightMask m = strategy_mask(b, parse_strategy(o.strategy), cfg, head);
    const fs::path dir(o.out);
    fs::create_directories(dir);
    for (std::size_t l = 0; l < m.levels.size(); ++l) {
        const std::string stem = "level" + std::to_string(l) + "_mask";
        write_grid(dir / (stem + ".bin"), m.levels[l]);
        write_pgm(dir / (stem + ".pgm"), m.levels[l], max_scale(m.levels[l]));
    }
    out << strategy_name(parse_strategy(o.strategy)) << " " << o.head << " mask: support " << m.support_size()
        << " cells over " << m.levels.size() << " levels\n";
    return kOk;
}

int cmd_loss(const Options& o, std::ostream& out) {
    const DistillConfig cfg = load_config(o);
    const SceneBundle b = read_bundle(o.bundle);
    const LossReport r = total_loss(b, cfg);
    const std::string json = loss_report_json(r, cfg);
    if (o.out.empty()) out << json;
    else {
        write_text(o.out, json);
        out << "total " << fixed6(r.total) << "\n";
    }
    return kOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
    const DistillConfig cfg = load_config(o);
    const SceneBundle b = read_bundle(o.bundle);
    const GradCheckResult r = check_gradients(b, cfg, o.step, o.threads);
    char buf[160];
    std::snprintf(buf, sizeof buf, "max_relative_error %.6e\nchecked %zu\nskipped %zu\n", r.max_relative_error,
                  r.checked, r.skipped);
    out << buf;
    return r.max_relative_error < 1e-3 ? kOk : kDataError;
}

int cmd_maskout(const Options& o, std::ostream& out) {
    const SceneBundle b = read_bundle(o.bundle);
    const double xi = o.xi < 0.0 ? DistillConfig{}.xi_cls : o.xi;
    const MaskoutCurve curve = maskout_experiment(b, o.ratios, xi, o.nms, o.threads);
    const std::string csv = maskout_csv(curve);
    if (o.out.empty()) out << csv;
    else write_text(o.out, csv);
    return kOk;
}

int cmd_compare(const Options& o, std::ostream& out) {
    DistillConfig cfg = load_config(o);
    cfg.k = o.k;
    cfg.validate();
    const SceneBundle b = read_bundle(o.bundle);
    const WeightMask pgw = strategy_mask(b, Strategy::PGW, cfg);
    std::string csv = "strategy,support_size,mask_entropy,pgw_overlap_percent\n";
    for (Strategy s : kAllStrategies) {
        const WeightMask m = s == Strategy::PGW ? pgw : strategy_mask(b, s, cfg);
        csv += std::string(strategy_name(s)) + "," + std::to_string(m.support_size()) + "," + fixed6(mask_entropy(m)) +
               "," + fixed6(100.0 * support_jaccard(m, pgw)) + "\n";
    }
    if (o.out.empty()) out << csv;
    else write_text(o.out, csv);
    return kOk;
}

int cmd_synth(const Options& o, std::ostream& out) {
    const SceneBundle b = generate_bundle(read_synth_spec(o.spec));
    write_bundle(o.out, b);
    out << "wrote " << b.gt.size() << " objects, " << b.levels.size() << " levels to " << o.out << "\n";
    return kOk;
}

void print_errors(std::ostream& err, const std::string& head, const std::vector<std::string>& items) {
    err << "error: " << head << "\n";
    for (const auto& v : items) err << "  - " << v << "\n";
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Prediction-guided distillation toolkit: quality maps, weighting masks, losses and evaluation",
                 "pgd"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--threads", o.threads, "Worker threads; output does not depend on it")
        ->check(CLI::Range(1, 256))
        ->capture_default_str();

    auto bundle_opt = [&](CLI::App* sub) {
        sub->add_option("--bundle", o.bundle, "Scene bundle directory (contains scene.json)")->required();
    };
    auto strategy_check = CLI::Validator(
        [](std::string& s) -> std::string {
            try {
                parse_strategy(s);
                return {};
            } catch (const std::invalid_argument&) {
                return "unknown strategy '" + s + "' (Box, BoxGauss, Centre, Quality, TopkEq, KDE, PGW)";
            }
        },
        "STRATEGY");

    auto* quality = app.add_subcommand("quality", "Cross-level quality heatmap on the finest grid");
    bundle_opt(quality);
    quality->add_option("--xi", o.xi, "Quality exponent in [0, 1] (default 0.8)")->check(CLI::Range(0.0, 1.0));
    quality->add_option("--out", o.out, "Output path, .pgm (8-bit, max-scaled) or .bin (TensorFile)")->required();

    auto* mask = app.add_subcommand("mask", "Per-level weighting mask as TensorFiles and PGMs");
    bundle_opt(mask);
    mask->add_option("--strategy", o.strategy, "Box, BoxGauss, Centre, Quality, TopkEq, KDE or PGW")
        ->check(strategy_check)
        ->capture_default_str();
    mask->add_option("--head", o.head, "cls or reg")->check(CLI::IsMember({"cls", "reg"}))->capture_default_str();
    mask->add_option("--k", o.k, "Top-k cells per object")->check(CLI::PositiveNumber)->capture_default_str();
    mask->add_option("--xi", o.xi, "Quality exponent (default 0.8 for cls, 0.6 for reg)")->check(CLI::Range(0.0, 1.0));
    mask->add_option("--out", o.out, "Output directory")->required();

    auto* loss = app.add_subcommand("loss", "Distillation loss report as JSON");
    bundle_opt(loss);
    loss->add_option("--config", o.config, "Loss config JSON (defaults when omitted)")->check(CLI::ExistingFile);
    loss->add_option("--out", o.out, "Output JSON path (stdout when omitted)");

    auto* gradcheck = app.add_subcommand("gradcheck", "Analytic gradients vs. central differences; fails at >= 1e-3");
    bundle_opt(gradcheck);
    gradcheck->add_option("--config", o.config, "Loss config JSON (defaults when omitted)")->check(CLI::ExistingFile);
    gradcheck->add_option("--step", o.step, "Finite-difference step")->check(CLI::PositiveNumber)->capture_default_str();

    auto* maskout = app.add_subcommand("maskout", "AP after masking the top-X% quality positions");
    bundle_opt(maskout);
    maskout->add_option("--ratios", o.ratios, "Comma-separated percentages, starting at 0, increasing")
        ->delimiter(',')
        ->capture_default_str();
    maskout->add_option("--xi", o.xi, "Quality exponent for ranking (default 0.8)")->check(CLI::Range(0.0, 1.0));
    maskout->add_option("--nms", o.nms, "NMS IoU threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    maskout->add_option("--out", o.out, "Output CSV path (stdout when omitted)");

    auto* compare = app.add_subcommand("compare", "Support size, entropy and PGW overlap of every strategy");
    bundle_opt(compare);
    compare->add_option("--k", o.k, "Top-k cells per object")->check(CLI::PositiveNumber)->capture_default_str();
    compare->add_option("--config", o.config, "Loss config JSON for xi values")->check(CLI::ExistingFile);
    compare->add_option("--out", o.out, "Output CSV path (stdout when omitted)");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic scene bundle");
    synth->add_option("--spec", o.spec, "Synth spec JSON")->required()->check(CLI::ExistingFile);
    synth->add_option("--out", o.out, "Output bundle directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        if (code == 0) return kOk;
        err << "\n" << app.help();
        return kUsageError;
    }

    try {
        if (quality->parsed()) return cmd_quality(o, out);
        if (mask->parsed()) return cmd_mask(o, out);
        if (loss->parsed()) return cmd_loss(o, out);
        if (gradcheck->parsed()) return cmd_gradcheck(o, out);
        if (maskout->parsed()) return cmd_maskout(o, out);
        if (compare->parsed()) return cmd_compare(o, out);
        if (synth->parsed()) return cmd_synth(o, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::invalid_argument& e) {
        // Flag values the library rejects (e.g. a ratio list not starting at 0).
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const ValidationError& e) {
        print_errors(err, "invalid input", e.violations());
        return kDataError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kDataError;
    }
    return kUsageError;
}

} // namespace pgd::cli
