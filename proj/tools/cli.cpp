#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "oodseg/errors.hpp"
#include "oodseg/io.hpp"
#include "oodseg/pipeline.hpp"
#include "oodseg/synth.hpp"

namespace oodseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kGradTolerance = 1e-4;

struct Flags {
    std::string spec, in, out, params, gt, test;
    std::string alpha = "0.3";
    double delta = 0.1;
    double gamma = 0.1;
    double tau = 0.5;
    double lr = 1e-3;
    std::string strategy = "region-adaptive";
    std::string ramp = "centered";
    std::string divergence = "hinge";
    std::optional<std::uint64_t> seed;
    std::size_t epochs = 300;
    std::size_t batch = 16;
    std::optional<std::size_t> count;
    bool fusion = false;
};

std::string num(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_alpha(std::string_view s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ValidationError("bad --alpha value '" + std::string(s) + "'");
    }
    return v;
}

std::vector<double> parse_alpha_list(const std::string& s) {
    std::vector<double> out;
    std::string_view rest = s;
    while (true) {
        const auto comma = rest.find(',');
        out.push_back(parse_alpha(rest.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ParseError(ParseErrorKind::io, path.string(), "cannot open for writing");
    f << text;
    if (!f) throw ParseError(ParseErrorKind::io, path.string(), "write failed");
}

fs::path make_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ParseError(ParseErrorKind::io, dir, "cannot create directory: " + ec.message());
    return dir;
}

/// Sorted ids of `<id><ext>` files in dir.
std::vector<std::string> list_ids(const fs::path& dir, const std::string& ext) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw ParseError(ParseErrorKind::io, dir.string(), "not a directory");
    std::vector<std::string> ids;
    for (const fs::directory_entry& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ext) ids.push_back(e.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw ParseError(ParseErrorKind::io, dir.string(), "no " + ext + " files");
    return ids;
}

std::vector<LabeledScene> load_scenes(const fs::path& dir) {
    std::vector<LabeledScene> scenes;
    for (const std::string& id : list_ids(dir, ".scores")) {
        scenes.push_back(LabeledScene{io::read_scoremap(dir / (id + ".scores")), io::read_mask(dir / (id + ".gt")),
                                      io::read_boxes(dir / (id + ".boxes"))});
    }
    return scenes;
}

adt::TrainOptions train_options(const Flags& f) {
    adt::TrainOptions o;
    o.norm = NormConfig{parse_alpha(f.alpha), parse_strategy(f.strategy)};
    o.adt.delta = f.delta;
    o.adt.gamma = f.gamma;
    o.adt.ramp = adt::parse_ramp_mode(f.ramp);
    o.adt.divergence = adt::parse_divergence_mode(f.divergence);
    o.optim.learning_rate = f.lr;
    o.epochs = f.epochs;
    o.batch_size = f.batch;
    o.seed = f.seed.value_or(0);
    if (!(f.lr > 0.0)) throw ValidationError("--lr must be positive");
    return o;
}

int cmd_gen_synth(const Flags& f, std::ostream& out) {
    synth::SceneSpec spec = f.spec.empty() ? synth::SceneSpec{} : synth::read_spec(f.spec);
    if (f.seed) spec.seed = *f.seed;
    if (f.count) spec.count = *f.count;
    const fs::path dir = make_dir(f.out);
    const std::vector<synth::SynthSample> samples = synth::generate_dataset(spec, spec.count);
    synth::write_dataset(samples, dir);
    write_text(dir / "spec.txt", synth::format_spec(spec));
    out << "wrote " << samples.size() << " scenes to " << dir.string() << "\n";
    return 0;
}

int cmd_train(const Flags& f, std::ostream& out) {
    const adt::TrainOptions options = train_options(f);
    const std::vector<LabeledScene> scenes = load_scenes(f.in);
    const fs::path dir = make_dir(f.out);

    std::ostringstream log;
    log << "# scenes=" << scenes.size() << " alpha=" << num(options.norm.alpha)
        << " strategy=" << to_string(options.norm.strategy) << " delta=" << num(options.adt.delta)
        << " gamma=" << num(options.adt.gamma) << " ramp=" << adt::to_string(options.adt.ramp)
        << " divergence=" << adt::to_string(options.adt.divergence) << " lr=" << num(options.optim.learning_rate)
        << " epochs=" << options.epochs << " batch=" << options.batch_size << " seed=" << options.seed << "\n";

    const adt::TrainResult result = adt::train_adt(scenes, options);
    pipeline::save_adt_model(result.model, dir / "adt.params");
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
        log << "adt epoch " << e + 1 << " loss " << num(result.epoch_loss[e]) << "\n";
    }
    if (f.fusion) {
        const pipeline::FusionTrainResult fusion = pipeline::train_fusion(scenes, options);
        pipeline::save_fusion_params(fusion.params, dir / "fusion.params");
        for (std::size_t e = 0; e < fusion.epoch_loss.size(); ++e) {
            log << "fusion epoch " << e + 1 << " loss " << num(fusion.epoch_loss[e]) << "\n";
        }
    }
    write_text(dir / "train.log", log.str());
    out << "final adt loss " << (result.epoch_loss.empty() ? "n/a" : num(result.epoch_loss.back())) << "\n";
    return 0;
}

int cmd_refine(const Flags& f, std::ostream& out) {
    if (f.params.empty()) throw ValidationError("refine needs --params");
    pipeline::PipelineConfig config;
    const adt::TrainOptions options = train_options(f);
    config.norm = options.norm;
    config.adt = options.adt;
    const adt::AdtModel model = pipeline::load_adt_model(f.params);
    const fs::path in = f.in;
    const fs::path dir = make_dir(f.out);
    const std::vector<std::string> ids = list_ids(in, ".scores");
    for (const std::string& id : ids) {
        const ScoreMap scores = io::read_scoremap(in / (id + ".scores"));
        const BoxSet boxes = io::read_boxes(in / (id + ".boxes"));
        const pipeline::RefineResult r = pipeline::refine(scores, boxes, model, config);
        io::write_mask(r.mask, dir / (id + ".pred"));
        io::write_scoremap(r.probability.as_scoremap(), dir / (id + ".prob"));
        write_text(dir / (id + ".thresholds"),
                   "t_fg " + num(r.thresholds.t_fg) + "\nt_bg " + num(r.thresholds.t_bg) + "\n");
    }
    out << "refined " << ids.size() << " scenes into " << dir.string() << "\n";
    return 0;
}

int cmd_eval(const Flags& f, std::ostream& out) {
    if (f.gt.empty()) throw ValidationError("eval needs --gt");
    const fs::path pred_dir = f.in, gt_dir = f.gt;
    const std::vector<std::string> ids = list_ids(pred_dir, ".pred");
    const bool with_scores = fs::exists(pred_dir / (ids.front() + ".prob"));
    std::vector<BinaryMask> pred, gt;
    std::vector<ScoreMap> scores;
    for (const std::string& id : ids) {
        pred.push_back(io::read_mask(pred_dir / (id + ".pred")));
        gt.push_back(io::read_mask(gt_dir / (id + ".gt")));
        if (with_scores) scores.push_back(io::read_scoremap(pred_dir / (id + ".prob")));
    }
    const pipeline::EvalReport r = pipeline::evaluate(pred, gt, scores, f.tau);

    json j;
    std::ostringstream txt;
    auto field = [&](const std::string& name, const json& value) {
        txt << name << " " << (value.is_null() ? std::string("n/a")
                               : value.is_number_float() ? num(value.get<double>())
                                                         : value.dump())
            << "\n";
        j[name] = value;
    };
    field("images", r.images);
    field("pixel.ap", r.ap);
    field("pixel.auroc", r.pixel ? json(r.pixel->auroc) : json(nullptr));
    field("pixel.fpr95", r.pixel ? json(r.pixel->fpr95) : json(nullptr));
    field("component.tau", r.component.tau);
    field("component.tp", r.component.tp);
    field("component.fn", r.component.fn);
    field("component.fp", r.component.fp);
    field("component.mean_siou", r.component.mean_siou);
    field("component.mean_ppv", r.component.mean_ppv);
    field("component.f1", r.component.f1);
    field("component.f1_mean", r.component.f1_mean);
    field("component.f1_image_mean", r.f1_image_mean);

    const fs::path dir = make_dir(f.out);
    write_text(dir / "report.txt", txt.str());
    write_text(dir / "summary.json", j.dump(2) + "\n");
    out << txt.str();
    return 0;
}

int cmd_ablate(const Flags& f, std::ostream& out) {
    // alpha and strategy are swept below; only the remaining flags matter here
    Flags single = f;
    single.alpha = "0.3";
    const adt::TrainOptions options = train_options(single);
    const std::vector<double> alphas = parse_alpha_list(f.alpha);
    const std::vector<LabeledScene> train = load_scenes(f.in);
    const std::vector<LabeledScene> test = f.test.empty() ? train : load_scenes(f.test);
    const std::vector<pipeline::AblationRow> rows =
        pipeline::ablate_normalization(train, test, alphas, options, f.tau);

    std::ostringstream tsv;
    json j = json::array();
    tsv << "alpha\tstrategy\tap\tauroc\tfpr95\tf1\tt_fg\tt_bg\tin_range\n";
    for (const pipeline::AblationRow& r : rows) {
        tsv << num(r.alpha) << "\t" << to_string(r.strategy) << "\t" << num(r.pixel.ap) << "\t"
            << num(r.pixel.auroc) << "\t" << num(r.pixel.fpr95) << "\t" << num(r.component_f1) << "\t"
            << num(r.mean_t_fg) << "\t" << num(r.mean_t_bg) << "\t" << (r.in_range ? "yes" : "no") << "\n";
        j.push_back({{"alpha", r.alpha},
                     {"strategy", std::string(to_string(r.strategy))},
                     {"ap", r.pixel.ap},
                     {"auroc", r.pixel.auroc},
                     {"fpr95", r.pixel.fpr95},
                     {"f1", r.component_f1},
                     {"t_fg", r.mean_t_fg},
                     {"t_bg", r.mean_t_bg},
                     {"in_range", r.in_range}});
    }
    const fs::path dir = make_dir(f.out);
    write_text(dir / "ablation.tsv", tsv.str());
    write_text(dir / "ablation.json", j.dump(2) + "\n");
    out << tsv.str();
    return 0;
}

int cmd_gradcheck(const Flags& f, std::ostream& out, std::ostream& err) {
    const std::uint64_t base = f.seed.value_or(0);
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 0; s < 5; ++s) seeds.push_back(base + s);
    const std::vector<pipeline::GradCheckCase> cases = pipeline::gradcheck_suite(seeds);
    std::ostringstream txt;
    double worst = 0.0;
    for (const pipeline::GradCheckCase& c : cases) {
        txt << c.name << " seed " << c.seed << " max_rel_error " << num(c.max_error) << "\n";
        worst = std::max(worst, c.max_error);
    }
    txt << "max_rel_error " << num(worst) << "\n";
    if (!f.out.empty()) write_text(make_dir(f.out) / "gradcheck.txt", txt.str());
    out << txt.str();
    if (worst > kGradTolerance) {
        err << "oodseg: error: gradcheck: max relative error " << num(worst) << " exceeds " << num(kGradTolerance)
            << "\n";
        return 1;
    }
    return 0;
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Region-adaptive anomaly segmentation toolkit", "oodseg"};
    app.require_subcommand(1);
    Flags f;

    auto io_flags = [&](CLI::App* c, bool need_in) {
        auto* in = c->add_option("--in", f.in, "input directory");
        if (need_in) in->required();
        c->add_option("--out", f.out, "output directory")->required();
    };
    auto model_flags = [&](CLI::App* c) {
        c->add_option("--alpha", f.alpha, "normalization floor alpha");
        c->add_option("--delta", f.delta, "ramp width");
        c->add_option("--gamma", f.gamma, "divergence weight");
        c->add_option("--strategy", f.strategy, "normalization strategy");
        c->add_option("--ramp-mode", f.ramp, "centered | literal");
        c->add_option("--divergence-mode", f.divergence, "hinge | literal");
    };
    auto train_flags = [&](CLI::App* c) {
        c->add_option("--seed", f.seed, "random seed");
        c->add_option("--epochs", f.epochs, "training epochs");
        c->add_option("--lr", f.lr, "initial learning rate");
        c->add_option("--batch", f.batch, "batch size");
    };

    CLI::App* gen = app.add_subcommand("gen-synth", "generate a synthetic scene directory");
    gen->add_option("--spec", f.spec, "key=value scene spec file");
    gen->add_option("--out", f.out, "output directory")->required();
    gen->add_option("--seed", f.seed, "override the spec seed");
    gen->add_option("--count", f.count, "override the scene count");

    CLI::App* train = app.add_subcommand("train", "fit threshold predictors on a scene directory");
    io_flags(train, true);
    model_flags(train);
    train_flags(train);
    train->add_flag("--fusion", f.fusion, "also fit fusion layers");

    CLI::App* refine = app.add_subcommand("refine", "segment scenes with trained predictors");
    io_flags(refine, true);
    model_flags(refine);
    refine->add_option("--params", f.params, "adt.params file")->required();

    CLI::App* eval = app.add_subcommand("eval", "score predictions against ground truth");
    io_flags(eval, true);
    eval->add_option("--gt", f.gt, "ground-truth directory")->required();
    eval->add_option("--tau", f.tau, "component overlap threshold");

    CLI::App* ablate = app.add_subcommand("ablate-norm", "compare normalization strategies");
    io_flags(ablate, true);
    model_flags(ablate);
    train_flags(ablate);
    ablate->add_option("--test", f.test, "held-out scene directory (default: --in)");
    ablate->add_option("--tau", f.tau, "component overlap threshold");

    CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference check of every loss");
    grad->add_option("--seed", f.seed, "first of five seeds");
    grad->add_option("--out", f.out, "optional report directory");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "oodseg: error: usage: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_synth(f, out);
        if (train->parsed()) return cmd_train(f, out);
        if (refine->parsed()) return cmd_refine(f, out);
        if (eval->parsed()) return cmd_eval(f, out);
        if (ablate->parsed()) return cmd_ablate(f, out);
        if (grad->parsed()) return cmd_gradcheck(f, out, err);
    } catch (const Error& e) {
        err << "oodseg: error: " << e.kind() << ": " << one_line(e.what()) << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "oodseg: error: internal: " << one_line(e.what()) << "\n";
        return 1;
    }
    return 1;
}

}  // namespace oodseg::cli
