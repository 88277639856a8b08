#pragma once

/// \file cli.hpp
/// \brief The `hemlets` command line: encode, decode, eval, gradcheck and
/// train-demo. run_cli() returns the process exit code, so the tool can be
/// driven in-process.
///
/// Exit codes: 0 ok, 2 format, 3 validation (including bad flags),
/// 4 numeric, 5 I/O, 1 anything unexpected. Failures print one line
/// `error[<category>]: <message>` on the error stream.

#include "hemlets/codec.hpp"
#include "hemlets/config.hpp"
#include "hemlets/gradcheck.hpp"
#include "hemlets/metrics.hpp"
#include "hemlets/sample.hpp"
#include "hemlets/skeleton.hpp"
#include "hemlets/tensor.hpp"
#include "hemlets/trainer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace hemlets {

namespace cli_detail {

namespace fs = std::filesystem;

inline Skeleton load_skeleton_or_default(const std::string& path)
{
    if (path.empty())
        return canonical_skeleton();
    std::ifstream is(path);
    if (!is)
        throw IoError("cannot open skeleton '" + path + "'");
    return read_skeleton(is);
}

inline void ensure_dir(const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw IoError("cannot create output directory '" + dir + "'");
}

inline void require_file(const std::string& path, const char* what)
{
    if (!fs::is_regular_file(path))
        throw IoError(std::string("cannot open ") + what + " '" + path + "'");
}

inline std::ofstream open_out(const std::string& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot write '" + path + "'");
    return os;
}

/// Codec settings from an optional config file plus flag overrides.
inline CodecConfig codec_from(const std::string& config_path, std::optional<std::size_t> resolution,
                              double* depth_window = nullptr)
{
    CodecConfig c;
    double window = 2000.0;
    if (!config_path.empty()) {
        const KeyValueConfig kv = KeyValueConfig::load(config_path);
        const std::size_t res = kv.get<std::size_t>("resolution", c.height);
        c.height = kv.get<std::size_t>("height", res);
        c.width = kv.get<std::size_t>("width", res);
        c.sigma = kv.get<double>("sigma", c.sigma);
        c.epsilon_scale = kv.get<double>("epsilon_scale", c.epsilon_scale);
        c.truncation_radius = kv.get<double>("truncation_radius", c.truncation_radius);
        c.peak_threshold = kv.get<double>("peak_threshold", c.peak_threshold);
        c.suppression_tolerance = kv.get<double>("suppression_tolerance", c.suppression_tolerance);
        window = kv.get<double>("depth_window_mm", window);
        kv.reject_unused();
    }
    if (resolution)
        c.height = c.width = *resolution;
    c.validate();
    if (depth_window)
        *depth_window = window;
    return c;
}

/// Stacks per-sample tensors of one shape behind a leading sample axis.
inline Tensor stack(const std::vector<Tensor>& items)
{
    Tensor::Shape shape{items.size()};
    const Tensor::Shape& inner = items.front().shape();
    shape.insert(shape.end(), inner.begin(), inner.end());
    Tensor out(shape);
    std::size_t off = 0;
    for (const auto& t : items) {
        if (t.shape() != inner)
            throw ShapeMismatchError("per-sample tensors differ in shape");
        std::copy(t.values().begin(), t.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(off));
        off += t.size();
    }
    return out;
}

inline std::vector<AnnotatedSample> load_valid_samples(const std::string& path, const Skeleton& skeleton)
{
    require_file(path, "sample file");
    auto samples = load_samples(path, skeleton);
    for (const auto& s : samples)
        validate_sample(s, skeleton);
    return samples;
}

// ---------------------------------------------------------------- commands

struct EncodeArgs {
    std::string input, out, config, skeleton, variant = "hemlets";
    std::optional<std::size_t> resolution;
};

inline int encode(const EncodeArgs& a, std::ostream& out)
{
    const Skeleton sk = load_skeleton_or_default(a.skeleton);
    const HemletVariant variant = parse_variant(a.variant);
    double window = 2000.0;
    const CodecConfig codec = codec_from(a.config, a.resolution, &window);
    const CoordFrame frame({0.0, 0.0, 1.0, 1.0}, window);
    const auto samples = load_valid_samples(a.input, sk);
    if (samples.empty())
        throw ValidationError("sample file '" + a.input + "' holds no samples");
    ensure_dir(a.out);

    std::vector<Tensor> hem, heat, mask, coords, lambda;
    for (const auto& s : samples) {
        TrainingTarget t = encode_targets(s, sk, codec, variant, frame);
        hem.push_back(std::move(t.hemlets));
        heat.push_back(std::move(t.heatmaps2d));
        mask.push_back(std::move(t.mask));
        coords.push_back(std::move(t.coords3d));
        lambda.push_back(Tensor({1}, static_cast<double>(t.lambda_z)));
    }
    const fs::path dir(a.out);
    save_tensor((dir / "hemlets.bin").string(), stack(hem));
    save_tensor((dir / "heatmaps2d.bin").string(), stack(heat));
    save_tensor((dir / "mask.bin").string(), stack(mask));
    save_tensor((dir / "coords3d.bin").string(), stack(coords));
    Tensor lam({lambda.size()});
    for (std::size_t i = 0; i < lambda.size(); ++i)
        lam[i] = lambda[i][0];
    save_tensor((dir / "lambda.bin").string(), lam);
    out << "encoded " << samples.size() << " samples (" << variant_token(variant) << ", " << codec.height << "x"
        << codec.width << ") into " << a.out << '\n';
    return 0;
}

struct DecodeArgs {
    std::string input, out, config, skeleton, variant = "hemlets";
};

inline int decode(const DecodeArgs& a, std::ostream& out)
{
    const Skeleton sk = load_skeleton_or_default(a.skeleton);
    if (parse_variant(a.variant) != HemletVariant::triplet)
        throw ValidationError("only the 'hemlets' triplet variant can be decoded");
    require_file(a.input, "tensor file");
    Tensor t = load_tensor(a.input);
    if (t.rank() == 4)
        t = Tensor(Tensor::Shape{1, t.dim(0), t.dim(1), t.dim(2), t.dim(3)},
                   std::vector<double>(t.values().begin(), t.values().end()));
    if (t.rank() != 5 || t.dim(0) == 0)
        throw ShapeMismatchError("decode expects a (S, K, 3, h, w) or (K, 3, h, w) tensor");
    CodecConfig codec = codec_from(a.config, std::nullopt);
    codec.height = t.dim(3);
    codec.width = t.dim(4);
    codec.validate();

    std::vector<AnnotatedSample> decoded;
    for (std::size_t s = 0; s < t.dim(0); ++s) {
        const auto view = t.slice(s);
        const Tensor one(Tensor::Shape{t.dim(1), t.dim(2), t.dim(3), t.dim(4)},
                         std::vector<double>(view.begin(), view.end()));
        DecodedHemlets d = decode_hemlets(one, sk, codec);
        AnnotatedSample r;
        r.id = std::to_string(s);
        r.action = "decoded";
        r.pose2d = std::move(d.pose);
        r.pose3d = Pose3D(sk.num_joints());
        r.ordinal = std::move(d.ordinal);
        const bool any = std::any_of(r.ordinal.begin(), r.ordinal.end(), [](const auto& o) { return o.has_value(); });
        r.kind = any ? AnnotationKind::ordinal_only : AnnotationKind::two_d_only;
        if (!any)
            r.ordinal.clear();
        decoded.push_back(std::move(r));
    }
    if (a.out.empty()) {
        write_samples(out, decoded, sk);
    } else {
        save_samples(a.out, decoded, sk);
        out << "decoded " << decoded.size() << " samples into " << a.out << '\n';
    }
    return 0;
}

struct EvalArgs {
    std::string pred, gt, out, skeleton;
};

inline int eval(const EvalArgs& a, std::ostream& out)
{
    const Skeleton sk = load_skeleton_or_default(a.skeleton);
    const auto pred = load_valid_samples(a.pred, sk);
    const auto gt = load_valid_samples(a.gt, sk);
    if (pred.size() != gt.size())
        throw ValidationError("prediction and ground-truth files hold different sample counts");
    if (gt.empty())
        throw ValidationError("no samples to evaluate");
    MetricsTable table;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (pred[i].id != gt[i].id)
            throw ValidationError("sample ids differ at record " + std::to_string(i + 1) + ": '" + pred[i].id
                                  + "' vs '" + gt[i].id + "'");
        if (gt[i].kind != AnnotationKind::full3d || pred[i].kind != AnnotationKind::full3d)
            throw ValidationError("sample '" + gt[i].id + "' lacks a full 3D pose");
        table.add(gt[i].action, evaluate_pose(pred[i].pose3d, gt[i].pose3d, sk));
    }
    if (a.out.empty()) {
        table.write(out);
    } else {
        auto os = open_out(a.out);
        table.write(os);
        if (!os)
            throw IoError("cannot write '" + a.out + "'");
    }
    return 0;
}

struct GradcheckArgs {
    std::uint64_t seed = 1;
    double tolerance = 0.0;
    std::string out;
};

inline int gradcheck(const GradcheckArgs& a, std::ostream& out)
{
    if (a.tolerance < 0.0)
        throw ValidationError("tolerance must be non-negative");
    const auto rows = run_gradcheck(a.seed, a.tolerance);
    write_gradcheck(out, rows);
    if (!a.out.empty()) {
        auto os = open_out(a.out);
        write_gradcheck(os, rows);
    }
    for (const auto& r : rows)
        if (!r.passed())
            throw NumericError("gradient check '" + r.name + "' failed");
    return 0;
}

struct TrainArgs {
    std::string config, out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> resolution, steps;
};

inline int train_demo(const TrainArgs& a, std::ostream& out, std::ostream& log)
{
    KeyValueConfig kv = a.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(a.config);
    if (a.seed)
        kv.set("seed", std::to_string(*a.seed));
    if (a.resolution) {
        kv.set("heatmap_size", std::to_string(*a.resolution));
        kv.set("volume_depth", std::to_string(*a.resolution));
    }
    if (a.steps)
        kv.set("steps", std::to_string(*a.steps));
    const TrainerConfig config = TrainerConfig::from(kv);
    ensure_dir(a.out);
    const DemoReport report = train_demo(config, canonical_skeleton(), &log);
    const fs::path dir(a.out);
    {
        auto os = open_out((dir / "report.txt").string());
        write_demo_report(os, report, config);
    }
    {
        auto os = open_out((dir / "curves.csv").string());
        write_demo_curves_csv(os, report);
    }
    write_demo_report(out, report, config);
    return 0;
}

} // namespace cli_detail

/// Parses `args` (without the program name) and runs one subcommand.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    using namespace cli_detail;
    CLI::App app{"HEMlets heatmap-triplet encoding, decoding, evaluation and training demo", "hemlets"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    EncodeArgs enc;
    auto* c_enc = app.add_subcommand("encode", "Encode an annotated sample file into supervision tensors");
    c_enc->add_option("input", enc.input, "Annotated sample file")->required();
    c_enc->add_option("--out", enc.out, "Output directory for the .bin tensors")->required();
    c_enc->add_option("--config", enc.config, "Codec config file (key = value)");
    c_enc->add_option("--resolution", enc.resolution, "Heatmap side in pixels [default: 64]");
    c_enc->add_option("--variant", enc.variant, "Encoding: hemlets, 2s or 5s")->capture_default_str();
    c_enc->add_option("--skeleton", enc.skeleton, "Skeleton file [default: built-in 18-joint skeleton]");

    DecodeArgs dec;
    auto* c_dec = app.add_subcommand("decode", "Decode a HEMlets tensor file into 2D joints and ordinal labels");
    c_dec->add_option("input", dec.input, "Tensor file, (S, K, 3, h, w) or (K, 3, h, w)")->required();
    c_dec->add_option("--out", dec.out, "Output sample file [default: stdout]");
    c_dec->add_option("--config", dec.config, "Codec config file (key = value)");
    c_dec->add_option("--variant", dec.variant, "Must be hemlets")->capture_default_str();
    c_dec->add_option("--skeleton", dec.skeleton, "Skeleton file [default: built-in 18-joint skeleton]");

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Evaluate predicted 3D poses against ground truth");
    c_eval->add_option("pred", ev.pred, "Predicted sample file (full3d records)")->required();
    c_eval->add_option("gt", ev.gt, "Ground-truth sample file (full3d records)")->required();
    c_eval->add_option("--out", ev.out, "Metrics report path [default: stdout]");
    c_eval->add_option("--skeleton", ev.skeleton, "Skeleton file [default: built-in 18-joint skeleton]");

    GradcheckArgs gc;
    auto* c_gc = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
    c_gc->add_option("--seed", gc.seed, "Random seed")->capture_default_str();
    c_gc->add_option("--tolerance", gc.tolerance,
                     "Relative-error tolerance for every row [default: 1e-4 operators, 1e-3 network]");
    c_gc->add_option("--out", gc.out, "Also write the table to this path");

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train-demo", "Run the synthetic supervision ablation and encoding comparison");
    c_tr->add_option("--config", tr.config, "Trainer config file (key = value)");
    c_tr->add_option("--seed", tr.seed, "Override the config seed [default: 7]");
    c_tr->add_option("--resolution", tr.resolution, "Heatmap and volume side [default: 16]");
    c_tr->add_option("--steps", tr.steps, "Override the step budget [default: 1500]");
    c_tr->add_option("--out", tr.out, "Output directory for report.txt and curves.csv")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error[validation]: " << e.what() << '\n';
        return static_cast<int>(ErrorCategory::validation);
    }

    try {
        if (*c_enc)
            return encode(enc, out);
        if (*c_dec)
            return decode(dec, out);
        if (*c_eval)
            return eval(ev, out);
        if (*c_gc)
            return gradcheck(gc, out);
        if (*c_tr)
            return train_demo(tr, out, err);
    } catch (const Error& e) {
        err << "error[" << category_name(e.category()) << "]: " << e.what() << '\n';
        return static_cast<int>(e.category());
    } catch (const std::exception& e) {
        err << "error[internal]: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

} // namespace hemlets
