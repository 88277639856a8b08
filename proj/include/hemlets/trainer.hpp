#pragma once

/// \file trainer.hpp
/// \brief Optimisation loop, held-out evaluation and the supervision ablation.
///
/// Batch losses are the mean over samples of each sample's summed L_tot.

#include "hemlets/adam.hpp"
#include "hemlets/augment.hpp"
#include "hemlets/codec.hpp"
#include "hemlets/config.hpp"
#include "hemlets/losses.hpp"
#include "hemlets/metrics.hpp"
#include "hemlets/model.hpp"
#include "hemlets/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace hemlets {

/// Intermediate supervision used alongside L_3d.
enum class Supervision { baseline, with_2d, with_hemlets, full };

inline const char* supervision_name(Supervision s) noexcept
{
    switch (s) {
    case Supervision::baseline: return "Baseline";
    case Supervision::with_2d: return "w/2D";
    case Supervision::with_hemlets: return "w/HEMlets";
    case Supervision::full: return "Full";
    }
    return "?";
}

inline const char* supervision_terms(Supervision s) noexcept
{
    switch (s) {
    case Supervision::baseline: return "L3D";
    case Supervision::with_2d: return "L3D+L2D";
    case Supervision::with_hemlets: return "L3D+LHEM";
    case Supervision::full: return "L3D+LHEM+L2D";
    }
    return "?";
}

inline Supervision parse_supervision(const std::string& s)
{
    if (s == "baseline")
        return Supervision::baseline;
    if (s == "2d")
        return Supervision::with_2d;
    if (s == "hemlets")
        return Supervision::with_hemlets;
    if (s == "full")
        return Supervision::full;
    throw ValidationError("unknown supervision '" + s + "' (expected baseline, 2d, hemlets or full)");
}

inline LossWeights loss_weights(Supervision s, double alpha)
{
    return {alpha, s == Supervision::with_hemlets || s == Supervision::full,
            s == Supervision::with_2d || s == Supervision::full};
}

struct TrainerConfig {
    std::uint64_t seed = 7;
    std::size_t train_count = 1024;
    std::size_t test_count = 256;
    std::size_t steps = 1500;
    std::size_t batch_size = 64;
    std::size_t eval_every = 100;
    double learning_rate = 1e-3;
    double final_lr_fraction = 1.0; ///< cosine decay to this fraction of the rate; 1 keeps it constant
    double alpha = 0.05;
    double sigma = 1.0;
    bool augment = false;
    ModelConfig model{};
    SynthConfig synth{};
    std::vector<Supervision> ablation{Supervision::baseline, Supervision::with_2d, Supervision::with_hemlets,
                                      Supervision::full};
    std::vector<HemletVariant> encodings{HemletVariant::triplet, HemletVariant::two_state,
                                         HemletVariant::five_state};
    std::size_t encoding_steps = 0; ///< 0: same as steps

    CodecConfig codec() const
    {
        CodecConfig c;
        c.height = c.width = model.heatmap_size;
        c.sigma = sigma;
        return c;
    }

    CoordFrame frame() const
    {
        return CoordFrame({-0.5 * synth.crop_mm, -0.5 * synth.crop_mm, synth.crop_mm, synth.crop_mm}, 2000.0);
    }

    void validate() const
    {
        model.validate();
        codec().validate();
        if (train_count == 0 || test_count == 0 || batch_size == 0)
            throw ValidationError("trainer: counts and batch size must be positive");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw ValidationError("trainer: learning rate must be non-negative");
        if (!(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0))
            throw ValidationError("trainer: final_lr_fraction must lie in [0,1]");
        if (!(alpha >= 0.0))
            throw ValidationError("trainer: alpha must be non-negative");
    }

    /// Reads keys from a config file; unknown keys are rejected.
    static TrainerConfig from(const KeyValueConfig& kv)
    {
        TrainerConfig c;
        c.seed = kv.get<std::uint64_t>("seed", c.seed);
        c.train_count = kv.get<std::size_t>("train_count", c.train_count);
        c.test_count = kv.get<std::size_t>("test_count", c.test_count);
        c.steps = kv.get<std::size_t>("steps", c.steps);
        c.batch_size = kv.get<std::size_t>("batch_size", c.batch_size);
        c.eval_every = kv.get<std::size_t>("eval_every", c.eval_every);
        c.learning_rate = kv.get<double>("learning_rate", c.learning_rate);
        c.final_lr_fraction = kv.get<double>("final_lr_fraction", c.final_lr_fraction);
        c.alpha = kv.get<double>("alpha", c.alpha);
        c.sigma = kv.get<double>("sigma", c.sigma);
        c.augment = kv.get<bool>("augment", c.augment);
        c.model.heatmap_size = kv.get<std::size_t>("heatmap_size", c.model.heatmap_size);
        c.model.volume_depth = kv.get<std::size_t>("volume_depth", c.model.volume_depth);
        c.model.hidden = kv.get<std::size_t>("hidden", c.model.hidden);
        c.model.latent = kv.get<std::size_t>("latent", c.model.latent);
        c.model.hidden2 = kv.get<std::size_t>("hidden2", c.model.hidden2);
        c.model.rank = kv.get<std::size_t>("rank", c.model.rank);
        c.synth.full3d_fraction = kv.get<double>("full3d_fraction", c.synth.full3d_fraction);
        c.synth.ordinal_fraction = kv.get<double>("ordinal_fraction", c.synth.ordinal_fraction);
        c.synth.keypoint_noise = kv.get<double>("keypoint_noise", c.synth.keypoint_noise);
        c.synth.occlusion_rate = kv.get<double>("occlusion_rate", c.synth.occlusion_rate);
        c.synth.depth_cue_noise = kv.get<double>("depth_cue_noise", c.synth.depth_cue_noise);
        c.encoding_steps = kv.get<std::size_t>("encoding_steps", c.encoding_steps);
        std::vector<std::string> names;
        for (auto s : c.ablation)
            names.push_back(s == Supervision::baseline ? "baseline"
                                : s == Supervision::with_2d ? "2d"
                                : s == Supervision::with_hemlets ? "hemlets"
                                                                  : "full");
        c.ablation.clear();
        for (const auto& n : kv.get_list("variants", names))
            c.ablation.push_back(parse_supervision(n));
        std::vector<std::string> enc;
        for (auto e : c.encodings)
            enc.push_back(variant_token(e));
        c.encodings.clear();
        for (const auto& n : kv.get_list("encodings", enc))
            if (n != "none")
                c.encodings.push_back(parse_variant(n));
        kv.reject_unused();
        c.validate();
        return c;
    }
};

// ------------------------------------------------------------------ batches

/// A sample after optional augmentation, ready for the network.
struct PreparedSample {
    AnnotatedSample sample;
    std::vector<double> descriptor;
};

/// Mirrors, rotates and scales a descriptor exactly like the sample.
inline std::vector<double> augment_descriptor(const std::vector<double>& d, const Skeleton& skeleton,
                                              const AugmentParams& params)
{
    AnnotatedSample tmp;
    const std::size_t n = skeleton.num_joints();
    tmp.pose2d = Pose2D(n);
    constexpr std::size_t w = descriptor_width;
    if (d.size() != w * n)
        throw ShapeMismatchError("descriptor does not match the skeleton");
    for (std::size_t j = 0; j < n; ++j)
        tmp.pose2d.set(j, {d[w * j], d[w * j + 1]});
    const AnnotatedSample moved = apply_augmentation(tmp, skeleton, params);
    std::vector<double> out(d.size());
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = params.flip ? skeleton.flip_joint(j) : j;
        out[w * j] = moved.pose2d.coords(static_cast<Eigen::Index>(j), 0);
        out[w * j + 1] = moved.pose2d.coords(static_cast<Eigen::Index>(j), 1);
        out[w * j + 2] = d[w * src + 2];
        out[w * j + 3] = d[w * src + 3];
    }
    return out;
}

struct TrainBatch {
    Eigen::MatrixXd input;
    std::vector<TrainingTarget> targets;
};

inline TrainBatch make_batch(const std::vector<PreparedSample>& samples, const Skeleton& skeleton,
                             const CodecConfig& codec, HemletVariant variant, const CoordFrame& frame)
{
    TrainBatch batch;
    std::vector<const std::vector<double>*> desc;
    for (const auto& s : samples) {
        desc.push_back(&s.descriptor);
        batch.targets.push_back(encode_targets(s.sample, skeleton, codec, variant, frame));
    }
    batch.input = model_input(desc);
    return batch;
}

/// Batch-mean losses and the upstream gradients of the batch-mean L_tot.
struct BatchObjective {
    LossReport report; ///< components are batch means; gradient tensors unused
    HeadGradients heads;
};

inline BatchObjective batch_objective(const ToyModel& model, const ForwardPass& f, const TrainBatch& batch,
                                      const LossWeights& weights)
{
    weights.validate();
    const ModelConfig& c = model.config();
    const Eigen::Index bsz = f.batch();
    if (static_cast<std::size_t>(bsz) != batch.targets.size())
        throw ShapeMismatchError("batch size differs from target count");
    const double inv_b = 1.0 / static_cast<double>(bsz);
    const double w_hem = weights.use_hemlets ? weights.alpha : 0.0;
    const double w_heat = weights.use_heatmaps ? weights.alpha : 0.0;

    BatchObjective out;
    out.heads.hem.resize(f.hem.rows(), bsz);
    out.heads.heat.resize(f.heat.rows(), bsz);
    out.heads.coords.resize(f.coords.rows(), bsz);
    const std::size_t hw = c.map_pixels();
    for (Eigen::Index b = 0; b < bsz; ++b) {
        const TrainingTarget& t = batch.targets[static_cast<std::size_t>(b)];
        if (t.hemlets.size() != static_cast<std::size_t>(f.hem.rows())
            || t.heatmaps2d.size() != static_cast<std::size_t>(f.heat.rows()))
            throw ShapeMismatchError("targets do not match the model resolution");
        auto col = [&](Eigen::MatrixXd& m) { return std::span<double>(m.col(b).data(), static_cast<std::size_t>(m.rows())); };
        auto ccol = [&](const Eigen::MatrixXd& m) {
            return std::span<const double>(m.col(b).data(), static_cast<std::size_t>(m.rows()));
        };
        const double hem = masked_squared_error(ccol(f.hem), t.hemlets.values(), t.mask.values(), hw, col(out.heads.hem));
        const double heat = squared_error(ccol(f.heat), t.heatmaps2d.values(), col(out.heads.heat));
        const double j3d = joint_l1(ccol(f.coords), t.coords3d.values(), t.lambda_z, col(out.heads.coords));
        out.report.hem += hem * inv_b;
        out.report.heat2d += heat * inv_b;
        out.report.joint3d += j3d * inv_b;
    }
    out.heads.hem *= w_hem * inv_b;
    out.heads.heat *= w_heat * inv_b;
    out.heads.coords *= inv_b;
    out.report.total = w_hem * out.report.hem + w_heat * out.report.heat2d + out.report.joint3d;
    if (!std::isfinite(out.report.total))
        throw NumericError("loss diverged (non-finite value)");
    return out;
}

/// Gradient of the batch-mean L_tot with respect to all parameters.
inline std::vector<double> parameter_gradient(const ToyModel& model, const TrainBatch& batch,
                                              const LossWeights& weights, LossReport* report = nullptr)
{
    const ForwardPass f = forward(model, batch.input);
    BatchObjective obj = batch_objective(model, f, batch, weights);
    if (report)
        *report = obj.report;
    return backward(model, f, obj.heads);
}

/// One Adam update; returns the losses evaluated before the update.
inline LossReport train_step(ToyModel& model, AdamState& adam, const TrainBatch& batch, const LossWeights& weights)
{
    LossReport report;
    const std::vector<double> grad = parameter_gradient(model, batch, weights, &report);
    adam.update(model.parameters(), grad);
    return report;
}

// --------------------------------------------------------------- evaluation

/// Root-relative metric pose from unit-cube joint predictions.
inline Pose3D coords_to_pose(const Eigen::Ref<const Eigen::VectorXd>& coords, const CoordFrame& frame)
{
    const std::size_t n = static_cast<std::size_t>(coords.size() / 3);
    Pose3D pose(n);
    for (std::size_t j = 0; j < n; ++j)
        pose.set(j, frame.to_metric(coords.segment<3>(static_cast<Eigen::Index>(3 * j))));
    return pose;
}

struct HeldOutResult {
    PoseMetrics metrics;
    double loss_total = 0.0;
    double loss_3d = 0.0;
};

inline HeldOutResult evaluate_held_out(const ToyModel& model, const std::vector<SynthSample>& test,
                                       const Skeleton& skeleton, const TrainerConfig& config, HemletVariant variant,
                                       const LossWeights& weights)
{
    HeldOutResult r;
    MetricsTable table;
    const std::size_t chunk = 128;
    for (std::size_t start = 0; start < test.size(); start += chunk) {
        std::vector<PreparedSample> prep;
        for (std::size_t i = start; i < std::min(test.size(), start + chunk); ++i)
            prep.push_back({test[i].sample, test[i].descriptor});
        const TrainBatch batch = make_batch(prep, skeleton, config.codec(), variant, config.frame());
        const ForwardPass f = forward(model, batch.input);
        const BatchObjective obj = batch_objective(model, f, batch, weights);
        const double share = static_cast<double>(prep.size()) / static_cast<double>(test.size());
        r.loss_total += obj.report.total * share;
        r.loss_3d += obj.report.joint3d * share;
        for (Eigen::Index b = 0; b < f.batch(); ++b) {
            const Pose3D pred = coords_to_pose(f.coords.col(b), config.frame());
            table.add("synth", evaluate_pose(pred, test[start + static_cast<std::size_t>(b)].truth, skeleton));
        }
    }
    r.metrics = table.overall().mean();
    return r;
}

// ------------------------------------------------------------------ runs

struct CurvePoint {
    std::size_t step = 0;
    double train_total = 0.0; ///< mean over the steps since the previous point
    double val_total = 0.0;
    double val_3d = 0.0;
    double val_mpjpe = 0.0;
};

struct RunResult {
    std::string name;
    std::string supervision;
    HemletVariant encoding = HemletVariant::triplet;
    double initial_loss = 0.0;
    std::vector<CurvePoint> curve;
    PoseMetrics final_metrics;
};

/// Learning rate at `step` (1-based) of `steps`: cosine from the base rate
/// down to `final_lr_fraction` of it at the last step.
inline double scheduled_learning_rate(const TrainerConfig& config, std::size_t step, std::size_t steps)
{
    if (config.final_lr_fraction == 1.0 || steps <= 1)
        return config.learning_rate;
    const double t = static_cast<double>(step - 1) / static_cast<double>(steps - 1);
    const double f = config.final_lr_fraction;
    return config.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * t)));
}

/// Trains one model from the shared seed on the shared data.
inline RunResult train_run(const std::vector<SynthSample>& train, const std::vector<SynthSample>& test,
                           const Skeleton& skeleton, const TrainerConfig& config, Supervision supervision,
                           HemletVariant encoding, std::size_t steps)
{
    ModelConfig mc = config.model;
    mc.hem_layers = layers_per_part(encoding);
    ToyModel model(mc, config.seed ^ 0x9e3779b97f4a7c15ull);
    AdamState adam(model.parameter_count(), config.learning_rate);
    const LossWeights weights = loss_weights(supervision, config.alpha);

    RunResult run;
    run.supervision = supervision_terms(supervision);
    run.name = supervision_name(supervision);
    run.encoding = encoding;

    std::mt19937_64 order_rng(config.seed + 1);
    std::mt19937_64 aug_rng(config.seed + 2);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();
    double acc = 0.0;
    std::size_t acc_n = 0;

    for (std::size_t step = 1; step <= steps; ++step) {
        std::vector<PreparedSample> prep;
        for (std::size_t b = 0; b < std::min(config.batch_size, train.size()); ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), order_rng);
                cursor = 0;
            }
            const SynthSample& s = train[order[cursor++]];
            if (config.augment) {
                const AugmentParams p = draw_augmentation(aug_rng);
                prep.push_back({apply_augmentation(s.sample, skeleton, p), augment_descriptor(s.descriptor, skeleton, p)});
            } else {
                prep.push_back({s.sample, s.descriptor});
            }
        }
        const TrainBatch batch = make_batch(prep, skeleton, config.codec(), encoding, config.frame());
        adam.learning_rate = scheduled_learning_rate(config, step, steps);
        const LossReport rep = train_step(model, adam, batch, weights);
        if (step == 1)
            run.initial_loss = rep.total;
        acc += rep.total;
        ++acc_n;
        if (step % std::max<std::size_t>(config.eval_every, 1) == 0 || step == steps) {
            const HeldOutResult held = evaluate_held_out(model, test, skeleton, config, encoding, weights);
            run.curve.push_back({step, acc / static_cast<double>(acc_n), held.loss_total, held.loss_3d,
                                 held.metrics.mpjpe});
            acc = 0.0;
            acc_n = 0;
        }
    }
    run.final_metrics = evaluate_held_out(model, test, skeleton, config, encoding, weights).metrics;
    return run;
}

struct DemoReport {
    std::vector<RunResult> ablation;  ///< one per supervision variant, triplet encoding
    std::vector<RunResult> encodings; ///< Full supervision per encoding variant
};

inline std::vector<SynthSample> held_out_set(const TrainerConfig& config, const Skeleton& skeleton)
{
    SynthConfig sc = config.synth;
    sc.full3d_fraction = 1.0;
    sc.ordinal_fraction = 0.0;
    return synth_dataset(config.seed + 1000003, config.test_count, skeleton, sc);
}

/// Supervision ablation and encoding comparison on identical data and seeds.
inline DemoReport train_demo(const TrainerConfig& config, const Skeleton& skeleton = canonical_skeleton(),
                             std::ostream* progress = nullptr)
{
    config.validate();
    const auto train = synth_dataset(config.seed, config.train_count, skeleton, config.synth);
    const auto test = held_out_set(config, skeleton);
    DemoReport report;
    for (Supervision s : config.ablation) {
        report.ablation.push_back(train_run(train, test, skeleton, config, s, HemletVariant::triplet, config.steps));
        if (progress)
            *progress << "ablation " << report.ablation.back().name << " mpjpe_mm "
                      << report.ablation.back().final_metrics.mpjpe << std::endl;
    }
    const std::size_t enc_steps = config.encoding_steps ? config.encoding_steps : config.steps;
    for (HemletVariant e : config.encodings) {
        // The triplet/Full run is already part of the ablation when it has the same length.
        auto same = std::find_if(report.ablation.begin(), report.ablation.end(),
                                 [](const RunResult& r) { return r.name == "Full"; });
        RunResult run = (e == HemletVariant::triplet && same != report.ablation.end() && enc_steps == config.steps)
            ? *same
            : train_run(train, test, skeleton, config, Supervision::full, e, enc_steps);
        run.name = variant_token(e);
        report.encodings.push_back(std::move(run));
        if (progress)
            *progress << "encoding " << report.encodings.back().name << " val_total "
                      << report.encodings.back().curve.back().val_total << std::endl;
    }
    return report;
}

/// Line-oriented report: ablation rows in the supervision-table layout,
/// then encoding rows.
inline void write_demo_report(std::ostream& os, const DemoReport& r, const TrainerConfig& c)
{
    const auto old = os.precision(17);
    os << "# hemlets train-demo report\n";
    os << "config seed=" << c.seed << " train_count=" << c.train_count << " test_count=" << c.test_count
       << " steps=" << c.steps << " batch_size=" << c.batch_size << " learning_rate=" << c.learning_rate
       << " final_lr_fraction=" << c.final_lr_fraction << " alpha=" << c.alpha
       << " heatmap_size=" << c.model.heatmap_size << " volume_depth=" << c.model.volume_depth
       << " full3d_fraction=" << c.synth.full3d_fraction << " ordinal_fraction=" << c.synth.ordinal_fraction
       << " depth_cue_noise=" << c.synth.depth_cue_noise << '\n';
    for (const auto& run : r.ablation)
        os << "ablation method=" << run.name << " supervision=" << run.supervision
           << " mpjpe_mm=" << run.final_metrics.mpjpe << " pa_mpjpe_mm=" << run.final_metrics.pa_mpjpe
           << " pck150=" << run.final_metrics.pck << " auc=" << run.final_metrics.auc
           << " initial_loss=" << run.initial_loss << " final_val_loss=" << run.curve.back().val_total << '\n';
    for (const auto& run : r.encodings)
        os << "encoding variant=" << run.name << " mpjpe_mm=" << run.final_metrics.mpjpe
           << " final_val_loss=" << run.curve.back().val_total << " final_val_3d=" << run.curve.back().val_3d << '\n';
    os.precision(old);
}

/// `group,name,step,train_total,val_total,val_3d,val_mpjpe_mm`
inline void write_demo_curves_csv(std::ostream& os, const DemoReport& r)
{
    const auto old = os.precision(17);
    os << "group,name,step,train_total,val_total,val_3d,val_mpjpe_mm\n";
    auto rows = [&](const char* group, const std::vector<RunResult>& runs) {
        for (const auto& run : runs)
            for (const auto& p : run.curve)
                os << group << ',' << run.name << ',' << p.step << ',' << p.train_total << ',' << p.val_total << ','
                   << p.val_3d << ',' << p.val_mpjpe << '\n';
    };
    rows("ablation", r.ablation);
    rows("encoding", r.encodings);
    os.precision(old);
}

} // namespace hemlets
