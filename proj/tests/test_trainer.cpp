#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace hemlets;

namespace {

const Skeleton& sk() { return canonical_skeleton(); }

TrainerConfig tiny_config()
{
    TrainerConfig c;
    c.model = gradcheck_model_config();
    c.sigma = 1.0;
    c.train_count = 32;
    c.test_count = 16;
    c.batch_size = 8;
    c.steps = 20;
    c.eval_every = 10;
    return c;
}

TrainBatch batch_of(const std::vector<SynthSample>& data, const TrainerConfig& c,
                    HemletVariant v = HemletVariant::triplet)
{
    std::vector<PreparedSample> prep;
    for (const auto& s : data)
        prep.push_back({s.sample, s.descriptor});
    return make_batch(prep, sk(), c.codec(), v, c.frame());
}

} // namespace

// ------------------------------------------------------------------- synth

TEST(Synth, DeterministicForASeed)
{
    const auto a = synth_dataset(5, 20, sk());
    const auto b = synth_dataset(5, 20, sk());
    const auto c = synth_dataset(6, 20, sk());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].truth.coords, b[i].truth.coords);
        EXPECT_EQ(a[i].descriptor, b[i].descriptor);
        EXPECT_EQ(a[i].sample.kind, b[i].sample.kind);
    }
    EXPECT_NE(a[0].truth.coords, c[0].truth.coords);
}

TEST(Synth, BoneLengthsFollowTheTable)
{
    for (const auto& s : synth_dataset(7, 300, sk()))
        for (std::size_t k = 0; k < sk().num_parts(); ++k)
            EXPECT_NEAR(part_length(s.truth, sk(), k), synth_bone_lengths()[k], 1e-9);
}

TEST(Synth, OrdinalLabelsAgreeWithDepths)
{
    for (const auto& s : synth_dataset(8, 300, sk())) {
        EXPECT_NO_THROW(validate_sample(s.sample, sk()));
        if (s.sample.kind == AnnotationKind::two_d_only)
            continue;
        for (std::size_t k = 0; k < sk().num_parts(); ++k) {
            const Part& p = sk().part(k);
            const double eps = 0.5 * synth_bone_lengths()[k];
            EXPECT_EQ(s.sample.ordinal[k], polarity(s.truth.joint(p.parent).z(), s.truth.joint(p.child).z(), eps));
        }
    }
}

TEST(Synth, KindProportionsAndProjection)
{
    std::size_t counts[3] = {0, 0, 0};
    const auto data = synth_dataset(9, 2000, sk());
    for (const auto& s : data) {
        ++counts[static_cast<int>(s.sample.kind)];
        for (std::size_t j = 0; j < 18; ++j) {
            const Eigen::Vector2d expected =
                s.sample.pose2d.joint(0) + (s.truth.joint(j) - s.truth.joint(0)).head<2>() / 2400.0;
            EXPECT_LT((s.sample.pose2d.joint(j) - expected).cwiseAbs().maxCoeff(), 1e-12);
        }
        EXPECT_EQ(s.descriptor.size(), 18 * descriptor_width);
    }
    EXPECT_NEAR(counts[0] / 2000.0, 0.7, 0.04);
    EXPECT_NEAR(counts[1] / 2000.0, 0.2, 0.04);
    EXPECT_NEAR(counts[2] / 2000.0, 0.1, 0.04);
    SynthConfig bad;
    bad.full3d_fraction = 0.8;
    bad.ordinal_fraction = 0.3;
    EXPECT_THROW(synth_dataset(1, 1, sk(), bad), ValidationError);
    EXPECT_THROW(synth_dataset(1, 0, sk()), ValidationError);
}

TEST(Synth, DepthCueTracksRelativeDepth)
{
    SynthConfig exact;
    exact.depth_cue_noise = 0.0;
    for (const auto& s : synth_dataset(10, 100, sk(), exact)) {
        const auto labels = ordinal_from_pose(s.truth, sk());
        for (std::size_t j = 0; j < 18; ++j) {
            const double cue = s.descriptor[descriptor_width * j + 3];
            const std::size_t k = sk().part_ending_at(j);
            if (k == sk().num_parts()) {
                EXPECT_EQ(cue, 0.0);
                continue;
            }
            const double dz = s.truth.joint(sk().part(k).parent).z() - s.truth.joint(j).z();
            EXPECT_NEAR(cue, std::tanh(dz / (0.5 * synth_bone_lengths()[k])), 1e-9);
            // Saturated past the ordinal tolerance, in the direction of the label.
            if (*labels[k] == Polarity::positive)
                EXPECT_GT(cue, std::tanh(1.0) - 1e-9);
            else if (*labels[k] == Polarity::negative)
                EXPECT_LT(cue, -std::tanh(1.0) + 1e-9);
        }
    }
}

// ------------------------------------------------------------------- model

TEST(Model, ZeroParametersGiveZeroPreActivations)
{
    ToyModel m(gradcheck_model_config(), 1);
    std::fill(m.parameters().begin(), m.parameters().end(), 0.0);
    const auto data = synth_dataset(2, 3, sk());
    const TrainBatch b = batch_of(data, tiny_config());
    const ForwardPass f = forward(m, b.input);
    EXPECT_EQ(f.a1.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(f.hem.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(f.heat.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(f.logits.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LT((f.coords.array() - 0.5).abs().maxCoeff(), 1e-15);
}

TEST(Model, ForwardIsBitwiseStable)
{
    const auto data = synth_dataset(3, 4, sk());
    const TrainBatch b = batch_of(data, tiny_config());
    ToyModel m1(gradcheck_model_config(), 42), m2(gradcheck_model_config(), 42);
    EXPECT_TRUE(std::equal(m1.parameters().begin(), m1.parameters().end(), m2.parameters().begin()));
    const ForwardPass f1 = forward(m1, b.input), f2 = forward(m2, b.input);
    EXPECT_EQ(f1.coords, f2.coords);
    EXPECT_EQ(f1.hem, f2.hem);
}

TEST(Model, NonFiniteParametersAreRejected)
{
    ToyModel m(gradcheck_model_config(), 1);
    m.parameters()[5] = std::nan("");
    const TrainBatch b = batch_of(synth_dataset(3, 2, sk()), tiny_config());
    EXPECT_THROW(forward(m, b.input), NumericError);
}

TEST(Model, FactorisedSoftArgmaxEqualsGenericOnTheMaterialisedVolume)
{
    ModelConfig c = gradcheck_model_config();
    c.heatmap_size = 9;
    c.volume_depth = 7;
    ToyModel m(c, 4);
    const TrainBatch b = batch_of(synth_dataset(5, 3, sk()), tiny_config());
    const ForwardPass f = forward(m, b.input);
    for (Eigen::Index s = 0; s < 3; ++s)
        for (std::size_t j = 0; j < 18; ++j) {
            const Tensor vol = joint_volume(m, f, s, j);
            ASSERT_EQ(vol.shape(), (Tensor::Shape{7, 9, 9}));
            const Eigen::Vector3d generic = soft_argmax(vol);
            EXPECT_LT((generic - f.coords.col(s).segment<3>(static_cast<Eigen::Index>(3 * j))).cwiseAbs().maxCoeff(),
                      1e-12);
        }
}

TEST(Model, ParameterGradientMatchesFiniteDifferences)
{
    // Independent central differences over every parameter of a small model.
    TrainerConfig c = tiny_config();
    ToyModel m(c.model, 11);
    ASSERT_LE(m.parameter_count(), 5000u);
    const TrainBatch b = batch_of(synth_dataset(12, 3, sk()), c);
    const LossWeights w;
    const auto analytic = parameter_gradient(m, b, w);
    auto loss = [&] {
        LossReport r;
        parameter_gradient(m, b, w, &r);
        return r.total;
    };
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < m.parameter_count(); ++i) {
        const double keep = m.parameters()[i];
        m.parameters()[i] = keep + 1e-6;
        const double up = loss();
        m.parameters()[i] = keep - 1e-6;
        const double down = loss();
        m.parameters()[i] = keep;
        const double fd = (up - down) / 2e-6;
        diff = std::max(diff, std::abs(fd - analytic[i]));
        scale = std::max({scale, std::abs(fd), std::abs(analytic[i])});
    }
    EXPECT_LT(diff / scale, 1e-3);
}

TEST(Model, FiveStateModelGradientMatchesFiniteDifferences)
{
    EXPECT_LT(check_network(3, 1e-3, HemletVariant::five_state).max_rel_error, 1e-3);
}

// --------------------------------------------------------------- optimiser

TEST(Adam, ZeroGradientLeavesParametersUnchanged)
{
    std::vector<double> p{1.0, -2.0, 3.0};
    const auto before = p;
    AdamState a(3);
    for (int i = 0; i < 5; ++i)
        a.update(p, std::vector<double>(3, 0.0));
    EXPECT_EQ(p, before);
}

TEST(Adam, MatchesHandComputedSteps)
{
    std::vector<double> p{0.5};
    AdamState a(1, 0.1);
    const double g1 = 2.0, g2 = -1.0;
    a.update(p, std::vector<double>{g1});
    double m = 0.1 * g1, v = 0.001 * g1 * g1;
    double expected = 0.5 - 0.1 * (m / 0.1) / (std::sqrt(v / 0.001) + 1e-8);
    EXPECT_NEAR(p[0], expected, 1e-15);
    a.update(p, std::vector<double>{g2});
    m = 0.9 * m + 0.1 * g2;
    v = 0.999 * v + 0.001 * g2 * g2;
    expected -= 0.1 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
    EXPECT_NEAR(p[0], expected, 1e-15);
    EXPECT_THROW(a.update(p, std::vector<double>{1.0, 2.0}), ShapeMismatchError);
}

// ------------------------------------------------------------------ trainer

TEST(Trainer, ZeroLearningRateKeepsParameters)
{
    TrainerConfig c = tiny_config();
    ToyModel m(c.model, 1);
    const std::vector<double> before(m.parameters().begin(), m.parameters().end());
    AdamState adam(m.parameter_count(), 0.0);
    const TrainBatch b = batch_of(synth_dataset(2, 4, sk()), c);
    for (int i = 0; i < 3; ++i)
        train_step(m, adam, b, {});
    EXPECT_TRUE(std::equal(before.begin(), before.end(), m.parameters().begin()));
}

TEST(Trainer, LambdaZeroGivesNoDepthGradient)
{
    TrainerConfig c = tiny_config();
    ToyModel m(c.model, 2);
    SynthConfig sc;
    sc.full3d_fraction = 0.0;
    sc.ordinal_fraction = 0.5;
    const TrainBatch b = batch_of(synth_dataset(3, 6, sk(), sc), c);
    for (const auto& t : b.targets)
        ASSERT_EQ(t.lambda_z, 0);
    const ForwardPass f = forward(m, b.input);
    const auto obj = batch_objective(m, f, b, {0.05, false, false});
    for (std::size_t j = 0; j < 18; ++j)
        for (Eigen::Index s = 0; s < f.batch(); ++s)
            EXPECT_EQ(obj.heads.coords(static_cast<Eigen::Index>(3 * j + 2), s), 0.0);
    // The z logits of the volume head receive exactly zero gradient.
    const auto grad = backward(m, f, obj.heads);
    const DenseSlot& v = m.volume_head();
    const std::size_t per_joint = c.model.axis_logits();
    for (std::size_t j = 0; j < 18; ++j)
        for (std::size_t r = 2 * c.model.heatmap_size; r < per_joint; ++r) {
            const std::size_t row = j * per_joint + r;
            for (std::size_t col = 0; col < v.in; ++col)
                EXPECT_EQ(grad[v.offset + col * v.out + row], 0.0);
            EXPECT_EQ(grad[v.offset + v.in * v.out + row], 0.0);
        }
}

TEST(Trainer, BatchObjectiveIsTheMeanOfPerSampleLosses)
{
    TrainerConfig c = tiny_config();
    ToyModel m(c.model, 3);
    const auto data = synth_dataset(4, 5, sk());
    const TrainBatch b = batch_of(data, c);
    const ForwardPass f = forward(m, b.input);
    const auto obj = batch_objective(m, f, b, {});
    double sum = 0.0;
    for (Eigen::Index s = 0; s < f.batch(); ++s) {
        auto to_tensor = [&](const Eigen::MatrixXd& mat, const Tensor& like) {
            Tensor t(like.shape());
            for (std::size_t i = 0; i < t.size(); ++i)
                t[i] = mat(static_cast<Eigen::Index>(i), s);
            return t;
        };
        const auto& t = b.targets[static_cast<std::size_t>(s)];
        sum += total_loss(to_tensor(f.hem, t.hemlets), t.hemlets, t.mask, to_tensor(f.heat, t.heatmaps2d),
                          t.heatmaps2d, to_tensor(f.coords, t.coords3d), t.coords3d, t.lambda_z)
                   .total;
    }
    EXPECT_NEAR(obj.report.total, sum / 5.0, 1e-10);
}

TEST(Trainer, SingleSampleOverfits)
{
    TrainerConfig c;
    ToyModel m(c.model, 5);
    AdamState adam(m.parameter_count(), c.learning_rate);
    SynthConfig sc;
    sc.full3d_fraction = 1.0;
    sc.ordinal_fraction = 0.0;
    const TrainBatch b = batch_of(synth_dataset(6, 1, sk(), sc), c);
    const double initial = train_step(m, adam, b, {}).total;
    double last = initial;
    for (int i = 1; i < 500; ++i)
        last = train_step(m, adam, b, {}).total;
    LossReport final_report;
    parameter_gradient(m, b, {}, &final_report);
    EXPECT_LT(final_report.total, 0.1 * initial) << "last step loss " << last;
}

TEST(Trainer, ReplayIsBitExact)
{
    const TrainerConfig c = tiny_config();
    auto run = [&] {
        std::ostringstream os;
        const auto r = train_demo(c);
        write_demo_report(os, r, c);
        write_demo_curves_csv(os, r);
        return os.str();
    };
    const std::string a = run();
    EXPECT_EQ(a, run());
    EXPECT_NE(a.find("ablation method=Baseline supervision=L3D "), std::string::npos);
    EXPECT_NE(a.find("encoding variant=5s"), std::string::npos);
}

TEST(Trainer, AugmentedRunsAreDeterministicToo)
{
    TrainerConfig c = tiny_config();
    c.augment = true;
    c.ablation = {Supervision::full};
    c.encodings = {};
    std::ostringstream a, b;
    write_demo_report(a, train_demo(c), c);
    write_demo_report(b, train_demo(c), c);
    EXPECT_EQ(a.str(), b.str());
}

TEST(Trainer, MetricPoseFromUnitCube)
{
    const CoordFrame f = tiny_config().frame();
    Eigen::VectorXd coords(6);
    coords << 0.5, 0.5, 0.5, 0.75, 0.25, 0.6;
    const Pose3D p = coords_to_pose(coords, f);
    EXPECT_LT((p.joint(0) - Eigen::Vector3d::Zero()).norm(), 1e-12);
    EXPECT_LT((p.joint(1) - Eigen::Vector3d(600.0, -600.0, 200.0)).norm(), 1e-9);
}

TEST(Trainer, ConfigParsing)
{
    KeyValueConfig kv;
    kv.set("steps", "12");
    kv.set("variants", "baseline, full");
    kv.set("encodings", "none");
    kv.set("heatmap_size", "8");
    const auto c = TrainerConfig::from(kv);
    EXPECT_EQ(c.steps, 12u);
    EXPECT_EQ(c.ablation, (std::vector<Supervision>{Supervision::baseline, Supervision::full}));
    EXPECT_TRUE(c.encodings.empty());
    EXPECT_EQ(c.codec().height, 8u);
    kv.set("stepz", "3");
    EXPECT_THROW(TrainerConfig::from(kv), ValidationError);
    KeyValueConfig bad;
    bad.set("alpha", "-1");
    EXPECT_THROW(TrainerConfig::from(bad), ValidationError);
    KeyValueConfig variant;
    variant.set("variants", "everything");
    EXPECT_THROW(TrainerConfig::from(variant), ValidationError);
}

// ------------------------------------------------------------- augmentation

TEST(Augment, FlipTwiceIsIdentity)
{
    AugmentParams flip;
    flip.flip = true;
    for (const auto& s : synth_dataset(13, 50, sk())) {
        const auto back = apply_augmentation(apply_augmentation(s.sample, sk(), flip), sk(), flip);
        EXPECT_LT((back.pose2d.coords - s.sample.pose2d.coords).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_EQ(back.ordinal, s.sample.ordinal);
        if (s.sample.kind == AnnotationKind::full3d)
            EXPECT_LT((back.pose3d.coords - s.sample.pose3d.coords).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Augment, PreservesDepthAndLabels)
{
    std::mt19937_64 rng(14);
    for (const auto& s : support::full3d_samples(15, 50)) {
        const AugmentParams p = draw_augmentation(rng);
        const auto a = apply_augmentation(s, sk(), p);
        EXPECT_NO_THROW(validate_sample(a, sk()));
        EXPECT_EQ(ordinal_from_pose(a.pose3d, sk()), a.ordinal);
        for (std::size_t j = 0; j < 18; ++j) {
            const std::size_t src = p.flip ? sk().flip_joint(j) : j;
            EXPECT_NEAR(a.pose3d.joint(j).z(), s.pose3d.joint(src).z(), 1e-9);
        }
        for (std::size_t k = 0; k < 14; ++k)
            EXPECT_NEAR(part_length(a.pose3d, sk(), k), part_length(s.pose3d, sk(), k), 1e-9);
    }
}

TEST(Augment, DescriptorFollowsTheSample)
{
    std::mt19937_64 rng(16);
    const auto data = synth_dataset(17, 20, sk());
    for (const auto& s : data) {
        const AugmentParams p = draw_augmentation(rng);
        const auto moved = apply_augmentation(s.sample, sk(), p);
        const auto d = augment_descriptor(s.descriptor, sk(), p);
        // The clean descriptor of an augmented sample equals the augmented clean descriptor.
        constexpr std::size_t w = descriptor_width;
        std::vector<double> clean(18 * w);
        for (std::size_t j = 0; j < 18; ++j) {
            clean[w * j] = s.sample.pose2d.joint(j).x();
            clean[w * j + 1] = s.sample.pose2d.joint(j).y();
        }
        const auto dc = augment_descriptor(clean, sk(), p);
        for (std::size_t j = 0; j < 18; ++j) {
            EXPECT_NEAR(dc[w * j], moved.pose2d.joint(j).x(), 1e-12);
            EXPECT_NEAR(dc[w * j + 1], moved.pose2d.joint(j).y(), 1e-12);
            const std::size_t src = p.flip ? sk().flip_joint(j) : j;
            EXPECT_EQ(d[w * j + 2], s.descriptor[w * src + 2]);
            EXPECT_EQ(d[w * j + 3], s.descriptor[w * src + 3]);
        }
    }
}
