#pragma once

/// \file synth.hpp
/// \brief Synthetic articulated poses for desk-scale training.
///
/// Poses come from forward kinematics over the canonical skeleton with a
/// fixed bone-length table and joint angles drawn inside rough anatomical
/// ranges. The camera is orthographic, looking along +z; at zero yaw the
/// body faces the camera.

#include "hemlets/codec.hpp"
#include "hemlets/model.hpp"
#include "hemlets/sample.hpp"
#include "hemlets/skeleton.hpp"

#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace hemlets {

/// Part lengths in millimetres, indexed like canonical_skeleton().parts().
inline const std::array<double, 14>& synth_bone_lengths()
{
    static const std::array<double, 14> lengths{
        130.0, 450.0, 440.0,        // pelvis-r_hip, thigh, shin
        130.0, 450.0, 440.0,        // left leg
        480.0, 250.0,               // pelvis-thorax, thorax-head
        170.0, 290.0, 260.0,        // thorax-l_shoulder, upper arm, forearm
        170.0, 290.0, 260.0,        // right arm
    };
    return lengths;
}

struct SynthConfig {
    double full3d_fraction = 0.7;
    double ordinal_fraction = 0.2; ///< the remainder is 2D-only
    double crop_mm = 2400.0;       ///< side of the square crop, in mm
    double keypoint_noise = 0.01;  ///< std of descriptor noise, crop units
    double occlusion_rate = 0.1;   ///< probability a joint gets heavy noise
    double occlusion_noise = 0.05;
    double epsilon_scale = 0.5;
    double depth_cue_noise = 0.5; ///< std of the noise on the relative depth cue
};

/// A sample plus the network input derived from it.
struct SynthSample {
    AnnotatedSample sample;
    Pose3D truth;                   ///< ground truth even when the annotation hides it
    std::vector<double> descriptor; ///< per joint: noisy u, noisy v, occlusion flag, noisy depth cue
};

namespace detail {

inline Eigen::Matrix3d rot_x(double deg) { return Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, Eigen::Vector3d::UnitX()).toRotationMatrix(); }
inline Eigen::Matrix3d rot_y(double deg) { return Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, Eigen::Vector3d::UnitY()).toRotationMatrix(); }
inline Eigen::Matrix3d rot_z(double deg) { return Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, Eigen::Vector3d::UnitZ()).toRotationMatrix(); }

} // namespace detail

/// Random root-relative pose on the canonical skeleton.
template <class Rng>
Pose3D random_pose(Rng& rng)
{
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    const auto& len = synth_bone_lengths();
    const Eigen::Vector3d down(0, 1, 0), up(0, -1, 0), right(-1, 0, 0), left(1, 0, 0);
    using detail::rot_x;
    using detail::rot_y;
    using detail::rot_z;

    Pose3D pose(18);
    const Eigen::Matrix3d body = rot_y(uni(-180, 180)) * rot_x(uni(-20, 20)) * rot_z(uni(-15, 15));
    pose.set(0, Eigen::Vector3d::Zero());

    // Legs: flexion raises the thigh forward (-z), abduction swings it out.
    auto leg = [&](std::size_t hip, std::size_t knee, std::size_t ankle, const Eigen::Vector3d& side, double out_sign,
                   std::size_t part0) {
        pose.set(hip, body * side * len[part0]);
        const Eigen::Matrix3d thigh = body * rot_z(out_sign * uni(-10, 40)) * rot_x(-uni(-30, 100));
        pose.set(knee, pose.joint(hip) + thigh * down * len[part0 + 1]);
        const Eigen::Matrix3d shin = thigh * rot_x(uni(0, 130));
        pose.set(ankle, pose.joint(knee) + shin * down * len[part0 + 2]);
    };
    leg(1, 2, 3, right, 1.0, 0);
    leg(4, 5, 6, left, -1.0, 3);

    const Eigen::Matrix3d torso = body * rot_x(uni(-10, 45)) * rot_z(uni(-15, 15)) * rot_y(uni(-30, 30));
    pose.set(8, torso * up * len[6]);
    pose.set(7, 0.5 * pose.joint(8));
    const Eigen::Matrix3d neck = torso * rot_x(uni(-30, 40)) * rot_z(uni(-20, 20));
    const Eigen::Vector3d head_dir = neck * up;
    pose.set(10, pose.joint(8) + head_dir * len[7]);
    pose.set(9, pose.joint(8) + head_dir * (0.4 * len[7]));
    pose.set(11, pose.joint(10) + head_dir * 120.0);

    // Arms: flexion raises forward, abduction raises sideways, elbow bends forward.
    auto arm = [&](std::size_t shoulder, std::size_t elbow, std::size_t wrist, const Eigen::Vector3d& side,
                   double out_sign, std::size_t part0) {
        pose.set(shoulder, pose.joint(8) + torso * side * len[part0]);
        const Eigen::Matrix3d upper = torso * rot_z(out_sign * uni(0, 110)) * rot_x(-uni(-40, 140));
        pose.set(elbow, pose.joint(shoulder) + upper * down * len[part0 + 1]);
        const Eigen::Matrix3d fore = upper * rot_x(-uni(0, 140));
        pose.set(wrist, pose.joint(elbow) + fore * down * len[part0 + 2]);
    };
    arm(12, 13, 14, left, -1.0, 8);
    arm(15, 16, 17, right, 1.0, 11);
    return pose;
}

/// Orthographic projection into a crop centred on the pose's 2D bounding box.
inline Pose2D project_orthographic(const Pose3D& pose, double crop_mm)
{
    Eigen::Vector2d lo = pose.coords.leftCols<2>().colwise().minCoeff().transpose();
    Eigen::Vector2d hi = pose.coords.leftCols<2>().colwise().maxCoeff().transpose();
    const Eigen::Vector2d center = 0.5 * (lo + hi);
    Pose2D out(pose.size());
    for (std::size_t j = 0; j < pose.size(); ++j)
        out.set(j, Eigen::Vector2d::Constant(0.5) + (pose.joint(j).head<2>() - center) / crop_mm);
    return out;
}

template <class Rng>
SynthSample synth_sample(Rng& rng, const Skeleton& skeleton, const SynthConfig& config, std::size_t index)
{
    SynthSample s;
    s.truth = random_pose(rng);
    s.sample.id = std::to_string(index);
    s.sample.action = "synth";
    s.sample.pose2d = project_orthographic(s.truth, config.crop_mm);

    const double pick = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (pick < config.full3d_fraction) {
        s.sample.kind = AnnotationKind::full3d;
        s.sample.pose3d = s.truth;
        s.sample.ordinal = ordinal_from_pose(s.truth, skeleton, config.epsilon_scale);
    } else if (pick < config.full3d_fraction + config.ordinal_fraction) {
        s.sample.kind = AnnotationKind::ordinal_only;
        s.sample.pose3d = Pose3D(skeleton.num_joints());
        s.sample.ordinal = ordinal_from_pose(s.truth, skeleton, config.epsilon_scale);
    } else {
        s.sample.kind = AnnotationKind::two_d_only;
        s.sample.pose3d = Pose3D(skeleton.num_joints());
    }

    std::normal_distribution<double> noise(0.0, 1.0);
    std::bernoulli_distribution occluded(config.occlusion_rate);
    s.descriptor.resize(descriptor_width * skeleton.num_joints());
    for (std::size_t j = 0; j < skeleton.num_joints(); ++j) {
        const bool occ = occluded(rng);
        const double sd = occ ? config.occlusion_noise : config.keypoint_noise;
        const Eigen::Vector2d p = s.sample.pose2d.joint(j);
        double* d = s.descriptor.data() + descriptor_width * j;
        d[0] = p.x() + sd * noise(rng);
        d[1] = p.y() + sd * noise(rng);
        d[2] = occ ? 1.0 : 0.0;
        // Stand-in for the appearance cues an image carries about which end
        // of a limb is nearer: a saturated, noisy relative depth to the parent.
        const std::size_t k = skeleton.part_ending_at(j);
        double cue = 0.0;
        if (k < skeleton.num_parts()) {
            const Part& part = skeleton.part(k);
            const double eps = adaptive_epsilon(s.truth, skeleton, k, config.epsilon_scale);
            cue = std::tanh((s.truth.joint(part.parent).z() - s.truth.joint(j).z()) / eps);
        }
        d[3] = cue + config.depth_cue_noise * noise(rng);
    }
    return s;
}

/// `count` samples from a generator seeded with `seed`; identical seeds give
/// identical datasets.
inline std::vector<SynthSample> synth_dataset(std::uint64_t seed, std::size_t count, const Skeleton& skeleton,
                                              const SynthConfig& config = {})
{
    if (count == 0)
        throw ValidationError("synth_dataset: count must be positive");
    if (skeleton.num_joints() != 18 || skeleton.num_parts() != synth_bone_lengths().size())
        throw ValidationError("synth_dataset: requires the canonical skeleton");
    if (config.full3d_fraction < 0.0 || config.ordinal_fraction < 0.0
        || config.full3d_fraction + config.ordinal_fraction > 1.0)
        throw ValidationError("synth_dataset: annotation proportions must lie in [0,1] and sum to at most 1");
    if (!(config.keypoint_noise >= 0.0) || !(config.occlusion_noise >= 0.0) || !(config.depth_cue_noise >= 0.0)
        || !(config.occlusion_rate >= 0.0 && config.occlusion_rate <= 1.0))
        throw ValidationError("synth_dataset: noise levels must be non-negative and the occlusion rate in [0,1]");
    std::mt19937_64 rng(seed);
    std::vector<SynthSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(synth_sample(rng, skeleton, config, i));
    return out;
}

} // namespace hemlets
