#pragma once

/// \file augment.hpp
/// \brief Geometric augmentation of annotated samples: horizontal flip,
/// in-plane rotation and scale about the crop centre.
///
/// 2D joints are transformed in the crop; 3D joints are flipped (x negated)
/// and rotated in the x-y plane about the root, and are never scaled, so
/// depths and ordinal labels are preserved. Flipping swaps left/right joints
/// and permutes the per-part ordinal labels accordingly.

#include "hemlets/sample.hpp"
#include "hemlets/skeleton.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace hemlets {

struct AugmentParams {
    double rotation_deg = 0.0;
    double scale = 1.0;
    bool flip = false;
};

struct AugmentConfig {
    double max_rotation_deg = 30.0;
    double min_scale = 0.75;
    double max_scale = 1.25;
    double flip_probability = 0.5;
};

template <class Rng>
AugmentParams draw_augmentation(Rng& rng, const AugmentConfig& config = {})
{
    std::uniform_real_distribution<double> rot(-config.max_rotation_deg, config.max_rotation_deg);
    std::uniform_real_distribution<double> scale(config.min_scale, config.max_scale);
    std::bernoulli_distribution flip(config.flip_probability);
    AugmentParams p;
    p.rotation_deg = rot(rng);
    p.scale = scale(rng);
    p.flip = flip(rng);
    return p;
}

inline AnnotatedSample apply_augmentation(const AnnotatedSample& in, const Skeleton& skeleton,
                                          const AugmentParams& params)
{
    AnnotatedSample out = in;
    const std::size_t n = skeleton.num_joints();

    if (params.flip) {
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t src = skeleton.flip_joint(j);
            const auto row = static_cast<Eigen::Index>(j);
            const auto src_row = static_cast<Eigen::Index>(src);
            if (j < in.pose2d.size()) {
                out.pose2d.coords(row, 0) = 1.0 - in.pose2d.coords(src_row, 0);
                out.pose2d.coords(row, 1) = in.pose2d.coords(src_row, 1);
                out.pose2d.valid[j] = in.pose2d.valid[src];
            }
            if (j < in.pose3d.size()) {
                out.pose3d.coords(row, 0) = -in.pose3d.coords(src_row, 0);
                out.pose3d.coords(row, 1) = in.pose3d.coords(src_row, 1);
                out.pose3d.coords(row, 2) = in.pose3d.coords(src_row, 2);
                out.pose3d.valid[j] = in.pose3d.valid[src];
            }
        }
        if (!in.ordinal.empty())
            for (std::size_t k = 0; k < skeleton.num_parts(); ++k)
                out.ordinal[k] = in.ordinal[skeleton.flip_part(k)];
    }

    if (params.rotation_deg != 0.0 || params.scale != 1.0) {
        const double a = params.rotation_deg * std::numbers::pi / 180.0;
        const double c = std::cos(a);
        const double s = std::sin(a);
        for (Eigen::Index j = 0; j < out.pose2d.coords.rows(); ++j) {
            const double x = out.pose2d.coords(j, 0) - 0.5;
            const double y = out.pose2d.coords(j, 1) - 0.5;
            out.pose2d.coords(j, 0) = 0.5 + params.scale * (c * x - s * y);
            out.pose2d.coords(j, 1) = 0.5 + params.scale * (s * x + c * y);
        }
        if (params.rotation_deg != 0.0 && out.pose3d.size() > skeleton.root_index()) {
            const Eigen::Vector3d root = out.pose3d.joint(skeleton.root_index());
            for (Eigen::Index j = 0; j < out.pose3d.coords.rows(); ++j) {
                const double x = out.pose3d.coords(j, 0) - root.x();
                const double y = out.pose3d.coords(j, 1) - root.y();
                out.pose3d.coords(j, 0) = root.x() + c * x - s * y;
                out.pose3d.coords(j, 1) = root.y() + s * x + c * y;
            }
        }
    }
    return out;
}

template <class Rng>
AnnotatedSample augment(const AnnotatedSample& sample, const Skeleton& skeleton, Rng& rng,
                        const AugmentConfig& config = {})
{
    return apply_augmentation(sample, skeleton, draw_augmentation(rng, config));
}

} // namespace hemlets
