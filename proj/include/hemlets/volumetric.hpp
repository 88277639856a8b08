#pragma once

/// \file volumetric.hpp
/// \brief Soft-argmax decoding of per-joint score volumes, with gradients.
///
/// A joint volume is a rank-3 grid laid out depth-major (d, h, w). Voxel
/// (k, i, j) has its centre at ((j+0.5)/w, (i+0.5)/h, (k+0.5)/d), so the
/// returned coordinates are (x, y, z) in the unit cube.

#include "hemlets/error.hpp"
#include "hemlets/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <span>
#include <vector>

namespace hemlets {

struct VolumeDims {
    std::size_t depth = 64;
    std::size_t height = 64;
    std::size_t width = 64;

    std::size_t voxels() const noexcept { return depth * height * width; }
    friend bool operator==(const VolumeDims&, const VolumeDims&) = default;
};

inline VolumeDims volume_dims(const Tensor& volume)
{
    if (volume.rank() != 3)
        throw ShapeMismatchError("joint volume must be rank 3 (d, h, w)");
    return {volume.dim(0), volume.dim(1), volume.dim(2)};
}

/// Softmax over the whole volume, written into `prob`. Max-subtracted.
template <std::floating_point Real>
void volume_softmax(std::span<const Real> scores, std::span<double> prob)
{
    const double peak = static_cast<double>(*std::max_element(scores.begin(), scores.end()));
    double total = 0.0;
    for (std::size_t v = 0; v < scores.size(); ++v) {
        prob[v] = std::exp(static_cast<double>(scores[v]) - peak);
        total += prob[v];
    }
    const double inv = 1.0 / total;
    for (double& p : prob)
        p *= inv;
}

/// Expected voxel-centre coordinate under a probability volume.
inline Eigen::Vector3d expected_coordinate(std::span<const double> prob, const VolumeDims& dims)
{
    // Marginals first: x̂ = Σ_j P(j)·(j+0.5)/w and likewise for y, z.
    std::vector<double> mx(dims.width, 0.0), my(dims.height, 0.0), mz(dims.depth, 0.0);
    std::size_t v = 0;
    for (std::size_t k = 0; k < dims.depth; ++k)
        for (std::size_t i = 0; i < dims.height; ++i)
            for (std::size_t j = 0; j < dims.width; ++j, ++v) {
                mx[j] += prob[v];
                my[i] += prob[v];
                mz[k] += prob[v];
            }
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (std::size_t j = 0; j < dims.width; ++j)
        c.x() += mx[j] * (static_cast<double>(j) + 0.5) / static_cast<double>(dims.width);
    for (std::size_t i = 0; i < dims.height; ++i)
        c.y() += my[i] * (static_cast<double>(i) + 0.5) / static_cast<double>(dims.height);
    for (std::size_t k = 0; k < dims.depth; ++k)
        c.z() += mz[k] * (static_cast<double>(k) + 0.5) / static_cast<double>(dims.depth);
    return c;
}

/// Gradient of upstream·ĉ with respect to the scores, given the softmax
/// probabilities and the expectation ĉ:  ∂/∂F_v = p_v · upstream·(c_v − ĉ).
inline void soft_argmax_backward(std::span<const double> prob, const VolumeDims& dims, const Eigen::Vector3d& coord,
                                 const Eigen::Vector3d& upstream, std::span<double> grad)
{
    std::vector<double> gx(dims.width), gy(dims.height), gz(dims.depth);
    for (std::size_t j = 0; j < dims.width; ++j)
        gx[j] = upstream.x() * ((static_cast<double>(j) + 0.5) / static_cast<double>(dims.width) - coord.x());
    for (std::size_t i = 0; i < dims.height; ++i)
        gy[i] = upstream.y() * ((static_cast<double>(i) + 0.5) / static_cast<double>(dims.height) - coord.y());
    for (std::size_t k = 0; k < dims.depth; ++k)
        gz[k] = upstream.z() * ((static_cast<double>(k) + 0.5) / static_cast<double>(dims.depth) - coord.z());
    std::size_t v = 0;
    for (std::size_t k = 0; k < dims.depth; ++k)
        for (std::size_t i = 0; i < dims.height; ++i)
            for (std::size_t j = 0; j < dims.width; ++j, ++v)
                grad[v] = prob[v] * (gx[j] + gy[i] + gz[k]);
}

inline Eigen::Vector3d soft_argmax(const Tensor& volume)
{
    const VolumeDims dims = volume_dims(volume);
    if (dims.voxels() == 0)
        throw ShapeMismatchError("joint volume is empty");
    std::vector<double> prob(dims.voxels());
    volume_softmax<double>(volume.values(), prob);
    return expected_coordinate(prob, dims);
}

inline Tensor soft_argmax_gradient(const Tensor& volume, const Eigen::Vector3d& upstream)
{
    const VolumeDims dims = volume_dims(volume);
    if (dims.voxels() == 0)
        throw ShapeMismatchError("joint volume is empty");
    std::vector<double> prob(dims.voxels());
    volume_softmax<double>(volume.values(), prob);
    const Eigen::Vector3d coord = expected_coordinate(prob, dims);
    Tensor grad(volume.shape());
    soft_argmax_backward(prob, dims, coord, upstream, grad.values());
    return grad;
}

// ---------------------------------------------------------------- coord frame

/// Maps unit-cube coordinates to crop pixels (x, y) and millimetres (z).
class CoordFrame {
public:
    struct Box {
        double x_min = 0.0;
        double y_min = 0.0;
        double width = 256.0;
        double height = 256.0;
    };

    CoordFrame() = default;
    CoordFrame(Box crop, double depth_window_mm, double root_depth_mm = 0.0)
        : crop_(crop)
        , depth_window_(depth_window_mm)
        , root_depth_(root_depth_mm)
    {
        if (!(crop_.width > 0.0) || !(crop_.height > 0.0) || !(depth_window_ > 0.0))
            throw ValidationError("coordinate frame extents must be positive");
        if (!std::isfinite(crop_.x_min) || !std::isfinite(crop_.y_min) || !std::isfinite(crop_.width)
            || !std::isfinite(crop_.height) || !std::isfinite(depth_window_) || !std::isfinite(root_depth_))
            throw ValidationError("coordinate frame must be finite");
    }

    const Box& crop() const noexcept { return crop_; }
    double depth_window() const noexcept { return depth_window_; }
    double root_depth() const noexcept { return root_depth_; }

    Eigen::Vector3d to_metric(const Eigen::Vector3d& n) const
    {
        return {crop_.x_min + n.x() * crop_.width, crop_.y_min + n.y() * crop_.height,
                root_depth_ + (n.z() - 0.5) * depth_window_};
    }

    Eigen::Vector3d to_normalized(const Eigen::Vector3d& m) const
    {
        return {(m.x() - crop_.x_min) / crop_.width, (m.y() - crop_.y_min) / crop_.height,
                (m.z() - root_depth_) / depth_window_ + 0.5};
    }

private:
    Box crop_{};
    double depth_window_ = 2000.0;
    double root_depth_ = 0.0;
};

} // namespace hemlets
