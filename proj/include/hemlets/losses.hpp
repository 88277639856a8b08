#pragma once

/// \file losses.hpp
/// \brief Training losses with analytic gradients.
///
/// All losses are plain sums over elements (no averaging); batch averaging
/// happens in the trainer.
///
///     L_hem = || (T_gt - T) . mask ||^2
///     L_2d  = sum_n || H_gt_n - H_n ||^2
///     L_3d  = sum_n |dx_n| + |dy_n| + lambda |dz_n|
///     L_int = L_hem + L_2d
///     L_tot = alpha * L_int + L_3d          (alpha = 0.05)

#include "hemlets/error.hpp"
#include "hemlets/tensor.hpp"

#include <cmath>
#include <ostream>
#include <span>
#include <string>

namespace hemlets {

struct LossValue {
    double value = 0.0;
    Tensor gradient; ///< d value / d prediction, same shape as the prediction
};

// -- span kernels, shared with the trainer -----------------------------------

/// Squared error with a per-block binary mask (`block` consecutive elements
/// share one mask entry). Writes the gradient into `grad`.
inline double masked_squared_error(std::span<const double> pred, std::span<const double> target,
                                   std::span<const double> mask, std::size_t block, std::span<double> grad)
{
    double sum = 0.0;
    for (std::size_t b = 0; b < mask.size(); ++b) {
        const double m = mask[b];
        for (std::size_t e = b * block; e < (b + 1) * block; ++e) {
            const double d = (pred[e] - target[e]) * m;
            sum += d * d;
            grad[e] = 2.0 * d * m;
        }
    }
    return sum;
}

inline double squared_error(std::span<const double> pred, std::span<const double> target, std::span<double> grad)
{
    double sum = 0.0;
    for (std::size_t e = 0; e < pred.size(); ++e) {
        const double d = pred[e] - target[e];
        sum += d * d;
        grad[e] = 2.0 * d;
    }
    return sum;
}

/// L1 over (N, 3) coordinates with the z term switched by lambda. The
/// subgradient at a zero residual is 0.
inline double joint_l1(std::span<const double> pred, std::span<const double> target, int lambda_z,
                       std::span<double> grad)
{
    double sum = 0.0;
    for (std::size_t e = 0; e < pred.size(); ++e) {
        const double w = (e % 3 == 2) ? static_cast<double>(lambda_z) : 1.0;
        const double d = pred[e] - target[e];
        sum += w * std::abs(d);
        grad[e] = d > 0.0 ? w : (d < 0.0 ? -w : 0.0);
    }
    return sum;
}

// -- tensor-level API ---------------------------------------------------------

/// Masked L2 between HEMlets stacks. `mask` is either (K, L), broadcast over
/// each heatmap, or the full prediction shape.
inline LossValue hemlets_loss(const Tensor& pred, const Tensor& target, const Tensor& mask)
{
    require_same_shape(pred, target, "hemlets_loss");
    if (mask.size() == 0 || pred.size() % mask.size() != 0)
        throw ShapeMismatchError("hemlets_loss: mask does not tile the prediction");
    if (mask.shape() != pred.shape()
        && (pred.rank() < 2 || mask.rank() != 2 || mask.dim(0) != pred.dim(0) || mask.dim(1) != pred.dim(1)))
        throw ShapeMismatchError("hemlets_loss: mask must be (K, L) or match the prediction");
    LossValue out{0.0, Tensor(pred.shape())};
    out.value = masked_squared_error(pred.values(), target.values(), mask.values(), pred.size() / mask.size(),
                                     out.gradient.values());
    return out;
}

inline LossValue heatmap2d_loss(const Tensor& pred, const Tensor& target)
{
    require_same_shape(pred, target, "heatmap2d_loss");
    LossValue out{0.0, Tensor(pred.shape())};
    out.value = squared_error(pred.values(), target.values(), out.gradient.values());
    return out;
}

inline LossValue joint3d_l1_loss(const Tensor& pred, const Tensor& target, int lambda_z)
{
    require_same_shape(pred, target, "joint3d_l1_loss");
    if (pred.rank() != 2 || pred.dim(1) != 3)
        throw ShapeMismatchError("joint3d_l1_loss expects (N, 3) coordinates");
    if (lambda_z != 0 && lambda_z != 1)
        throw ValidationError("lambda must be 0 or 1");
    LossValue out{0.0, Tensor(pred.shape())};
    out.value = joint_l1(pred.values(), target.values(), lambda_z, out.gradient.values());
    return out;
}

/// Which intermediate terms enter the total; the ablation variants toggle these.
struct LossWeights {
    double alpha = 0.05;
    bool use_hemlets = true;
    bool use_heatmaps = true;

    void validate() const
    {
        if (!(alpha >= 0.0) || !std::isfinite(alpha))
            throw ValidationError("alpha must be a non-negative finite number");
    }
};

struct LossReport {
    double total = 0.0;
    double hem = 0.0;     ///< unweighted L_hem
    double heat2d = 0.0;  ///< unweighted L_2d
    double joint3d = 0.0; ///< L_3d
    Tensor grad_hemlets;
    Tensor grad_heatmaps;
    Tensor grad_coords;
};

inline double intermediate_loss(const Tensor& hem_pred, const Tensor& hem_target, const Tensor& mask,
                                const Tensor& heat_pred, const Tensor& heat_target)
{
    return hemlets_loss(hem_pred, hem_target, mask).value + heatmap2d_loss(heat_pred, heat_target).value;
}

/// L_tot with gradients routed to each prediction and scaled by its weight.
inline LossReport total_loss(const Tensor& hem_pred, const Tensor& hem_target, const Tensor& mask,
                             const Tensor& heat_pred, const Tensor& heat_target, const Tensor& coord_pred,
                             const Tensor& coord_target, int lambda_z, const LossWeights& weights = {})
{
    weights.validate();
    auto hem = hemlets_loss(hem_pred, hem_target, mask);
    auto heat = heatmap2d_loss(heat_pred, heat_target);
    auto coord = joint3d_l1_loss(coord_pred, coord_target, lambda_z);

    const double w_hem = weights.use_hemlets ? weights.alpha : 0.0;
    const double w_heat = weights.use_heatmaps ? weights.alpha : 0.0;
    LossReport r;
    r.hem = hem.value;
    r.heat2d = heat.value;
    r.joint3d = coord.value;
    r.total = w_hem * hem.value + w_heat * heat.value + coord.value;
    for (double& g : hem.gradient.values())
        g *= w_hem;
    for (double& g : heat.gradient.values())
        g *= w_heat;
    r.grad_hemlets = std::move(hem.gradient);
    r.grad_heatmaps = std::move(heat.gradient);
    r.grad_coords = std::move(coord.gradient);
    return r;
}

/// One log line: `step=<n> total=<v> hem=<v> 2d=<v> 3d=<v>`.
inline void write_loss_line(std::ostream& os, std::size_t step, double total, double hem, double heat2d,
                            double joint3d)
{
    const auto old = os.precision(17);
    os << "step=" << step << " total=" << total << " hem=" << hem << " 2d=" << heat2d << " 3d=" << joint3d << '\n';
    os.precision(old);
}

inline void write_loss_line(std::ostream& os, std::size_t step, const LossReport& r)
{
    write_loss_line(os, step, r.total, r.hem, r.heat2d, r.joint3d);
}

} // namespace hemlets
