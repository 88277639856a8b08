#pragma once

/// \file model.hpp
/// \brief A small hand-differentiated network that predicts HEMlets, 2D
/// heatmaps and per-joint score volumes from a joint descriptor.
///
/// Layout, batch in columns:
///
///     z1  = relu(W1 x + b1)
///     hem = low-rank heatmaps from (Wh z1 + bh)      (K*L, h, w)
///     h2d = low-rank heatmaps from (Wd z1 + bd)      (N, h, w)
///     g   = relu(We moments(hem, h2d) + be)          latent code of the heatmaps
///     z2  = relu(Wm [z1; g] + bm)
///     vol = Wv z2 + bv                               per joint: x, y and z logits
///
/// A low-rank heatmap is sum_r u_r v_r^T with the factors read off the head
/// output. The score volume of a joint is F(k,i,j) = ax[j] + ay[i] + az[k];
/// its softmax factorises into per-axis softmaxes, which is how the
/// soft-argmax is evaluated here. moments() maps each heatmap to its mass
/// and first moments about the crop centre, so the 3D branch consumes the
/// intermediate predictions.

#include "hemlets/error.hpp"
#include "hemlets/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace hemlets {

/// Values per joint in a network descriptor: u, v, occlusion flag, depth cue.
inline constexpr std::size_t descriptor_width = 4;

struct ModelConfig {
    std::size_t joints = 18;
    std::size_t parts = 14;
    std::size_t hem_layers = 3; ///< 3 for triplets and 2s, 5 for 5s
    std::size_t heatmap_size = 16;
    std::size_t volume_depth = 16;
    std::size_t hidden = 128;
    std::size_t latent = 64;
    std::size_t hidden2 = 128;
    std::size_t rank = 2;

    std::size_t input_dim() const noexcept { return descriptor_width * joints; }
    std::size_t hem_maps() const noexcept { return parts * hem_layers; }
    std::size_t map_pixels() const noexcept { return heatmap_size * heatmap_size; }
    std::size_t factor_width() const noexcept { return rank * 2 * heatmap_size; }
    std::size_t moment_dim() const noexcept { return 3 * (hem_maps() + joints); }
    std::size_t axis_logits() const noexcept { return 2 * heatmap_size + volume_depth; }

    void validate() const
    {
        if (joints == 0 || parts == 0 || hem_layers == 0 || heatmap_size == 0 || volume_depth == 0 || hidden == 0
            || latent == 0 || hidden2 == 0 || rank == 0)
            throw ValidationError("model dimensions must be positive");
    }
};

/// Offsets of one affine layer inside the flat parameter vector. The weight
/// is stored column-major (out x in), followed by the bias.
struct DenseSlot {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t offset = 0;

    std::size_t size() const noexcept { return in * out + out; }
};

class ToyModel {
public:
    ToyModel() = default;
    ToyModel(const ModelConfig& config, std::uint64_t seed)
        : config_(config)
    {
        config_.validate();
        std::size_t off = 0;
        auto slot = [&](std::size_t in, std::size_t out) {
            DenseSlot s{in, out, off};
            off += s.size();
            return s;
        };
        input_ = slot(config_.input_dim(), config_.hidden);
        hem_ = slot(config_.hidden, config_.hem_maps() * config_.factor_width());
        heat_ = slot(config_.hidden, config_.joints * config_.factor_width());
        encode_ = slot(config_.moment_dim(), config_.latent);
        mix_ = slot(config_.hidden + config_.latent, config_.hidden2);
        volume_ = slot(config_.hidden2, config_.joints * config_.axis_logits());
        params_.assign(off, 0.0);
        initialize(seed);
    }

    const ModelConfig& config() const noexcept { return config_; }
    std::size_t parameter_count() const noexcept { return params_.size(); }
    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }

    const DenseSlot& input_layer() const noexcept { return input_; }
    const DenseSlot& hem_head() const noexcept { return hem_; }
    const DenseSlot& heat_head() const noexcept { return heat_; }
    const DenseSlot& encoder() const noexcept { return encode_; }
    const DenseSlot& mixer() const noexcept { return mix_; }
    const DenseSlot& volume_head() const noexcept { return volume_; }

    Eigen::Map<const Eigen::MatrixXd> weight(const DenseSlot& s) const
    {
        return {params_.data() + s.offset, static_cast<Eigen::Index>(s.out), static_cast<Eigen::Index>(s.in)};
    }
    Eigen::Map<const Eigen::VectorXd> bias(const DenseSlot& s) const
    {
        return {params_.data() + s.offset + s.in * s.out, static_cast<Eigen::Index>(s.out)};
    }

    void require_finite() const
    {
        for (double p : params_)
            if (!std::isfinite(p))
                throw NumericError("model parameters contain non-finite values");
    }

private:
    void initialize(std::uint64_t seed)
    {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        auto fill = [&](const DenseSlot& s, double gain, double bias) {
            const double sd = gain / std::sqrt(static_cast<double>(s.in));
            for (std::size_t i = 0; i < s.in * s.out; ++i)
                params_[s.offset + i] = sd * normal(rng);
            for (std::size_t i = 0; i < s.out; ++i)
                params_[s.offset + s.in * s.out + i] = bias;
        };
        fill(input_, std::sqrt(2.0), 0.0);
        fill(hem_, 0.5, 0.1);
        fill(heat_, 0.5, 0.1);
        fill(encode_, std::sqrt(2.0), 0.0);
        fill(mix_, std::sqrt(2.0), 0.0);
        fill(volume_, 1.0, 0.0);
    }

    ModelConfig config_{};
    DenseSlot input_, hem_, heat_, encode_, mix_, volume_;
    std::vector<double> params_;
};

/// Every intermediate of a batched forward pass; columns are samples.
struct ForwardPass {
    Eigen::MatrixXd input;
    Eigen::MatrixXd a1, z1;
    Eigen::MatrixXd hem_factors, hem;   ///< hem: (K*L*h*w, B), each map row-major
    Eigen::MatrixXd heat_factors, heat; ///< heat: (N*h*w, B)
    Eigen::MatrixXd moments;
    Eigen::MatrixXd ag, g;
    Eigen::MatrixXd a2, z2;
    Eigen::MatrixXd logits; ///< (N*(w+h+d), B): per joint ax, ay, az
    Eigen::MatrixXd prob;   ///< per-axis softmax of logits, same layout
    Eigen::MatrixXd coords; ///< (3N, B): per joint x, y, z in the unit cube

    Eigen::Index batch() const noexcept { return input.cols(); }
};

namespace detail {

inline Eigen::MatrixXd affine(const ToyModel& m, const DenseSlot& s, const Eigen::MatrixXd& x)
{
    Eigen::MatrixXd y = m.weight(s) * x;
    y.colwise() += m.bias(s);
    return y;
}

inline double axis_center(std::size_t i, std::size_t n)
{
    return (static_cast<double>(i) + 0.5) / static_cast<double>(n);
}

/// maps(:, b) = per map sum_r u_r v_r^T, factors laid out per map as
/// [u_0 v_0 u_1 v_1 ...], each of length `size`.
inline void expand_low_rank(const Eigen::MatrixXd& factors, std::size_t n_maps, std::size_t size, std::size_t rank,
                            Eigen::MatrixXd& maps)
{
    using RowMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    const auto s = static_cast<Eigen::Index>(size);
    maps.setZero(static_cast<Eigen::Index>(n_maps * size * size), factors.cols());
    for (Eigen::Index b = 0; b < factors.cols(); ++b)
        for (std::size_t q = 0; q < n_maps; ++q) {
            RowMap t(maps.col(b).data() + q * size * size, s, s);
            for (std::size_t r = 0; r < rank; ++r) {
                const auto base = static_cast<Eigen::Index>((q * rank + r) * 2 * size);
                t.noalias() += factors.col(b).segment(base, s) * factors.col(b).segment(base + s, s).transpose();
            }
        }
}

inline void expand_low_rank_backward(const Eigen::MatrixXd& factors, const Eigen::MatrixXd& d_maps, std::size_t n_maps,
                                     std::size_t size, std::size_t rank, Eigen::MatrixXd& d_factors)
{
    using ConstRowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    const auto s = static_cast<Eigen::Index>(size);
    d_factors.setZero(factors.rows(), factors.cols());
    for (Eigen::Index b = 0; b < factors.cols(); ++b)
        for (std::size_t q = 0; q < n_maps; ++q) {
            ConstRowMap dt(d_maps.col(b).data() + q * size * size, s, s);
            for (std::size_t r = 0; r < rank; ++r) {
                const auto base = static_cast<Eigen::Index>((q * rank + r) * 2 * size);
                d_factors.col(b).segment(base, s).noalias() = dt * factors.col(b).segment(base + s, s);
                d_factors.col(b).segment(base + s, s).noalias() = dt.transpose() * factors.col(b).segment(base, s);
            }
        }
}

/// Mass and centred first moments (x then y) of each map.
inline void map_moments(const Eigen::MatrixXd& maps, std::size_t n_maps, std::size_t size, Eigen::MatrixXd& out,
                        Eigen::Index row0)
{
    for (Eigen::Index b = 0; b < maps.cols(); ++b)
        for (std::size_t q = 0; q < n_maps; ++q) {
            const double* t = maps.col(b).data() + q * size * size;
            double m0 = 0.0, mx = 0.0, my = 0.0;
            for (std::size_t i = 0; i < size; ++i)
                for (std::size_t j = 0; j < size; ++j) {
                    const double v = t[i * size + j];
                    m0 += v;
                    mx += v * (axis_center(j, size) - 0.5);
                    my += v * (axis_center(i, size) - 0.5);
                }
            const auto r = row0 + static_cast<Eigen::Index>(3 * q);
            out(r, b) = m0;
            out(r + 1, b) = mx;
            out(r + 2, b) = my;
        }
}

inline void map_moments_backward(const Eigen::MatrixXd& d_moments, Eigen::Index row0, std::size_t n_maps,
                                 std::size_t size, Eigen::MatrixXd& d_maps)
{
    for (Eigen::Index b = 0; b < d_moments.cols(); ++b)
        for (std::size_t q = 0; q < n_maps; ++q) {
            const auto r = row0 + static_cast<Eigen::Index>(3 * q);
            const double g0 = d_moments(r, b), gx = d_moments(r + 1, b), gy = d_moments(r + 2, b);
            double* dt = d_maps.col(b).data() + q * size * size;
            for (std::size_t i = 0; i < size; ++i)
                for (std::size_t j = 0; j < size; ++j)
                    dt[i * size + j] += g0 + gx * (axis_center(j, size) - 0.5) + gy * (axis_center(i, size) - 0.5);
        }
}

inline Eigen::MatrixXd relu(const Eigen::MatrixXd& a) { return a.cwiseMax(0.0); }

inline Eigen::MatrixXd relu_backward(const Eigen::MatrixXd& d, const Eigen::MatrixXd& a)
{
    return d.cwiseProduct((a.array() > 0.0).cast<double>().matrix());
}

} // namespace detail

/// Maps raw descriptors to network inputs: u and v are centred and scaled,
/// the flag and the depth cue pass through.
inline Eigen::MatrixXd model_input(const std::vector<const std::vector<double>*>& descriptors)
{
    if (descriptors.empty())
        throw ValidationError("empty batch");
    const auto d = static_cast<Eigen::Index>(descriptors.front()->size());
    Eigen::MatrixXd x(d, static_cast<Eigen::Index>(descriptors.size()));
    for (std::size_t b = 0; b < descriptors.size(); ++b) {
        if (static_cast<Eigen::Index>(descriptors[b]->size()) != d)
            throw ShapeMismatchError("descriptor sizes differ within a batch");
        for (Eigen::Index i = 0; i < d; ++i) {
            const double v = (*descriptors[b])[static_cast<std::size_t>(i)];
            const bool position = static_cast<std::size_t>(i) % descriptor_width < 2;
            x(i, static_cast<Eigen::Index>(b)) = position ? 4.0 * (v - 0.5) : v;
        }
    }
    return x;
}

inline ForwardPass forward(const ToyModel& model, const Eigen::MatrixXd& input)
{
    const ModelConfig& c = model.config();
    if (input.rows() != static_cast<Eigen::Index>(c.input_dim()))
        throw ShapeMismatchError("model input has the wrong dimension");
    model.require_finite();

    ForwardPass f;
    f.input = input;
    f.a1 = detail::affine(model, model.input_layer(), input);
    f.z1 = detail::relu(f.a1);

    f.hem_factors = detail::affine(model, model.hem_head(), f.z1);
    detail::expand_low_rank(f.hem_factors, c.hem_maps(), c.heatmap_size, c.rank, f.hem);
    f.heat_factors = detail::affine(model, model.heat_head(), f.z1);
    detail::expand_low_rank(f.heat_factors, c.joints, c.heatmap_size, c.rank, f.heat);

    f.moments.resize(static_cast<Eigen::Index>(c.moment_dim()), input.cols());
    detail::map_moments(f.hem, c.hem_maps(), c.heatmap_size, f.moments, 0);
    detail::map_moments(f.heat, c.joints, c.heatmap_size, f.moments, static_cast<Eigen::Index>(3 * c.hem_maps()));
    f.ag = detail::affine(model, model.encoder(), f.moments);
    f.g = detail::relu(f.ag);

    Eigen::MatrixXd joined(f.z1.rows() + f.g.rows(), input.cols());
    joined << f.z1, f.g;
    f.a2 = detail::affine(model, model.mixer(), joined);
    f.z2 = detail::relu(f.a2);
    f.logits = detail::affine(model, model.volume_head(), f.z2);

    // Per-axis soft-argmax of the separable volume.
    const std::size_t dims[3] = {c.heatmap_size, c.heatmap_size, c.volume_depth};
    f.prob.resize(f.logits.rows(), f.logits.cols());
    f.coords.resize(static_cast<Eigen::Index>(3 * c.joints), input.cols());
    for (Eigen::Index b = 0; b < input.cols(); ++b)
        for (std::size_t n = 0; n < c.joints; ++n) {
            auto off = static_cast<Eigen::Index>(n * c.axis_logits());
            for (int a = 0; a < 3; ++a) {
                const auto len = static_cast<Eigen::Index>(dims[a]);
                auto logit = f.logits.col(b).segment(off, len);
                auto p = f.prob.col(b).segment(off, len);
                p = (logit.array() - logit.maxCoeff()).exp().matrix();
                p /= p.sum();
                double e = 0.0;
                for (Eigen::Index i = 0; i < len; ++i)
                    e += p(i) * detail::axis_center(static_cast<std::size_t>(i), dims[a]);
                f.coords(static_cast<Eigen::Index>(3 * n) + a, b) = e;
                off += len;
            }
        }
    return f;
}

/// Materialised (d, h, w) score volume of one joint of one sample.
inline Tensor joint_volume(const ToyModel& model, const ForwardPass& f, Eigen::Index sample, std::size_t joint)
{
    const ModelConfig& c = model.config();
    const std::size_t s = c.heatmap_size;
    const auto off = static_cast<Eigen::Index>(joint * c.axis_logits());
    const auto col = f.logits.col(sample);
    Tensor vol({c.volume_depth, s, s});
    std::size_t v = 0;
    for (std::size_t k = 0; k < c.volume_depth; ++k)
        for (std::size_t i = 0; i < s; ++i)
            for (std::size_t j = 0; j < s; ++j, ++v)
                vol[v] = col(off + static_cast<Eigen::Index>(j)) + col(off + static_cast<Eigen::Index>(s + i))
                    + col(off + static_cast<Eigen::Index>(2 * s + k));
    return vol;
}

/// Upstream gradients of the scalar objective with respect to the three
/// prediction heads, batch in columns.
struct HeadGradients {
    Eigen::MatrixXd hem;    ///< like ForwardPass::hem
    Eigen::MatrixXd heat;   ///< like ForwardPass::heat
    Eigen::MatrixXd coords; ///< like ForwardPass::coords
};

/// Gradient of the objective with respect to every parameter, same layout
/// as ToyModel::parameters().
inline std::vector<double> backward(const ToyModel& model, const ForwardPass& f, const HeadGradients& up)
{
    const ModelConfig& c = model.config();
    std::vector<double> grad(model.parameter_count(), 0.0);
    auto store = [&](const DenseSlot& s, const Eigen::MatrixXd& d_out, const Eigen::MatrixXd& in) {
        Eigen::Map<Eigen::MatrixXd> dw(grad.data() + s.offset, static_cast<Eigen::Index>(s.out),
                                       static_cast<Eigen::Index>(s.in));
        Eigen::Map<Eigen::VectorXd> db(grad.data() + s.offset + s.in * s.out, static_cast<Eigen::Index>(s.out));
        dw.noalias() = d_out * in.transpose();
        db = d_out.rowwise().sum();
    };

    // Soft-argmax: d x̂ / d a_i = p_i (c_i - x̂) per axis.
    const std::size_t dims[3] = {c.heatmap_size, c.heatmap_size, c.volume_depth};
    Eigen::MatrixXd d_logits(f.logits.rows(), f.logits.cols());
    for (Eigen::Index b = 0; b < f.batch(); ++b)
        for (std::size_t n = 0; n < c.joints; ++n) {
            auto off = static_cast<Eigen::Index>(n * c.axis_logits());
            for (int a = 0; a < 3; ++a) {
                const auto row = static_cast<Eigen::Index>(3 * n) + a;
                const double g = up.coords(row, b);
                const double e = f.coords(row, b);
                for (std::size_t i = 0; i < dims[a]; ++i) {
                    const auto r = off + static_cast<Eigen::Index>(i);
                    d_logits(r, b) = g * f.prob(r, b) * (detail::axis_center(i, dims[a]) - e);
                }
                off += static_cast<Eigen::Index>(dims[a]);
            }
        }

    Eigen::MatrixXd joined(f.z1.rows() + f.g.rows(), f.batch());
    joined << f.z1, f.g;
    store(model.volume_head(), d_logits, f.z2);
    const Eigen::MatrixXd d_a2 = detail::relu_backward(model.weight(model.volume_head()).transpose() * d_logits, f.a2);
    store(model.mixer(), d_a2, joined);
    const Eigen::MatrixXd d_joined = model.weight(model.mixer()).transpose() * d_a2;
    const auto h1 = static_cast<Eigen::Index>(c.hidden);
    Eigen::MatrixXd d_z1 = d_joined.topRows(h1);
    const Eigen::MatrixXd d_ag = detail::relu_backward(d_joined.bottomRows(d_joined.rows() - h1), f.ag);
    store(model.encoder(), d_ag, f.moments);
    const Eigen::MatrixXd d_moments = model.weight(model.encoder()).transpose() * d_ag;

    Eigen::MatrixXd d_hem = up.hem;
    Eigen::MatrixXd d_heat = up.heat;
    detail::map_moments_backward(d_moments, 0, c.hem_maps(), c.heatmap_size, d_hem);
    detail::map_moments_backward(d_moments, static_cast<Eigen::Index>(3 * c.hem_maps()), c.joints, c.heatmap_size,
                                 d_heat);

    Eigen::MatrixXd d_factors;
    detail::expand_low_rank_backward(f.hem_factors, d_hem, c.hem_maps(), c.heatmap_size, c.rank, d_factors);
    store(model.hem_head(), d_factors, f.z1);
    d_z1.noalias() += model.weight(model.hem_head()).transpose() * d_factors;
    detail::expand_low_rank_backward(f.heat_factors, d_heat, c.joints, c.heatmap_size, c.rank, d_factors);
    store(model.heat_head(), d_factors, f.z1);
    d_z1.noalias() += model.weight(model.heat_head()).transpose() * d_factors;

    store(model.input_layer(), detail::relu_backward(d_z1, f.a1), f.input);
    return grad;
}

} // namespace hemlets
