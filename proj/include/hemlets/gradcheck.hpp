#pragma once

/// \file gradcheck.hpp
/// \brief Central finite-difference checks of every analytic gradient.
///
/// The relative error of a check is max|a - f| / max(max|a|, max|f|) over
/// all checked coordinates, with a and f the analytic and numeric gradients.

#include "hemlets/losses.hpp"
#include "hemlets/trainer.hpp"
#include "hemlets/volumetric.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace hemlets {

struct GradcheckRow {
    std::string name;
    std::size_t cases = 0;
    double max_rel_error = 0.0;
    double tolerance = 0.0;

    bool passed() const noexcept { return max_rel_error < tolerance; }
};

/// Max-norm relative error between two gradients.
inline double relative_error(std::span<const double> analytic, std::span<const double> numeric)
{
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
        scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
    }
    return scale > 0.0 ? diff / scale : diff;
}

/// Central differences of f at x over the listed coordinates.
inline std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                            std::vector<double> x, double step = 1e-6)
{
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + step;
        const double up = f(x);
        x[i] = keep - step;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

/// Model small enough for an exhaustive parameter check (about 4.7k weights).
inline ModelConfig gradcheck_model_config()
{
    ModelConfig c;
    c.heatmap_size = 8;
    c.volume_depth = 8;
    c.hidden = 2;
    c.latent = 2;
    c.hidden2 = 2;
    c.rank = 1;
    return c;
}

namespace detail {

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo, double hi)
{
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (double& x : v)
        x = u(rng);
    return v;
}

/// Keeps L1 residuals away from the kink so central differences are valid.
inline void push_off_kinks(std::vector<double>& pred, const std::vector<double>& target, double margin)
{
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (std::abs(pred[i] - target[i]) < margin)
            pred[i] = target[i] + (pred[i] >= target[i] ? margin : -margin);
}

} // namespace detail

inline GradcheckRow check_soft_argmax(std::uint64_t seed, std::size_t cases, double tolerance)
{
    GradcheckRow row{"soft_argmax", cases, 0.0, tolerance};
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> side(2, 6);
    for (std::size_t c = 0; c < cases; ++c) {
        Tensor vol({side(rng), side(rng), side(rng)});
        const auto scores = detail::random_vector(rng, vol.size(), -3.0, 3.0);
        std::copy(scores.begin(), scores.end(), vol.values().begin());
        const auto up = detail::random_vector(rng, 3, -1.0, 1.0);
        const Eigen::Vector3d upstream(up[0], up[1], up[2]);
        const Tensor analytic = soft_argmax_gradient(vol, upstream);
        const auto numeric = numeric_gradient(
            [&](std::span<const double> x) {
                Tensor v(vol.shape());
                std::copy(x.begin(), x.end(), v.values().begin());
                return upstream.dot(soft_argmax(v));
            },
            scores);
        row.max_rel_error = std::max(row.max_rel_error, relative_error(analytic.values(), numeric));
    }
    return row;
}

/// Losses are checked on random predictions of a real encoded sample.
inline std::vector<GradcheckRow> check_losses(std::uint64_t seed, std::size_t cases, double tolerance)
{
    GradcheckRow hem{"loss_hemlets", cases, 0.0, tolerance};
    GradcheckRow heat{"loss_2d", cases, 0.0, tolerance};
    GradcheckRow l1{"loss_3d", cases, 0.0, tolerance};
    GradcheckRow tot{"loss_total", cases, 0.0, tolerance};
    const Skeleton& sk = canonical_skeleton();
    CodecConfig codec;
    codec.height = codec.width = 8;
    codec.sigma = 1.0;
    SynthConfig sc;
    const auto data = synth_dataset(seed, cases, sk, sc);
    std::mt19937_64 rng(seed + 17);
    for (std::size_t c = 0; c < cases; ++c) {
        const TrainingTarget t = encode_targets(data[c].sample, sk, codec);
        auto random_like = [&](const Tensor& like, double lo, double hi) {
            Tensor p(like.shape());
            const auto v = detail::random_vector(rng, p.size(), lo, hi);
            std::copy(v.begin(), v.end(), p.values().begin());
            return p;
        };
        const Tensor hp = random_like(t.hemlets, -0.5, 1.5);
        const Tensor dp = random_like(t.heatmaps2d, -0.5, 1.5);
        Tensor cp = random_like(t.coords3d, 0.0, 1.0);
        {
            std::vector<double> v(cp.values().begin(), cp.values().end());
            detail::push_off_kinks(v, std::vector<double>(t.coords3d.values().begin(), t.coords3d.values().end()),
                                   1e-3);
            std::copy(v.begin(), v.end(), cp.values().begin());
        }
        auto as_vec = [](const Tensor& x) { return std::vector<double>(x.values().begin(), x.values().end()); };
        auto with = [](const Tensor& like, std::span<const double> x) {
            Tensor p(like.shape());
            std::copy(x.begin(), x.end(), p.values().begin());
            return p;
        };

        hem.max_rel_error = std::max(
            hem.max_rel_error,
            relative_error(hemlets_loss(hp, t.hemlets, t.mask).gradient.values(),
                           numeric_gradient([&](auto x) { return hemlets_loss(with(hp, x), t.hemlets, t.mask).value; },
                                            as_vec(hp))));
        heat.max_rel_error = std::max(
            heat.max_rel_error,
            relative_error(heatmap2d_loss(dp, t.heatmaps2d).gradient.values(),
                           numeric_gradient([&](auto x) { return heatmap2d_loss(with(dp, x), t.heatmaps2d).value; },
                                            as_vec(dp))));
        l1.max_rel_error = std::max(
            l1.max_rel_error,
            relative_error(
                joint3d_l1_loss(cp, t.coords3d, t.lambda_z).gradient.values(),
                numeric_gradient([&](auto x) { return joint3d_l1_loss(with(cp, x), t.coords3d, t.lambda_z).value; },
                                 as_vec(cp))));

        const LossReport r = total_loss(hp, t.hemlets, t.mask, dp, t.heatmaps2d, cp, t.coords3d, t.lambda_z);
        std::vector<double> analytic = as_vec(r.grad_hemlets);
        analytic.insert(analytic.end(), r.grad_heatmaps.values().begin(), r.grad_heatmaps.values().end());
        analytic.insert(analytic.end(), r.grad_coords.values().begin(), r.grad_coords.values().end());
        std::vector<double> x = as_vec(hp);
        const auto dv = as_vec(dp), cv = as_vec(cp);
        x.insert(x.end(), dv.begin(), dv.end());
        x.insert(x.end(), cv.begin(), cv.end());
        const std::size_t nh = hp.size(), nd = dp.size();
        const auto numeric = numeric_gradient(
            [&](std::span<const double> v) {
                return total_loss(with(hp, v.subspan(0, nh)), t.hemlets, t.mask, with(dp, v.subspan(nh, nd)),
                                  t.heatmaps2d, with(cp, v.subspan(nh + nd)), t.coords3d, t.lambda_z)
                    .total;
            },
            x);
        tot.max_rel_error = std::max(tot.max_rel_error, relative_error(analytic, numeric));
    }
    return {hem, heat, l1, tot};
}

/// Gradient of the batch-mean L_tot with respect to every model parameter.
inline GradcheckRow check_network(std::uint64_t seed, double tolerance, HemletVariant variant = HemletVariant::triplet)
{
    const Skeleton& sk = canonical_skeleton();
    TrainerConfig tc;
    tc.model = gradcheck_model_config();
    tc.model.hem_layers = layers_per_part(variant);
    tc.sigma = 1.0;
    ToyModel model(tc.model, seed);
    // Zero biases put a ReLU exactly on its kink whenever all of its inputs
    // are dead, where central differences and the subgradient disagree.
    for (const DenseSlot* s : {&model.input_layer(), &model.encoder(), &model.mixer()})
        for (std::size_t i = 0; i < s->out; ++i)
            model.parameters()[s->offset + s->in * s->out + i] = 0.05 * static_cast<double>(i % 2 == 0 ? 1 : -1);
    const auto data = synth_dataset(seed + 1, 4, sk, tc.synth);
    std::vector<PreparedSample> prep;
    for (const auto& s : data)
        prep.push_back({s.sample, s.descriptor});
    const TrainBatch batch = make_batch(prep, sk, tc.codec(), variant, tc.frame());
    const LossWeights weights;
    const std::vector<double> analytic = parameter_gradient(model, batch, weights);
    const std::vector<double> start(model.parameters().begin(), model.parameters().end());
    const auto numeric = numeric_gradient(
        [&](std::span<const double> x) {
            std::copy(x.begin(), x.end(), model.parameters().begin());
            LossReport r;
            parameter_gradient(model, batch, weights, &r);
            return r.total;
        },
        start);
    std::copy(start.begin(), start.end(), model.parameters().begin());
    return {std::string("network_") + variant_token(variant), model.parameter_count(),
            relative_error(analytic, numeric), tolerance};
}

/// Every row; `tolerance` <= 0 selects the per-row defaults (1e-4 for the
/// operators, 1e-3 for the network).
inline std::vector<GradcheckRow> run_gradcheck(std::uint64_t seed = 1, double tolerance = 0.0)
{
    const double op_tol = tolerance > 0.0 ? tolerance : 1e-4;
    const double net_tol = tolerance > 0.0 ? tolerance : 1e-3;
    std::vector<GradcheckRow> rows{check_soft_argmax(seed, 100, op_tol)};
    for (auto& r : check_losses(seed, 5, op_tol))
        rows.push_back(r);
    rows.push_back(check_network(seed, net_tol));
    return rows;
}

/// `name cases max_rel_error tolerance PASS|FAIL`, one line per row.
inline void write_gradcheck(std::ostream& os, const std::vector<GradcheckRow>& rows)
{
    const auto old = os.precision(6);
    os << "check cases max_rel_error tolerance result\n";
    for (const auto& r : rows)
        os << r.name << ' ' << r.cases << ' ' << r.max_rel_error << ' ' << r.tolerance << ' '
           << (r.passed() ? "PASS" : "FAIL") << '\n';
    os.precision(old);
}

} // namespace hemlets
