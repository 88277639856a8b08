#pragma once

/// \file codec.hpp
/// \brief Supervision targets: polarity labels, part-centric heatmap
/// triplets, 2D joint heatmaps, and the decoder used for round trips.
///
/// Heatmap pixel (i, j) covers [j/w, (j+1)/w) x [i/h, (i+1)/h) of the
/// normalized crop. A joint is rendered as a Gaussian centred on the pixel
/// that contains it, so its peak value is exactly 1.

#include "hemlets/error.hpp"
#include "hemlets/sample.hpp"
#include "hemlets/skeleton.hpp"
#include "hemlets/tensor.hpp"
#include "hemlets/volumetric.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hemlets {

struct CodecConfig {
    std::size_t height = 64;
    std::size_t width = 64;
    double sigma = 2.0;             ///< Gaussian width in pixels.
    double epsilon_scale = 0.5;     ///< eps_k = epsilon_scale * part length.
    double truncation_radius = 3.0; ///< In multiples of sigma.
    double peak_threshold = 0.5;    ///< Decoder: minimum response that counts as a peak.
    double suppression_tolerance = 0.05;

    void validate() const
    {
        if (height < 8 || width < 8)
            throw ValidationError("heatmap resolution must be at least 8x8");
        if (!(sigma > 0.0) || !std::isfinite(sigma))
            throw ValidationError("gaussian sigma must be positive");
        if (!(epsilon_scale >= 0.0) || !std::isfinite(epsilon_scale))
            throw ValidationError("epsilon scale must be non-negative");
        if (!(truncation_radius > 0.0) || !std::isfinite(truncation_radius))
            throw ValidationError("truncation radius must be positive");
    }
};

// ------------------------------------------------------------------ polarity

/// Ordinal relation of a child joint relative to its parent. Ties at
/// exactly |z_p - z_c| == epsilon resolve to zero.
inline Polarity polarity(double z_parent, double z_child, double epsilon) noexcept
{
    const double diff = z_parent - z_child;
    if (diff > epsilon)
        return Polarity::positive;
    if (diff < -epsilon)
        return Polarity::negative;
    return Polarity::zero;
}

inline double adaptive_epsilon(const Pose3D& pose, const Skeleton& skeleton, std::size_t part, double scale = 0.5)
{
    return scale * part_length(pose, skeleton, part);
}

/// Labels derived from 3D ground truth with the adaptive epsilon rule.
inline OrdinalLabels ordinal_from_pose(const Pose3D& pose, const Skeleton& skeleton, double epsilon_scale = 0.5)
{
    OrdinalLabels out(skeleton.num_parts());
    for (std::size_t k = 0; k < skeleton.num_parts(); ++k) {
        const Part& p = skeleton.part(k);
        if (!pose.valid[p.parent] || !pose.valid[p.child])
            continue;
        out[k] = polarity(pose.coords(static_cast<Eigen::Index>(p.parent), 2),
                          pose.coords(static_cast<Eigen::Index>(p.child), 2),
                          adaptive_epsilon(pose, skeleton, k, epsilon_scale));
    }
    return out;
}

/// The labels an encoder should use for a sample: re-derived from 3D for
/// full3d samples, taken from the record for ordinal samples, none otherwise.
inline OrdinalLabels effective_ordinal(const AnnotatedSample& sample, const Skeleton& skeleton,
                                       const CodecConfig& config)
{
    validate_sample(sample, skeleton);
    switch (sample.kind) {
    case AnnotationKind::full3d: return ordinal_from_pose(sample.pose3d, skeleton, config.epsilon_scale);
    case AnnotationKind::ordinal_only: return sample.ordinal;
    case AnnotationKind::two_d_only: break;
    }
    return OrdinalLabels(skeleton.num_parts());
}

// ----------------------------------------------------------------- gaussians

struct PixelIndex {
    std::size_t row = 0;
    std::size_t col = 0;
    friend bool operator==(const PixelIndex&, const PixelIndex&) = default;
};

/// Pixel containing a normalized point, or nullopt when outside the crop.
inline std::optional<PixelIndex> pixel_of(const Eigen::Vector2d& p, std::size_t height, std::size_t width)
{
    if (!p.allFinite() || p.x() < 0.0 || p.x() > 1.0 || p.y() < 0.0 || p.y() > 1.0)
        return std::nullopt;
    const auto col = std::min(static_cast<std::size_t>(std::floor(p.x() * static_cast<double>(width))), width - 1);
    const auto row = std::min(static_cast<std::size_t>(std::floor(p.y() * static_cast<double>(height))), height - 1);
    return PixelIndex{row, col};
}

inline Eigen::Vector2d pixel_center(const PixelIndex& px, std::size_t height, std::size_t width)
{
    return {(static_cast<double>(px.col) + 0.5) / static_cast<double>(width),
            (static_cast<double>(px.row) + 0.5) / static_cast<double>(height)};
}

/// Writes max(grid, gaussian) for a Gaussian peaked at `center`.
inline void stamp_gaussian(std::span<double> grid, const PixelIndex& center, const CodecConfig& config)
{
    const double radius = config.truncation_radius * config.sigma;
    const double r2 = radius * radius;
    const double inv = 1.0 / (2.0 * config.sigma * config.sigma);
    const auto reach = static_cast<long>(std::floor(radius));
    const long h = static_cast<long>(config.height);
    const long w = static_cast<long>(config.width);
    const long ci = static_cast<long>(center.row);
    const long cj = static_cast<long>(center.col);
    for (long i = std::max(0L, ci - reach); i <= std::min(h - 1, ci + reach); ++i) {
        for (long j = std::max(0L, cj - reach); j <= std::min(w - 1, cj + reach); ++j) {
            const double d2 = static_cast<double>((i - ci) * (i - ci) + (j - cj) * (j - cj));
            if (d2 > r2)
                continue;
            double& cell = grid[static_cast<std::size_t>(i * w + j)];
            cell = std::max(cell, std::exp(-d2 * inv));
        }
    }
}

struct RenderedGaussian {
    Tensor grid;  ///< (h, w)
    bool in_crop; ///< false when the centre fell outside the crop and the grid is empty
};

inline RenderedGaussian render_gaussian(const Eigen::Vector2d& center, const CodecConfig& config)
{
    config.validate();
    RenderedGaussian out{Tensor({config.height, config.width}), false};
    if (auto px = pixel_of(center, config.height, config.width)) {
        stamp_gaussian(out.grid.values(), *px, config);
        out.in_crop = true;
    }
    return out;
}

// ------------------------------------------------------------------ encoders

enum class HemletVariant { triplet, two_state, five_state };

inline std::size_t layers_per_part(HemletVariant v) noexcept { return v == HemletVariant::five_state ? 5 : 3; }

inline const char* variant_token(HemletVariant v) noexcept
{
    switch (v) {
    case HemletVariant::triplet: return "hemlets";
    case HemletVariant::two_state: return "2s";
    case HemletVariant::five_state: return "5s";
    }
    return "?";
}

inline HemletVariant parse_variant(const std::string& s)
{
    if (s == "hemlets" || s == "triplet")
        return HemletVariant::triplet;
    if (s == "2s")
        return HemletVariant::two_state;
    if (s == "5s")
        return HemletVariant::five_state;
    throw ValidationError("unknown variant '" + s + "' (expected hemlets, 2s or 5s)");
}

struct HemletEncoding {
    Tensor tensor; ///< (K, L, h, w); L = 3 for triplets and 2s, 5 for 5s
    Tensor mask;   ///< (K, L), 1 where the part's layers are supervised
};

namespace detail {

inline HemletEncoding empty_encoding(const Skeleton& skeleton, const CodecConfig& config, std::size_t layers)
{
    return {Tensor({skeleton.num_parts(), layers, config.height, config.width}),
            Tensor({skeleton.num_parts(), layers})};
}

inline std::span<double> layer(HemletEncoding& e, std::size_t part, std::size_t layer_index)
{
    const std::size_t hw = e.tensor.dim(2) * e.tensor.dim(3);
    return e.tensor.values().subspan((part * e.tensor.dim(1) + layer_index) * hw, hw);
}

inline void mark_part(HemletEncoding& e, std::size_t part)
{
    for (std::size_t l = 0; l < e.tensor.dim(1); ++l)
        e.mask.at({part, l}) = 1.0;
}

/// Stamps a joint if it lies in the crop; out-of-crop joints leave no peak.
inline void stamp_joint(std::span<double> grid, const Pose2D& pose, std::size_t joint, const CodecConfig& config)
{
    if (auto px = pixel_of(pose.joint(joint), config.height, config.width))
        stamp_gaussian(grid, *px, config);
}

inline bool endpoints_visible(const Pose2D& pose, const Part& p) { return pose.valid[p.parent] && pose.valid[p.child]; }

} // namespace detail

/// Part-centric heatmap triplets, layer order (negative, zero, positive).
/// The parent always sits in the zero layer; the child goes to the layer
/// named by the part's ordinal label (max-combined with the parent when 0).
inline HemletEncoding encode_hemlets(const AnnotatedSample& sample, const Skeleton& skeleton,
                                     const CodecConfig& config)
{
    config.validate();
    const OrdinalLabels labels = effective_ordinal(sample, skeleton, config);
    HemletEncoding e = detail::empty_encoding(skeleton, config, 3);
    for (std::size_t k = 0; k < skeleton.num_parts(); ++k) {
        const Part& p = skeleton.part(k);
        if (!labels[k] || !detail::endpoints_visible(sample.pose2d, p))
            continue;
        detail::stamp_joint(detail::layer(e, k, 1), sample.pose2d, p.parent, config);
        detail::stamp_joint(detail::layer(e, k, static_cast<std::size_t>(to_int(*labels[k]) + 1)), sample.pose2d,
                            p.child, config);
        detail::mark_part(e, k);
    }
    return e;
}

/// Two-state variant: the closer joint goes to the positive layer, the
/// farther one to the negative layer, both to the zero layer when tied.
inline HemletEncoding encode_2s(const AnnotatedSample& sample, const Skeleton& skeleton, const CodecConfig& config)
{
    config.validate();
    const OrdinalLabels labels = effective_ordinal(sample, skeleton, config);
    HemletEncoding e = detail::empty_encoding(skeleton, config, 3);
    for (std::size_t k = 0; k < skeleton.num_parts(); ++k) {
        const Part& p = skeleton.part(k);
        if (!labels[k] || !detail::endpoints_visible(sample.pose2d, p))
            continue;
        std::size_t parent_layer = 1;
        std::size_t child_layer = 1;
        if (*labels[k] == Polarity::positive) { // child closer
            parent_layer = 0;
            child_layer = 2;
        } else if (*labels[k] == Polarity::negative) {
            parent_layer = 2;
            child_layer = 0;
        }
        detail::stamp_joint(detail::layer(e, k, parent_layer), sample.pose2d, p.parent, config);
        detail::stamp_joint(detail::layer(e, k, child_layer), sample.pose2d, p.child, config);
        detail::mark_part(e, k);
    }
    return e;
}

/// Elevation bin of a part for the five-state variant. The angle is
/// asin((z_p - z_c) / |B_k|); bins are (-90,-60), (-60,-30), (-30,30),
/// (30,60), (60,90) degrees and a boundary angle belongs to the higher bin.
/// Compared on the sine so exact boundaries are not lost to rounding.
inline std::size_t elevation_bin(double z_parent, double z_child, double length) noexcept
{
    const double rise = z_parent - z_child;
    const double s60 = std::sqrt(3.0) / 2.0;
    std::size_t bin = 0;
    for (double bound : {-s60, -0.5, 0.5, s60})
        if (rise >= bound * length)
            ++bin;
    return bin;
}

/// Five-state variant: parent in the centre layer, child in the layer of
/// the part's elevation bin. Needs metric depth, so only full3d samples
/// are supervised.
inline HemletEncoding encode_5s(const AnnotatedSample& sample, const Skeleton& skeleton, const CodecConfig& config)
{
    config.validate();
    validate_sample(sample, skeleton);
    HemletEncoding e = detail::empty_encoding(skeleton, config, 5);
    if (sample.kind != AnnotationKind::full3d)
        return e;
    for (std::size_t k = 0; k < skeleton.num_parts(); ++k) {
        const Part& p = skeleton.part(k);
        if (!detail::endpoints_visible(sample.pose2d, p))
            continue;
        const double zp = sample.pose3d.coords(static_cast<Eigen::Index>(p.parent), 2);
        const double zc = sample.pose3d.coords(static_cast<Eigen::Index>(p.child), 2);
        const std::size_t bin = elevation_bin(zp, zc, part_length(sample.pose3d, skeleton, k));
        detail::stamp_joint(detail::layer(e, k, 2), sample.pose2d, p.parent, config);
        detail::stamp_joint(detail::layer(e, k, bin), sample.pose2d, p.child, config);
        detail::mark_part(e, k);
    }
    return e;
}

inline HemletEncoding encode_variant(const AnnotatedSample& sample, const Skeleton& skeleton,
                                     const CodecConfig& config, HemletVariant variant)
{
    switch (variant) {
    case HemletVariant::triplet: return encode_hemlets(sample, skeleton, config);
    case HemletVariant::two_state: return encode_2s(sample, skeleton, config);
    case HemletVariant::five_state: return encode_5s(sample, skeleton, config);
    }
    throw ValidationError("unknown variant");
}

/// One Gaussian per valid in-crop joint, (N, h, w).
inline Tensor encode_2d_heatmaps(const AnnotatedSample& sample, const Skeleton& skeleton, const CodecConfig& config)
{
    config.validate();
    if (sample.pose2d.size() != skeleton.num_joints())
        throw AnnotationError("sample " + sample.id + ": 2D pose has wrong joint count");
    Tensor maps({skeleton.num_joints(), config.height, config.width});
    for (std::size_t j = 0; j < skeleton.num_joints(); ++j)
        if (sample.pose2d.valid[j])
            detail::stamp_joint(maps.slice(j), sample.pose2d, j, config);
    return maps;
}

struct TrainingTarget {
    Tensor hemlets;    ///< (K, L, h, w)
    Tensor mask;       ///< (K, L) binary, the HEMlets loss mask
    Tensor heatmaps2d; ///< (N, h, w)
    Tensor coords3d;   ///< (N, 3) unit-cube targets; z is 0 when depth is absent
    Tensor valid2d;    ///< (N) 1 where the 2D joint is annotated
    int lambda_z = 0;  ///< 1 iff the sample carries full 3D ground truth
};

/// Assembles every supervision signal for one sample. x and y targets are
/// the annotated 2D locations; z is the root-relative depth mapped through
/// the frame's depth window.
inline TrainingTarget encode_targets(const AnnotatedSample& sample, const Skeleton& skeleton,
                                     const CodecConfig& config, HemletVariant variant = HemletVariant::triplet,
                                     const CoordFrame& frame = CoordFrame{})
{
    HemletEncoding hem = encode_variant(sample, skeleton, config, variant);
    TrainingTarget t;
    t.hemlets = std::move(hem.tensor);
    t.mask = std::move(hem.mask);
    t.heatmaps2d = encode_2d_heatmaps(sample, skeleton, config);
    const std::size_t n = skeleton.num_joints();
    t.coords3d = Tensor({n, 3});
    t.valid2d = Tensor({n});
    t.lambda_z = sample.kind == AnnotationKind::full3d ? 1 : 0;
    const std::size_t root = skeleton.root_index();
    for (std::size_t j = 0; j < n; ++j) {
        if (sample.pose2d.valid[j]) {
            t.coords3d.at({j, 0}) = sample.pose2d.coords(static_cast<Eigen::Index>(j), 0);
            t.coords3d.at({j, 1}) = sample.pose2d.coords(static_cast<Eigen::Index>(j), 1);
            t.valid2d[j] = 1.0;
        }
        if (t.lambda_z) {
            const double rel = sample.pose3d.coords(static_cast<Eigen::Index>(j), 2)
                - sample.pose3d.coords(static_cast<Eigen::Index>(root), 2);
            t.coords3d.at({j, 2}) = (rel / frame.depth_window()) + 0.5;
        }
    }
    return t;
}

// ------------------------------------------------------------------- decoder

struct DecodedHemlets {
    Pose2D pose;           ///< Joints covered by decoded parts; others invalid.
    OrdinalLabels ordinal; ///< nullopt for parts that carry no peak
};

namespace detail {

struct Peak {
    PixelIndex px;
    double value = -std::numeric_limits<double>::infinity();
};

inline Peak argmax(std::span<const double> grid, std::size_t width)
{
    Peak best;
    for (std::size_t v = 0; v < grid.size(); ++v)
        if (grid[v] > best.value)
            best = {{v / width, v % width}, grid[v]};
    return best;
}

/// Argmax of a zero layer after explaining away the modelled Gaussian of an
/// already-found peak within its truncation radius.
inline Peak argmax_suppressed(std::span<const double> grid, const PixelIndex& found, const CodecConfig& config)
{
    const double radius = config.truncation_radius * config.sigma;
    const double inv = 1.0 / (2.0 * config.sigma * config.sigma);
    Peak best;
    for (std::size_t v = 0; v < grid.size(); ++v) {
        const PixelIndex px{v / config.width, v % config.width};
        const double di = static_cast<double>(px.row) - static_cast<double>(found.row);
        const double dj = static_cast<double>(px.col) - static_cast<double>(found.col);
        const double d2 = di * di + dj * dj;
        double value = grid[v];
        if (d2 <= radius * radius && value <= std::exp(-d2 * inv) + config.suppression_tolerance)
            value = 0.0;
        if (value > best.value)
            best = {px, value};
    }
    return best;
}

inline double pixel_distance2(const PixelIndex& a, const PixelIndex& b)
{
    const double di = static_cast<double>(a.row) - static_cast<double>(b.row);
    const double dj = static_cast<double>(a.col) - static_cast<double>(b.col);
    return di * di + dj * dj;
}

} // namespace detail

/// Recovers 2D joints and ordinal labels from a (K, 3, h, w) triplet stack.
///
/// Per part the strongest zero-layer response is one endpoint. The child is
/// the strongest response among the negative layer, the positive layer and
/// the zero layer with that first peak suppressed; if none reaches
/// peak_threshold the child shares the first peak's pixel. When both
/// endpoints sit in the zero layer, the one nearer the already-decoded
/// parent location (walking the part tree from the root) is the parent.
inline DecodedHemlets decode_hemlets(const Tensor& tensor, const Skeleton& skeleton, const CodecConfig& config)
{
    if (tensor.rank() != 4 || tensor.dim(0) != skeleton.num_parts() || tensor.dim(1) != 3)
        throw ShapeMismatchError("decode_hemlets expects a (K, 3, h, w) tensor");
    for (double v : tensor.values())
        if (!std::isfinite(v))
            throw NumericError("decode_hemlets: non-finite tensor entry");
    CodecConfig cfg = config;
    cfg.height = tensor.dim(2);
    cfg.width = tensor.dim(3);
    const std::size_t hw = cfg.height * cfg.width;
    const std::size_t nparts = skeleton.num_parts();

    struct PartDecode {
        bool annotated = false;
        Polarity label = Polarity::zero;
        PixelIndex first;  // strongest zero-layer peak
        PixelIndex second; // the other endpoint
        bool ambiguous = false; // both endpoints in the zero layer at distinct pixels
    };
    std::vector<PartDecode> parts(nparts);

    for (std::size_t k = 0; k < nparts; ++k) {
        auto lay = [&](std::size_t l) {
            return std::span<const double>(tensor.values()).subspan((k * 3 + l) * hw, hw);
        };
        const auto zero = detail::argmax(lay(1), cfg.width);
        if (zero.value < cfg.peak_threshold)
            continue;
        const auto neg = detail::argmax(lay(0), cfg.width);
        const auto pos = detail::argmax(lay(2), cfg.width);
        const auto rest = detail::argmax_suppressed(lay(1), zero.px, cfg);

        PartDecode d;
        d.annotated = true;
        d.first = zero.px;
        d.second = zero.px;
        const detail::Peak* best = &neg;
        Polarity label = Polarity::negative;
        if (rest.value > best->value) {
            best = &rest;
            label = Polarity::zero;
        }
        if (pos.value > best->value) {
            best = &pos;
            label = Polarity::positive;
        }
        if (best->value >= cfg.peak_threshold) {
            d.label = label;
            d.second = best->px;
            d.ambiguous = label == Polarity::zero;
        }
        parts[k] = d;
    }

    DecodedHemlets out{Pose2D(skeleton.num_joints()), OrdinalLabels(nparts)};
    std::vector<std::optional<PixelIndex>> located(skeleton.num_joints());

    // Root: take it from any root part whose zero layer holds a single peak,
    // otherwise pick the candidate that best agrees across root parts.
    const std::size_t root = skeleton.root_index();
    std::vector<std::size_t> root_parts;
    for (std::size_t k = 0; k < nparts; ++k)
        if (skeleton.part(k).parent == root && parts[k].annotated)
            root_parts.push_back(k);
    for (std::size_t k : root_parts)
        if (!parts[k].ambiguous) {
            located[root] = parts[k].first;
            break;
        }
    if (!located[root] && !root_parts.empty()) {
        const auto& lead = parts[root_parts.front()];
        double best_cost = std::numeric_limits<double>::infinity();
        for (const PixelIndex& cand : {lead.first, lead.second}) {
            double cost = 0.0;
            for (std::size_t m = 1; m < root_parts.size(); ++m) {
                const auto& other = parts[root_parts[m]];
                cost += std::min(detail::pixel_distance2(cand, other.first), detail::pixel_distance2(cand, other.second));
            }
            if (cost < best_cost) {
                best_cost = cost;
                located[root] = cand;
            }
        }
    }

    for (std::size_t k : skeleton.parts_topological()) {
        const auto& d = parts[k];
        if (!d.annotated)
            continue;
        const Part& p = skeleton.part(k);
        PixelIndex parent_px = d.first;
        PixelIndex child_px = d.second;
        if (d.ambiguous && located[p.parent]
            && detail::pixel_distance2(d.second, *located[p.parent])
                < detail::pixel_distance2(d.first, *located[p.parent]))
            std::swap(parent_px, child_px);
        if (!located[p.parent])
            located[p.parent] = parent_px;
        located[p.child] = child_px;
        out.ordinal[k] = d.label;
    }

    for (std::size_t j = 0; j < skeleton.num_joints(); ++j)
        if (located[j])
            out.pose.set(j, pixel_center(*located[j], cfg.height, cfg.width));
    return out;
}

} // namespace hemlets
