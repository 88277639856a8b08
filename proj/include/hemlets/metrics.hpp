#pragma once

/// \file metrics.hpp
/// \brief Pose evaluation: MPJPE, Procrustes-aligned MPJPE, 3DPCK and AUC.
///
/// Errors are measured over the evaluated joints: every joint valid in both
/// poses except the root, whose error is zero after root alignment.
/// A joint counts as correct for PCK when its error is <= the threshold.

#include "hemlets/error.hpp"
#include "hemlets/skeleton.hpp"

#include <Eigen/Core>
#include <Eigen/SVD>

#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace hemlets {

inline constexpr double default_pck_threshold_mm = 150.0;

struct SimilarityTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    double scale = 1.0;
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return scale * (rotation * p) + translation; }

    Pose3D apply(const Pose3D& pose) const
    {
        Pose3D out = pose;
        for (std::size_t j = 0; j < pose.size(); ++j)
            out.coords.row(static_cast<Eigen::Index>(j)) = apply(pose.joint(j)).transpose();
        return out;
    }
};

namespace detail {

inline void require_comparable(const Pose3D& pred, const Pose3D& gt)
{
    if (pred.size() != gt.size())
        throw ShapeMismatchError("poses have different joint counts");
}

inline std::vector<std::size_t> evaluated_joints(const Pose3D& pred, const Pose3D& gt, const Skeleton& skeleton)
{
    detail::require_comparable(pred, gt);
    std::vector<std::size_t> joints;
    for (std::size_t j = 0; j < gt.size(); ++j)
        if (j != skeleton.root_index() && pred.valid[j] && gt.valid[j])
            joints.push_back(j);
    if (joints.empty())
        throw ValidationError("no evaluable joints");
    return joints;
}

/// Per-joint errors after root alignment, in evaluated-joint order.
inline std::vector<double> root_aligned_errors(const Pose3D& pred, const Pose3D& gt, const Skeleton& skeleton)
{
    const std::size_t root = skeleton.root_index();
    detail::require_comparable(pred, gt);
    if (root >= gt.size() || !pred.valid[root] || !gt.valid[root])
        throw InvalidJointError("root joint is not annotated");
    const Eigen::Vector3d pr = pred.joint(root);
    const Eigen::Vector3d gr = gt.joint(root);
    std::vector<double> err;
    for (std::size_t j : evaluated_joints(pred, gt, skeleton))
        err.push_back(((pred.joint(j) - pr) - (gt.joint(j) - gr)).norm());
    return err;
}

} // namespace detail

inline double mpjpe(const Pose3D& pred, const Pose3D& gt, const Skeleton& skeleton)
{
    const auto err = detail::root_aligned_errors(pred, gt, skeleton);
    double sum = 0.0;
    for (double e : err)
        sum += e;
    return sum / static_cast<double>(err.size());
}

/// Least-squares similarity (s, R, t) minimising sum |s R p_n + t - g_n|^2.
/// Columns of `pred` and `gt` are corresponding points. det(R) is forced to +1.
inline SimilarityTransform procrustes_align(const Eigen::Matrix3Xd& pred, const Eigen::Matrix3Xd& gt)
{
    if (pred.cols() != gt.cols())
        throw ShapeMismatchError("procrustes: point counts differ");
    const Eigen::Index n = pred.cols();
    if (n < 3)
        throw DegenerateError("procrustes: need at least 3 points");
    if (!pred.allFinite() || !gt.allFinite())
        throw NumericError("procrustes: non-finite coordinates");

    const Eigen::Vector3d mu_p = pred.rowwise().mean();
    const Eigen::Vector3d mu_g = gt.rowwise().mean();
    const Eigen::Matrix3Xd p = pred.colwise() - mu_p;
    const Eigen::Matrix3Xd g = gt.colwise() - mu_g;
    const double var_p = p.squaredNorm() / static_cast<double>(n);

    // Collinear or coincident source points leave the rotation undetermined.
    Eigen::JacobiSVD<Eigen::Matrix3d> spread(p * p.transpose());
    const auto sv = spread.singularValues();
    if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0))
        throw DegenerateError("procrustes: points are collinear or coincident");

    const Eigen::Matrix3d cov = g * p.transpose() / static_cast<double>(n);
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Vector3d d = Eigen::Vector3d::Ones();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0)
        d(2) = -1.0;

    SimilarityTransform t;
    t.rotation = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
    t.scale = svd.singularValues().dot(d) / var_p;
    t.translation = mu_g - t.scale * t.rotation * mu_p;
    if (!(t.scale > 0.0))
        throw DegenerateError("procrustes: non-positive scale");
    return t;
}

/// Alignment over every joint valid in both poses.
inline SimilarityTransform procrustes_align(const Pose3D& pred, const Pose3D& gt)
{
    detail::require_comparable(pred, gt);
    std::vector<std::size_t> joints;
    for (std::size_t j = 0; j < gt.size(); ++j)
        if (pred.valid[j] && gt.valid[j])
            joints.push_back(j);
    Eigen::Matrix3Xd p(3, static_cast<Eigen::Index>(joints.size()));
    Eigen::Matrix3Xd g(3, static_cast<Eigen::Index>(joints.size()));
    for (std::size_t c = 0; c < joints.size(); ++c) {
        p.col(static_cast<Eigen::Index>(c)) = pred.joint(joints[c]);
        g.col(static_cast<Eigen::Index>(c)) = gt.joint(joints[c]);
    }
    return procrustes_align(p, g);
}

inline double pa_mpjpe(const Pose3D& pred, const Pose3D& gt, const Skeleton& skeleton)
{
    const Pose3D aligned = procrustes_align(pred, gt).apply(pred);
    double sum = 0.0;
    const auto joints = detail::evaluated_joints(aligned, gt, skeleton);
    for (std::size_t j : joints)
        sum += (aligned.joint(j) - gt.joint(j)).norm();
    return sum / static_cast<double>(joints.size());
}

inline double pck3d(const Pose3D& pred, const Pose3D& gt, const Skeleton& skeleton,
                    double threshold_mm = default_pck_threshold_mm)
{
    const auto err = detail::root_aligned_errors(pred, gt, skeleton);
    std::size_t hit = 0;
    for (double e : err)
        hit += e <= threshold_mm ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(err.size());
}

/// Mean 3DPCK over thresholds 0, 5, ..., 150 mm.
inline double auc(const Pose3D& pred, const Pose3D& gt, const Skeleton& skeleton)
{
    const auto err = detail::root_aligned_errors(pred, gt, skeleton);
    double sum = 0.0;
    int buckets = 0;
    for (int t = 0; t <= 150; t += 5, ++buckets) {
        std::size_t hit = 0;
        for (double e : err)
            hit += e <= static_cast<double>(t) ? 1 : 0;
        sum += static_cast<double>(hit) / static_cast<double>(err.size());
    }
    return sum / buckets;
}

struct PoseMetrics {
    double mpjpe = 0.0;
    double pa_mpjpe = 0.0;
    double pck = 0.0;
    double auc = 0.0;
};

inline PoseMetrics evaluate_pose(const Pose3D& pred, const Pose3D& gt, const Skeleton& skeleton)
{
    return {mpjpe(pred, gt, skeleton), pa_mpjpe(pred, gt, skeleton), pck3d(pred, gt, skeleton),
            auc(pred, gt, skeleton)};
}

/// Running means keyed by action label, plus an overall row.
class MetricsTable {
public:
    void add(const std::string& action, const PoseMetrics& m)
    {
        rows_[action].add(m);
        overall_.add(m);
    }

    struct Row {
        std::size_t count = 0;
        PoseMetrics sum;

        void add(const PoseMetrics& m)
        {
            ++count;
            sum.mpjpe += m.mpjpe;
            sum.pa_mpjpe += m.pa_mpjpe;
            sum.pck += m.pck;
            sum.auc += m.auc;
        }
        PoseMetrics mean() const
        {
            const double c = count ? static_cast<double>(count) : 1.0;
            return {sum.mpjpe / c, sum.pa_mpjpe / c, sum.pck / c, sum.auc / c};
        }
    };

    const std::map<std::string, Row>& rows() const noexcept { return rows_; }
    const Row& overall() const noexcept { return overall_; }

    /// `action count mpjpe pa_mpjpe pck150 auc`, one row per action then `all`.
    void write(std::ostream& os) const
    {
        os << "action count mpjpe_mm pa_mpjpe_mm pck150 auc\n";
        const auto old_flags = os.flags();
        const auto old_prec = os.precision();
        os << std::fixed << std::setprecision(4);
        auto line = [&](const std::string& name, const Row& r) {
            const auto m = r.mean();
            os << name << ' ' << r.count << ' ' << m.mpjpe << ' ' << m.pa_mpjpe << ' ' << m.pck << ' ' << m.auc
               << '\n';
        };
        for (const auto& [name, r] : rows_)
            line(name, r);
        line("all", overall_);
        os.flags(old_flags);
        os.precision(old_prec);
    }

private:
    std::map<std::string, Row> rows_;
    Row overall_;
};

} // namespace hemlets
