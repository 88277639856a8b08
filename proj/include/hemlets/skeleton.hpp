#pragma once

/// \file skeleton.hpp
/// \brief Joint roster, kinematic parts and pose containers.
///
/// Canonical joint order (index: name). Every index used anywhere in the
/// library flows from this table.
///
///     0 pelvis (root)   6 l_ankle    12 l_shoulder
///     1 r_hip           7 spine      13 l_elbow
///     2 r_knee          8 thorax     14 l_wrist
///     3 r_ankle         9 neck       15 r_shoulder
///     4 l_hip          10 head       16 r_elbow
///     5 l_knee         11 head_top   17 r_wrist
///
/// The 14 parts form a tree rooted at the pelvis that spans 15 joints;
/// spine, neck and head_top are carried in poses and heatmaps but belong
/// to no part.

#include "hemlets/error.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace hemlets {

struct Part {
    std::size_t parent = 0;
    std::size_t child = 0;

    friend bool operator==(const Part&, const Part&) = default;
};

class Skeleton {
public:
    Skeleton() = default;

    /// Builds and validates a skeleton. Throws ValidationError on bad tables.
    Skeleton(std::vector<std::string> joint_names, std::vector<Part> parts,
             std::vector<std::pair<std::size_t, std::size_t>> flip_pairs, std::size_t root_index)
        : joint_names_(std::move(joint_names))
        , parts_(std::move(parts))
        , flip_pairs_(std::move(flip_pairs))
        , root_index_(root_index)
    {
        validate_and_index();
    }

    std::size_t num_joints() const noexcept { return joint_names_.size(); }
    std::size_t num_parts() const noexcept { return parts_.size(); }
    std::size_t root_index() const noexcept { return root_index_; }

    const std::vector<std::string>& joint_names() const noexcept { return joint_names_; }
    const std::vector<Part>& parts() const noexcept { return parts_; }
    const Part& part(std::size_t k) const { return parts_.at(k); }
    const std::vector<std::pair<std::size_t, std::size_t>>& flip_pairs() const noexcept { return flip_pairs_; }

    /// Mirror partner of a joint (itself for central joints).
    std::size_t flip_joint(std::size_t j) const { return joint_flip_.at(j); }

    /// Part whose endpoints are the mirrored endpoints of part k.
    std::size_t flip_part(std::size_t k) const { return part_flip_.at(k); }

    /// Parts ordered so that each part's parent joint is the root or the
    /// child of an earlier part.
    const std::vector<std::size_t>& parts_topological() const noexcept { return topo_; }

    /// Part whose child is joint j, or num_parts() when none.
    std::size_t part_ending_at(std::size_t j) const { return part_of_child_.at(j); }

    bool joint_in_parts(std::size_t j) const { return in_parts_.at(j) != 0; }

    std::size_t joint_index(const std::string& name) const
    {
        for (std::size_t j = 0; j < joint_names_.size(); ++j)
            if (joint_names_[j] == name)
                return j;
        throw ValidationError("unknown joint name '" + name + "'");
    }

    friend bool operator==(const Skeleton& a, const Skeleton& b)
    {
        return a.joint_names_ == b.joint_names_ && a.parts_ == b.parts_ && a.flip_pairs_ == b.flip_pairs_
            && a.root_index_ == b.root_index_;
    }

private:
    void validate_and_index()
    {
        const std::size_t n = joint_names_.size();
        if (n == 0)
            throw ValidationError("skeleton has no joints");
        if (root_index_ >= n)
            throw ValidationError("root index out of range");

        joint_flip_.resize(n);
        for (std::size_t j = 0; j < n; ++j)
            joint_flip_[j] = j;
        for (auto [l, r] : flip_pairs_) {
            if (l >= n || r >= n || l == r)
                throw ValidationError("flip pair references invalid joints");
            if (joint_flip_[l] != l || joint_flip_[r] != r)
                throw ValidationError("joint appears in more than one flip pair");
            joint_flip_[l] = r;
            joint_flip_[r] = l;
        }

        part_of_child_.assign(n, parts_.size());
        in_parts_.assign(n, 0);
        for (std::size_t k = 0; k < parts_.size(); ++k) {
            const auto& p = parts_[k];
            if (p.parent >= n || p.child >= n)
                throw ValidationError("part " + std::to_string(k) + " references an invalid joint");
            if (p.parent == p.child)
                throw ValidationError("part " + std::to_string(k) + " has identical endpoints");
            if (p.child == root_index_)
                throw ValidationError("root joint cannot be a part child");
            if (part_of_child_[p.child] != parts_.size())
                throw ValidationError("joint " + std::to_string(p.child) + " is the child of two parts");
            part_of_child_[p.child] = k;
            in_parts_[p.parent] = in_parts_[p.child] = 1;
        }

        // Breadth-first walk from the root; every part must be reached exactly once.
        topo_.clear();
        std::vector<char> reached(n, 0);
        std::queue<std::size_t> frontier;
        frontier.push(root_index_);
        reached[root_index_] = 1;
        while (!frontier.empty()) {
            const std::size_t j = frontier.front();
            frontier.pop();
            for (std::size_t k = 0; k < parts_.size(); ++k) {
                if (parts_[k].parent != j)
                    continue;
                if (reached[parts_[k].child])
                    throw ValidationError("part graph contains a cycle");
                reached[parts_[k].child] = 1;
                topo_.push_back(k);
                frontier.push(parts_[k].child);
            }
        }
        if (topo_.size() != parts_.size())
            throw ValidationError("part graph is not connected to the root");

        part_flip_.resize(parts_.size());
        for (std::size_t k = 0; k < parts_.size(); ++k) {
            const Part mirrored{joint_flip_[parts_[k].parent], joint_flip_[parts_[k].child]};
            std::size_t found = parts_.size();
            for (std::size_t m = 0; m < parts_.size(); ++m)
                if (parts_[m] == mirrored)
                    found = m;
            if (found == parts_.size())
                throw ValidationError("part " + std::to_string(k) + " has no mirrored counterpart");
            part_flip_[k] = found;
        }
    }

    std::vector<std::string> joint_names_;
    std::vector<Part> parts_;
    std::vector<std::pair<std::size_t, std::size_t>> flip_pairs_;
    std::size_t root_index_ = 0;

    std::vector<std::size_t> joint_flip_;
    std::vector<std::size_t> part_flip_;
    std::vector<std::size_t> topo_;
    std::vector<std::size_t> part_of_child_;
    std::vector<char> in_parts_;
};

inline const Skeleton& canonical_skeleton()
{
    static const Skeleton skeleton{
        {"pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle", "spine", "thorax", "neck", "head",
         "head_top", "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist"},
        {
            {0, 1}, {1, 2}, {2, 3},         // right leg
            {0, 4}, {4, 5}, {5, 6},         // left leg
            {0, 8}, {8, 10},                // torso, neck-head
            {8, 12}, {12, 13}, {13, 14},    // left arm
            {8, 15}, {15, 16}, {16, 17},    // right arm
        },
        {{1, 4}, {2, 5}, {3, 6}, {12, 15}, {13, 16}, {14, 17}},
        0};
    return skeleton;
}

/// Root-relative joint positions in millimetres. Axes: x right, y down,
/// z away from the camera.
struct Pose3D {
    Eigen::MatrixX3d coords;
    std::vector<bool> valid;

    Pose3D() = default;
    explicit Pose3D(std::size_t n)
        : coords(Eigen::MatrixX3d::Zero(static_cast<Eigen::Index>(n), 3))
        , valid(n, false)
    {
    }

    std::size_t size() const noexcept { return valid.size(); }
    Eigen::Vector3d joint(std::size_t j) const { return coords.row(static_cast<Eigen::Index>(j)).transpose(); }
    void set(std::size_t j, const Eigen::Vector3d& p)
    {
        coords.row(static_cast<Eigen::Index>(j)) = p.transpose();
        valid[j] = true;
    }
    bool fully_valid() const
    {
        for (bool v : valid)
            if (!v)
                return false;
        return !valid.empty();
    }
};

/// Joint positions in normalized crop coordinates, [0,1] on both axes.
struct Pose2D {
    Eigen::MatrixX2d coords;
    std::vector<bool> valid;

    Pose2D() = default;
    explicit Pose2D(std::size_t n)
        : coords(Eigen::MatrixX2d::Zero(static_cast<Eigen::Index>(n), 2))
        , valid(n, false)
    {
    }

    std::size_t size() const noexcept { return valid.size(); }
    Eigen::Vector2d joint(std::size_t j) const { return coords.row(static_cast<Eigen::Index>(j)).transpose(); }
    void set(std::size_t j, const Eigen::Vector2d& p)
    {
        coords.row(static_cast<Eigen::Index>(j)) = p.transpose();
        valid[j] = true;
    }
    bool in_crop(std::size_t j) const
    {
        const auto p = joint(j);
        return valid[j] && p.x() >= 0.0 && p.x() <= 1.0 && p.y() >= 0.0 && p.y() <= 1.0;
    }
};

/// Euclidean length of part k in millimetres.
inline double part_length(const Pose3D& pose, const Skeleton& skeleton, std::size_t k)
{
    const Part& p = skeleton.part(k);
    if (p.parent >= pose.size() || p.child >= pose.size() || !pose.valid[p.parent] || !pose.valid[p.child])
        throw InvalidJointError("part " + std::to_string(k) + " has an unannotated endpoint");
    return (pose.joint(p.parent) - pose.joint(p.child)).norm();
}

// ---------------------------------------------------------------- text format
//
//     skeleton 1
//     joints <N>
//     joint <index> <name>        (N lines)
//     parts <K>
//     part <index> <parent> <child>   (K lines)
//     flips <F>
//     flip <left> <right>         (F lines)
//     root <index>

inline void write_skeleton(std::ostream& os, const Skeleton& s)
{
    os << "skeleton 1\n";
    os << "joints " << s.num_joints() << '\n';
    for (std::size_t j = 0; j < s.num_joints(); ++j)
        os << "joint " << j << ' ' << s.joint_names()[j] << '\n';
    os << "parts " << s.num_parts() << '\n';
    for (std::size_t k = 0; k < s.num_parts(); ++k)
        os << "part " << k << ' ' << s.part(k).parent << ' ' << s.part(k).child << '\n';
    os << "flips " << s.flip_pairs().size() << '\n';
    for (auto [l, r] : s.flip_pairs())
        os << "flip " << l << ' ' << r << '\n';
    os << "root " << s.root_index() << '\n';
}

inline Skeleton read_skeleton(std::istream& is)
{
    std::string line;
    auto next = [&](const std::string& keyword) {
        while (std::getline(is, line)) {
            if (line.empty() || line[0] == '#')
                continue;
            std::istringstream ss(line);
            std::string kw;
            ss >> kw;
            if (kw != keyword)
                throw FormatError("skeleton: expected '" + keyword + "', got '" + kw + "'");
            std::string rest;
            std::getline(ss, rest);
            return rest;
        }
        throw FormatError("skeleton: unexpected end of input, expected '" + keyword + "'");
    };
    auto read_count = [&](const std::string& keyword) {
        std::istringstream ss(next(keyword));
        long long n = -1;
        if (!(ss >> n) || n < 0)
            throw FormatError("skeleton: bad count for '" + keyword + "'");
        return static_cast<std::size_t>(n);
    };

    if (read_count("skeleton") != 1)
        throw FormatError("skeleton: unsupported version");
    std::vector<std::string> names(read_count("joints"));
    for (std::size_t j = 0; j < names.size(); ++j) {
        std::istringstream ss(next("joint"));
        std::size_t idx = 0;
        if (!(ss >> idx >> names[j]) || idx != j)
            throw FormatError("skeleton: bad joint record " + std::to_string(j));
    }
    std::vector<Part> parts(read_count("parts"));
    for (std::size_t k = 0; k < parts.size(); ++k) {
        std::istringstream ss(next("part"));
        std::size_t idx = 0;
        if (!(ss >> idx >> parts[k].parent >> parts[k].child) || idx != k)
            throw FormatError("skeleton: bad part record " + std::to_string(k));
    }
    std::vector<std::pair<std::size_t, std::size_t>> flips(read_count("flips"));
    for (auto& f : flips) {
        std::istringstream ss(next("flip"));
        if (!(ss >> f.first >> f.second))
            throw FormatError("skeleton: bad flip record");
    }
    const std::size_t root = read_count("root");
    return Skeleton(std::move(names), std::move(parts), std::move(flips), root);
}

} // namespace hemlets
