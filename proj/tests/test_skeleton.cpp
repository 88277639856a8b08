#include "test_support.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace hemlets;

TEST(Skeleton, CanonicalShape)
{
    const Skeleton& s = canonical_skeleton();
    EXPECT_EQ(s.num_joints(), 18u);
    EXPECT_EQ(s.num_parts(), 14u);
    EXPECT_EQ(s.root_index(), s.joint_index("pelvis"));
    EXPECT_THROW(s.joint_index("tail"), ValidationError);
}

TEST(Skeleton, PartTreeReachableFromRoot)
{
    const Skeleton& s = canonical_skeleton();
    // Independent traversal: repeatedly attach parts whose parent is reached.
    std::set<std::size_t> reached{s.root_index()};
    bool grew = true;
    while (grew) {
        grew = false;
        for (const Part& p : s.parts())
            if (reached.count(p.parent) && !reached.count(p.child)) {
                reached.insert(p.child);
                grew = true;
            }
    }
    std::set<std::size_t> touched;
    for (const Part& p : s.parts()) {
        touched.insert(p.parent);
        touched.insert(p.child);
    }
    EXPECT_EQ(reached, touched);
    // A tree over the touched joints has one edge fewer than it has nodes.
    EXPECT_EQ(touched.size(), s.num_parts() + 1);
    for (std::size_t j = 0; j < s.num_joints(); ++j)
        EXPECT_EQ(s.joint_in_parts(j), touched.count(j) == 1) << j;
}

TEST(Skeleton, TopologicalOrderVisitsParentsFirst)
{
    const Skeleton& s = canonical_skeleton();
    const auto& order = s.parts_topological();
    ASSERT_EQ(order.size(), s.num_parts());
    std::set<std::size_t> seen{s.root_index()};
    for (std::size_t k : order) {
        EXPECT_TRUE(seen.count(s.part(k).parent)) << "part " << k;
        seen.insert(s.part(k).child);
    }
}

TEST(Skeleton, FlipIsAnInvolutionOnJointsAndParts)
{
    const Skeleton& s = canonical_skeleton();
    for (std::size_t j = 0; j < s.num_joints(); ++j)
        EXPECT_EQ(s.flip_joint(s.flip_joint(j)), j);
    EXPECT_EQ(s.flip_joint(s.joint_index("l_wrist")), s.joint_index("r_wrist"));
    EXPECT_EQ(s.flip_joint(s.joint_index("head")), s.joint_index("head"));
    for (std::size_t k = 0; k < s.num_parts(); ++k) {
        const std::size_t m = s.flip_part(k);
        EXPECT_EQ(s.flip_part(m), k);
        EXPECT_EQ(s.part(m).parent, s.flip_joint(s.part(k).parent));
        EXPECT_EQ(s.part(m).child, s.flip_joint(s.part(k).child));
    }
}

TEST(Skeleton, PartEndingAt)
{
    const Skeleton& s = canonical_skeleton();
    for (std::size_t k = 0; k < s.num_parts(); ++k)
        EXPECT_EQ(s.part_ending_at(s.part(k).child), k);
}

TEST(Skeleton, RejectsMalformedGraphs)
{
    const std::vector<std::string> names{"a", "b", "c", "d"};
    EXPECT_NO_THROW(Skeleton(names, {{0, 1}, {1, 2}, {1, 3}}, {{2, 3}}, 0));
    EXPECT_THROW(Skeleton(names, {{0, 1}, {1, 2}, {2, 1}}, {}, 0), ValidationError);    // child of two parts
    EXPECT_THROW(Skeleton(names, {{0, 1}, {1, 0}}, {}, 0), ValidationError);            // root as child
    EXPECT_THROW(Skeleton(names, {{0, 1}, {2, 3}, {3, 2}}, {}, 0), ValidationError);    // cycle off the root
    EXPECT_THROW(Skeleton(names, {{0, 1}, {2, 3}}, {}, 0), ValidationError);            // disconnected part
    EXPECT_THROW(Skeleton(names, {{0, 0}}, {}, 0), ValidationError);                    // self loop
    EXPECT_THROW(Skeleton(names, {{0, 7}}, {}, 0), ValidationError);                    // bad index
    EXPECT_THROW(Skeleton(names, {{0, 1}}, {{1, 1}}, 0), ValidationError);              // bad flip
    EXPECT_THROW(Skeleton(names, {{0, 1}}, {{1, 2}, {2, 3}}, 0), ValidationError);      // joint flipped twice
    EXPECT_THROW(Skeleton(names, {{0, 1}, {1, 2}}, {{1, 2}}, 0), ValidationError);      // flip breaks part set
    EXPECT_THROW(Skeleton({}, {}, {}, 0), ValidationError);
}

TEST(Skeleton, PartLengthNeedsBothEndpoints)
{
    const Skeleton& s = canonical_skeleton();
    Pose3D pose(s.num_joints());
    pose.set(0, {0, 0, 0});
    pose.set(1, {3, 4, 0});
    EXPECT_DOUBLE_EQ(part_length(pose, s, 0), 5.0);
    EXPECT_THROW(part_length(pose, s, 1), InvalidJointError);
}

TEST(Skeleton, TextRoundTrip)
{
    std::stringstream ss;
    write_skeleton(ss, canonical_skeleton());
    EXPECT_EQ(read_skeleton(ss), canonical_skeleton());
}

TEST(Skeleton, TextRejectsGarbage)
{
    std::stringstream bad("skeleton 1\njoints 2\njoint 0 a\nparts 0\n");
    EXPECT_THROW(read_skeleton(bad), FormatError);
    std::stringstream version("skeleton 2\n");
    EXPECT_THROW(read_skeleton(version), FormatError);
}
