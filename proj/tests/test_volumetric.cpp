#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace hemlets;

namespace {

/// Direct triple sum over voxels, exp without max subtraction.
Eigen::Vector3d brute_force_expectation(const Tensor& vol)
{
    const std::size_t d = vol.dim(0), h = vol.dim(1), w = vol.dim(2);
    double z = 0.0;
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (std::size_t k = 0; k < d; ++k)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const double e = std::exp(vol.at({k, i, j}));
                z += e;
                acc += e
                    * Eigen::Vector3d((j + 0.5) / static_cast<double>(w), (i + 0.5) / static_cast<double>(h),
                                      (k + 0.5) / static_cast<double>(d));
            }
    return acc / z;
}

Tensor random_volume(std::mt19937_64& rng, Tensor::Shape shape, double spread)
{
    std::uniform_real_distribution<double> u(-spread, spread);
    Tensor t(std::move(shape));
    for (double& v : t.values())
        v = u(rng);
    return t;
}

} // namespace

TEST(SoftArgmax, OneHotGivesVoxelCentre)
{
    Tensor vol({4, 5, 6}, -1e4);
    vol.at({3, 1, 4}) = 1e4;
    const Eigen::Vector3d c = soft_argmax(vol);
    EXPECT_DOUBLE_EQ(c.x(), 4.5 / 6.0);
    EXPECT_DOUBLE_EQ(c.y(), 1.5 / 5.0);
    EXPECT_DOUBLE_EQ(c.z(), 3.5 / 4.0);
}

TEST(SoftArgmax, UniformVolumeIsCentred)
{
    for (std::size_t n : {1u, 2u, 3u, 7u, 16u}) {
        const Eigen::Vector3d c = soft_argmax(Tensor({n, n + 1, n + 2}, 3.0));
        EXPECT_NEAR(c.x(), 0.5, 1e-14);
        EXPECT_NEAR(c.y(), 0.5, 1e-14);
        EXPECT_NEAR(c.z(), 0.5, 1e-14);
    }
}

TEST(SoftArgmax, MatchesBruteForce)
{
    std::mt19937_64 rng(9);
    for (int i = 0; i < 200; ++i) {
        const Tensor vol = random_volume(rng, {4, 4, 4}, 5.0);
        EXPECT_LT((soft_argmax(vol) - brute_force_expectation(vol)).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(SoftArgmax, StableForHugeScores)
{
    Tensor vol({3, 3, 3}, 1e300);
    vol.at({0, 0, 0}) = 1e300 + 1e290;
    const Eigen::Vector3d c = soft_argmax(vol);
    EXPECT_TRUE(c.allFinite());
    EXPECT_DOUBLE_EQ(c.x(), 0.5 / 3.0);
}

TEST(SoftArgmax, ShiftInvariant)
{
    std::mt19937_64 rng(10);
    const Tensor vol = random_volume(rng, {3, 4, 5}, 2.0);
    Tensor shifted = vol;
    for (double& v : shifted.values())
        v += 123.0;
    EXPECT_LT((soft_argmax(vol) - soft_argmax(shifted)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SoftArgmax, GradientMatchesFiniteDifferences)
{
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::size_t> side(1, 5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int c = 0; c < 100; ++c) {
        const Tensor vol = random_volume(rng, {side(rng), side(rng), side(rng)}, 3.0);
        const Eigen::Vector3d up(u(rng), u(rng), u(rng));
        const Tensor g = soft_argmax_gradient(vol, up);
        const double h = 1e-6;
        double diff = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < vol.size(); ++i) {
            Tensor a = vol, b = vol;
            a[i] += h;
            b[i] -= h;
            const double fd = (up.dot(brute_force_expectation(a)) - up.dot(brute_force_expectation(b))) / (2 * h);
            diff = std::max(diff, std::abs(fd - g[i]));
            scale = std::max({scale, std::abs(fd), std::abs(g[i])});
        }
        if (scale > 0.0)
            EXPECT_LT(diff / scale, 1e-4);
        else
            EXPECT_LT(diff, 1e-12);
    }
}

TEST(SoftArgmax, GradientSumsToZero)
{
    std::mt19937_64 rng(12);
    const Tensor vol = random_volume(rng, {4, 4, 4}, 2.0);
    const Tensor g = soft_argmax_gradient(vol, {1.0, -2.0, 0.5});
    double sum = 0.0;
    for (double v : g.values())
        sum += v;
    EXPECT_NEAR(sum, 0.0, 1e-14);
}

TEST(SoftArgmax, FloatInstantiationAgreesWithDouble)
{
    std::mt19937_64 rng(13);
    const Tensor vol = random_volume(rng, {4, 4, 4}, 2.0);
    const std::vector<float> scores(vol.values().begin(), vol.values().end());
    std::vector<double> pf(scores.size());
    volume_softmax<float>(scores, pf);
    std::vector<double> pd(vol.size());
    volume_softmax<double>(vol.values(), pd);
    for (std::size_t i = 0; i < pd.size(); ++i)
        EXPECT_NEAR(pf[i], pd[i], 1e-6);
}

TEST(SoftArgmax, RejectsBadShapes)
{
    EXPECT_THROW(soft_argmax(Tensor({4, 4})), ShapeMismatchError);
    EXPECT_THROW(soft_argmax(Tensor({0, 4, 4})), ShapeMismatchError);
}

TEST(CoordFrame, RoundTripsAndValidates)
{
    const CoordFrame f({-100.0, 50.0, 400.0, 200.0}, 2000.0, 4500.0);
    const Eigen::Vector3d n(0.25, 0.5, 0.75);
    const Eigen::Vector3d m = f.to_metric(n);
    EXPECT_DOUBLE_EQ(m.x(), 0.0);
    EXPECT_DOUBLE_EQ(m.y(), 150.0);
    EXPECT_DOUBLE_EQ(m.z(), 5000.0);
    EXPECT_LT((f.to_normalized(m) - n).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_THROW(CoordFrame({0, 0, 0, 1}, 1.0), ValidationError);
    EXPECT_THROW(CoordFrame({0, 0, 1, 1}, -1.0), ValidationError);
    EXPECT_THROW(CoordFrame({0, 0, 1, 1}, 1.0, std::nan("")), ValidationError);
}
