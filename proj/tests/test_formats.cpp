#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <sstream>

using namespace hemlets;

namespace {

std::string le32(std::uint32_t v)
{
    std::string s(4, '\0');
    for (int i = 0; i < 4; ++i)
        s[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xff);
    return s;
}

std::string f32(float f)
{
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    return le32(bits);
}

Tensor read_bytes(const std::string& bytes)
{
    std::istringstream is(bytes);
    return read_tensor(is);
}

} // namespace

TEST(TensorFormat, BytesMatchHandAssembledLayout)
{
    Tensor t({2, 3}, {0.0, 1.0, -2.5, 0.125, 3.0, 1e-3});
    std::ostringstream os;
    write_tensor(os, t);
    std::string expected = "HMLT" + le32(1) + le32(2) + le32(2) + le32(3);
    for (double v : t.values())
        expected += f32(static_cast<float>(v));
    EXPECT_EQ(os.str(), expected);
}

TEST(TensorFormat, RoundTripIsExactForFloatValues)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(-10.0f, 10.0f);
    Tensor t({2, 3, 4, 5});
    for (double& v : t.values())
        v = u(rng);
    std::stringstream ss;
    write_tensor(ss, t);
    EXPECT_EQ(read_tensor(ss), t);
}

TEST(TensorFormat, RejectsMalformedStreams)
{
    const std::string good = "HMLT" + le32(1) + le32(1) + le32(2) + f32(1.0f) + f32(2.0f);
    EXPECT_NO_THROW(read_bytes(good));
    EXPECT_THROW(read_bytes("HMLX" + good.substr(4)), FormatError);
    EXPECT_THROW(read_bytes("HMLT" + le32(2) + good.substr(8)), FormatError);
    EXPECT_THROW(read_bytes("HMLT" + le32(1) + le32(0)), FormatError);
    EXPECT_THROW(read_bytes("HMLT" + le32(1) + le32(9)), FormatError);
    EXPECT_THROW(read_bytes(good.substr(0, good.size() - 1)), FormatError);
    EXPECT_THROW(read_bytes(good + "x"), FormatError);
    EXPECT_THROW(read_bytes("HM"), FormatError);
    // Claims 2^32-1 elements with no payload: rejected without allocating.
    EXPECT_THROW(read_bytes("HMLT" + le32(1) + le32(1) + le32(0xffffffffu)), FormatError);
    EXPECT_THROW(read_bytes("HMLT" + le32(1) + le32(3) + le32(0xffffffffu) + le32(0xffffffffu) + le32(2)),
                 FormatError);
}

TEST(TensorFormat, WriterRejectsRankZero)
{
    std::ostringstream os;
    EXPECT_THROW(write_tensor(os, Tensor(Tensor::Shape{})), ValidationError);
}

TEST(TensorFormat, FileHelpers)
{
    const std::string dir = support::scratch_dir("formats");
    Tensor t({3}, {1.0, 2.0, 3.0});
    save_tensor(dir + "/t.bin", t);
    EXPECT_EQ(load_tensor(dir + "/t.bin"), t);
    EXPECT_THROW(load_tensor(dir + "/missing.bin"), IoError);
}

TEST(Tensor, IndexingAndSlices)
{
    Tensor t({2, 3, 4});
    t.at({1, 2, 3}) = 7.0;
    EXPECT_EQ(t.offset({1, 2, 3}), 23u);
    EXPECT_EQ(t[23], 7.0);
    EXPECT_EQ(t.slice(1).size(), 12u);
    EXPECT_EQ(t.slice(1)[11], 7.0);
    EXPECT_THROW(t.at({2, 0, 0}), ShapeMismatchError);
    EXPECT_THROW(t.at({0, 0}), ShapeMismatchError);
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), ShapeMismatchError);
}

TEST(SampleFormat, RoundTripsEveryKind)
{
    const Skeleton& sk = canonical_skeleton();
    SynthConfig sc;
    sc.full3d_fraction = 0.4;
    sc.ordinal_fraction = 0.3;
    std::vector<AnnotatedSample> samples;
    for (auto& s : synth_dataset(11, 60, sk, sc))
        samples.push_back(s.sample);
    samples[0].pose2d.valid[5] = false;
    samples[0].pose2d.coords.row(5).setZero();

    std::stringstream ss;
    write_samples(ss, samples, sk);
    const auto back = read_samples(ss, sk);
    ASSERT_EQ(back.size(), samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        EXPECT_EQ(back[i].id, samples[i].id);
        EXPECT_EQ(back[i].kind, samples[i].kind);
        EXPECT_EQ(back[i].action, samples[i].action);
        EXPECT_EQ(back[i].pose2d.valid, samples[i].pose2d.valid);
        EXPECT_EQ(back[i].pose2d.coords, samples[i].pose2d.coords); // shortest round-trip formatting
        EXPECT_EQ(back[i].pose3d.valid, samples[i].pose3d.valid);
        EXPECT_EQ(back[i].pose3d.coords, samples[i].pose3d.coords);
        EXPECT_EQ(back[i].ordinal, samples[i].ordinal);
        EXPECT_NO_THROW(validate_sample(back[i], sk));
    }
}

TEST(SampleFormat, RejectsMalformedLines)
{
    const Skeleton& sk = canonical_skeleton();
    const auto s = support::full3d_samples(2, 1).front();
    std::ostringstream os;
    write_sample(os, s, sk);
    std::string line = os.str();
    line.pop_back();
    EXPECT_NO_THROW(parse_sample(line, sk));
    EXPECT_THROW(parse_sample(line + " 1", sk), FormatError);
    EXPECT_THROW(parse_sample(line.substr(0, line.rfind(' ')), sk), FormatError);
    EXPECT_THROW(parse_sample(line.substr(0, line.rfind(' ')) + " 2", sk), FormatError);
    std::string bad_kind = line;
    bad_kind.replace(bad_kind.find("full3d"), 6, "full4d");
    EXPECT_THROW(parse_sample(bad_kind, sk), FormatError);
    std::string bad_number = line;
    bad_number.replace(bad_number.find(" synth ") + 7, 1, "x");
    EXPECT_THROW(parse_sample(bad_number, sk), FormatError);
}

TEST(SampleFormat, ValidationMatchesAnnotationKind)
{
    const Skeleton& sk = canonical_skeleton();
    auto s = support::full3d_samples(4, 1).front();
    EXPECT_NO_THROW(validate_sample(s, sk));

    auto missing3d = s;
    missing3d.pose3d.valid[3] = false;
    EXPECT_THROW(validate_sample(missing3d, sk), AnnotationError);

    auto ordinal = s;
    ordinal.kind = AnnotationKind::ordinal_only;
    ordinal.ordinal.clear();
    EXPECT_THROW(validate_sample(ordinal, sk), AnnotationError);

    auto two_d = s;
    two_d.kind = AnnotationKind::two_d_only;
    two_d.ordinal.clear();
    EXPECT_THROW(validate_sample(two_d, sk), AnnotationError); // still carries 3D
    two_d.pose3d = Pose3D(sk.num_joints());
    EXPECT_NO_THROW(validate_sample(two_d, sk));

    auto short_labels = s;
    short_labels.ordinal.resize(3);
    EXPECT_THROW(validate_sample(short_labels, sk), AnnotationError);

    auto nan2d = s;
    nan2d.pose2d.coords(0, 0) = std::nan("");
    EXPECT_THROW(validate_sample(nan2d, sk), AnnotationError);
}

TEST(ConfigFile, ParsesTypedValues)
{
    std::istringstream is("# demo\nsteps = 12\nalpha=0.25  # weight\nname = abc\nflag = yes\nlist = a, b ,c\n\n");
    const auto kv = KeyValueConfig::parse(is);
    EXPECT_EQ(kv.get<std::size_t>("steps", 0), 12u);
    EXPECT_DOUBLE_EQ(kv.get<double>("alpha", 0.0), 0.25);
    EXPECT_EQ(kv.get<std::string>("name", ""), "abc");
    EXPECT_TRUE(kv.get<bool>("flag", false));
    EXPECT_EQ(kv.get_list("list", {}), (std::vector<std::string>{"a", "b", "c"}));
    EXPECT_EQ(kv.get<int>("absent", 5), 5);
    EXPECT_NO_THROW(kv.reject_unused());
}

TEST(ConfigFile, RejectsBadInput)
{
    std::istringstream dup("a = 1\na = 2\n");
    EXPECT_THROW(KeyValueConfig::parse(dup), FormatError);
    std::istringstream noeq("just words\n");
    EXPECT_THROW(KeyValueConfig::parse(noeq), FormatError);
    std::istringstream num("n = 1x\nunused = 3\n");
    const auto kv = KeyValueConfig::parse(num);
    EXPECT_THROW(kv.get<int>("n", 0), FormatError);
    EXPECT_THROW(kv.reject_unused(), ValidationError);
    EXPECT_THROW(KeyValueConfig::load("/nonexistent/config"), IoError);
}
