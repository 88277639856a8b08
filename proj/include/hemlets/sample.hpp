#pragma once

/// \file sample.hpp
/// \brief Annotated pose samples and their line-oriented text format.
///
/// One sample per line, whitespace separated, fields in this order:
///
///     id kind action
///     u_0 v_0 f_0 ... u_{N-1} v_{N-1} f_{N-1}          2D joints, f in {0,1}
///     x_0 y_0 z_0 g_0 ... x_{N-1} y_{N-1} z_{N-1} g_{N-1}  3D joints (mm), g in {0,1}
///     r_0 ... r_{K-1}                                  ordinal labels: -1, 0, 1 or ?
///
/// kind is one of `full3d`, `ordinal`, `2d`. Blank lines and lines starting
/// with `#` are ignored. N and K come from the skeleton used for reading.

#include "hemlets/error.hpp"
#include "hemlets/skeleton.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace hemlets {

/// Tri-state ordinal depth relation of a part's child relative to its parent.
enum class Polarity : int { negative = -1, zero = 0, positive = 1 };

inline int to_int(Polarity p) noexcept { return static_cast<int>(p); }

enum class AnnotationKind { full3d, ordinal_only, two_d_only };

inline const char* kind_token(AnnotationKind k) noexcept
{
    switch (k) {
    case AnnotationKind::full3d: return "full3d";
    case AnnotationKind::ordinal_only: return "ordinal";
    case AnnotationKind::two_d_only: return "2d";
    }
    return "?";
}

inline AnnotationKind parse_kind(std::string_view token)
{
    if (token == "full3d")
        return AnnotationKind::full3d;
    if (token == "ordinal")
        return AnnotationKind::ordinal_only;
    if (token == "2d")
        return AnnotationKind::two_d_only;
    throw FormatError("unknown annotation kind '" + std::string(token) + "'");
}

using OrdinalLabels = std::vector<std::optional<Polarity>>;

struct AnnotatedSample {
    std::string id = "0";
    AnnotationKind kind = AnnotationKind::two_d_only;
    std::string action = "-";
    Pose2D pose2d;
    Pose3D pose3d;
    OrdinalLabels ordinal; ///< Empty, or one entry per part.
};

/// Checks the sample against its annotation kind. Throws AnnotationError.
inline void validate_sample(const AnnotatedSample& s, const Skeleton& skeleton)
{
    const std::size_t n = skeleton.num_joints();
    if (s.pose2d.size() != n)
        throw AnnotationError("sample " + s.id + ": 2D pose has wrong joint count");
    if (!s.ordinal.empty() && s.ordinal.size() != skeleton.num_parts())
        throw AnnotationError("sample " + s.id + ": ordinal label count differs from part count");
    bool any_label = false;
    for (const auto& r : s.ordinal)
        any_label = any_label || r.has_value();

    switch (s.kind) {
    case AnnotationKind::full3d:
        if (s.pose3d.size() != n || !s.pose3d.fully_valid())
            throw AnnotationError("sample " + s.id + ": full3d sample without a complete 3D pose");
        for (Eigen::Index i = 0; i < s.pose3d.coords.size(); ++i)
            if (!std::isfinite(s.pose3d.coords.data()[i]))
                throw AnnotationError("sample " + s.id + ": non-finite 3D coordinate");
        break;
    case AnnotationKind::ordinal_only:
        if (!any_label)
            throw AnnotationError("sample " + s.id + ": ordinal sample without ordinal labels");
        break;
    case AnnotationKind::two_d_only:
        if (any_label)
            throw AnnotationError("sample " + s.id + ": 2d sample carries ordinal labels");
        for (bool v : s.pose3d.valid)
            if (v)
                throw AnnotationError("sample " + s.id + ": 2d sample carries 3D joints");
        break;
    }
    for (std::size_t j = 0; j < n; ++j)
        if (s.pose2d.valid[j] && !s.pose2d.joint(j).allFinite())
            throw AnnotationError("sample " + s.id + ": non-finite 2D coordinate");
}

// ---------------------------------------------------------------- text I/O

namespace detail {

inline void put_real(std::ostream& os, double v)
{
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    os.write(buf, res.ptr - buf);
}

inline double parse_real(std::string_view tok, std::size_t line_no)
{
    double v = 0.0;
    const char* first = tok.data();
    if (!tok.empty() && tok.front() == '+')
        ++first;
    auto res = std::from_chars(first, tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw FormatError("line " + std::to_string(line_no) + ": bad number '" + std::string(tok) + "'");
    return v;
}

inline bool parse_flag(std::string_view tok, std::size_t line_no)
{
    if (tok == "0")
        return false;
    if (tok == "1")
        return true;
    throw FormatError("line " + std::to_string(line_no) + ": bad validity flag '" + std::string(tok) + "'");
}

} // namespace detail

inline void write_sample(std::ostream& os, const AnnotatedSample& s, const Skeleton& skeleton)
{
    const std::size_t n = skeleton.num_joints();
    os << s.id << ' ' << kind_token(s.kind) << ' ' << s.action;
    for (std::size_t j = 0; j < n; ++j) {
        const bool v = j < s.pose2d.size() && s.pose2d.valid[j];
        const Eigen::Vector2d p = v ? s.pose2d.joint(j) : Eigen::Vector2d::Zero();
        os << ' ';
        detail::put_real(os, p.x());
        os << ' ';
        detail::put_real(os, p.y());
        os << ' ' << (v ? 1 : 0);
    }
    for (std::size_t j = 0; j < n; ++j) {
        const bool v = j < s.pose3d.size() && s.pose3d.valid[j];
        const Eigen::Vector3d p = v ? s.pose3d.joint(j) : Eigen::Vector3d::Zero();
        for (int a = 0; a < 3; ++a) {
            os << ' ';
            detail::put_real(os, p[a]);
        }
        os << ' ' << (v ? 1 : 0);
    }
    for (std::size_t k = 0; k < skeleton.num_parts(); ++k) {
        os << ' ';
        if (k < s.ordinal.size() && s.ordinal[k])
            os << to_int(*s.ordinal[k]);
        else
            os << '?';
    }
    os << '\n';
}

/// Parses one non-comment record. `line_no` only feeds error messages.
inline AnnotatedSample parse_sample(std::string_view line, const Skeleton& skeleton, std::size_t line_no = 0)
{
    std::vector<std::string_view> tok;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
            ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j])))
            ++j;
        if (j > i)
            tok.push_back(line.substr(i, j - i));
        i = j;
    }
    const std::size_t n = skeleton.num_joints();
    const std::size_t k = skeleton.num_parts();
    const std::size_t expected = 3 + 3 * n + 4 * n + k;
    if (tok.size() != expected)
        throw FormatError("line " + std::to_string(line_no) + ": expected " + std::to_string(expected)
                          + " fields, got " + std::to_string(tok.size()));

    AnnotatedSample s;
    s.id = std::string(tok[0]);
    s.kind = parse_kind(tok[1]);
    s.action = std::string(tok[2]);
    s.pose2d = Pose2D(n);
    s.pose3d = Pose3D(n);
    std::size_t t = 3;
    for (std::size_t j = 0; j < n; ++j, t += 3) {
        s.pose2d.coords(static_cast<Eigen::Index>(j), 0) = detail::parse_real(tok[t], line_no);
        s.pose2d.coords(static_cast<Eigen::Index>(j), 1) = detail::parse_real(tok[t + 1], line_no);
        s.pose2d.valid[j] = detail::parse_flag(tok[t + 2], line_no);
    }
    for (std::size_t j = 0; j < n; ++j, t += 4) {
        for (int a = 0; a < 3; ++a)
            s.pose3d.coords(static_cast<Eigen::Index>(j), a) = detail::parse_real(tok[t + a], line_no);
        s.pose3d.valid[j] = detail::parse_flag(tok[t + 3], line_no);
    }
    s.ordinal.assign(k, std::nullopt);
    bool any = false;
    for (std::size_t m = 0; m < k; ++m, ++t) {
        const auto r = tok[t];
        if (r == "?")
            continue;
        if (r == "-1")
            s.ordinal[m] = Polarity::negative;
        else if (r == "0")
            s.ordinal[m] = Polarity::zero;
        else if (r == "1" || r == "+1")
            s.ordinal[m] = Polarity::positive;
        else
            throw FormatError("line " + std::to_string(line_no) + ": bad ordinal label '" + std::string(r) + "'");
        any = true;
    }
    if (!any)
        s.ordinal.clear();
    return s;
}

inline std::vector<AnnotatedSample> read_samples(std::istream& is, const Skeleton& skeleton)
{
    std::vector<AnnotatedSample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#')
            continue;
        out.push_back(parse_sample(line, skeleton, line_no));
    }
    return out;
}

inline void write_samples(std::ostream& os, const std::vector<AnnotatedSample>& samples, const Skeleton& skeleton)
{
    os << "# hemlets samples v1: id kind action, N x (u v valid), N x (x y z valid), K x ordinal\n";
    for (const auto& s : samples)
        write_sample(os, s, skeleton);
}

inline std::vector<AnnotatedSample> load_samples(const std::string& path, const Skeleton& skeleton)
{
    std::ifstream is(path);
    if (!is)
        throw IoError("cannot open '" + path + "'");
    return read_samples(is, skeleton);
}

inline void save_samples(const std::string& path, const std::vector<AnnotatedSample>& samples,
                         const Skeleton& skeleton)
{
    std::ofstream os(path);
    if (!os)
        throw IoError("cannot open '" + path + "' for writing");
    write_samples(os, samples, skeleton);
    if (!os)
        throw IoError("write to '" + path + "' failed");
}

} // namespace hemlets
