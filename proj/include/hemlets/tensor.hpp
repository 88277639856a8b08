#pragma once

/// \file tensor.hpp
/// \brief Dense row-major tensor and the binary tensor file format.
///
/// Binary layout, all integers and reals little-endian:
///
///     offset  size     field
///     0       4        magic "HMLT"
///     4       4        uint32 version (= 1)
///     8       4        uint32 rank R (1..8)
///     12      4*R      uint32 dims, outermost first
///     12+4R   4*prod   float32 values, row-major
///
/// No padding, no trailing bytes. Readers reject anything else.

#include "hemlets/error.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace hemlets {

class Tensor {
public:
    using Shape = std::vector<std::size_t>;

    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape))
        , values_(element_count(shape_), fill)
    {
    }
    Tensor(Shape shape, std::vector<double> values)
        : shape_(std::move(shape))
        , values_(std::move(values))
    {
        if (values_.size() != element_count(shape_))
            throw ShapeMismatchError("tensor value count does not match its shape");
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return values_.size(); }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double* data() noexcept { return values_.data(); }
    const double* data() const noexcept { return values_.data(); }

    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    /// Flat offset of a multi-index; bounds-checked.
    std::size_t offset(std::initializer_list<std::size_t> index) const
    {
        if (index.size() != shape_.size())
            throw ShapeMismatchError("tensor index rank mismatch");
        std::size_t off = 0;
        std::size_t axis = 0;
        for (std::size_t i : index) {
            if (i >= shape_[axis])
                throw ShapeMismatchError("tensor index out of range");
            off = off * shape_[axis] + i;
            ++axis;
        }
        return off;
    }
    double& at(std::initializer_list<std::size_t> index) { return values_[offset(index)]; }
    double at(std::initializer_list<std::size_t> index) const { return values_[offset(index)]; }

    /// Contiguous block of a leading index, e.g. one heatmap out of a stack.
    std::span<double> slice(std::size_t leading)
    {
        const std::size_t stride = inner_size();
        return std::span<double>(values_).subspan(leading * stride, stride);
    }
    std::span<const double> slice(std::size_t leading) const
    {
        const std::size_t stride = inner_size();
        return std::span<const double>(values_).subspan(leading * stride, stride);
    }

    void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

    friend bool operator==(const Tensor&, const Tensor&) = default;

    static std::size_t element_count(const Shape& shape)
    {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }

private:
    std::size_t inner_size() const
    {
        if (shape_.empty())
            throw ShapeMismatchError("cannot slice a rank-0 tensor");
        return shape_[0] == 0 ? 0 : values_.size() / shape_[0];
    }

    Shape shape_;
    std::vector<double> values_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what)
{
    if (a.shape() != b.shape())
        throw ShapeMismatchError(std::string(what) + ": shape mismatch");
}

// ------------------------------------------------------------- binary format

inline constexpr std::array<char, 4> tensor_magic{'H', 'M', 'L', 'T'};
inline constexpr std::uint32_t tensor_format_version = 1;
inline constexpr std::size_t tensor_max_rank = 8;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v)
{
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is)
{
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw FormatError("tensor: truncated header");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

} // namespace detail

inline void write_tensor(std::ostream& os, const Tensor& t)
{
    if (t.rank() == 0 || t.rank() > tensor_max_rank)
        throw ValidationError("tensor: rank must be in 1..8");
    os.write(tensor_magic.data(), 4);
    detail::put_u32(os, tensor_format_version);
    detail::put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) {
        if (d > 0xffffffffu)
            throw ValidationError("tensor: dimension exceeds 32 bits");
        detail::put_u32(os, static_cast<std::uint32_t>(d));
    }
    for (double v : t.values())
        detail::put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    if (!os)
        throw IoError("tensor: write failed");
}

inline Tensor read_tensor(std::istream& is)
{
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), 4))
        throw FormatError("tensor: truncated header");
    if (magic != tensor_magic)
        throw FormatError("tensor: bad magic tag");
    if (detail::get_u32(is) != tensor_format_version)
        throw FormatError("tensor: unsupported version");
    const std::uint32_t rank = detail::get_u32(is);
    if (rank == 0 || rank > tensor_max_rank)
        throw FormatError("tensor: rank out of range");
    Tensor::Shape shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
        d = detail::get_u32(is);
        if (d != 0 && count > (std::size_t{1} << 40) / d)
            throw FormatError("tensor: element count too large");
        count *= d;
    }

    // Reject payloads that cannot be present before allocating for them.
    const auto here = is.tellg();
    if (here != std::streampos(-1)) {
        is.seekg(0, std::ios::end);
        const auto end = is.tellg();
        is.seekg(here);
        if (end - here < static_cast<std::streamoff>(4 * count))
            throw FormatError("tensor: truncated payload");
    }

    std::vector<double> values(count);
    for (auto& v : values) {
        unsigned char b[4];
        if (!is.read(reinterpret_cast<char*>(b), 4))
            throw FormatError("tensor: truncated payload");
        const std::uint32_t bits =
            std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
        v = static_cast<double>(std::bit_cast<float>(bits));
    }
    if (is.peek() != std::char_traits<char>::eof())
        throw FormatError("tensor: trailing bytes after payload");
    return Tensor(std::move(shape), std::move(values));
}

inline void save_tensor(const std::string& path, const Tensor& t)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open '" + path + "' for writing");
    write_tensor(os, t);
}

inline Tensor load_tensor(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open '" + path + "'");
    return read_tensor(is);
}

} // namespace hemlets
