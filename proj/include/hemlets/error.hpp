#pragma once

/// \file error.hpp
/// \brief Exception taxonomy shared by the library and the command-line tool.

#include <stdexcept>
#include <string>

namespace hemlets {

/// Coarse error category. The numeric values double as process exit codes.
enum class ErrorCategory : int {
    format = 2,     ///< Malformed input file or record.
    validation = 3, ///< Well-formed input that violates a contract.
    numeric = 4,    ///< Non-finite values or divergence.
    io = 5,         ///< File could not be opened, read or written.
};

inline const char* category_name(ErrorCategory c) noexcept
{
    switch (c) {
    case ErrorCategory::format: return "format";
    case ErrorCategory::validation: return "validation";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what)
        , category_(category)
    {
    }

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

struct FormatError : Error {
    explicit FormatError(const std::string& what) : Error(ErrorCategory::format, what) {}
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& what) : Error(ErrorCategory::validation, what) {}
};

/// An operation needed a joint annotation that is missing.
struct InvalidJointError : ValidationError {
    explicit InvalidJointError(const std::string& what) : ValidationError(what) {}
};

/// A sample is inconsistent with its annotation kind.
struct AnnotationError : ValidationError {
    explicit AnnotationError(const std::string& what) : ValidationError(what) {}
};

struct ShapeMismatchError : ValidationError {
    explicit ShapeMismatchError(const std::string& what) : ValidationError(what) {}
};

/// Geometric configuration too degenerate for the requested fit.
struct DegenerateError : ValidationError {
    explicit DegenerateError(const std::string& what) : ValidationError(what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

} // namespace hemlets
