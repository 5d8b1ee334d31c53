#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace oodseg {

// Base of every exception thrown by the library. `kind()` is a stable short
// token used by the CLI's single-line error output.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

// Operand shapes do not conform for an operation.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& message) : Error("shape", message) {}
};

// A value violates a documented domain or produced NaN/Inf.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& message) : Error("numeric", message) {}
};

// Invalid argument or object invariant (bad box, bad config, ...).
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& message) : Error("validation", message) {}
};

enum class ParseErrorKind {
    io,
    bad_magic,
    truncated,
    trailing_data,
    non_finite,
    invalid_value,
};

std::string_view to_string(ParseErrorKind kind) noexcept;

// File-format failures. Each failure mode has its own kind so callers and
// tests can tell a truncated file from a corrupt one.
class ParseError : public Error {
public:
    ParseError(ParseErrorKind kind, const std::string& path, const std::string& message)
        : Error(std::string("parse.").append(to_string(kind)), path + ": " + message),
          parse_kind_(kind),
          path_(path) {}

    ParseErrorKind parse_kind() const noexcept { return parse_kind_; }
    const std::string& path() const noexcept { return path_; }

private:
    ParseErrorKind parse_kind_;
    std::string path_;
};

inline std::string_view to_string(ParseErrorKind kind) noexcept {
    switch (kind) {
        case ParseErrorKind::io: return "io";
        case ParseErrorKind::bad_magic: return "bad_magic";
        case ParseErrorKind::truncated: return "truncated";
        case ParseErrorKind::trailing_data: return "trailing_data";
        case ParseErrorKind::non_finite: return "non_finite";
        case ParseErrorKind::invalid_value: return "invalid_value";
    }
    return "unknown";
}

}  // namespace oodseg
