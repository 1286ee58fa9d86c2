#pragma once

#include <stdexcept>
#include <string>

namespace scoreperf {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : Error {
    size_t offset = 0;
    explicit ParseError(const std::string& msg, size_t off = 0)
        : Error(msg + (off ? " (at byte " + std::to_string(off) + ")" : "")), offset(off) {}
};

struct DomainError : Error { using Error::Error; };
struct EmptySequence : Error { using Error::Error; };
struct EmptyReference : Error { using Error::Error; };
struct EncodeError : Error { using Error::Error; };
struct DecodeError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct StateError : Error { using Error::Error; };
struct IndexError : Error { using Error::Error; };
struct DegenerateBatch : Error { using Error::Error; };
struct DegenerateStatistics : Error { using Error::Error; };
struct DegenerateLabels : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

} // namespace scoreperf
