#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aptids {

enum class ErrorKind {
    io,
    parse,
    schema,
    data,
    model,
    config,
};

constexpr std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::io: return "io";
    case ErrorKind::parse: return "parse";
    case ErrorKind::schema: return "schema";
    case ErrorKind::data: return "data";
    case ErrorKind::model: return "model";
    case ErrorKind::config: return "config";
    }
    return "unknown";
}

// Every failure raised by the library carries a kind so the CLI can report
// it as a single structured line.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace aptids
