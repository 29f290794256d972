#pragma once

#include <stdexcept>
#include <string>

namespace triview {

// Error taxonomy. Everything thrown by the library derives from Error so
// callers can catch one type at the CLI boundary.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

struct ArgumentError : Error {
    explicit ArgumentError(const std::string& msg) : Error(msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct CheckpointError : Error {
    explicit CheckpointError(const std::string& msg) : Error(msg) {}
};

struct DegenerateInputError : Error {
    explicit DegenerateInputError(const std::string& msg) : Error(msg) {}
};

struct TrainingError : Error {
    explicit TrainingError(const std::string& msg) : Error(msg) {}
};

}  // namespace triview
