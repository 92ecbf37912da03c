#pragma once

#include <stdexcept>
#include <string>

namespace pglab {

// Exit codes used by the CLI; library exceptions map onto them.
enum class ExitCode : int {
    kOk = 0,
    kDiagnosticsFailed = 1,
    kIo = 2,
    kConfig = 3,
    kNumeric = 4,
};

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Non-finite value surfaced by a density or gradient evaluation; `term`
/// names the offending contribution ("likelihood" or "prior").
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& term, const std::string& detail)
        : std::runtime_error(term + ": " + detail), term(term) {}
    std::string term;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    ConfigError(int line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line(line) {}
    explicit ConfigError(const std::string& what) : std::runtime_error(what), line(0) {}
    int line;
};

}  // namespace pglab
