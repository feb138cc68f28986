#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fluxjump {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. `line` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// A text was looked up in an embedding store or category map that does not hold it.
class MissingEntry : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class HttpError : public Error {
public:
    HttpError(int status, const std::string& what) : Error(what), status_(status) {}

    int status() const noexcept { return status_; }
    bool retriable() const noexcept { return status_ == 0 || status_ == 429 || status_ >= 500; }

private:
    int status_;
};

class AuthError : public Error {
public:
    using Error::Error;
};

class CalibrationError : public Error {
public:
    CalibrationError(const std::string& what, double best_tpr, double best_tnr)
        : Error(what), best_tpr_(best_tpr), best_tnr_(best_tnr) {}

    double best_tpr() const noexcept { return best_tpr_; }
    double best_tnr() const noexcept { return best_tnr_; }

private:
    double best_tpr_;
    double best_tnr_;
};

/// Pipeline stage failure; carries the stage name for the CLI exit path.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& cause)
        : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace fluxjump
