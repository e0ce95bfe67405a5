#pragma once

#include <stdexcept>
#include <string>

namespace mclose {

// Base class for every error the library throws.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what_arg) : std::runtime_error(what_arg) {}
};

// Rejected model text; carries the 1-based line/column of the offending token.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, int line, int column)
        : Error("parse error at " + std::to_string(line) + ":" + std::to_string(column) +
                ": " + msg),
          line_(line),
          column_(column) {}

    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

// Structural model violations found after parsing (kind mismatches, realness, dimensions).
class ModelError : public Error {
public:
    using Error::Error;
};

// A product of two time-harmonic factors leaves the supported coefficient class.
class UnsupportedForcingError : public Error {
public:
    using Error::Error;
};

// Closure-rule construction failed; names the offending target moment.
class ClosureError : public Error {
public:
    ClosureError(const std::string& msg, std::string target)
        : Error(msg + " (target " + target + ")"), target_(std::move(target)) {}

    const std::string& target() const { return target_; }

private:
    std::string target_;
};

// Closed-system integration produced a non-finite value.
class DivergedError : public Error {
public:
    explicit DivergedError(double last_finite_time)
        : Error("integration diverged; last finite time t=" + std::to_string(last_finite_time)),
          last_finite_time_(last_finite_time) {}

    double last_finite_time() const { return last_finite_time_; }

private:
    double last_finite_time_;
};

// More than the tolerated share of Monte Carlo paths went non-finite.
class PathFailureError : public Error {
public:
    PathFailureError(long long failed, long long total)
        : Error("Monte Carlo aborted: " + std::to_string(failed) + " of " +
                std::to_string(total) + " paths became non-finite"),
          failed_(failed),
          total_(total) {}

    long long failed_paths() const { return failed_; }
    long long total_paths() const { return total_; }

private:
    long long failed_;
    long long total_;
};

// derivative_match_residual was given an extended system of insufficient order.
class ExtensionError : public Error {
public:
    using Error::Error;
};

}  // namespace mclose
