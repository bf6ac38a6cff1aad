#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ckoop {

// Process exit codes used by the command-line front end.
enum class ExitCode : int {
    Ok = 0,
    Config = 2,
    Numerical = 3,
    Io = 4,
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    [[nodiscard]] virtual ExitCode exit_code() const noexcept { return ExitCode::Numerical; }
};

// Bad arguments: dimension mismatches, out-of-range scalars, empty inputs.
class InputError : public Error {
public:
    using Error::Error;
    [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::Config; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::Config; }
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class SolverError : public Error {
public:
    using Error::Error;
};

class SynthesisError : public Error {
public:
    using Error::Error;
};

// Raised when an iterative fit diverges; carries the loss trace up to the failure.
class OptimizationError : public Error {
public:
    OptimizationError(const std::string& what, std::vector<double> trace)
        : Error(what), trace_(std::move(trace)) {}
    [[nodiscard]] const std::vector<double>& trace() const noexcept { return trace_; }

private:
    std::vector<double> trace_;
};

class IoError : public Error {
public:
    using Error::Error;
    [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::Io; }
};

}  // namespace ckoop
