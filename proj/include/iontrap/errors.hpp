#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace iontrap {

// Evaluation requested at or below the chip plane.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Bad input files, unknown names, inconsistent parameters.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Voltage outside the AWG output range.
class RangeError : public std::out_of_range {
public:
    RangeError(const std::string& msg, std::string channel)
        : std::out_of_range(msg), channel_(std::move(channel)) {}
    const std::string& channel() const noexcept { return channel_; }

private:
    std::string channel_;
};

// Stationary point with a non-positive Hessian eigenvalue.
class NotAMinimumError : public std::runtime_error {
public:
    NotAMinimumError(const std::string& msg, std::vector<double> eig)
        : std::runtime_error(msg), eigenvalues_(std::move(eig)) {}
    const std::vector<double>& eigenvalues() const noexcept { return eigenvalues_; }

private:
    std::vector<double> eigenvalues_;
};

// Iterative solver hit its iteration cap.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& msg, double residual)
        : std::runtime_error(msg), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

// Linear least-squares problem without a unique solution.
class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace iontrap
