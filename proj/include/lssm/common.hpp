#pragma once

#include <stdexcept>
#include <string>

namespace lssm {

inline constexpr const char* kVersionString = "lssm 0.1.0";

/// Invalid numeric or structural parameter (bad r, dt <= 0, kmax out of band, ...).
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Non-finite data where finite values are required (corrupted state or input).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Operands live on different grids.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed or invalid configuration; message names the offending key.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// File format or I/O failure.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Too few samples for a statistical check.
struct SampleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A hypothesis required by the analysis does not hold for the given setup
/// (e.g. rho_infty >= nu*lambda1 with multiplicative noise).
struct AssumptionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Undefined statistic (zero averaging window, U = 0 ratios, ...).
struct StatisticsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Record stream does not cover the requested window contiguously.
struct WindowError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace lssm
