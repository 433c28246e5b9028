#pragma once

#include <stdexcept>
#include <string>

namespace statpath {

/// Malformed or inconsistent configuration, data files, CLI usage.
/// Maps to process exit code 2.
class config_error : public std::runtime_error {
public:
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Validation failure of an otherwise well-formed model
/// (non-SPD diffusion, out-of-range observation, bad mesh).
class validation_error : public config_error {
public:
  explicit validation_error(const std::string& msg) : config_error(msg) {}
};

/// Numerical failure at run time: degenerate metric, trajectory blow-up,
/// stability violation, support violation. Exit code 3.
class numerical_error : public std::runtime_error {
public:
  explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Metric determinant below tolerance or factorization failure.
class degenerate_metric_error : public numerical_error {
public:
  explicit degenerate_metric_error(const std::string& msg) : numerical_error(msg) {}
};

/// Optimizer or sampler failed to reach its contract after the configured
/// restarts/tuning. Exit code 4.
class nonconvergence_error : public std::runtime_error {
public:
  explicit nonconvergence_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace statpath
