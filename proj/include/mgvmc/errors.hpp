// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mgvmc {

/// Invalid molecular configuration, run configuration or file content.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two particles closer than the singularity guard.
class SingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The wave function is exactly zero, derivatives of log|psi| are undefined.
class NodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values inside an iterative solver.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, int step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

}  // namespace mgvmc
