// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "mgvmc/config.hpp"

namespace mgvmc {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;   // worst deviation seen
  double tolerance = 0.0;  // passes when measured <= tolerance
  std::string detail;

  double margin() const { return tolerance - measured; }
};

struct CheckOptions {
  int cases = 20;  // random cases per structural check
  bool corrupt_sign = false;  // drops the amplitude sign (negative fixture)
};

/// Runs the invariant suite on the model described by `config` with freshly
/// initialized parameters: antisymmetry, equivariance, nucleus reindexing,
/// finite-difference derivatives, zero variance, CG oracle, sampler moments.
std::vector<CheckResult> run_checks(const RunConfig& config, const CheckOptions& options = {});

/// One line per check; returns true when every check passed.
bool print_report(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace mgvmc
