// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <functional>

namespace mgvmc {

/// Worker threads used for batch evaluation; 1 (the default) runs inline.
void set_num_threads(int n);
int num_threads();

/// Splits [0, n) into at most num_threads() contiguous ranges and runs
/// fn(begin, end) on each. Results must be written to disjoint locations.
void parallel_ranges(Eigen::Index n, const std::function<void(Eigen::Index, Eigen::Index)>& fn);

}  // namespace mgvmc
