// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mgvmc/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace mgvmc {

namespace {
std::atomic<int> g_threads{1};
}

void set_num_threads(int n) { g_threads = std::max(1, n); }
int num_threads() { return g_threads; }

void parallel_ranges(Eigen::Index n, const std::function<void(Eigen::Index, Eigen::Index)>& fn) {
  const Eigen::Index parts = std::min<Eigen::Index>(g_threads, n);
  if (parts <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(parts));
  for (Eigen::Index p = 0; p < parts; ++p) {
    const Eigen::Index begin = n * p / parts;
    const Eigen::Index end = n * (p + 1) / parts;
    pool.emplace_back([&, p, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[static_cast<size_t>(p)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace mgvmc
