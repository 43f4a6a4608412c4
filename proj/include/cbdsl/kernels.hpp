#pragma once

// Data-parallel loops shared by the model and the protocol engine. Each loop
// has a serial reference path and an OpenMP path; both visit the same work
// items and fold partial results in the same fixed order, so their outputs
// are bitwise identical regardless of thread count or scheduling.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <vector>

#include <omp.h>

#include "cbdsl/core.hpp"

namespace cbdsl::kernels {

inline constexpr std::size_t kBlock = 64;

inline std::size_t block_count(std::size_t n) { return (n + kBlock - 1) / kBlock; }

// Runs fn(i) for i in [0, n). Exceptions are collected per item and the one
// from the lowest index is rethrown after the loop.
template <typename Fn>
void for_each_index(std::size_t n, Exec exec, Fn&& fn) {
  if (exec == Exec::serial) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Splits [0, n) into kBlock-sized blocks, lets block_fn(begin, end, partial)
// accumulate into a zeroed partial of `width` doubles, then sums partials in
// block order into `out` (which is overwritten).
template <typename BlockFn>
void reduce_blocks(std::size_t n, std::size_t width, Exec exec, std::vector<double>& out,
                   BlockFn&& block_fn) {
  const std::size_t blocks = block_count(n);
  std::vector<std::vector<double>> partials(blocks, std::vector<double>(width, 0.0));
  for_each_index(blocks, exec, [&](std::size_t b) {
    const std::size_t begin = b * kBlock;
    block_fn(begin, std::min(n, begin + kBlock), partials[b]);
  });
  out.assign(width, 0.0);
  for (const auto& p : partials)
    for (std::size_t j = 0; j < width; ++j) out[j] += p[j];
}

}  // namespace cbdsl::kernels
