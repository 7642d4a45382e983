#pragma once

#include <cstddef>
#include <functional>

namespace em2c {

/// Worker count used by parallel_for. 0 selects hardware concurrency.
void set_num_threads(unsigned n);
unsigned num_threads();

/// Runs body(i) for i in [0, n). Work is split into contiguous chunks; calls
/// made from inside a parallel region run serially. Bodies must only write to
/// per-index state so that results do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace em2c
