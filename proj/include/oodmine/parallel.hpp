#pragma once

#include <cstddef>
#include <functional>

namespace oodmine {

// Worker count, capped by the OODMINE_THREADS environment variable.
std::size_t thread_count();

// Runs fn(block) for block in [0, n_blocks) across worker threads. Callers
// partition work into fixed-size blocks, so results never depend on the
// number of threads. The first exception thrown by any block is rethrown.
void parallel_for_blocks(std::size_t n_blocks, const std::function<void(std::size_t)>& fn);

}  // namespace oodmine
