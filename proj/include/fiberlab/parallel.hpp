#pragma once

#include <cstdint>
#include <functional>

namespace fiberlab {

/// Worker cap for internal fan-out. Initialised from FIBERLAB_THREADS when
/// set to a positive integer, otherwise from the hardware concurrency.
int worker_threads() noexcept;
/// Overrides the cap for the rest of the process (values < 1 mean 1).
void set_worker_threads(int n) noexcept;

/// Runs task(i) for i in [0, n) on up to worker_threads() threads. Tasks must
/// write disjoint outputs; work is never split differently by thread count,
/// so results are bit-identical for any cap. The exception of the lowest
/// failing index is rethrown after all workers finish.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& task);

}  // namespace fiberlab
