#pragma once

#include <cstdint>
#include <functional>

namespace mvc {

// Runs fn(0..n-1). With `concurrent` each index gets its own worker thread
// (inheriting the caller's gradient mode) and the call returns after all of
// them finish; the first exception thrown by any index is rethrown.
// Recording gradients is single-threaded by contract, so concurrency is
// refused while recording is on and the loop runs sequentially instead.
void parallel_for(int64_t n, bool concurrent, const std::function<void(int64_t)>& fn);

}  // namespace mvc
