#pragma once

#include <cstddef>
#include <functional>

namespace cryoscope {

/// Worker count from CRYOSCOPE_THREADS, else the hardware concurrency.
std::size_t thread_count();

/// Calls body(i) for i in [0, n) on up to thread_count() threads. The first
/// exception thrown by any call is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace cryoscope
