#pragma once

#include <cstddef>
#include <functional>

namespace graspred {

/// Global worker budget for parallel_for. 0 = hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs fn(i) for i in [0, n). fn must only write to state owned by item i
/// (slot-per-item); under that contract results are identical for any thread
/// count. Exceptions are captured and the first one (lowest i) is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace graspred
