#pragma once

#include <cstddef>
#include <functional>

namespace drlrt {

unsigned default_thread_count();

// Runs fn(i) for every i in [0, n) on up to `threads` workers. Each index must
// write only to its own output slot; the block partition then cannot change the
// result, so any thread count yields identical output.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace drlrt
