#pragma once

#include <cstdint>
#include <functional>

namespace salt {

// Number of worker threads used by parallel_for. Defaults to the hardware
// concurrency, overridable with the SALT_THREADS environment variable.
int thread_count();

// Splits [0, n) into contiguous chunks, one per worker. Workers write
// disjoint output ranges and never reduce across chunks, so results are
// bit-identical for any thread count.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body);

} // namespace salt
