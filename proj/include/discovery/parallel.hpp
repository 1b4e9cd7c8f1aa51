#pragma once

#include <cstddef>
#include <functional>

namespace discovery {

// Resolves a requested worker count; 0 means "use the hardware concurrency".
unsigned resolve_workers(unsigned requested);

// Splits [0, count) into contiguous chunks and runs `body(begin, end)` on up
// to `workers` threads. Chunk boundaries never influence results as long as
// `body` writes only to slots it owns. The first exception thrown by any
// chunk is rethrown on the calling thread after all workers join.
void parallel_for(std::size_t count, unsigned workers,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace discovery
