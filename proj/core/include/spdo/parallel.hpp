#pragma once

#include <cstddef>
#include <functional>

namespace spdo {

// Worker count used by batch-parallel kernels. Defaults to 1 (the deterministic
// reference path); the SPDO_THREADS environment variable overrides the default
// at first use, and set_thread_count() overrides both.
int thread_count();
void set_thread_count(int n);

// Runs fn(chunk_index, begin, end) over a static partition of [0, n) into
// min(thread_count(), n) contiguous chunks. Chunk boundaries depend only on n
// and the thread count, so per-chunk partial results reduced in chunk order
// are reproducible for a fixed thread count.
void parallel_chunks(std::size_t n,
                     const std::function<void(int, std::size_t, std::size_t)>& fn);

int chunk_count(std::size_t n);

}  // namespace spdo
