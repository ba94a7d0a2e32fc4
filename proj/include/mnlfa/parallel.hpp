#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>

namespace mnlfa {

/// Worker count used when callers pass 0: $MNLFA_THREADS if set, else 1.
[[nodiscard]] int default_thread_count();

/// Persons per reduction chunk. Chunk boundaries never depend on the thread
/// count, so sums are bit-identical for any number of workers.
inline constexpr std::ptrdiff_t kChunkSize = 64;

/// Runs body(begin, end, chunk) for each chunk of [0, n) on up to `threads`
/// workers. The first exception thrown is rethrown on the calling thread.
void parallel_chunks(std::ptrdiff_t n, int threads,
                     const std::function<void(std::ptrdiff_t, std::ptrdiff_t, std::ptrdiff_t)>& body);

[[nodiscard]] inline std::ptrdiff_t chunk_count(std::ptrdiff_t n) { return (n + kChunkSize - 1) / kChunkSize; }

}  // namespace mnlfa
