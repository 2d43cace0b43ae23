#pragma once

#include <cstddef>
#include <functional>

namespace rotaens {

/// Thread budget from ROTAENS_THREADS, else the hardware concurrency (at least 1).
std::size_t default_thread_count();

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index runs
/// exactly once; callers write results into slot i so the outcome never
/// depends on scheduling. The first exception thrown by any body is rethrown
/// after all workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body);

} // namespace rotaens
