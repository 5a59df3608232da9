#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace covct {

// Runs job(i) for i in [0, n) on up to `workers` threads. Each job writes
// only to index-scoped state, so results do not depend on the schedule.
// Returns one string per index: empty on success, the exception message
// otherwise (jobs that throw do not stop the batch).
std::vector<std::string> run_batch(size_t n, int workers,
                                   const std::function<void(size_t)>& job);

}  // namespace covct
