#pragma once

#include <functional>

namespace dagfit {

int worker_threads();
void set_worker_threads(int t);

// Runs fn(i) for i in [0, n). Work is split into fixed-size chunks, so which
// thread runs an index never affects results; callers write to per-index (or
// per-chunk) slots and reduce in index order themselves.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace dagfit
