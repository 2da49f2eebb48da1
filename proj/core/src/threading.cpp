#include "dagfit/threading.hpp"

#include <atomic>
#include <thread>
#include <vector>

namespace dagfit {

namespace {
int g_threads = 1;
}

int worker_threads() { return g_threads; }

void set_worker_threads(int t) { g_threads = t < 1 ? 1 : t; }

void parallel_for(int n, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  int t = g_threads;
  if (t <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  // Chunk size is a function of n only; threads pull chunks from a shared
  // counter. Output must not depend on the pull order.
  const int chunk = n >= 64 ? (n + 63) / 64 : 1;
  const int n_chunks = (n + chunk - 1) / chunk;
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      int c = next.fetch_add(1);
      if (c >= n_chunks) break;
      int lo = c * chunk;
      int hi = lo + chunk < n ? lo + chunk : n;
      for (int i = lo; i < hi; ++i) fn(i);
    }
  };
  std::vector<std::thread> pool;
  int spawn = t < n_chunks ? t : n_chunks;
  pool.reserve(spawn);
  for (int i = 0; i < spawn; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace dagfit
