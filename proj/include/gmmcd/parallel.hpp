#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace gmmcd {

namespace detail {
inline std::atomic<int>& worker_thread_slot() {
  static std::atomic<int> n{0};  // 0 = use hardware concurrency
  return n;
}
}  // namespace detail

/// Cap on worker threads used by data-parallel loops. 0 restores the default
/// (hardware concurrency).
inline void set_worker_threads(int n) { detail::worker_thread_slot().store(n < 0 ? 0 : n); }

inline int worker_threads() {
  const int n = detail::worker_thread_slot().load();
  if (n > 0) return n;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Run fn(chunk_index, begin, end) over [0, n) split into fixed chunks of
/// `grain` items. The chunk grid depends only on n and grain, never on the
/// thread count, so any per-chunk accumulation combined in chunk order gives
/// bit-identical results for every --threads setting.
template <class Fn>
void parallel_chunks(std::size_t n, std::size_t grain, Fn&& fn) {
  if (n == 0) return;
  if (grain == 0) grain = 1;
  const std::size_t chunks = (n + grain - 1) / grain;
  const int workers = worker_threads();
  if (workers <= 1 || chunks <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) {
      fn(c, c * grain, std::min(n, (c + 1) * grain));
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks || failed.load()) return;
      try {
        fn(c, c * grain, std::min(n, (c + 1) * grain));
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
        return;
      }
    }
  };

  const int spawn = static_cast<int>(std::min<std::size_t>(workers, chunks)) - 1;
  std::vector<std::thread> pool;
  pool.reserve(spawn);
  for (int t = 0; t < spawn; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace gmmcd
