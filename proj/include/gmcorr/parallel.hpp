#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "gmcorr/common.hpp"

namespace gmcorr {

/// A work item failed; carries the index of the lowest failing item.
class TrajectoryFailure : public NumericalError {
 public:
  TrajectoryFailure(std::size_t index, const std::string& what)
      : NumericalError("trajectory " + std::to_string(index) + " failed: " + what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

inline unsigned default_thread_count() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = all cores).
/// Work items must write only to their own output slots. After the first
/// failure no new items start; the lowest failing index is reported.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = default_thread_count();
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));

  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::mutex mu;
  std::size_t failed_index = n;
  std::string failed_what;

  auto worker = [&] {
    for (;;) {
      if (abort.load(std::memory_order_relaxed)) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        if (i < failed_index) {
          failed_index = i;
          failed_what = e.what();
        }
        abort = true;
      }
    }
  };

  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failed_index < n) throw TrajectoryFailure(failed_index, failed_what);
}

}  // namespace gmcorr
