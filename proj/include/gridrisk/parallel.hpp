#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gridrisk {

// Run f(i) for i in [0, n) across up to `threads` workers in contiguous
// chunks. Each index writes only its own slot, and callers fold results in
// index order afterwards, so the outcome is identical to the serial run.
// The first worker exception is rethrown on the calling thread.
template <class F>
inline void parallel_for(std::uint64_t n, unsigned threads, F&& f) {
  if (threads <= 1 || n < 2) {
    for (std::uint64_t i = 0; i < n; ++i) f(i);
    return;
  }
  const unsigned k =
      static_cast<unsigned>(std::min<std::uint64_t>(threads, n));
  const std::uint64_t chunk = (n + k - 1) / k;
  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(k);
  for (unsigned w = 0; w < k; ++w) {
    const std::uint64_t begin = static_cast<std::uint64_t>(w) * chunk;
    const std::uint64_t end = std::min(n, begin + chunk);
    pool.emplace_back([&, begin, end] {
      try {
        for (std::uint64_t i = begin; i < end; ++i) f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace gridrisk
