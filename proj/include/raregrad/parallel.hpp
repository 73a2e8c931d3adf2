#pragma once

#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace raregrad::parallel {

// Evaluates fn(0..count-1) on up to `jobs` threads and returns the results
// in index order.  Each fn(i) must be a pure function of i; results land in
// pre-sized slots, so the output is identical for every jobs value and any
// later reduction in index order is deterministic.
template <typename T, typename Fn>
std::vector<T> map_indexed(std::size_t count, std::size_t jobs, Fn&& fn) {
  std::vector<T> out(count);
  if (count == 0) return out;
  if (jobs <= 1 || count == 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
    return out;
  }
  jobs = std::min(jobs, count);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += jobs) out[i] = fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

}  // namespace raregrad::parallel
