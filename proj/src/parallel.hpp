#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace atomfrac::detail {

/// Worker count for per-bond evaluation, capped by ATOMFRAC_THREADS (default 1).
inline int worker_count() {
  static const int count = [] {
    const char* env = std::getenv("ATOMFRAC_THREADS");
    if (env == nullptr) return 1;
    try {
      return std::max(1, std::stoi(env));
    } catch (...) {
      return 1;
    }
  }();
  return count;
}

/// Runs fn(i) for i in [0, count). Callers write into per-index slots and reduce
/// sequentially afterwards, so results do not depend on the thread count.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(worker_count(), count / 256 + 1);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    pool.emplace_back([begin, end, &fn, &error = errors[w]] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace atomfrac::detail
