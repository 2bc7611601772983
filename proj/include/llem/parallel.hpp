#pragma once

#include <cstddef>
#include <functional>

namespace llem {

/// Worker count used by parallel_for. Initialised from LLEM_THREADS on first
/// use; 0 or unset means hardware concurrency.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Runs fn(i) for every i in [begin, end). Indices are split into contiguous
/// static ranges, so each fn(i) must only write state owned by index i. Results
/// therefore never depend on the worker count.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& fn);

/// RAII override of the worker count.
class ScopedThreadCount {
 public:
  explicit ScopedThreadCount(std::size_t n);
  ~ScopedThreadCount();
  ScopedThreadCount(const ScopedThreadCount&) = delete;
  ScopedThreadCount& operator=(const ScopedThreadCount&) = delete;

 private:
  std::size_t previous_;
};

}  // namespace llem
