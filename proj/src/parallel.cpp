#include "llem/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace llem {
namespace {

std::size_t hardware_threads() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : hc;
}

std::size_t threads_from_env() {
  const char* env = std::getenv("LLEM_THREADS");
  if (env == nullptr || *env == '\0') return hardware_threads();
  try {
    const long n = std::stol(env);
    if (n <= 0) return hardware_threads();
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    return hardware_threads();
  }
}

std::atomic<std::size_t>& configured_threads() {
  static std::atomic<std::size_t> n{threads_from_env()};
  return n;
}

}  // namespace

std::size_t thread_count() { return configured_threads().load(); }

void set_thread_count(std::size_t n) {
  configured_threads().store(n == 0 ? hardware_threads() : n);
}

void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& fn) {
  if (end <= begin) return;
  const std::size_t total = end - begin;
  const std::size_t workers = std::min(thread_count(), total);
  if (workers <= 1) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }

  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run_range = [&](std::size_t lo, std::size_t hi) {
    try {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };

  const std::size_t per = total / workers;
  const std::size_t extra = total % workers;
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  std::size_t lo = begin;
  std::size_t first_hi = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t hi = lo + per + (w < extra ? 1 : 0);
    if (w == 0) {
      first_hi = hi;
    } else {
      pool.emplace_back(run_range, lo, hi);
    }
    lo = hi;
  }
  run_range(begin, first_hi);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

ScopedThreadCount::ScopedThreadCount(std::size_t n) : previous_(thread_count()) {
  set_thread_count(n);
}

ScopedThreadCount::~ScopedThreadCount() { set_thread_count(previous_); }

}  // namespace llem
