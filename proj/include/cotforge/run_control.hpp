#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "cotforge/error.hpp"

namespace cotforge {

/// Cooperative stop signal shared by every stage of a run. A stop can come
/// from outside (a signal handler flips `external`) or from a record budget,
/// which tests use to cut a run short after an exact number of checkpoint
/// writes.
class RunControl {
 public:
  RunControl() = default;
  explicit RunControl(std::size_t record_budget) : budget_(record_budget) {}

  /// Watches a flag set asynchronously, e.g. from a SIGTERM handler.
  void watch(const std::atomic<bool>* external) noexcept { external_ = external; }

  bool stop_requested() const noexcept {
    return stopped_.load() || (external_ != nullptr && external_->load());
  }

  /// Called before each checkpoint write. Throws kInterrupted once a stop
  /// was requested or the record budget is spent.
  void before_record() {
    if (stop_requested()) throw Error(ErrorCode::kInterrupted, "run interrupted");
    if (budget_ && used_.fetch_add(1) >= *budget_) {
      stopped_ = true;
      throw Error(ErrorCode::kInterrupted, "record budget exhausted");
    }
  }

  std::size_t records() const noexcept { return used_.load(); }

 private:
  std::optional<std::size_t> budget_;
  std::atomic<std::size_t> used_{0};
  std::atomic<bool> stopped_{false};
  const std::atomic<bool>* external_ = nullptr;
};

/// Runs fn(i) for i in [0, count) on up to `workers` threads. The first
/// exception stops further scheduling and is rethrown after all threads
/// join; later exceptions are dropped.
inline void parallel_for(std::size_t count, std::size_t workers,
                         const std::function<void(std::size_t)>& fn,
                         const RunControl* control = nullptr) {
  if (count == 0) return;
  workers = std::max<std::size_t>(1, std::min(workers, count));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first;
  std::mutex first_mutex;

  auto body = [&] {
    while (!failed.load()) {
      if (control != nullptr && control->stop_requested()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(first_mutex);
        if (!first) first = std::current_exception();
        failed = true;
      }
    }
  };

  if (workers == 1) {
    body();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
  }
  if (first) std::rethrow_exception(first);
  if (control != nullptr && control->stop_requested() && next.load() < count) {
    throw Error(ErrorCode::kInterrupted, "run interrupted");
  }
}

}  // namespace cotforge
