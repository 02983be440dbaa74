#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace wotf {

/// Worker cap: hardware concurrency, clamped by WOTF_PROBE_THREADS.
inline int thread_count() {
  static const int n = [] {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* s = std::getenv("WOTF_PROBE_THREADS")) {
      long v = std::strtol(s, nullptr, 10);
      if (v >= 1 && v < long(hw)) hw = unsigned(v);
    }
    return int(hw);
  }();
  return n;
}

namespace detail {

/// Persistent pool behind parallel_for. Work items are claimed in fixed-size
/// blocks through an atomic cursor; every write a body performs must be
/// disjoint per index, which keeps results bit-identical for any thread count.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool(thread_count() - 1);
    return pool;
  }

  void run(int64_t n, int64_t block, const std::function<void(int64_t, int64_t)>& body) {
    if (n <= 0) return;
    {
      std::lock_guard<std::mutex> lk(m_);
      body_ = &body;
      n_ = n;
      block_ = block;
      cursor_.store(0, std::memory_order_relaxed);
      pending_ = int(workers_.size());
      ++epoch_;
    }
    cv_work_.notify_all();
    work();  // caller participates
    std::unique_lock<std::mutex> lk(m_);
    cv_done_.wait(lk, [&] { return pending_ == 0; });
    body_ = nullptr;
  }

 private:
  explicit ThreadPool(int n_workers) {
    for (int i = 0; i < n_workers; ++i)
      workers_.emplace_back([this] { worker_loop(); });
  }

  ~ThreadPool() {
    {
      std::lock_guard<std::mutex> lk(m_);
      stop_ = true;
      ++epoch_;
    }
    cv_work_.notify_all();
    for (auto& t : workers_) t.join();
  }

  void worker_loop() {
    uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lk(m_);
        cv_work_.wait(lk, [&] { return epoch_ != seen; });
        seen = epoch_;
        if (stop_) return;
      }
      work();
      {
        std::lock_guard<std::mutex> lk(m_);
        if (--pending_ == 0) cv_done_.notify_all();
      }
    }
  }

  void work() {
    const auto* body = body_;
    if (!body) return;
    for (;;) {
      int64_t lo = cursor_.fetch_add(block_, std::memory_order_relaxed);
      if (lo >= n_) break;
      (*body)(lo, std::min(lo + block_, n_));
    }
  }

  std::mutex m_;
  std::condition_variable cv_work_, cv_done_;
  std::vector<std::thread> workers_;
  const std::function<void(int64_t, int64_t)>* body_ = nullptr;
  int64_t n_ = 0, block_ = 1;
  std::atomic<int64_t> cursor_{0};
  int pending_ = 0;
  uint64_t epoch_ = 0;
  bool stop_ = false;
};

inline bool& in_parallel_region() {
  thread_local bool flag = false;
  return flag;
}

}  // namespace detail

/// Calls body(i) for every i in [0, n). Bodies must write to disjoint
/// locations per index. Nested calls degrade to serial execution.
template <class F>
void parallel_for(int64_t n, F&& body) {
  if (n <= 0) return;
  if (thread_count() <= 1 || n == 1 || detail::in_parallel_region()) {
    for (int64_t i = 0; i < n; ++i) body(i);
    return;
  }
  int64_t block = std::max<int64_t>(1, n / (4 * thread_count()));
  std::function<void(int64_t, int64_t)> fn = [&body](int64_t lo, int64_t hi) {
    detail::in_parallel_region() = true;
    for (int64_t i = lo; i < hi; ++i) body(i);
    detail::in_parallel_region() = false;
  };
  detail::ThreadPool::instance().run(n, block, fn);
}

}  // namespace wotf
