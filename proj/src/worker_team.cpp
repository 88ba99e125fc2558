// SPDX-License-Identifier: Apache-2.0
#include "ospmv/worker_team.hpp"

#include <utility>

#include "ospmv/error.hpp"

namespace ospmv {

WorkerTeam::WorkerTeam(int n_workers) {
  if (n_workers < 1) throw ValidationError("WorkerTeam: need at least one worker");
  threads_.reserve(static_cast<std::size_t>(n_workers));
  for (int w = 0; w < n_workers; ++w) threads_.emplace_back([this, w] { loop(w); });
}

WorkerTeam::~WorkerTeam() {
  {
    std::unique_lock lk(m_);
    // A timed-out job may still be running; let it finish before stopping.
    done_cv_.wait(lk, [&] { return remaining_ == 0; });
    stop_ = true;
  }
  start_cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerTeam::launch(Job job) {
  {
    std::lock_guard lk(m_);
    job_ = std::move(job);
    remaining_ = size();
    error_ = nullptr;
    ++generation_;
  }
  start_cv_.notify_all();
}

bool WorkerTeam::join(Clock::time_point deadline) {
  std::unique_lock lk(m_);
  if (!done_cv_.wait_until(lk, deadline, [&] { return remaining_ == 0; })) return false;
  if (error_) std::rethrow_exception(std::exchange(error_, nullptr));
  return true;
}

void WorkerTeam::join() {
  std::unique_lock lk(m_);
  done_cv_.wait(lk, [&] { return remaining_ == 0; });
  if (error_) std::rethrow_exception(std::exchange(error_, nullptr));
}

void WorkerTeam::loop(int worker) {
  std::uint64_t seen = 0;
  for (;;) {
    Job job;
    {
      std::unique_lock lk(m_);
      start_cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      job = job_;
    }
    std::exception_ptr err;
    try {
      job(worker);
    } catch (...) {
      err = std::current_exception();
    }
    {
      std::lock_guard lk(m_);
      if (err && !error_) error_ = err;
      --remaining_;
    }
    done_cv_.notify_all();
  }
}

}  // namespace ospmv
