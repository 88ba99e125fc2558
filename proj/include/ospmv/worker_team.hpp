// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace ospmv {

/// A fixed set of persistent worker threads that execute one job at a time.
/// launch() hands the job to every worker and returns; join() waits for all
/// of them and rethrows the first exception a worker raised.
class WorkerTeam {
 public:
  using Clock = std::chrono::steady_clock;
  using Job = std::function<void(int worker)>;

  explicit WorkerTeam(int n_workers);
  ~WorkerTeam();
  WorkerTeam(const WorkerTeam&) = delete;
  WorkerTeam& operator=(const WorkerTeam&) = delete;

  int size() const { return static_cast<int>(threads_.size()); }

  void launch(Job job);
  /// Returns false on timeout (workers keep running); true once all finished.
  /// Rethrows a worker exception after all workers finished.
  bool join(Clock::time_point deadline);
  void join();
  void run(Job job) {
    launch(std::move(job));
    join();
  }

 private:
  void loop(int worker);

  std::mutex m_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  Job job_;
  std::uint64_t generation_ = 0;
  int remaining_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
  std::vector<std::thread> threads_;
};

}  // namespace ospmv
