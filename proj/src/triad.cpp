// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <limits>
#include <new>

#include "ospmv/bench.hpp"
#include "ospmv/error.hpp"
#include "ospmv/worker_team.hpp"

namespace ospmv {

TriadBench::TriadBench(std::size_t length, int workers) : length_(length), workers_(workers) {
  if (length == 0) throw ValidationError("triad: length must be positive");
  if (workers < 1) throw ValidationError("triad: workers must be >= 1");
  try {
    a_.assign(length, 0.0);
    b_.resize(length);
    c_.resize(length);
  } catch (const std::bad_alloc&) {
    throw RuntimeFailure("triad: cannot allocate 3 x " + std::to_string(length) + " doubles (" +
                         std::to_string(3 * length * sizeof(double) / (1024 * 1024)) + " MiB)");
  }
  for (std::size_t i = 0; i < length; ++i) {
    b_[i] = 1.0 + static_cast<double>(i % 7);
    c_[i] = 0.5 * static_cast<double>(i % 11);
  }
}


TriadResult TriadBench::run(int repetitions) {
  if (repetitions < 3) throw ValidationError("triad: repetitions must be >= 3");
  WorkerTeam team(workers_);
  const std::size_t n = length_;
  const int W = workers_;
  double* a = a_.data();
  const double* b = b_.data();
  const double* c = c_.data();
  auto job = [=](int w) {
    const std::size_t lo = n * w / W;
    const std::size_t hi = n * (w + 1) / W;
    for (std::size_t i = lo; i < hi; ++i) a[i] = b[i] + kScalar * c[i];
  };

  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < repetitions; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    team.run(job);
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    best = std::min(best, dt);
  }

  TriadResult res;
  res.length = n;
  res.repetitions = repetitions;
  res.workers = W;
  res.best_s = best;
  res.raw_gbs = 3.0 * 8.0 * static_cast<double>(n) / best * 1e-9;
  res.corrected_gbs = res.raw_gbs * kWriteAllocateFactor;
  return res;
}

TriadResult triad_bench(std::size_t length, int repetitions, int workers) {
  TriadBench bench(length, workers);
  return bench.run(repetitions);
}

}  // namespace ospmv
