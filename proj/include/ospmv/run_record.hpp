// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "ospmv/sparse_core.hpp"

namespace ospmv {

/// One benchmark configuration's measurement. NaN marks "not available".
struct RunRecord {
  std::string mode;
  int n_ranks = 1;
  int workers_per_rank = 1;
  std::string transport;
  std::string matrix;
  index_t n_rows = 0;
  offset_t n_nz = 0;
  int iterations = 0;
  double median_s = 0.0;
  double min_s = 0.0;
  /// 2 * n_nz / median_s, in GFlop/s.
  double gflops = 0.0;
  /// Memory-bandwidth bound from the code-balance model; needs a bandwidth.
  double model_bound_gflops = std::numeric_limits<double>::quiet_NaN();
  /// Model traffic (including kappa) divided by median_s, in GB/s. Not a
  /// hardware measurement.
  double model_eff_gbs = 0.0;
  std::uint64_t comm_bytes = 0;
  std::uint64_t raw_comm_bytes = 0;
  int messages = 0;
  double gather_s = 0.0;
  double comm_s = 0.0;
  double local_s = 0.0;
  double remote_s = 0.0;
  double max_rel_error = std::numeric_limits<double>::quiet_NaN();
  /// gflops(n) / (n * gflops(1)) within the same mode/worker/transport series.
  double efficiency = std::numeric_limits<double>::quiet_NaN();
  /// Set on the first row of a series whose efficiency drops below 0.5.
  bool below_half_efficiency = false;
};

}  // namespace ospmv
