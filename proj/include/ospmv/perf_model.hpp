// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "ospmv/sparse_core.hpp"

// Code-balance model for CRS spMVM. Bandwidths are decimal GB/s, performance
// is decimal GFlop/s, balances are bytes per flop.
namespace ospmv::perf {

struct BalanceInputs {
  double n_nzr = 0.0;   // average nonzeros per row, used unrounded
  double kappa = 0.0;   // extra B bytes per inner iteration
  bool split = false;   // two-pass kernel writing C twice
};

/// 6 + 12/N_nzr + kappa/2, or 6 + 20/N_nzr + kappa/2 for the split kernel.
double code_balance(const BalanceInputs& in);

/// bandwidth / balance.
double max_performance(double balance, double bandwidth_gbs);

struct KappaEstimate {
  double kappa = 0.0;
  /// False when the measurement implies a balance below the kappa = 0 floor.
  /// kappa is then negative and left unclamped.
  bool consistent = true;
  std::string diagnostic;
};

/// Solves bandwidth / gflops = code_balance(n_nzr, kappa, split) for kappa.
KappaEstimate estimate_kappa(double measured_gflops, double measured_bandwidth_gbs, double n_nzr,
                             bool split = false);

/// Number of full traversals of B per MVM: 1 + kappa * N_nzr / 8.
double b_load_count(double kappa, double n_nzr);

/// Extra B bytes per matrix row: kappa * N_nzr.
double per_row_extra_bytes(double kappa, double n_nzr);

/// kappa = 0 traffic of one MVM in bytes:
/// 12 per nonzero, 16 per row for C (write allocate + evict), 8 per column
/// for one load of B, and another 16 per row for the split kernel.
std::uint64_t model_traffic(const CsrMatrix& a, bool split);

struct BalanceReport {
  BalanceInputs inputs;
  double bytes_per_flop = 0.0;
  double b_load_count = 0.0;
  double per_row_extra_bytes = 0.0;
  std::optional<double> bandwidth_gbs;
  std::optional<double> predicted_max_gflops;
  std::optional<double> measured_gflops;
  /// measured_gflops * bytes_per_flop: bandwidth the model says was drawn.
  std::optional<double> effective_bandwidth_gbs;
  std::optional<KappaEstimate> kappa_estimate;
};

/// Builds a report. `bandwidth_gbs` gives the bound; with `measured_gflops`
/// as well, kappa is estimated from the pair.
BalanceReport make_report(const BalanceInputs& in, std::optional<double> bandwidth_gbs,
                          std::optional<double> measured_gflops);

std::string format_report_text(const BalanceReport& r);
std::string format_report_json(const BalanceReport& r);

}  // namespace ospmv::perf
