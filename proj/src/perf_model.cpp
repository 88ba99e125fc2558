// SPDX-License-Identifier: Apache-2.0
#include "ospmv/perf_model.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "ospmv/error.hpp"

namespace ospmv::perf {

namespace {

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ValidationError(std::string(what) + " must be positive and finite");
  }
}

void require_kappa(double kappa) {
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) {
    throw ValidationError("kappa must be nonnegative and finite");
  }
}

double row_term(bool split) { return split ? 20.0 : 12.0; }

}  // namespace

double code_balance(const BalanceInputs& in) {
  require_positive(in.n_nzr, "n_nzr");
  require_kappa(in.kappa);
  return 6.0 + row_term(in.split) / in.n_nzr + in.kappa / 2.0;
}

double max_performance(double balance, double bandwidth_gbs) {
  require_positive(balance, "code balance");
  require_positive(bandwidth_gbs, "bandwidth");
  return bandwidth_gbs / balance;
}

KappaEstimate estimate_kappa(double measured_gflops, double measured_bandwidth_gbs, double n_nzr,
                             bool split) {
  require_positive(measured_gflops, "measured performance");
  require_positive(measured_bandwidth_gbs, "measured bandwidth");
  require_positive(n_nzr, "n_nzr");
  KappaEstimate est;
  const double balance = measured_bandwidth_gbs / measured_gflops;
  const double floor = 6.0 + row_term(split) / n_nzr;
  est.kappa = 2.0 * (balance - floor);
  if (est.kappa < 0.0) {
    est.consistent = false;
    std::ostringstream os;
    os << "measured balance " << balance << " bytes/flop is below the kappa=0 floor of " << floor
       << " bytes/flop; measurement or model assumptions are inconsistent";
    est.diagnostic = os.str();
  }
  return est;
}

double b_load_count(double kappa, double n_nzr) {
  require_kappa(kappa);
  return 1.0 + kappa * n_nzr / 8.0;
}

double per_row_extra_bytes(double kappa, double n_nzr) {
  require_kappa(kappa);
  return kappa * n_nzr;
}

std::uint64_t model_traffic(const CsrMatrix& a, bool split) {
  const auto nnz = static_cast<std::uint64_t>(a.n_nz());
  const auto rows = static_cast<std::uint64_t>(a.n_rows());
  const auto cols = static_cast<std::uint64_t>(a.n_cols());
  std::uint64_t bytes = nnz * (8 + 4) + rows * 16 + cols * 8;
  if (split) bytes += rows * 16;
  return bytes;
}

BalanceReport make_report(const BalanceInputs& in, std::optional<double> bandwidth_gbs,
                          std::optional<double> measured_gflops) {
  BalanceReport r;
  r.inputs = in;
  r.bytes_per_flop = code_balance(in);
  r.b_load_count = b_load_count(in.kappa, in.n_nzr);
  r.per_row_extra_bytes = per_row_extra_bytes(in.kappa, in.n_nzr);
  r.bandwidth_gbs = bandwidth_gbs;
  if (bandwidth_gbs) r.predicted_max_gflops = max_performance(r.bytes_per_flop, *bandwidth_gbs);
  if (measured_gflops) {
    require_positive(*measured_gflops, "measured performance");
    r.measured_gflops = measured_gflops;
    r.effective_bandwidth_gbs = *measured_gflops * r.bytes_per_flop;
    if (bandwidth_gbs) {
      r.kappa_estimate = estimate_kappa(*measured_gflops, *bandwidth_gbs, in.n_nzr, in.split);
    }
  }
  return r;
}

std::string format_report_text(const BalanceReport& r) {
  std::ostringstream os;
  char buf[128];
  auto line = [&](const char* label, const char* fmt, double v, const char* unit) {
    std::snprintf(buf, sizeof buf, fmt, v);
    os << label;
    for (std::size_t k = std::char_traits<char>::length(label); k < 24; ++k) os << ' ';
    os << buf;
    if (*unit) os << ' ' << unit;
    os << '\n';
  };
  os << "kernel                  " << (r.inputs.split ? "split (two-pass)" : "CRS (single pass)")
     << '\n';
  line("N_nzr", "%.3f", r.inputs.n_nzr, "");
  line("kappa", "%.3f", r.inputs.kappa, "bytes");
  line("balance", "%.3f", r.bytes_per_flop, "bytes/flop");
  line("B traversals", "%.2f", r.b_load_count, "");
  line("extra B per row", "%.1f", r.per_row_extra_bytes, "bytes");
  if (r.bandwidth_gbs) line("bandwidth", "%.2f", *r.bandwidth_gbs, "GB/s");
  if (r.predicted_max_gflops) line("bound", "%.2f", *r.predicted_max_gflops, "GFlop/s");
  if (r.measured_gflops) line("measured", "%.2f", *r.measured_gflops, "GFlop/s");
  if (r.effective_bandwidth_gbs) line("model bandwidth", "%.2f", *r.effective_bandwidth_gbs, "GB/s");
  if (r.kappa_estimate) {
    line("kappa estimate", "%.3f", r.kappa_estimate->kappa, "bytes");
    if (!r.kappa_estimate->consistent) os << "warning: " << r.kappa_estimate->diagnostic << '\n';
  }
  return os.str();
}

std::string format_report_json(const BalanceReport& r) {
  nlohmann::json j = {{"n_nzr", r.inputs.n_nzr},
                      {"kappa", r.inputs.kappa},
                      {"split", r.inputs.split},
                      {"bytes_per_flop", r.bytes_per_flop},
                      {"b_load_count", r.b_load_count},
                      {"per_row_extra_bytes", r.per_row_extra_bytes}};
  if (r.bandwidth_gbs) j["bandwidth_gbs"] = *r.bandwidth_gbs;
  if (r.predicted_max_gflops) j["predicted_max_gflops"] = *r.predicted_max_gflops;
  if (r.measured_gflops) j["measured_gflops"] = *r.measured_gflops;
  if (r.effective_bandwidth_gbs) j["effective_bandwidth_gbs"] = *r.effective_bandwidth_gbs;
  if (r.kappa_estimate) {
    j["kappa_estimate"] = r.kappa_estimate->kappa;
    j["kappa_consistent"] = r.kappa_estimate->consistent;
    if (!r.kappa_estimate->diagnostic.empty()) j["diagnostic"] = r.kappa_estimate->diagnostic;
  }
  return j.dump(2);
}

}  // namespace ospmv::perf
