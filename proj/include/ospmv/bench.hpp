// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "ospmv/exec_engine.hpp"
#include "ospmv/run_record.hpp"
#include "ospmv/workload.hpp"

namespace ospmv {

// --- STREAM triad ----------------------------------------------------------

struct TriadResult {
  std::size_t length = 0;
  int repetitions = 0;
  int workers = 0;
  double best_s = 0.0;
  /// 3 arrays x 8 bytes x length / best time.
  double raw_gbs = 0.0;
  /// raw_gbs * 4 / 3: accounts for the write-allocate read of a[].
  double corrected_gbs = 0.0;
};

inline constexpr double kWriteAllocateFactor = 4.0 / 3.0;

/// a[i] = b[i] + s * c[i] over three arrays, split into contiguous worker
/// chunks. Keeps its arrays so results can be inspected.
class TriadBench {
 public:
  static constexpr double kScalar = 3.0;

  /// Throws RuntimeFailure with the requested size if allocation fails.
  TriadBench(std::size_t length, int workers);

  TriadResult run(int repetitions);

  const std::vector<double>& a() const { return a_; }
  const std::vector<double>& b() const { return b_; }
  const std::vector<double>& c() const { return c_; }

 private:
  std::size_t length_;
  int workers_;
  std::vector<double> a_, b_, c_;
};

TriadResult triad_bench(std::size_t length, int repetitions, int workers);

// --- Benchmark suites --------------------------------------------------------

/// Parsed `bench` spec file. Flat "key = value" lines, '#' comments:
///
///   matrix     = stencil7:16          (or block_band:..., or a .mtx path)
///   modes      = all                  (or a list of vector, naive, task)
///   ranks      = 1,2,4
///   workers    = 1,2
///   transports = inproc, socket, delayed
///   progress   = on-wait              (eager | on-wait)
///   latency_us = 0                    (delayed transport base latency)
///   per_byte_ns = 0
///   iterations = 5
///   warmup     = 1
///   seed       = 42
///   rhs        = uniform              (uniform | ramp | const[:c])
///   bandwidth_gbs = 18.1              (optional, enables model bound)
///   kappa      = 0
///   tolerance  = 1e-12                (oracle check, relative)
struct SuiteSpec {
  ProblemSpec problem;
  std::vector<Mode> modes{kAllModes[0], kAllModes[1], kAllModes[2]};
  std::vector<int> ranks{1};
  std::vector<int> workers{1};
  std::vector<TransportConfig> transports{TransportConfig{}};
  int iterations = 5;
  int warmup = 1;
  ModelOptions model;
  double tolerance = 1e-12;
};

SuiteSpec parse_suite_spec(std::istream& in);
SuiteSpec read_suite_spec(const std::string& path);
/// Parses one transport token ("inproc", "socket", "delayed").
TransportConfig parse_transport(const std::string& name, Progress progress, double latency_us,
                                double per_byte_ns);

/// Runs the cross product modes x ranks x workers x transports. Every result
/// is checked against the sequential oracle before its record is kept; a
/// mismatch throws RuntimeFailure naming the configuration.
std::vector<RunRecord> bench_suite(const SuiteSpec& spec);

/// Fills efficiency and the first-below-50% marker per (mode, workers,
/// transport) series, relative to the series' 1-rank run.
void mark_efficiency(std::vector<RunRecord>& records);

/// Fixed CSV column order.
const std::vector<std::string>& csv_columns();
void write_csv(std::ostream& out, const std::vector<RunRecord>& records);
std::string records_to_json(const std::vector<RunRecord>& records, int indent = 2);

}  // namespace ospmv
