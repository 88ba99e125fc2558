// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ospmv/partition_comm.hpp"
#include "ospmv/run_record.hpp"
#include "ospmv/sparse_core.hpp"
#include "ospmv/transport.hpp"
#include "ospmv/worker_team.hpp"
#include "ospmv/workload.hpp"

namespace ospmv {

enum class Mode { VectorNoOverlap, VectorNaiveOverlap, TaskMode };

/// Case-insensitive; accepts e.g. "vector", "VectorNoOverlap", "naive",
/// "vector-naive-overlap", "task", "TaskMode".
Mode parse_mode(std::string_view text);
std::string to_string(Mode m);
inline constexpr Mode kAllModes[] = {Mode::VectorNoOverlap, Mode::VectorNaiveOverlap,
                                     Mode::TaskMode};

/// OVERLAP_SPMV_TIMEOUT (seconds) if set and valid, else 60.
double default_epoch_timeout_s();

struct ExecConfig {
  Mode mode = Mode::VectorNoOverlap;
  int n_ranks = 1;
  /// Compute workers per rank. Task mode adds one communication agent.
  int workers_per_rank = 1;
  TransportConfig transport;
  int iterations = 1;
  int warmup = 1;
  std::uint64_t seed = 42;
  double epoch_timeout_s = default_epoch_timeout_s();

  /// Every problem found, empty when valid.
  std::vector<std::string> validate() const;
  /// Throws ValidationError listing all problems at once.
  void check() const;
};

struct PhaseTimes {
  double gather_s = 0.0;
  double comm_s = 0.0;
  double local_s = 0.0;
  double remote_s = 0.0;
  double total_s = 0.0;
};

/// Per-rank execution state: the extended B buffer, the C segment, the send
/// staging buffer and the worker team.
///
/// The extended buffer is [halo from lower ranks | owned B | halo from higher
/// ranks]. That order is monotone in global column index, so the recombined
/// local+halo matrix keeps the global per-row accumulation order.
class RankRuntime {
 public:
  RankRuntime(const CommPlan& plan, int workers_per_rank, Mode mode,
              std::chrono::duration<double> epoch_timeout = std::chrono::seconds(60));
  ~RankRuntime();
  RankRuntime(const RankRuntime&) = delete;
  RankRuntime& operator=(const RankRuntime&) = delete;

  const CommPlan& plan() const { return *plan_; }
  int rank() const { return plan_->rank; }
  int workers() const { return workers_; }
  Mode mode() const { return mode_; }

  std::span<double> b_local() { return std::span(ext_).subspan(n_lo_, plan_->n_local()); }
  std::span<const double> c() const { return c_; }
  std::span<const double> send_buffer() const { return send_buf_; }
  /// Extended-buffer position of halo entry `halo_pos`.
  std::size_t ext_index(index_t halo_pos) const;
  /// Global column of extended-buffer entry `k`.
  index_t ext_global(std::size_t k) const;
  std::span<const double> ext() const { return ext_; }

  void set_b(std::span<const double> b_segment);
  /// C becomes the next B.
  void feed_back();

  const PhaseTimes& last_times() const { return times_; }
  const std::string& phase() const { return phase_; }
  std::uint32_t epoch() const { return epoch_; }
  void set_epoch(std::uint32_t e) { epoch_ = e; }

  /// Recombined matrix over the extended buffer (unsplit kernel).
  const CsrMatrix& full_matrix() const { return a_full_ext_; }
  std::span<const index_t> local_chunks() const { return local_chunks_; }

 private:
  friend struct RankSteps;

  const CommPlan* plan_;
  int workers_;
  Mode mode_;
  index_t n_lo_ = 0;
  std::vector<double> ext_;
  DenseVector c_;
  std::vector<double> send_buf_;
  std::vector<std::size_t> send_offset_;
  std::vector<index_t> send_src_;
  CsrMatrix a_full_ext_;
  CsrMatrix a_remote_ext_;
  std::vector<index_t> full_chunks_;
  std::vector<index_t> local_chunks_;
  std::vector<index_t> remote_rows_;
  std::vector<std::size_t> remote_cuts_;
  std::unique_ptr<WorkerTeam> team_;
  PhaseTimes times_;
  std::string phase_ = "idle";
  std::uint32_t epoch_ = 0;
  std::chrono::duration<double> timeout_;
};

// One MVM on one rank. All ranks must call collectively. Each returns the
// rank's C segment, valid until the next call.

/// post receives, gather, send, wait, then one unsplit spMVM.
std::span<const double> run_vector_no_overlap(RankRuntime& rt, Transport& t);
/// post receives, gather, send, local spMVM, wait, remote spMVM. Whether the
/// transfer overlaps the local part depends on the transport's progress.
std::span<const double> run_vector_naive_overlap(RankRuntime& rt, Transport& t);
/// The calling thread is the communication agent; the worker team gathers,
/// runs the local part over nonzero-balanced row chunks, waits for the
/// agent's halo-complete signal and then runs the remote part.
std::span<const double> run_task_mode(RankRuntime& rt, Transport& t);
std::span<const double> run_step(Mode mode, RankRuntime& rt, Transport& t);

struct RankReport {
  int rank = 0;
  std::vector<PhaseTimes> iterations;
  Transport::Stats stats;
};

struct DistributedRun {
  DenseVector result;
  /// Wall time of each timed iteration between barriers, max over ranks.
  std::vector<double> iteration_s;
  std::vector<RankReport> ranks;
  VolumeReport volume;
};

/// Runs warm-up plus timed iterations across cfg.n_ranks ranks. B is reset to
/// b0 after the warm-up, and each timed iteration feeds C back as the next B,
/// so the result equals sequential_oracle(a, b0, cfg.iterations).
DistributedRun run_distributed(const CsrMatrix& a, std::span<const double> b0,
                               const ExecConfig& cfg);
DistributedRun run_distributed(const CsrMatrix& a, std::span<const double> b0,
                               const ExecConfig& cfg, const PartitionMap& partition,
                               std::span<const CommPlan> plans);

struct ModelOptions {
  std::optional<double> bandwidth_gbs;
  double kappa = 0.0;
};

struct BenchmarkRun {
  ExecConfig config;
  RunRecord record;
  DistributedRun run;
};

/// Runs each configuration on the same problem and fills the records.
std::vector<BenchmarkRun> run_benchmark(std::span<const ExecConfig> configs, const Problem& problem,
                                        const ModelOptions& model = {});

/// Builds a record from a finished run.
RunRecord make_record(const ExecConfig& cfg, const Problem& problem, const DistributedRun& run,
                      const ModelOptions& model);

/// max_i |x_i - y_i| / max_i |y_i| (absolute when y is all zeros).
double relative_error(std::span<const double> x, std::span<const double> y);

}  // namespace ospmv
