// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ospmv/sparse_core.hpp"

namespace ospmv {

/// Rank r owns rows (and the matching B/C entries) [row_start[r], row_start[r+1]).
struct PartitionMap {
  int n_ranks = 0;
  std::vector<index_t> row_start;

  index_t begin(int r) const { return row_start[r]; }
  index_t end(int r) const { return row_start[r + 1]; }
  index_t rows(int r) const { return end(r) - begin(r); }
  index_t n_rows() const { return row_start.back(); }
  /// Owning rank of a row. Empty ranks never own anything.
  int owner(index_t row) const;

  bool operator==(const PartitionMap&) const = default;
};

PartitionMap partition_by_nonzeros(const CsrMatrix& a, int n_ranks);

/// Per-rank communication bookkeeping. Built once from the sparsity pattern.
///
/// Halo buffer layout: blocks ordered by source rank, each block sorted by
/// ascending global column. halo_offset[q] is where q's block starts, with
/// halo_offset[n_ranks] == halo_size().
struct CommPlan {
  int rank = 0;
  int n_ranks = 0;
  index_t row_begin = 0;
  index_t row_end = 0;

  /// send_to[q]: sorted local row indices whose B values rank q needs.
  std::vector<std::vector<index_t>> send_to;
  /// recv_from[q]: sorted global column indices received from q.
  std::vector<std::vector<index_t>> recv_from;
  std::vector<index_t> halo_offset;
  /// Nonzeros on rank q referencing our B entries, before deduplication.
  std::vector<offset_t> raw_send_refs;

  /// Owned columns, renumbered 0..n_local-1.
  CsrMatrix a_local;
  /// Non-owned columns, renumbered to halo buffer positions.
  CsrMatrix a_remote;

  index_t n_local() const { return row_end - row_begin; }
  index_t halo_size() const { return halo_offset.empty() ? 0 : halo_offset.back(); }
  std::size_t send_count() const;
  int send_messages() const;
  int recv_messages() const;
};

/// Throws ValidationError for nonsquare matrices or an out-of-range rank.
CommPlan build_comm_plan(const CsrMatrix& a, const PartitionMap& p, int my_rank);
std::vector<CommPlan> build_all_plans(const CsrMatrix& a, const PartitionMap& p);

struct VolumeReport {
  std::vector<std::uint64_t> sent_bytes;  // per rank
  std::vector<std::uint64_t> recv_bytes;  // per rank
  std::vector<int> messages_sent;         // per rank
  std::uint64_t total_bytes = 0;
  int total_messages = 0;
  /// Same total without deduplication (8 bytes per referencing nonzero).
  std::uint64_t raw_reference_bytes = 0;
};

/// Checks send/recv consistency for every rank pair and sums the halo volume
/// (8 bytes per exchanged value). Throws ValidationError naming the first
/// inconsistent pair.
VolumeReport exchange_volume(std::span<const CommPlan> plans);

/// FNV-1a over a sequence of global indices; used for transport handshakes.
std::uint64_t index_checksum(std::span<const index_t> globals);
/// Checksum of what `plan.rank` will send to `peer`, in global numbering.
std::uint64_t send_checksum(const CommPlan& plan, int peer);
/// Checksum of what `plan.rank` expects from `peer`.
std::uint64_t recv_checksum(const CommPlan& plan, int peer);

/// JSON text report of counts and volumes for all ranks.
std::string plan_summary_json(std::span<const CommPlan> plans, int indent = 2);

}  // namespace ospmv
