// SPDX-License-Identifier: Apache-2.0
#include "ospmv/partition_comm.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "ospmv/error.hpp"

namespace ospmv {

int PartitionMap::owner(index_t row) const {
  auto it = std::upper_bound(row_start.begin(), row_start.end(), row);
  return static_cast<int>(it - row_start.begin()) - 1;
}

PartitionMap partition_by_nonzeros(const CsrMatrix& a, int n_ranks) {
  if (n_ranks < 1) throw ValidationError("partition_by_nonzeros: n_ranks must be at least 1");
  return PartitionMap{n_ranks, chunk_rows_by_nonzeros(a.row_ptr(), n_ranks)};
}

std::size_t CommPlan::send_count() const {
  std::size_t n = 0;
  for (const auto& s : send_to) n += s.size();
  return n;
}

int CommPlan::send_messages() const {
  return static_cast<int>(std::count_if(send_to.begin(), send_to.end(),
                                        [](const auto& s) { return !s.empty(); }));
}

int CommPlan::recv_messages() const {
  return static_cast<int>(std::count_if(recv_from.begin(), recv_from.end(),
                                        [](const auto& s) { return !s.empty(); }));
}

CommPlan build_comm_plan(const CsrMatrix& a, const PartitionMap& p, int my_rank) {
  if (!a.square()) throw ValidationError("build_comm_plan: matrix must be square");
  if (p.n_ranks < 1 || my_rank < 0 || my_rank >= p.n_ranks) {
    throw ValidationError("build_comm_plan: rank " + std::to_string(my_rank) + " out of range");
  }
  if (p.row_start.size() != static_cast<std::size_t>(p.n_ranks) + 1 || p.n_rows() != a.n_rows()) {
    throw ValidationError("build_comm_plan: partition does not cover the matrix");
  }

  const int nr = p.n_ranks;
  CommPlan plan;
  plan.rank = my_rank;
  plan.n_ranks = nr;
  plan.row_begin = p.begin(my_rank);
  plan.row_end = p.end(my_rank);
  plan.send_to.assign(nr, {});
  plan.recv_from.assign(nr, {});
  plan.raw_send_refs.assign(nr, 0);

  const auto rp = a.row_ptr();
  const auto ci = a.col_idx();
  const auto va = a.val();
  const index_t b = plan.row_begin;
  const index_t e = plan.row_end;

  // Halo columns, grouped by owner. Owners are contiguous ranges, so sorting
  // the distinct columns globally also orders them by source rank.
  std::vector<char> mark(static_cast<std::size_t>(a.n_cols()), 0);
  std::vector<index_t> halo;
  for (offset_t j = rp[b]; j < rp[e]; ++j) {
    const index_t c = ci[j];
    if ((c < b || c >= e) && !mark[c]) {
      mark[c] = 1;
      halo.push_back(c);
    }
  }
  std::sort(halo.begin(), halo.end());
  for (index_t c : halo) plan.recv_from[p.owner(c)].push_back(c);
  plan.halo_offset.assign(static_cast<std::size_t>(nr) + 1, 0);
  for (int q = 0; q < nr; ++q) {
    plan.halo_offset[q + 1] = plan.halo_offset[q] + static_cast<index_t>(plan.recv_from[q].size());
  }

  // What every other rank needs from us.
  for (int q = 0; q < nr; ++q) {
    if (q == my_rank) continue;
    auto& list = plan.send_to[q];
    for (offset_t j = rp[p.begin(q)]; j < rp[p.end(q)]; ++j) {
      const index_t c = ci[j];
      if (c < b || c >= e) continue;
      ++plan.raw_send_refs[q];
      list.push_back(c - b);
    }
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }

  // Split my rows into local and remote parts.
  const index_t n_local = e - b;
  std::vector<offset_t> lp(static_cast<std::size_t>(n_local) + 1, 0);
  std::vector<offset_t> rp2(static_cast<std::size_t>(n_local) + 1, 0);
  std::vector<index_t> lc, rc;
  std::vector<double> lv, rv;
  for (index_t i = b; i < e; ++i) {
    for (offset_t j = rp[i]; j < rp[i + 1]; ++j) {
      const index_t c = ci[j];
      if (c >= b && c < e) {
        lc.push_back(c - b);
        lv.push_back(va[j]);
      } else {
        const int q = p.owner(c);
        const auto& src = plan.recv_from[q];
        const auto pos = std::lower_bound(src.begin(), src.end(), c) - src.begin();
        rc.push_back(plan.halo_offset[q] + static_cast<index_t>(pos));
        rv.push_back(va[j]);
      }
    }
    lp[i - b + 1] = static_cast<offset_t>(lc.size());
    rp2[i - b + 1] = static_cast<offset_t>(rc.size());
  }
  plan.a_local = CsrMatrix(n_local, n_local, std::move(lp), std::move(lc), std::move(lv));
  plan.a_remote = CsrMatrix(n_local, plan.halo_size(), std::move(rp2), std::move(rc), std::move(rv));
  return plan;
}

std::vector<CommPlan> build_all_plans(const CsrMatrix& a, const PartitionMap& p) {
  std::vector<CommPlan> plans;
  plans.reserve(static_cast<std::size_t>(p.n_ranks));
  for (int r = 0; r < p.n_ranks; ++r) plans.push_back(build_comm_plan(a, p, r));
  return plans;
}

VolumeReport exchange_volume(std::span<const CommPlan> plans) {
  const int nr = static_cast<int>(plans.size());
  VolumeReport v;
  v.sent_bytes.assign(nr, 0);
  v.recv_bytes.assign(nr, 0);
  v.messages_sent.assign(nr, 0);
  for (int r = 0; r < nr; ++r) {
    const auto& pr = plans[r];
    if (pr.rank != r || pr.n_ranks != nr || static_cast<int>(pr.send_to.size()) != nr ||
        static_cast<int>(pr.recv_from.size()) != nr) {
      throw ValidationError("exchange_volume: plan at position " + std::to_string(r) +
                            " does not belong to a " + std::to_string(nr) + "-rank set");
    }
  }
  for (int r = 0; r < nr; ++r) {
    for (int q = 0; q < nr; ++q) {
      const auto& sends = plans[r].send_to[q];
      const auto& recvs = plans[q].recv_from[r];
      bool ok = sends.size() == recvs.size();
      for (std::size_t k = 0; ok && k < sends.size(); ++k) {
        ok = sends[k] + plans[r].row_begin == recvs[k];
      }
      if (!ok) {
        std::ostringstream os;
        os << "exchange_volume: inconsistent plans between rank " << r << " (sender) and rank "
           << q << " (receiver): " << sends.size() << " values sent, " << recvs.size()
           << " expected";
        throw ValidationError(os.str());
      }
      const std::uint64_t bytes = 8ULL * sends.size();
      v.sent_bytes[r] += bytes;
      v.recv_bytes[q] += bytes;
      if (!sends.empty()) ++v.messages_sent[r];
      v.raw_reference_bytes += 8ULL * static_cast<std::uint64_t>(plans[r].raw_send_refs[q]);
    }
  }
  for (int r = 0; r < nr; ++r) {
    v.total_bytes += v.sent_bytes[r];
    v.total_messages += v.messages_sent[r];
  }
  return v;
}

std::uint64_t index_checksum(std::span<const index_t> globals) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (index_t g : globals) {
    auto u = static_cast<std::uint32_t>(g);
    for (int k = 0; k < 4; ++k) {
      h ^= (u >> (8 * k)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::uint64_t send_checksum(const CommPlan& plan, int peer) {
  std::vector<index_t> globals(plan.send_to[peer]);
  for (auto& g : globals) g += plan.row_begin;
  return index_checksum(globals);
}

std::uint64_t recv_checksum(const CommPlan& plan, int peer) {
  return index_checksum(plan.recv_from[peer]);
}

std::string plan_summary_json(std::span<const CommPlan> plans, int indent) {
  using nlohmann::json;
  const VolumeReport vol = exchange_volume(plans);
  json ranks = json::array();
  for (const auto& p : plans) {
    json peers = json::array();
    for (int q = 0; q < p.n_ranks; ++q) {
      if (p.send_to[q].empty() && p.recv_from[q].empty()) continue;
      peers.push_back({{"peer", q},
                       {"send", p.send_to[q].size()},
                       {"recv", p.recv_from[q].size()},
                       {"raw_send_refs", p.raw_send_refs[q]}});
    }
    ranks.push_back({{"rank", p.rank},
                     {"rows", {p.row_begin, p.row_end}},
                     {"nnz_local", p.a_local.n_nz()},
                     {"nnz_remote", p.a_remote.n_nz()},
                     {"halo_size", p.halo_size()},
                     {"send_bytes", vol.sent_bytes[p.rank]},
                     {"recv_bytes", vol.recv_bytes[p.rank]},
                     {"messages_sent", vol.messages_sent[p.rank]},
                     {"peers", peers}});
  }
  json out = {{"n_ranks", plans.size()},
              {"total_bytes", vol.total_bytes},
              {"total_messages", vol.total_messages},
              {"raw_reference_bytes", vol.raw_reference_bytes},
              {"ranks", ranks}};
  return out.dump(indent);
}

}  // namespace ospmv
