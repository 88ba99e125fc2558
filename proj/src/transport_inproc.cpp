// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstring>
#include <sstream>
#include <thread>

#include "ospmv/transport.hpp"

namespace ospmv {

std::chrono::nanoseconds TransportConfig::delay_for(std::size_t bytes) const {
  const double ns = base_latency_us * 1e3 + per_byte_ns * static_cast<double>(bytes);
  return std::chrono::nanoseconds(static_cast<std::int64_t>(ns));
}

std::string TransportConfig::label() const {
  if (kind == TransportKind::Socket) return "socket";
  std::ostringstream os;
  os << (delayed() ? "delayed-" : "inproc-") << to_string(progress);
  if (delayed()) os << "(" << base_latency_us << "us+" << per_byte_ns << "ns/B)";
  return os.str();
}

Progress parse_progress(const std::string& text) {
  if (text == "eager") return Progress::Eager;
  if (text == "on-wait" || text == "onwait" || text == "on_wait") return Progress::OnWait;
  throw ValidationError("unknown progress model '" + text + "' (eager, on-wait)");
}

std::string to_string(Progress p) { return p == Progress::Eager ? "eager" : "onwait"; }

class InProcessEndpoint final : public Transport {
 public:
  InProcessEndpoint(InProcessFabric& fabric, int rank) : fabric_(fabric), rank_(rank) {}

  int rank() const override { return rank_; }
  int size() const override { return fabric_.n_ranks_; }

  void post_receive(int source, std::span<std::byte> buffer) override {
    check_peer(source);
    posted_.push_back({source, buffer, epoch_});
  }

  void send(int dest, std::span<const std::byte> payload) override {
    check_peer(dest);
    for (const auto& p : posted_) {
      if (p.epoch != epoch_) {
        throw RuntimeFailure("epoch violation on rank " + std::to_string(rank_) + ": send in epoch " +
                             std::to_string(epoch_) + " while a receive from epoch " +
                             std::to_string(p.epoch) + " is outstanding");
      }
    }
    InProcessFabric::Message msg;
    msg.src = rank_;
    msg.epoch = epoch_;
    msg.payload.assign(payload.begin(), payload.end());
    msg.enqueued = InProcessFabric::Clock::now();
    ++stats_.messages_sent;
    stats_.bytes_sent += payload.size();
    if (fabric_.cfg_.progress == Progress::Eager) {
      msg.ready = msg.enqueued + fabric_.cfg_.delay_for(msg.payload.size());
      fabric_.deliver(dest, std::move(msg));
    } else {
      outbox_.emplace_back(dest, std::move(msg));
    }
  }

  void wait_all() override {
    using Clock = InProcessFabric::Clock;
    // Deferred transfers start now.
    const auto start = Clock::now();
    for (auto& [dest, msg] : outbox_) {
      msg.ready = start + fabric_.cfg_.delay_for(msg.payload.size());
      fabric_.deliver(dest, std::move(msg));
    }
    outbox_.clear();

    const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(timeout_);
    auto& box = *fabric_.boxes_[rank_];
    for (const auto& p : posted_) {
      InProcessFabric::Message msg;
      {
        std::unique_lock lk(box.m);
        const bool ok = box.cv.wait_until(lk, deadline, [&] {
          return fabric_.aborted() || !box.from[p.source].empty();
        });
        if (fabric_.aborted()) fabric_.throw_aborted(rank_);
        if (!ok) {
          throw RuntimeFailure("rank " + std::to_string(rank_) +
                               ": timed out waiting for a message from rank " +
                               std::to_string(p.source) + " in epoch " + std::to_string(p.epoch));
        }
        msg = std::move(box.from[p.source].front());
        box.from[p.source].pop_front();
      }
      if (msg.epoch != p.epoch) {
        throw RuntimeFailure("epoch violation on rank " + std::to_string(rank_) +
                             ": expected epoch " + std::to_string(p.epoch) + " from rank " +
                             std::to_string(p.source) + ", got " + std::to_string(msg.epoch));
      }
      if (msg.payload.size() != p.buffer.size()) {
        throw RuntimeFailure("rank " + std::to_string(rank_) + ": message from rank " +
                             std::to_string(p.source) + " has " +
                             std::to_string(msg.payload.size()) + " bytes, expected " +
                             std::to_string(p.buffer.size()));
      }
      if (msg.ready > Clock::now()) {
        if (msg.ready > deadline) {
          throw RuntimeFailure("rank " + std::to_string(rank_) +
                               ": injected delay exceeds the epoch timeout");
        }
        std::this_thread::sleep_until(msg.ready);
      }
      if (!msg.payload.empty()) std::memcpy(p.buffer.data(), msg.payload.data(), msg.payload.size());
      ++stats_.messages_received;
      stats_.bytes_received += msg.payload.size();
      if (fabric_.cfg_.debug_log) fabric_.log_delivery(msg, rank_, Clock::now());
    }
    posted_.clear();
  }

  void barrier() override {
    const auto deadline = InProcessFabric::Clock::now() +
                          std::chrono::duration_cast<InProcessFabric::Clock::duration>(timeout_);
    fabric_.barrier(deadline, rank_);
  }

  void set_epoch(std::uint32_t epoch) override { epoch_ = epoch; }
  std::uint32_t epoch() const override { return epoch_; }
  void set_timeout(std::chrono::duration<double> timeout) override { timeout_ = timeout; }
  void handshake(std::span<const std::uint64_t>, std::span<const std::uint64_t>) override {}
  Stats stats() const override { return stats_; }

 private:
  struct Posted {
    int source;
    std::span<std::byte> buffer;
    std::uint32_t epoch;
  };

  void check_peer(int q) const {
    if (q < 0 || q >= fabric_.n_ranks_ || q == rank_) {
      throw ValidationError("rank " + std::to_string(rank_) + ": invalid peer " + std::to_string(q));
    }
  }

  InProcessFabric& fabric_;
  int rank_;
  std::uint32_t epoch_ = 0;
  std::chrono::duration<double> timeout_{60.0};
  std::vector<Posted> posted_;
  std::vector<std::pair<int, InProcessFabric::Message>> outbox_;
  Stats stats_;
};

InProcessFabric::InProcessFabric(int n_ranks, TransportConfig cfg)
    : n_ranks_(n_ranks), cfg_(cfg), origin_(Clock::now()) {
  if (n_ranks < 1) throw ValidationError("InProcessFabric: need at least one rank");
  if (cfg_.kind != TransportKind::InProcess) {
    throw ValidationError("InProcessFabric: transport config is not in-process");
  }
  boxes_.reserve(static_cast<std::size_t>(n_ranks));
  for (int r = 0; r < n_ranks; ++r) {
    auto box = std::make_unique<Mailbox>();
    box->from.resize(static_cast<std::size_t>(n_ranks));
    boxes_.push_back(std::move(box));
  }
}

InProcessFabric::~InProcessFabric() = default;

std::unique_ptr<Transport> InProcessFabric::endpoint(int rank) {
  if (rank < 0 || rank >= n_ranks_) throw ValidationError("InProcessFabric: rank out of range");
  return std::make_unique<InProcessEndpoint>(*this, rank);
}

void InProcessFabric::deliver(int dst, Message msg) {
  auto& box = *boxes_[dst];
  {
    std::lock_guard lk(box.m);
    box.from[msg.src].push_back(std::move(msg));
  }
  box.cv.notify_all();
}

void InProcessFabric::log_delivery(const Message& msg, int dst, Clock::time_point delivered) {
  using std::chrono::duration_cast;
  using std::chrono::microseconds;
  std::lock_guard lk(log_m_);
  *cfg_.debug_log << "epoch=" << msg.epoch << " src=" << msg.src << " dst=" << dst
                  << " bytes=" << msg.payload.size()
                  << " enqueue_us=" << duration_cast<microseconds>(msg.enqueued - origin_).count()
                  << " deliver_us=" << duration_cast<microseconds>(delivered - origin_).count()
                  << '\n';
}

void InProcessFabric::barrier(Clock::time_point deadline, int rank) {
  std::unique_lock lk(barrier_m_);
  if (aborted()) throw_aborted(rank);
  const auto gen = barrier_generation_;
  if (++barrier_waiting_ == n_ranks_) {
    barrier_waiting_ = 0;
    ++barrier_generation_;
    barrier_cv_.notify_all();
    return;
  }
  const bool ok = barrier_cv_.wait_until(
      lk, deadline, [&] { return aborted() || barrier_generation_ != gen; });
  if (barrier_generation_ != gen) return;
  if (aborted()) throw_aborted(rank);
  if (!ok) {
    throw RuntimeFailure("rank " + std::to_string(rank) + ": barrier timed out with " +
                         std::to_string(barrier_waiting_) + " of " + std::to_string(n_ranks_) +
                         " ranks arrived");
  }
}

void InProcessFabric::abort(const std::string& reason) {
  {
    std::lock_guard lk(abort_m_);
    if (aborted_.load()) return;
    abort_reason_ = reason;
    aborted_.store(true);
  }
  for (auto& box : boxes_) {
    std::lock_guard lk(box->m);
    box->cv.notify_all();
  }
  std::lock_guard lk(barrier_m_);
  barrier_cv_.notify_all();
}

void InProcessFabric::throw_aborted(int rank) const {
  std::lock_guard lk(abort_m_);
  throw TransportAborted("rank " + std::to_string(rank) + ": transport aborted (" + abort_reason_ +
                         ")");
}

}  // namespace ospmv
