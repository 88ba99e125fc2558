// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ospmv/error.hpp"

namespace ospmv {

/// When data actually moves in the in-process transport.
enum class Progress {
  Eager,   // at send(): an ideal asynchronous library
  OnWait,  // only inside the sender's wait_all(): no independent progress
};

enum class TransportKind { InProcess, Socket };

struct TransportConfig {
  TransportKind kind = TransportKind::InProcess;
  Progress progress = Progress::OnWait;
  /// Injected per-message delay, applied at delivery (in-process only).
  double base_latency_us = 0.0;
  double per_byte_ns = 0.0;
  /// One line per delivered message when set (in-process only). Not owned.
  std::ostream* debug_log = nullptr;

  bool delayed() const { return base_latency_us > 0.0 || per_byte_ns > 0.0; }
  /// Injected delay for a message of `bytes` bytes.
  std::chrono::nanoseconds delay_for(std::size_t bytes) const;
  std::string label() const;
};

Progress parse_progress(const std::string& text);
std::string to_string(Progress p);

/// Raised when a transport is torn down because another party failed.
class TransportAborted : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

/// Point-to-point channel between ranks. Messages between a pair arrive in
/// order; payloads are opaque bytes. One message per (source, epoch) pair is
/// expected by the engine, and every message carries the sender's epoch.
class Transport {
 public:
  struct Stats {
    std::uint64_t messages_sent = 0;
    std::uint64_t bytes_sent = 0;
    std::uint64_t messages_received = 0;
    std::uint64_t bytes_received = 0;
  };

  virtual ~Transport() = default;

  virtual int rank() const = 0;
  virtual int size() const = 0;

  /// Registers `buffer` for the next message from `source`. Nonblocking.
  /// The buffer must stay valid until wait_all() returns.
  virtual void post_receive(int source, std::span<std::byte> buffer) = 0;
  /// Queues a copy of `payload` for `dest`. Nonblocking; the caller may reuse
  /// the payload memory immediately. Throws if receives from an earlier epoch
  /// are still outstanding.
  virtual void send(int dest, std::span<const std::byte> payload) = 0;
  /// Completes all posted receives and queued sends.
  virtual void wait_all() = 0;
  virtual void barrier() = 0;

  /// Stamps subsequent sends and posted receives with `epoch`.
  virtual void set_epoch(std::uint32_t epoch) = 0;
  virtual std::uint32_t epoch() const = 0;
  virtual void set_timeout(std::chrono::duration<double> timeout) = 0;

  /// Exchanges rank ids and per-peer index checksums before the first epoch.
  /// send_sums[q] describes what we send to q, recv_sums[q] what we expect.
  virtual void handshake(std::span<const std::uint64_t> send_sums,
                         std::span<const std::uint64_t> recv_sums) = 0;

  virtual Stats stats() const = 0;

  void post_receive(int source, std::span<double> values) {
    post_receive(source, std::as_writable_bytes(values));
  }
  void send(int dest, std::span<const double> values) { send(dest, std::as_bytes(values)); }
};

/// Shared state for ranks living in one process. Each rank talks through its
/// own endpoint; endpoints may be used from different threads.
class InProcessFabric {
 public:
  InProcessFabric(int n_ranks, TransportConfig cfg);
  ~InProcessFabric();
  InProcessFabric(const InProcessFabric&) = delete;
  InProcessFabric& operator=(const InProcessFabric&) = delete;

  std::unique_ptr<Transport> endpoint(int rank);
  int size() const { return n_ranks_; }
  const TransportConfig& config() const { return cfg_; }

  /// Wakes every blocked party; their calls throw TransportAborted.
  void abort(const std::string& reason);
  bool aborted() const { return aborted_.load(); }

 private:
  friend class InProcessEndpoint;
  using Clock = std::chrono::steady_clock;

  struct Message {
    int src = 0;
    std::uint32_t epoch = 0;
    std::vector<std::byte> payload;
    Clock::time_point enqueued;
    Clock::time_point ready;
  };
  struct Mailbox {
    std::mutex m;
    std::condition_variable cv;
    std::vector<std::deque<Message>> from;
  };

  void deliver(int dst, Message msg);
  void log_delivery(const Message& msg, int dst, Clock::time_point delivered);
  void barrier(Clock::time_point deadline, int rank);
  [[noreturn]] void throw_aborted(int rank) const;

  int n_ranks_;
  TransportConfig cfg_;
  Clock::time_point origin_;
  std::vector<std::unique_ptr<Mailbox>> boxes_;

  std::mutex barrier_m_;
  std::condition_variable barrier_cv_;
  int barrier_waiting_ = 0;
  std::uint64_t barrier_generation_ = 0;

  std::atomic<bool> aborted_{false};
  mutable std::mutex abort_m_;
  std::string abort_reason_;

  std::mutex log_m_;
};

/// Transport over connected stream sockets, one per peer, using
/// little-endian frames [u32 source][u32 epoch][u32 payload bytes][payload].
/// Data moves only inside wait_all() and barrier().
class SocketTransport final : public Transport {
 public:
  static constexpr std::uint32_t kBarrierEpoch = 0xffffffffU;
  static constexpr std::uint32_t kHandshakeEpoch = 0xfffffffeU;
  static constexpr std::size_t kHeaderBytes = 12;

  /// peer_fds[q] is the socket to rank q (ignored for q == rank). Takes
  /// ownership of the descriptors.
  SocketTransport(int rank, std::vector<int> peer_fds);
  ~SocketTransport() override;
  SocketTransport(const SocketTransport&) = delete;
  SocketTransport& operator=(const SocketTransport&) = delete;

  int rank() const override { return rank_; }
  int size() const override { return static_cast<int>(peers_.size()); }
  void post_receive(int source, std::span<std::byte> buffer) override;
  void send(int dest, std::span<const std::byte> payload) override;
  void wait_all() override;
  void barrier() override;
  void set_epoch(std::uint32_t epoch) override { epoch_ = epoch; }
  std::uint32_t epoch() const override { return epoch_; }
  void set_timeout(std::chrono::duration<double> timeout) override;
  void handshake(std::span<const std::uint64_t> send_sums,
                 std::span<const std::uint64_t> recv_sums) override;
  Stats stats() const override { return stats_; }

  using Transport::post_receive;
  using Transport::send;

 private:
  struct Frame {
    std::uint32_t epoch = 0;
    std::vector<std::byte> payload;
  };
  struct Posted {
    std::span<std::byte> buffer;
    std::uint32_t epoch = 0;
  };
  struct Peer {
    int fd = -1;
    std::deque<std::vector<std::byte>> out;
    std::size_t out_offset = 0;
    std::deque<Frame> inbox;
    std::deque<Posted> posted;
    std::vector<std::byte> header;
    std::vector<std::byte> body;
    std::size_t got = 0;
    bool in_body = false;
    int barrier_tokens = 0;
    std::vector<std::byte> handshake;
    bool have_handshake = false;
    bool closed = false;
  };

  void queue_frame(int dest, std::uint32_t epoch, std::span<const std::byte> payload);
  /// Moves data until done(). Fails if a closed peer is one we are still
  /// waiting_on(q) or still owe data.
  void pump_until(const char* what, const std::function<bool()>& done,
                  const std::function<bool(int)>& waiting_on);
  void read_from(int q);
  void write_to(int q);
  void match_receives();
  bool outputs_flushed() const;

  int rank_;
  std::vector<Peer> peers_;
  std::uint32_t epoch_ = 0;
  std::chrono::duration<double> timeout_{60.0};
  Stats stats_;
};

/// Connected socket pairs for n ranks: fds[r][q] talks to rank q.
/// fds[r][r] is -1.
std::vector<std::vector<int>> make_socket_mesh(int n_ranks);

}  // namespace ospmv
