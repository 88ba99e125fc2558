// SPDX-License-Identifier: Apache-2.0
#include <fcntl.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "ospmv/transport.hpp"

namespace ospmv {

namespace {

void put_u32(std::byte* out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out[k] = static_cast<std::byte>((v >> (8 * k)) & 0xffU);
}

void put_u64(std::byte* out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out[k] = static_cast<std::byte>((v >> (8 * k)) & 0xffU);
}

std::uint32_t get_u32(const std::byte* in) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= std::to_integer<std::uint32_t>(in[k]) << (8 * k);
  return v;
}

std::uint64_t get_u64(const std::byte* in) {
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= std::to_integer<std::uint64_t>(in[k]) << (8 * k);
  return v;
}

std::string errno_text() { return std::strerror(errno); }

}  // namespace

std::vector<std::vector<int>> make_socket_mesh(int n_ranks) {
  std::vector<std::vector<int>> fds(n_ranks, std::vector<int>(n_ranks, -1));
  for (int r = 0; r < n_ranks; ++r) {
    for (int q = r + 1; q < n_ranks; ++q) {
      int sv[2];
      if (::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0) {
        for (auto& row : fds) {
          for (int fd : row) {
            if (fd >= 0) ::close(fd);
          }
        }
        throw RuntimeFailure("socketpair failed: " + errno_text());
      }
      fds[r][q] = sv[0];
      fds[q][r] = sv[1];
    }
  }
  return fds;
}

SocketTransport::SocketTransport(int rank, std::vector<int> peer_fds)
    : rank_(rank), peers_(peer_fds.size()) {
  if (rank < 0 || rank >= static_cast<int>(peer_fds.size())) {
    throw ValidationError("SocketTransport: rank out of range");
  }
  for (std::size_t q = 0; q < peer_fds.size(); ++q) {
    auto& p = peers_[q];
    p.header.resize(kHeaderBytes);
    if (static_cast<int>(q) == rank) continue;
    p.fd = peer_fds[q];
    if (p.fd < 0) throw ValidationError("SocketTransport: missing socket for peer " + std::to_string(q));
    const int flags = ::fcntl(p.fd, F_GETFL, 0);
    ::fcntl(p.fd, F_SETFL, flags | O_NONBLOCK);
  }
}

SocketTransport::~SocketTransport() {
  for (auto& p : peers_) {
    if (p.fd >= 0) ::close(p.fd);
  }
}

void SocketTransport::set_timeout(std::chrono::duration<double> timeout) { timeout_ = timeout; }

void SocketTransport::post_receive(int source, std::span<std::byte> buffer) {
  if (source < 0 || source >= size() || source == rank_) {
    throw ValidationError("rank " + std::to_string(rank_) + ": invalid peer " + std::to_string(source));
  }
  peers_[source].posted.push_back({buffer, epoch_});
}

void SocketTransport::queue_frame(int dest, std::uint32_t epoch, std::span<const std::byte> payload) {
  std::vector<std::byte> frame(kHeaderBytes + payload.size());
  put_u32(frame.data(), static_cast<std::uint32_t>(rank_));
  put_u32(frame.data() + 4, epoch);
  put_u32(frame.data() + 8, static_cast<std::uint32_t>(payload.size()));
  if (!payload.empty()) std::memcpy(frame.data() + kHeaderBytes, payload.data(), payload.size());
  peers_[dest].out.push_back(std::move(frame));
}

void SocketTransport::send(int dest, std::span<const std::byte> payload) {
  if (dest < 0 || dest >= size() || dest == rank_) {
    throw ValidationError("rank " + std::to_string(rank_) + ": invalid peer " + std::to_string(dest));
  }
  for (const auto& p : peers_) {
    for (const auto& r : p.posted) {
      if (r.epoch != epoch_) {
        throw RuntimeFailure("epoch violation on rank " + std::to_string(rank_) + ": send in epoch " +
                             std::to_string(epoch_) + " while a receive from epoch " +
                             std::to_string(r.epoch) + " is outstanding");
      }
    }
  }
  if (payload.size() > 0xffffffffULL) throw ValidationError("SocketTransport: payload too large");
  queue_frame(dest, epoch_, payload);
  ++stats_.messages_sent;
  stats_.bytes_sent += payload.size();
}

bool SocketTransport::outputs_flushed() const {
  for (const auto& p : peers_) {
    if (!p.out.empty()) return false;
  }
  return true;
}

void SocketTransport::write_to(int q) {
  auto& p = peers_[q];
  while (!p.out.empty()) {
    auto& frame = p.out.front();
    const ssize_t n = ::send(p.fd, frame.data() + p.out_offset, frame.size() - p.out_offset, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EAGAIN || errno == EWOULDBLOCK) return;
      if (errno == EINTR) continue;
      throw RuntimeFailure("rank " + std::to_string(rank_) + ": send to rank " + std::to_string(q) +
                           " failed: " + errno_text());
    }
    p.out_offset += static_cast<std::size_t>(n);
    if (p.out_offset == frame.size()) {
      p.out.pop_front();
      p.out_offset = 0;
    }
  }
}

void SocketTransport::read_from(int q) {
  auto& p = peers_[q];
  for (;;) {
    std::byte* dst;
    std::size_t want;
    if (!p.in_body) {
      dst = p.header.data() + p.got;
      want = kHeaderBytes - p.got;
    } else {
      dst = p.body.data() + p.got;
      want = p.body.size() - p.got;
    }
    ssize_t n = 0;
    if (want > 0) {
      n = ::recv(p.fd, dst, want, 0);
      if (n == 0) {
        // The peer may have finished legitimately; only fail if we still
        // need something from it (checked in pump_until).
        p.closed = true;
        return;
      }
      if (n < 0) {
        if (errno == EAGAIN || errno == EWOULDBLOCK) return;
        if (errno == EINTR) continue;
        throw RuntimeFailure("rank " + std::to_string(rank_) + ": receive from rank " +
                             std::to_string(q) + " failed: " + errno_text());
      }
      p.got += static_cast<std::size_t>(n);
    }
    if (!p.in_body) {
      if (p.got < kHeaderBytes) continue;
      const auto src = get_u32(p.header.data());
      if (src != static_cast<std::uint32_t>(q)) {
        throw RuntimeFailure("rank " + std::to_string(rank_) + ": frame from socket of rank " +
                             std::to_string(q) + " claims source " + std::to_string(src));
      }
      p.body.assign(get_u32(p.header.data() + 8), std::byte{0});
      p.in_body = true;
      p.got = 0;
      if (!p.body.empty()) continue;
    } else if (p.got < p.body.size()) {
      continue;
    }
    // Complete frame.
    const auto epoch = get_u32(p.header.data() + 4);
    if (epoch == kBarrierEpoch) {
      ++p.barrier_tokens;
    } else if (epoch == kHandshakeEpoch) {
      p.handshake = std::move(p.body);
      p.have_handshake = true;
    } else {
      p.inbox.push_back({epoch, std::move(p.body)});
    }
    p.body.clear();
    p.in_body = false;
    p.got = 0;
  }
}

void SocketTransport::match_receives() {
  for (int q = 0; q < size(); ++q) {
    auto& p = peers_[q];
    while (!p.posted.empty() && !p.inbox.empty()) {
      auto& want = p.posted.front();
      auto& frame = p.inbox.front();
      if (frame.epoch != want.epoch) {
        throw RuntimeFailure("epoch violation on rank " + std::to_string(rank_) +
                             ": expected epoch " + std::to_string(want.epoch) + " from rank " +
                             std::to_string(q) + ", got " + std::to_string(frame.epoch));
      }
      if (frame.payload.size() != want.buffer.size()) {
        throw RuntimeFailure("rank " + std::to_string(rank_) + ": message from rank " +
                             std::to_string(q) + " has " + std::to_string(frame.payload.size()) +
                             " bytes, expected " + std::to_string(want.buffer.size()));
      }
      if (!frame.payload.empty()) {
        std::memcpy(want.buffer.data(), frame.payload.data(), frame.payload.size());
      }
      ++stats_.messages_received;
      stats_.bytes_received += frame.payload.size();
      p.posted.pop_front();
      p.inbox.pop_front();
    }
  }
}

void SocketTransport::pump_until(const char* what, const std::function<bool()>& done,
                                 const std::function<bool(int)>& waiting_on) {
  using Clock = std::chrono::steady_clock;
  const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(timeout_);
  std::vector<pollfd> fds;
  std::vector<int> who;
  for (;;) {
    match_receives();
    if (done()) return;
    for (int q = 0; q < size(); ++q) {
      if (q != rank_ && peers_[q].closed && (!peers_[q].out.empty() || waiting_on(q))) {
        throw RuntimeFailure("rank " + std::to_string(rank_) + ": rank " + std::to_string(q) +
                             " closed the connection during " + what);
      }
    }
    fds.clear();
    who.clear();
    for (int q = 0; q < size(); ++q) {
      if (q == rank_ || peers_[q].closed) continue;
      short ev = POLLIN;
      if (!peers_[q].out.empty()) ev |= POLLOUT;
      fds.push_back({peers_[q].fd, ev, 0});
      who.push_back(q);
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() <= 0) {
      throw RuntimeFailure("rank " + std::to_string(rank_) + ": " + what + " timed out in epoch " +
                           std::to_string(epoch_));
    }
    const int rc = ::poll(fds.data(), fds.size(), static_cast<int>(std::min<long long>(left.count(), 1000)));
    if (fds.empty()) continue;
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw RuntimeFailure("rank " + std::to_string(rank_) + ": poll failed: " + errno_text());
    }
    for (std::size_t k = 0; k < fds.size(); ++k) {
      if (fds[k].revents & POLLOUT) write_to(who[k]);
      if (fds[k].revents & (POLLIN | POLLHUP | POLLERR)) read_from(who[k]);
    }
  }
}

void SocketTransport::wait_all() {
  pump_until("wait_all", [&] {
    if (!outputs_flushed()) return false;
    for (const auto& p : peers_) {
      if (!p.posted.empty()) return false;
    }
    return true;
  }, [&](int q) { return !peers_[q].posted.empty(); });
}

void SocketTransport::barrier() {
  for (int q = 0; q < size(); ++q) {
    if (q != rank_) queue_frame(q, kBarrierEpoch, {});
  }
  pump_until("barrier", [&] {
    if (!outputs_flushed()) return false;
    for (int q = 0; q < size(); ++q) {
      if (q != rank_ && peers_[q].barrier_tokens < 1) return false;
    }
    return true;
  }, [&](int q) { return peers_[q].barrier_tokens < 1; });
  for (int q = 0; q < size(); ++q) {
    if (q != rank_) --peers_[q].barrier_tokens;
  }
}

void SocketTransport::handshake(std::span<const std::uint64_t> send_sums,
                                std::span<const std::uint64_t> recv_sums) {
  if (send_sums.size() != peers_.size() || recv_sums.size() != peers_.size()) {
    throw ValidationError("SocketTransport::handshake: checksum arrays must have one entry per rank");
  }
  for (int q = 0; q < size(); ++q) {
    if (q == rank_) continue;
    std::byte payload[20];
    put_u32(payload, static_cast<std::uint32_t>(rank_));
    put_u64(payload + 4, send_sums[q]);
    put_u64(payload + 12, recv_sums[q]);
    queue_frame(q, kHandshakeEpoch, payload);
  }
  pump_until("handshake", [&] {
    if (!outputs_flushed()) return false;
    for (int q = 0; q < size(); ++q) {
      if (q != rank_ && !peers_[q].have_handshake) return false;
    }
    return true;
  }, [&](int q) { return !peers_[q].have_handshake; });
  for (int q = 0; q < size(); ++q) {
    if (q == rank_) continue;
    auto& p = peers_[q];
    p.have_handshake = false;
    if (p.handshake.size() != 20) {
      throw RuntimeFailure("rank " + std::to_string(rank_) + ": malformed handshake from rank " +
                           std::to_string(q));
    }
    const auto their_rank = get_u32(p.handshake.data());
    const auto their_send = get_u64(p.handshake.data() + 4);
    const auto their_recv = get_u64(p.handshake.data() + 12);
    if (their_rank != static_cast<std::uint32_t>(q)) {
      throw RuntimeFailure("rank " + std::to_string(rank_) + ": peer on socket " + std::to_string(q) +
                           " identifies as rank " + std::to_string(their_rank));
    }
    if (their_send != recv_sums[q] || their_recv != send_sums[q]) {
      throw RuntimeFailure("rank " + std::to_string(rank_) + ": communication plan checksum mismatch with rank " +
                           std::to_string(q));
    }
  }
}

}  // namespace ospmv
