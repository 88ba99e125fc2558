// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/socket.h>
#include <unistd.h>

#include <functional>
#include <sstream>
#include <thread>

#include "ospmv/transport.hpp"

using namespace ospmv;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

namespace {

double seconds(Clock::duration d) { return std::chrono::duration<double>(d).count(); }

// Runs body(rank, transport) on one thread per rank; rethrows the first error.
void run_ranks(std::vector<std::unique_ptr<Transport>>& ts,
               const std::function<void(int, Transport&)>& body) {
  std::vector<std::exception_ptr> errors(ts.size());
  {
    std::vector<std::jthread> threads;
    for (std::size_t r = 0; r < ts.size(); ++r) {
      threads.emplace_back([&, r] {
        try {
          body(static_cast<int>(r), *ts[r]);
        } catch (...) {
          errors[r] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<std::unique_ptr<Transport>> endpoints(InProcessFabric& f) {
  std::vector<std::unique_ptr<Transport>> ts;
  for (int r = 0; r < f.size(); ++r) ts.push_back(f.endpoint(r));
  return ts;
}

std::vector<std::unique_ptr<Transport>> socket_ranks(int n) {
  auto mesh = make_socket_mesh(n);
  std::vector<std::unique_ptr<Transport>> ts;
  for (int r = 0; r < n; ++r) ts.push_back(std::make_unique<SocketTransport>(r, mesh[r]));
  return ts;
}

// Every rank sends `rounds` messages of distinct content to every other rank.
void all_to_all(std::vector<std::unique_ptr<Transport>>& ts, int rounds, std::size_t len) {
  const int n = static_cast<int>(ts.size());
  run_ranks(ts, [&](int r, Transport& t) {
    for (int e = 1; e <= rounds; ++e) {
      t.set_epoch(static_cast<std::uint32_t>(e));
      std::vector<std::vector<double>> in(n, std::vector<double>(len));
      for (int q = 0; q < n; ++q) {
        if (q != r) t.post_receive(q, std::span<double>(in[q]));
      }
      for (int q = 0; q < n; ++q) {
        if (q == r) continue;
        std::vector<double> out(len);
        for (std::size_t k = 0; k < len; ++k) out[k] = 1e6 * e + 1e3 * r + q + k * 1e-3;
        t.send(q, std::span<const double>(out));
      }
      t.wait_all();
      for (int q = 0; q < n; ++q) {
        if (q == r) continue;
        for (std::size_t k = 0; k < len; ++k) {
          if (in[q][k] != 1e6 * e + 1e3 * q + r + k * 1e-3) {
            throw std::runtime_error("wrong payload on rank " + std::to_string(r));
          }
        }
      }
      t.barrier();
    }
  });
}

}  // namespace

TEST_CASE("config labels and parsing") {
  TransportConfig c;
  CHECK(c.label() == "inproc-onwait");
  c.progress = Progress::Eager;
  c.base_latency_us = 50;
  CHECK(c.delayed());
  CHECK(c.label() == "delayed-eager(50us+0ns/B)");
  CHECK(c.delay_for(1000) == 50000ns);
  c.per_byte_ns = 2;
  CHECK(c.delay_for(1000) == 52000ns);
  c.kind = TransportKind::Socket;
  CHECK(c.label() == "socket");
  CHECK(parse_progress("eager") == Progress::Eager);
  CHECK(parse_progress("on-wait") == Progress::OnWait);
  CHECK_THROWS_AS(parse_progress("sometimes"), ValidationError);
}

TEST_CASE("in-process: all-to-all exchange, both progress models") {
  for (Progress p : {Progress::Eager, Progress::OnWait}) {
    TransportConfig c;
    c.progress = p;
    InProcessFabric f(4, c);
    auto ts = endpoints(f);
    CHECK_NOTHROW(all_to_all(ts, 5, 33));
    CHECK(ts[0]->stats().messages_sent == 15);
    CHECK(ts[0]->stats().bytes_received == 15 * 33 * 8);
  }
}

TEST_CASE("in-process: messages between a pair arrive in order") {
  InProcessFabric f(2, {});
  auto ts = endpoints(f);
  run_ranks(ts, [](int r, Transport& t) {
    std::vector<double> got(10);
    if (r == 0) {
      for (int k = 0; k < 10; ++k) {
        const double v = k;
        t.send(1, std::span<const double>(&v, 1));
      }
      t.wait_all();
    } else {
      for (int k = 0; k < 10; ++k) t.post_receive(0, std::span<double>(&got[k], 1));
      t.wait_all();
      for (int k = 0; k < 10; ++k) CHECK(got[k] == k);
    }
  });
}

TEST_CASE("in-process: eager delivers without the sender waiting, on-wait does not") {
  for (Progress p : {Progress::Eager, Progress::OnWait}) {
    TransportConfig c;
    c.progress = p;
    InProcessFabric f(2, c);
    auto t0 = f.endpoint(0), t1 = f.endpoint(1);
    t1->set_timeout(0.2s);
    const double v = 4.0;
    double got = 0;
    t0->send(1, std::span<const double>(&v, 1));
    t1->post_receive(0, std::span<double>(&got, 1));
    if (p == Progress::Eager) {
      t1->wait_all();
      CHECK(got == 4.0);
    } else {
      CHECK_THROWS_AS(t1->wait_all(), RuntimeFailure);
    }
  }
}

TEST_CASE("in-process: injected delay is measured from send (eager) or wait (on-wait)") {
  for (Progress p : {Progress::Eager, Progress::OnWait}) {
    TransportConfig c;
    c.progress = p;
    c.base_latency_us = 30000;
    InProcessFabric f(2, c);
    auto t0 = f.endpoint(0), t1 = f.endpoint(1);
    const double v = 1.0;
    double got = 0;
    t1->post_receive(0, std::span<double>(&got, 1));
    const auto start = Clock::now();
    t0->send(1, std::span<const double>(&v, 1));
    std::this_thread::sleep_for(40ms);  // "compute" before the sender waits
    const auto waited = Clock::now();
    t0->wait_all();
    t1->wait_all();
    const auto done = Clock::now();
    CHECK(got == 1.0);
    if (p == Progress::Eager) {
      // Delay elapsed during the sender's compute: little extra wait.
      CHECK(seconds(done - waited) < 0.02);
    } else {
      CHECK(seconds(done - waited) >= 0.029);
    }
    CHECK(seconds(done - start) >= 0.039);
  }
}

TEST_CASE("in-process: epoch checks") {
  InProcessFabric f(2, {});
  auto t0 = f.endpoint(0), t1 = f.endpoint(1);
  const double v = 1.0;
  double got = 0;
  t0->set_epoch(1);
  t0->send(1, std::span<const double>(&v, 1));
  t0->wait_all();
  t1->set_epoch(2);
  t1->post_receive(0, std::span<double>(&got, 1));
  CHECK_THROWS_WITH_AS(t1->wait_all(), doctest::Contains("epoch violation"), RuntimeFailure);

  InProcessFabric g(2, {});
  auto u0 = g.endpoint(0);
  u0->set_epoch(1);
  u0->post_receive(1, std::span<double>(&got, 1));
  u0->set_epoch(2);
  CHECK_THROWS_WITH_AS(u0->send(1, std::span<const double>(&v, 1)),
                       doctest::Contains("epoch violation"), RuntimeFailure);
}

TEST_CASE("in-process: size mismatch and invalid peers") {
  InProcessFabric f(2, {TransportKind::InProcess, Progress::Eager});
  auto t0 = f.endpoint(0), t1 = f.endpoint(1);
  const double v[2] = {1, 2};
  double got = 0;
  t0->send(1, std::span<const double>(v, 2));
  t1->post_receive(0, std::span<double>(&got, 1));
  CHECK_THROWS_AS(t1->wait_all(), RuntimeFailure);
  CHECK_THROWS_AS(t0->send(0, std::span<const double>(v, 1)), ValidationError);
  CHECK_THROWS_AS(t0->post_receive(5, std::span<double>(&got, 1)), ValidationError);
  CHECK_THROWS_AS(f.endpoint(2), ValidationError);
  CHECK_THROWS_AS(InProcessFabric(0, {}), ValidationError);
}

TEST_CASE("in-process: abort wakes blocked ranks") {
  InProcessFabric f(3, {});
  auto ts = endpoints(f);
  std::jthread killer([&] {
    std::this_thread::sleep_for(50ms);
    f.abort("test abort");
  });
  double got = 0;
  ts[1]->post_receive(0, std::span<double>(&got, 1));
  const auto start = Clock::now();
  CHECK_THROWS_AS(ts[1]->wait_all(), TransportAborted);
  CHECK_THROWS_AS(ts[2]->barrier(), TransportAborted);
  CHECK(seconds(Clock::now() - start) < 5.0);
  CHECK(f.aborted());
}

TEST_CASE("in-process: barrier timeout reports arrivals") {
  InProcessFabric f(2, {});
  auto t0 = f.endpoint(0);
  t0->set_timeout(0.05s);
  CHECK_THROWS_WITH_AS(t0->barrier(), doctest::Contains("1 of 2"), RuntimeFailure);
}

TEST_CASE("in-process: debug log has one line per delivered message") {
  std::ostringstream log;
  TransportConfig c;
  c.debug_log = &log;
  InProcessFabric f(2, c);
  auto ts = endpoints(f);
  all_to_all(ts, 2, 3);
  const std::string s = log.str();
  CHECK(std::count(s.begin(), s.end(), '\n') == 4);
  CHECK(s.find("epoch=1 src=0 dst=1 bytes=24 enqueue_us=") != std::string::npos);
  CHECK(s.find("deliver_us=") != std::string::npos);
}

TEST_CASE("socket: all-to-all, large messages and barriers") {
  for (int n : {2, 3, 5}) {
    auto ts = socket_ranks(n);
    CHECK_NOTHROW(all_to_all(ts, 4, 7));
  }
  auto big = socket_ranks(2);
  CHECK_NOTHROW(all_to_all(big, 2, 300000));  // larger than socket buffers
  CHECK(big[1]->stats().bytes_received == 2 * 300000 * 8);
}

TEST_CASE("socket: handshake checks plan checksums") {
  auto ok = socket_ranks(3);
  CHECK_NOTHROW(run_ranks(ok, [](int r, Transport& t) {
    // send_sums[q] = 10r + q, so peers expect recv_sums[q] = 10q + r.
    std::vector<std::uint64_t> s(3), v(3);
    for (int q = 0; q < 3; ++q) {
      s[q] = 10 * r + q;
      v[q] = 10 * q + r;
    }
    t.handshake(s, v);
  }));
  auto bad = socket_ranks(2);
  CHECK_THROWS_WITH_AS(run_ranks(bad,
                                 [](int r, Transport& t) {
                                   std::vector<std::uint64_t> s{1, 1}, v{1, 1};
                                   if (r == 1) v[0] = 2;
                                   t.handshake(s, v);
                                 }),
                       doctest::Contains("checksum mismatch"), RuntimeFailure);
}

TEST_CASE("socket: wire format is little-endian [src][epoch][bytes][payload]") {
  int sv[2];
  REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) == 0);
  SocketTransport t(1, {sv[0], -1});
  t.set_epoch(0x01020304);
  const std::byte payload[3] = {std::byte{0xaa}, std::byte{0xbb}, std::byte{0xcc}};
  t.send(0, std::span<const std::byte>(payload, 3));
  t.wait_all();
  unsigned char buf[15] = {};
  REQUIRE(::read(sv[1], buf, sizeof buf) == 15);
  const unsigned char want[15] = {1, 0, 0, 0, 4, 3, 2, 1, 3, 0, 0, 0, 0xaa, 0xbb, 0xcc};
  CHECK(std::equal(buf, buf + 15, want));

  // And a hand-written frame is accepted.
  const unsigned char in[20] = {0, 0, 0, 0, 4, 3, 2, 1, 8, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0xf0, 0x3f};
  REQUIRE(::write(sv[1], in, sizeof in) == 20);
  double got = 0;
  t.post_receive(0, std::span<double>(&got, 1));
  t.wait_all();
  CHECK(got == 1.0);
  ::close(sv[1]);
}

TEST_CASE("socket: a vanished peer is reported, a finished one is not") {
  int sv[2];
  REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) == 0);
  SocketTransport t(1, {sv[0], -1});
  t.set_timeout(5s);
  double got = 0;
  t.post_receive(0, std::span<double>(&got, 1));
  ::close(sv[1]);
  CHECK_THROWS_WITH_AS(t.wait_all(), doctest::Contains("closed the connection"), RuntimeFailure);

  // The peer takes our barrier token, answers and exits at once; its EOF
  // must not hide the token that arrived just before it.
  int pv[2];
  REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, pv) == 0);
  SocketTransport late(1, {pv[0], -1});
  late.set_timeout(5s);
  std::jthread peer([fd = pv[1]] {
    unsigned char tok[12];
    std::size_t got = 0;
    while (got < sizeof tok) {
      const auto n = ::read(fd, tok + got, sizeof tok - got);
      if (n <= 0) break;
      got += static_cast<std::size_t>(n);
    }
    const unsigned char reply[12] = {0, 0, 0, 0, 0xff, 0xff, 0xff, 0xff, 0, 0, 0, 0};
    (void)!::write(fd, reply, sizeof reply);
    ::close(fd);
  });
  CHECK_NOTHROW(late.barrier());
}

TEST_CASE("socket: receive timeout") {
  auto ts = socket_ranks(2);
  ts[0]->set_timeout(0.1s);
  double got = 0;
  ts[0]->post_receive(1, std::span<double>(&got, 1));
  CHECK_THROWS_WITH_AS(ts[0]->wait_all(), doctest::Contains("timed out"), RuntimeFailure);
}
