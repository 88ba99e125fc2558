// SPDX-License-Identifier: Apache-2.0
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <exception>
#include <thread>

#include "ospmv/error.hpp"
#include "ospmv/exec_engine.hpp"
#include "ospmv/perf_model.hpp"

namespace ospmv {

namespace {

struct RankOutcome {
  DenseVector c;
  std::vector<PhaseTimes> times;
  std::vector<double> iteration_s;
  Transport::Stats stats;
};

RankOutcome run_rank(const CommPlan& plan, std::span<const double> b_segment, const ExecConfig& cfg,
                     Transport& t) {
  const std::chrono::duration<double> timeout(cfg.epoch_timeout_s);
  RankRuntime rt(plan, cfg.workers_per_rank, cfg.mode, timeout);
  RankOutcome out;
  std::string phase = "setup";
  try {
    t.set_timeout(timeout);
    std::vector<std::uint64_t> send_sums(static_cast<std::size_t>(plan.n_ranks));
    std::vector<std::uint64_t> recv_sums(static_cast<std::size_t>(plan.n_ranks));
    for (int q = 0; q < plan.n_ranks; ++q) {
      send_sums[q] = send_checksum(plan, q);
      recv_sums[q] = recv_checksum(plan, q);
    }
    phase = "handshake";
    t.handshake(send_sums, recv_sums);
    rt.set_b(b_segment);

    const int total = cfg.warmup + cfg.iterations;
    for (int it = 0; it < total; ++it) {
      if (it == cfg.warmup) {
        rt.set_b(b_segment);
      } else if (it > 0) {
        rt.feed_back();
      }
      const auto epoch = static_cast<std::uint32_t>(it);
      t.set_epoch(epoch);
      rt.set_epoch(epoch);
      phase = "barrier";
      t.barrier();
      const auto t0 = std::chrono::steady_clock::now();
      phase = "step";
      run_step(cfg.mode, rt, t);
      phase = "barrier";
      t.barrier();
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (it >= cfg.warmup) {
        out.times.push_back(rt.last_times());
        out.iteration_s.push_back(wall);
      }
    }
  } catch (const std::exception& e) {
    const std::string where = phase == "step" ? rt.phase() : phase;
    const std::string msg = "rank " + std::to_string(plan.rank) + " failed during " + where +
                            " (epoch " + std::to_string(rt.epoch()) + "): " + e.what();
    if (dynamic_cast<const TransportAborted*>(&e)) throw TransportAborted(msg);
    throw RuntimeFailure(msg);
  }
  out.c.assign(rt.c().begin(), rt.c().end());
  out.stats = t.stats();
  return out;
}

std::vector<RankOutcome> launch_threads(const ExecConfig& cfg, const PartitionMap& p,
                                        std::span<const CommPlan> plans, std::span<const double> b0) {
  const int n = cfg.n_ranks;
  InProcessFabric fabric(n, cfg.transport);
  std::vector<RankOutcome> out(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errs(static_cast<std::size_t>(n));
  std::vector<char> is_abort(static_cast<std::size_t>(n), 0);
  {
    std::vector<std::jthread> ranks;
    ranks.reserve(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) {
      ranks.emplace_back([&, r] {
        try {
          auto ep = fabric.endpoint(r);
          out[r] = run_rank(plans[r], b0.subspan(p.begin(r), p.rows(r)), cfg, *ep);
        } catch (const TransportAborted&) {
          errs[r] = std::current_exception();
          is_abort[r] = 1;
        } catch (const std::exception& e) {
          errs[r] = std::current_exception();
          fabric.abort(e.what());
        }
      });
    }
  }
  for (int r = 0; r < n; ++r) {
    if (errs[r] && !is_abort[r]) std::rethrow_exception(errs[r]);
  }
  for (int r = 0; r < n; ++r) {
    if (errs[r]) std::rethrow_exception(errs[r]);
  }
  return out;
}

// Minimal binary encoding for results crossing a process boundary.
class Writer {
 public:
  template <typename T>
  void put(const T& v) {
    const auto* b = reinterpret_cast<const std::byte*>(&v);
    buf_.insert(buf_.end(), b, b + sizeof(T));
  }
  template <typename T>
  void put_vec(const std::vector<T>& v) {
    put<std::uint64_t>(v.size());
    const auto* b = reinterpret_cast<const std::byte*>(v.data());
    buf_.insert(buf_.end(), b, b + v.size() * sizeof(T));
  }
  const std::vector<std::byte>& bytes() const { return buf_; }

 private:
  std::vector<std::byte> buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::byte>& b) : buf_(b) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  template <typename T>
  std::vector<T> get_vec() {
    const auto n = get<std::uint64_t>();
    need(n * sizeof(T));
    std::vector<T> v(n);
    if (n) std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
    return v;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw RuntimeFailure("truncated result from rank process");
  }
  const std::vector<std::byte>& buf_;
  std::size_t pos_ = 0;
};

void write_all(int fd, const std::vector<std::byte>& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      return;
    }
    off += static_cast<std::size_t>(n);
  }
}

std::vector<std::byte> read_all(int fd) {
  std::vector<std::byte> out;
  std::byte buf[65536];
  for (;;) {
    const ssize_t n = ::read(fd, buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw RuntimeFailure(std::string("reading rank result failed: ") + std::strerror(errno));
    }
    if (n == 0) break;
    out.insert(out.end(), buf, buf + n);
  }
  return out;
}

std::vector<RankOutcome> launch_processes(const ExecConfig& cfg, const PartitionMap& p,
                                          std::span<const CommPlan> plans,
                                          std::span<const double> b0) {
  const int n = cfg.n_ranks;
  auto mesh = make_socket_mesh(n);
  std::vector<int> result_fds;
  std::vector<pid_t> pids;

  auto close_mesh = [&] {
    for (auto& row : mesh) {
      for (int& fd : row) {
        if (fd >= 0) ::close(fd);
        fd = -1;
      }
    }
  };

  for (int r = 0; r < n; ++r) {
    int pfd[2];
    if (::pipe(pfd) != 0) {
      close_mesh();
      throw RuntimeFailure(std::string("pipe failed: ") + std::strerror(errno));
    }
    const pid_t pid = ::fork();
    if (pid < 0) {
      close_mesh();
      throw RuntimeFailure(std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid == 0) {
      ::close(pfd[0]);
      for (int fd : result_fds) ::close(fd);
      for (int x = 0; x < n; ++x) {
        if (x == r) continue;
        for (int fd : mesh[x]) {
          if (fd >= 0) ::close(fd);
        }
      }
      Writer w;
      int status = 0;
      try {
        SocketTransport t(r, mesh[r]);
        RankOutcome o = run_rank(plans[r], b0.subspan(p.begin(r), p.rows(r)), cfg, t);
        w.put<std::uint8_t>(0);
        w.put_vec(o.c);
        w.put_vec(o.times);
        w.put_vec(o.iteration_s);
        w.put(o.stats);
      } catch (const std::exception& e) {
        const std::string msg = e.what();
        w = Writer{};
        w.put<std::uint8_t>(1);
        w.put_vec(std::vector<char>(msg.begin(), msg.end()));
        status = 1;
      }
      write_all(pfd[1], w.bytes());
      ::close(pfd[1]);
      ::_exit(status);
    }
    ::close(pfd[1]);
    result_fds.push_back(pfd[0]);
    pids.push_back(pid);
  }
  close_mesh();

  std::vector<RankOutcome> out(static_cast<std::size_t>(n));
  std::vector<std::string> errors;
  for (int r = 0; r < n; ++r) {
    std::vector<std::byte> data;
    try {
      data = read_all(result_fds[r]);
    } catch (const std::exception& e) {
      errors.push_back(e.what());
    }
    ::close(result_fds[r]);
    if (data.empty()) {
      errors.push_back("rank " + std::to_string(r) + " process exited without a result");
      continue;
    }
    try {
      Reader rd(data);
      if (rd.get<std::uint8_t>() != 0) {
        const auto msg = rd.get_vec<char>();
        errors.emplace_back(msg.begin(), msg.end());
        continue;
      }
      out[r].c = rd.get_vec<double>();
      out[r].times = rd.get_vec<PhaseTimes>();
      out[r].iteration_s = rd.get_vec<double>();
      out[r].stats = rd.get<Transport::Stats>();
    } catch (const std::exception& e) {
      errors.push_back(e.what());
    }
  }
  for (pid_t pid : pids) {
    int st = 0;
    while (::waitpid(pid, &st, 0) < 0 && errno == EINTR) {
    }
  }
  if (!errors.empty()) {
    // Prefer the root cause over peers that merely saw a closed connection.
    auto it = std::find_if(errors.begin(), errors.end(), [](const std::string& s) {
      return s.find("closed the connection") == std::string::npos;
    });
    throw RuntimeFailure(it != errors.end() ? *it : errors.front());
  }
  return out;
}

template <typename T>
double median(std::vector<T> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

DistributedRun run_distributed(const CsrMatrix& a, std::span<const double> b0,
                               const ExecConfig& cfg, const PartitionMap& partition,
                               std::span<const CommPlan> plans) {
  cfg.check();
  if (!a.square()) throw ValidationError("run_distributed: matrix must be square");
  if (b0.size() != static_cast<std::size_t>(a.n_cols())) {
    throw ValidationError("run_distributed: RHS length does not match the matrix");
  }
  if (partition.n_ranks != cfg.n_ranks || static_cast<int>(plans.size()) != cfg.n_ranks) {
    throw ValidationError("run_distributed: partition/plans do not match n_ranks");
  }

  DistributedRun run;
  run.volume = exchange_volume(plans);
  std::vector<RankOutcome> outcomes = cfg.transport.kind == TransportKind::Socket
                                          ? launch_processes(cfg, partition, plans, b0)
                                          : launch_threads(cfg, partition, plans, b0);

  run.result.reserve(static_cast<std::size_t>(a.n_rows()));
  run.iteration_s.assign(static_cast<std::size_t>(cfg.iterations), 0.0);
  for (int r = 0; r < cfg.n_ranks; ++r) {
    auto& o = outcomes[r];
    run.result.insert(run.result.end(), o.c.begin(), o.c.end());
    for (std::size_t k = 0; k < o.iteration_s.size() && k < run.iteration_s.size(); ++k) {
      run.iteration_s[k] = std::max(run.iteration_s[k], o.iteration_s[k]);
    }
    run.ranks.push_back({r, std::move(o.times), o.stats});
  }
  return run;
}

DistributedRun run_distributed(const CsrMatrix& a, std::span<const double> b0,
                               const ExecConfig& cfg) {
  cfg.check();
  const PartitionMap p = partition_by_nonzeros(a, cfg.n_ranks);
  const auto plans = build_all_plans(a, p);
  return run_distributed(a, b0, cfg, p, plans);
}

RunRecord make_record(const ExecConfig& cfg, const Problem& problem, const DistributedRun& run,
                      const ModelOptions& model) {
  RunRecord rec;
  const CsrMatrix& a = problem.matrix;
  rec.mode = to_string(cfg.mode);
  rec.n_ranks = cfg.n_ranks;
  rec.workers_per_rank = cfg.workers_per_rank;
  rec.transport = cfg.transport.label();
  rec.matrix = problem.name;
  rec.n_rows = a.n_rows();
  rec.n_nz = a.n_nz();
  rec.iterations = cfg.iterations;
  rec.median_s = median(run.iteration_s);
  rec.min_s = run.iteration_s.empty()
                  ? 0.0
                  : *std::min_element(run.iteration_s.begin(), run.iteration_s.end());
  rec.gflops = rec.median_s > 0.0 ? 2.0 * static_cast<double>(a.n_nz()) / rec.median_s * 1e-9 : 0.0;

  const bool split = cfg.mode != Mode::VectorNoOverlap && cfg.n_ranks > 1;
  if (model.bandwidth_gbs && a.n_rows() > 0 && a.n_nz() > 0) {
    rec.model_bound_gflops = perf::max_performance(
        perf::code_balance({a.nnzr(), model.kappa, split}), *model.bandwidth_gbs);
  }
  const double traffic = static_cast<double>(perf::model_traffic(a, split)) +
                         model.kappa * static_cast<double>(a.n_nz());
  rec.model_eff_gbs = rec.median_s > 0.0 ? traffic / rec.median_s * 1e-9 : 0.0;

  rec.comm_bytes = run.volume.total_bytes;
  rec.raw_comm_bytes = run.volume.raw_reference_bytes;
  rec.messages = run.volume.total_messages;

  // Per iteration: slowest rank per phase; then the median across iterations.
  std::vector<double> g, c, l, rm;
  for (int k = 0; k < cfg.iterations; ++k) {
    double mg = 0, mc = 0, ml = 0, mr = 0;
    for (const auto& rr : run.ranks) {
      if (k >= static_cast<int>(rr.iterations.size())) continue;
      const auto& t = rr.iterations[k];
      mg = std::max(mg, t.gather_s);
      mc = std::max(mc, t.comm_s);
      ml = std::max(ml, t.local_s);
      mr = std::max(mr, t.remote_s);
    }
    g.push_back(mg);
    c.push_back(mc);
    l.push_back(ml);
    rm.push_back(mr);
  }
  rec.gather_s = median(g);
  rec.comm_s = median(c);
  rec.local_s = median(l);
  rec.remote_s = median(rm);
  return rec;
}

std::vector<BenchmarkRun> run_benchmark(std::span<const ExecConfig> configs, const Problem& problem,
                                        const ModelOptions& model) {
  std::vector<std::string> errs;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    for (const auto& e : configs[k].validate()) {
      errs.push_back("config #" + std::to_string(k) + ": " + e);
    }
  }
  if (!errs.empty()) {
    std::string msg = "invalid benchmark configuration:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ValidationError(msg);
  }
  std::vector<BenchmarkRun> out;
  out.reserve(configs.size());
  for (const auto& cfg : configs) {
    BenchmarkRun br;
    br.config = cfg;
    br.run = run_distributed(problem.matrix, problem.rhs, cfg);
    br.record = make_record(cfg, problem, br.run, model);
    out.push_back(std::move(br));
  }
  return out;
}

}  // namespace ospmv
