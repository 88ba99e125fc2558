// SPDX-License-Identifier: Apache-2.0
#include "ospmv/exec_engine.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <sstream>
#include <thread>

#include "ospmv/error.hpp"

namespace ospmv {

using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string normalize(std::string_view text) {
  std::string s;
  for (char ch : text) {
    if (ch == '-' || ch == '_' || ch == ' ') continue;
    s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return s;
}

}  // namespace

Mode parse_mode(std::string_view text) {
  const std::string s = normalize(text);
  if (s == "vector" || s == "vectornooverlap" || s == "nooverlap" || s == "vectormode") {
    return Mode::VectorNoOverlap;
  }
  if (s == "naive" || s == "vectornaiveoverlap" || s == "naiveoverlap") {
    return Mode::VectorNaiveOverlap;
  }
  if (s == "task" || s == "taskmode") return Mode::TaskMode;
  throw ValidationError("unknown mode '" + std::string(text) + "' (vector, naive, task)");
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::VectorNoOverlap: return "VectorNoOverlap";
    case Mode::VectorNaiveOverlap: return "VectorNaiveOverlap";
    case Mode::TaskMode: return "TaskMode";
  }
  return "?";
}

double default_epoch_timeout_s() {
  if (const char* env = std::getenv("OVERLAP_SPMV_TIMEOUT")) {
    const std::string_view s(env);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc{} && ptr == s.data() + s.size() && v > 0.0) return v;
  }
  return 60.0;
}

std::vector<std::string> ExecConfig::validate() const {
  std::vector<std::string> errs;
  if (n_ranks < 1) errs.push_back("n_ranks must be >= 1");
  if (workers_per_rank < 1) errs.push_back("workers_per_rank must be >= 1");
  if (iterations < 1) errs.push_back("iterations must be >= 1");
  if (warmup < 0) errs.push_back("warmup must be >= 0");
  if (!(epoch_timeout_s > 0.0)) errs.push_back("epoch timeout must be positive");
  if (transport.base_latency_us < 0.0 || transport.per_byte_ns < 0.0) {
    errs.push_back("injected delays must be nonnegative");
  }
  if (transport.kind == TransportKind::Socket) {
    if (transport.delayed()) errs.push_back("delay injection is only supported in-process");
    if (transport.debug_log) errs.push_back("the debug log is only supported in-process");
  }
  return errs;
}

void ExecConfig::check() const {
  const auto errs = validate();
  if (errs.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& e : errs) msg += "\n  - " + e;
  throw ValidationError(msg);
}

// ---------------------------------------------------------------------------
// RankRuntime

RankRuntime::RankRuntime(const CommPlan& plan, int workers_per_rank, Mode mode,
                         std::chrono::duration<double> epoch_timeout)
    : plan_(&plan), workers_(workers_per_rank), mode_(mode), timeout_(epoch_timeout) {
  if (workers_per_rank < 1) throw ValidationError("RankRuntime: workers_per_rank must be >= 1");
  const index_t n_local = plan.n_local();
  n_lo_ = plan.halo_offset[plan.rank];
  ext_.assign(static_cast<std::size_t>(n_local + plan.halo_size()), 0.0);
  c_.assign(static_cast<std::size_t>(n_local), 0.0);

  send_offset_.assign(static_cast<std::size_t>(plan.n_ranks) + 1, 0);
  for (int q = 0; q < plan.n_ranks; ++q) {
    send_offset_[q + 1] = send_offset_[q] + plan.send_to[q].size();
    send_src_.insert(send_src_.end(), plan.send_to[q].begin(), plan.send_to[q].end());
  }
  send_buf_.assign(send_src_.size(), 0.0);

  // Remote part over extended-buffer columns.
  {
    const auto& ar = plan.a_remote;
    std::vector<index_t> cols(ar.col_idx().begin(), ar.col_idx().end());
    for (auto& c : cols) c = static_cast<index_t>(ext_index(c));
    a_remote_ext_ = CsrMatrix(n_local, static_cast<index_t>(ext_.size()),
                              std::vector<offset_t>(ar.row_ptr().begin(), ar.row_ptr().end()),
                              std::move(cols), std::vector<double>(ar.val().begin(), ar.val().end()));
  }
  // Recombined local + remote parts, merged by extended index.
  {
    const auto& al = plan.a_local;
    const auto& ar = a_remote_ext_;
    std::vector<offset_t> rp(static_cast<std::size_t>(n_local) + 1, 0);
    std::vector<index_t> ci;
    std::vector<double> va;
    ci.reserve(static_cast<std::size_t>(al.n_nz() + ar.n_nz()));
    va.reserve(ci.capacity());
    for (index_t i = 0; i < n_local; ++i) {
      offset_t j = al.row_ptr()[i], je = al.row_ptr()[i + 1];
      offset_t k = ar.row_ptr()[i], ke = ar.row_ptr()[i + 1];
      while (j < je || k < ke) {
        const bool take_local =
            k == ke || (j < je && al.col_idx()[j] + n_lo_ < ar.col_idx()[k]);
        if (take_local) {
          ci.push_back(al.col_idx()[j] + n_lo_);
          va.push_back(al.val()[j]);
          ++j;
        } else {
          ci.push_back(ar.col_idx()[k]);
          va.push_back(ar.val()[k]);
          ++k;
        }
      }
      rp[i + 1] = static_cast<offset_t>(ci.size());
    }
    a_full_ext_ = CsrMatrix(n_local, static_cast<index_t>(ext_.size()), std::move(rp),
                            std::move(ci), std::move(va));
  }

  full_chunks_ = chunk_rows_by_nonzeros(a_full_ext_.row_ptr(), workers_);
  local_chunks_ = chunk_rows_by_nonzeros(plan.a_local.row_ptr(), workers_);
  // The remote pass only visits rows that reference halo columns.
  for (index_t i = 0; i < n_local; ++i) {
    if (a_remote_ext_.row_nnz(i) > 0) remote_rows_.push_back(i);
  }
  remote_cuts_.reserve(local_chunks_.size());
  for (index_t r : local_chunks_) {
    remote_cuts_.push_back(static_cast<std::size_t>(
        std::lower_bound(remote_rows_.begin(), remote_rows_.end(), r) - remote_rows_.begin()));
  }
  if (mode == Mode::TaskMode || workers_ > 1) team_ = std::make_unique<WorkerTeam>(workers_);
}

RankRuntime::~RankRuntime() = default;

std::size_t RankRuntime::ext_index(index_t halo_pos) const {
  return halo_pos < n_lo_ ? static_cast<std::size_t>(halo_pos)
                          : static_cast<std::size_t>(halo_pos) + plan_->n_local();
}

index_t RankRuntime::ext_global(std::size_t k) const {
  const auto n_local = static_cast<std::size_t>(plan_->n_local());
  if (k >= static_cast<std::size_t>(n_lo_) && k < n_lo_ + n_local) {
    return plan_->row_begin + static_cast<index_t>(k - n_lo_);
  }
  const auto pos = static_cast<index_t>(k < static_cast<std::size_t>(n_lo_) ? k : k - n_local);
  const auto& off = plan_->halo_offset;
  const int q = static_cast<int>(std::upper_bound(off.begin(), off.end(), pos) - off.begin()) - 1;
  return plan_->recv_from[q][pos - off[q]];
}

void RankRuntime::set_b(std::span<const double> b_segment) {
  if (b_segment.size() != static_cast<std::size_t>(plan_->n_local())) {
    throw ValidationError("RankRuntime::set_b: segment length does not match owned rows");
  }
  std::copy(b_segment.begin(), b_segment.end(), b_local().begin());
}

void RankRuntime::feed_back() {
  if (plan_->a_local.n_rows() != plan_->a_local.n_cols()) {
    throw ValidationError("RankRuntime::feed_back: needs a square matrix");
  }
  std::copy(c_.begin(), c_.end(), b_local().begin());
}

// ---------------------------------------------------------------------------
// Per-iteration steps

namespace {

// Two-phase hand-off between the task-mode agent and its workers.
class EpochSync {
 public:
  enum State : int {
    kIdle,
    kPosting,
    kAwaitSendReady,
    kSending,
    kWaitHalo,
    kGathering,
    kLocal,
    kAwaitHalo,
    kRemote,
    kDone,
  };

  EpochSync(int workers, Clock::time_point deadline)
      : workers_(workers), deadline_(deadline), worker_state_(static_cast<std::size_t>(workers)) {
    for (auto& s : worker_state_) s.store(kIdle);
  }

  void set_agent(State s) { agent_state_.store(s); }
  void set_worker(int w, State s) { worker_state_[w].store(s); }

  void arrive_gathered() {
    {
      std::lock_guard lk(m_);
      ++gathered_;
    }
    cv_.notify_all();
  }

  /// Agent side. False on timeout.
  bool wait_gathered() {
    std::unique_lock lk(m_);
    cv_.wait_until(lk, deadline_, [&] { return aborted_ || gathered_ == workers_; });
    if (aborted_) throw TransportAborted("task-mode epoch aborted");
    return gathered_ == workers_;
  }

  void signal_halo() {
    {
      std::lock_guard lk(m_);
      halo_ = true;
    }
    cv_.notify_all();
  }

  /// Worker side. False on timeout.
  bool wait_halo() {
    std::unique_lock lk(m_);
    cv_.wait_until(lk, deadline_, [&] { return aborted_ || halo_; });
    if (aborted_) throw TransportAborted("task-mode epoch aborted");
    return halo_;
  }

  void abort() {
    {
      std::lock_guard lk(m_);
      aborted_ = true;
    }
    cv_.notify_all();
  }

  std::string diagnostic() const {
    static const char* names[] = {"idle",        "posting receives", "waiting for send buffer",
                                  "sending",     "waiting for halo", "gathering",
                                  "local spMVM", "waiting for halo", "remote spMVM",
                                  "done"};
    std::ostringstream os;
    os << "agent: " << names[agent_state_.load()];
    for (std::size_t w = 0; w < worker_state_.size(); ++w) {
      os << "; worker " << w << ": " << names[worker_state_[w].load()];
    }
    return os.str();
  }

 private:
  int workers_;
  Clock::time_point deadline_;
  std::mutex m_;
  std::condition_variable cv_;
  int gathered_ = 0;
  bool halo_ = false;
  bool aborted_ = false;
  std::atomic<int> agent_state_{kIdle};
  std::vector<std::atomic<int>> worker_state_;
};

}  // namespace

struct RankSteps {
  static void post_receives(RankRuntime& rt, Transport& t) {
    const auto& plan = *rt.plan_;
    for (int q = 0; q < plan.n_ranks; ++q) {
      const auto n = plan.recv_from[q].size();
      if (n == 0) continue;
      const auto at = rt.ext_index(plan.halo_offset[q]);
      t.post_receive(q, std::span<double>(rt.ext_).subspan(at, n));
    }
  }

  static void gather(RankRuntime& rt, std::size_t begin, std::size_t end) {
    const double* b = rt.ext_.data() + rt.n_lo_;
    for (std::size_t k = begin; k < end; ++k) rt.send_buf_[k] = b[rt.send_src_[k]];
  }

  static void send_all(RankRuntime& rt, Transport& t) {
    const auto& plan = *rt.plan_;
    for (int q = 0; q < plan.n_ranks; ++q) {
      const auto b = rt.send_offset_[q];
      const auto e = rt.send_offset_[q + 1];
      if (e > b) t.send(q, std::span<const double>(rt.send_buf_).subspan(b, e - b));
    }
  }

  static void kernel(RankRuntime& rt, const CsrMatrix& a, std::span<const double> x,
                     const std::vector<index_t>& chunks) {
    auto body = [&](int w) { spmv_rows(a, x, rt.c_, chunks[w], chunks[w + 1]); };
    if (rt.team_) {
      rt.team_->run(body);
    } else {
      body(0);
    }
  }

  static std::span<const index_t> remote_rows(const RankRuntime& rt, int w) {
    return std::span<const index_t>(rt.remote_rows_)
        .subspan(rt.remote_cuts_[w], rt.remote_cuts_[w + 1] - rt.remote_cuts_[w]);
  }

  static void remote_kernel(RankRuntime& rt) {
    auto body = [&](int w) {
      spmv_accumulate_listed_rows(rt.a_remote_ext_, rt.ext_, rt.c_, remote_rows(rt, w));
    };
    if (rt.team_) {
      rt.team_->run(body);
    } else {
      body(0);
    }
  }

  static std::span<const double> vector_step(RankRuntime& rt, Transport& t, bool overlap) {
    PhaseTimes& tm = rt.times_;
    tm = {};
    const auto t0 = Clock::now();
    rt.phase_ = "post";
    post_receives(rt, t);

    rt.phase_ = "gather";
    auto tp = Clock::now();
    gather(rt, 0, rt.send_buf_.size());
    tm.gather_s = seconds_since(tp);

    rt.phase_ = "comm";
    tp = Clock::now();
    send_all(rt, t);
    tm.comm_s = seconds_since(tp);

    if (!overlap) {
      tp = Clock::now();
      t.wait_all();
      tm.comm_s += seconds_since(tp);
      rt.phase_ = "compute";
      tp = Clock::now();
      kernel(rt, rt.a_full_ext_, rt.ext_, rt.full_chunks_);
      tm.local_s = seconds_since(tp);
    } else {
      rt.phase_ = "local compute";
      tp = Clock::now();
      kernel(rt, rt.plan_->a_local, rt.b_local(), rt.local_chunks_);
      tm.local_s = seconds_since(tp);
      rt.phase_ = "comm";
      tp = Clock::now();
      t.wait_all();
      tm.comm_s += seconds_since(tp);
      rt.phase_ = "remote compute";
      tp = Clock::now();
      remote_kernel(rt);
      tm.remote_s = seconds_since(tp);
    }
    tm.total_s = seconds_since(t0);
    rt.phase_ = "idle";
    return rt.c_;
  }

  static std::span<const double> task_step(RankRuntime& rt, Transport& t) {
    PhaseTimes& tm = rt.times_;
    tm = {};
    const int W = rt.team_->size();
    const auto t0 = Clock::now();
    const auto deadline = t0 + std::chrono::duration_cast<Clock::duration>(rt.timeout_);
    EpochSync sync(W, deadline);
    std::vector<double> local_s(static_cast<std::size_t>(W), 0.0);
    std::vector<double> remote_s(static_cast<std::size_t>(W), 0.0);
    const std::size_t n_send = rt.send_buf_.size();
    const std::span<const double> b_local = rt.b_local();

    auto timeout_error = [&](const char* who) {
      std::ostringstream os;
      os << "task-mode deadlock guard fired in epoch " << rt.epoch_ << " after "
         << rt.timeout_.count() << " s (" << who << "); " << sync.diagnostic();
      return RuntimeFailure(os.str());
    };

    rt.team_->launch([&](int w) {
      sync.set_worker(w, EpochSync::kGathering);
      gather(rt, n_send * w / W, n_send * (w + 1) / W);
      sync.arrive_gathered();

      sync.set_worker(w, EpochSync::kLocal);
      auto tp = Clock::now();
      spmv_rows(rt.plan_->a_local, b_local, rt.c_, rt.local_chunks_[w], rt.local_chunks_[w + 1]);
      local_s[w] = seconds_since(tp);

      sync.set_worker(w, EpochSync::kAwaitHalo);
      if (!sync.wait_halo()) throw timeout_error("worker waiting for halo");

      sync.set_worker(w, EpochSync::kRemote);
      tp = Clock::now();
      spmv_accumulate_listed_rows(rt.a_remote_ext_, rt.ext_, rt.c_, remote_rows(rt, w));
      remote_s[w] = seconds_since(tp);
      sync.set_worker(w, EpochSync::kDone);
    });

    try {
      rt.phase_ = "post";
      sync.set_agent(EpochSync::kPosting);
      post_receives(rt, t);

      rt.phase_ = "gather";
      sync.set_agent(EpochSync::kAwaitSendReady);
      if (!sync.wait_gathered()) throw timeout_error("agent waiting for send buffer");
      tm.gather_s = seconds_since(t0);

      rt.phase_ = "comm";
      sync.set_agent(EpochSync::kSending);
      const auto tc = Clock::now();
      send_all(rt, t);
      sync.set_agent(EpochSync::kWaitHalo);
      t.wait_all();
      tm.comm_s = seconds_since(tc);
      sync.signal_halo();
      sync.set_agent(EpochSync::kDone);

      rt.phase_ = "compute";
      if (!rt.team_->join(deadline)) throw timeout_error("agent waiting for workers");
    } catch (...) {
      sync.abort();
      try {
        rt.team_->join();
      } catch (...) {
      }
      rt.phase_ = "failed";
      throw;
    }
    tm.local_s = *std::max_element(local_s.begin(), local_s.end());
    tm.remote_s = *std::max_element(remote_s.begin(), remote_s.end());
    tm.total_s = seconds_since(t0);
    rt.phase_ = "idle";
    return rt.c_;
  }
};

std::span<const double> run_vector_no_overlap(RankRuntime& rt, Transport& t) {
  return RankSteps::vector_step(rt, t, false);
}

std::span<const double> run_vector_naive_overlap(RankRuntime& rt, Transport& t) {
  return RankSteps::vector_step(rt, t, true);
}

std::span<const double> run_task_mode(RankRuntime& rt, Transport& t) {
  if (rt.mode() != Mode::TaskMode) {
    throw ValidationError("run_task_mode: runtime was not built for task mode");
  }
  return RankSteps::task_step(rt, t);
}

std::span<const double> run_step(Mode mode, RankRuntime& rt, Transport& t) {
  switch (mode) {
    case Mode::VectorNoOverlap: return run_vector_no_overlap(rt, t);
    case Mode::VectorNaiveOverlap: return run_vector_naive_overlap(rt, t);
    case Mode::TaskMode: return run_task_mode(rt, t);
  }
  throw ValidationError("run_step: unknown mode");
}

double relative_error(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("relative_error: length mismatch");
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    diff = std::max(diff, std::abs(x[i] - y[i]));
    scale = std::max(scale, std::abs(y[i]));
  }
  return scale > 0.0 ? diff / scale : diff;
}

}  // namespace ospmv
