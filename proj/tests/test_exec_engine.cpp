// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <thread>

#include "ospmv/exec_engine.hpp"
#include "support.hpp"

using namespace ospmv;
using namespace ospmv::testing;
using namespace std::chrono_literals;

namespace {

std::vector<TransportConfig> all_transports() {
  TransportConfig onwait, eager, sock;
  eager.progress = Progress::Eager;
  sock.kind = TransportKind::Socket;
  return {onwait, eager, sock};
}

ExecConfig make_cfg(Mode m, int ranks, int workers, const TransportConfig& t, int iters = 2) {
  ExecConfig c;
  c.mode = m;
  c.n_ranks = ranks;
  c.workers_per_rank = workers;
  c.transport = t;
  c.iterations = iters;
  c.warmup = 1;
  c.epoch_timeout_s = 30;
  return c;
}

}  // namespace

TEST_CASE("mode parsing") {
  CHECK(parse_mode("vector") == Mode::VectorNoOverlap);
  CHECK(parse_mode("VectorNoOverlap") == Mode::VectorNoOverlap);
  CHECK(parse_mode("vector-naive-overlap") == Mode::VectorNaiveOverlap);
  CHECK(parse_mode("NAIVE") == Mode::VectorNaiveOverlap);
  CHECK(parse_mode("Task_Mode") == Mode::TaskMode);
  CHECK(parse_mode("task") == Mode::TaskMode);
  CHECK_THROWS_AS(parse_mode("hybrid"), ValidationError);
  for (Mode m : kAllModes) CHECK(parse_mode(to_string(m)) == m);
}

TEST_CASE("config validation lists every problem") {
  ExecConfig c;
  c.n_ranks = 0;
  c.workers_per_rank = 0;
  c.iterations = 0;
  c.transport.kind = TransportKind::Socket;
  c.transport.base_latency_us = 5;
  const auto errs = c.validate();
  CHECK(errs.size() == 4);
  CHECK_THROWS_AS(c.check(), ValidationError);
  CHECK(ExecConfig{}.validate().empty());
}

TEST_CASE("epoch timeout from the environment") {
  ::setenv("OVERLAP_SPMV_TIMEOUT", "2.5", 1);
  CHECK(default_epoch_timeout_s() == 2.5);
  CHECK(ExecConfig{}.epoch_timeout_s == 2.5);
  ::setenv("OVERLAP_SPMV_TIMEOUT", "soon", 1);
  CHECK(default_epoch_timeout_s() == 60.0);
  ::unsetenv("OVERLAP_SPMV_TIMEOUT");
  CHECK(default_epoch_timeout_s() == 60.0);
}

TEST_CASE("extended buffer is ordered by global index") {
  const CsrMatrix a = coo_to_csr(gen_stencil7(6, 5, 4));
  const PartitionMap p = partition_by_nonzeros(a, 4);
  const auto plans = build_all_plans(a, p);
  for (const auto& pl : plans) {
    RankRuntime rt(pl, 1, Mode::VectorNoOverlap);
    for (std::size_t k = 1; k < rt.ext().size(); ++k) {
      CHECK(rt.ext_global(k - 1) < rt.ext_global(k));
    }
    for (index_t h = 0; h < pl.halo_size(); ++h) {
      int src = 0;
      while (pl.halo_offset[src + 1] <= h) ++src;
      CHECK(rt.ext_global(rt.ext_index(h)) == pl.recv_from[src][h - pl.halo_offset[src]]);
    }
  }
}

TEST_CASE("property: every mode, rank count, worker count and transport matches the oracle") {
  std::mt19937_64 rng(71);
  std::vector<CsrMatrix> mats;
  mats.push_back(coo_to_csr(gen_stencil7(5, 4, 3)));
  mats.push_back(CsrMatrix::identity(3));  // fewer rows than some rank counts
  for (int k = 0; k < 3; ++k) {
    RandomMatrixOptions o;
    o.min_dim = 20;
    o.max_dim = 90;
    o.density = 0.06;
    mats.push_back(coo_to_csr(random_coo(rng, o)));
  }
  for (const auto& a : mats) {
    const auto b = random_vector(rng, a.n_rows());
    const DenseVector oracle = sequential_oracle(a, b, 2);
    for (const auto& t : all_transports()) {
      for (Mode m : kAllModes) {
        for (int ranks : {1, 2, 3, 5}) {
          for (int workers : {1, 3}) {
            CAPTURE(to_string(m));
            CAPTURE(ranks);
            CAPTURE(workers);
            CAPTURE(t.label());
            const auto run = run_distributed(a, b, make_cfg(m, ranks, workers, t));
            CHECK(relative_error(run.result, oracle) <= 1e-12);
            if (ranks == 1 || m == Mode::VectorNoOverlap) {
              CHECK(bitwise_equal(run.result, oracle));
            }
            CHECK(run.iteration_s.size() == 2);
            CHECK(run.ranks.size() == static_cast<std::size_t>(ranks));
          }
        }
      }
    }
  }
}

TEST_CASE("warm-up does not leak into the result") {
  const CsrMatrix a = coo_to_csr(gen_stencil7(4, 4, 4));
  const DenseVector b = make_rhs({RhsKind::Uniform, 0}, a.n_rows(), 3);
  for (int warmup : {0, 1, 3}) {
    auto cfg = make_cfg(Mode::TaskMode, 3, 2, {}, 4);
    cfg.warmup = warmup;
    CHECK(relative_error(run_distributed(a, b, cfg).result, sequential_oracle(a, b, 4)) <= 1e-12);
  }
}

TEST_CASE("transport statistics agree with the plan volume") {
  const CsrMatrix a = coo_to_csr(gen_stencil7(8, 8, 8));
  const DenseVector b(a.n_rows(), 1.0);
  for (const auto& t : all_transports()) {
    auto cfg = make_cfg(Mode::VectorNaiveOverlap, 4, 1, t, 3);
    const auto run = run_distributed(a, b, cfg);
    std::uint64_t sent = 0;
    for (const auto& r : run.ranks) sent += r.stats.bytes_sent;
    // warm-up + timed iterations, each moving the full halo volume
    CHECK(sent == 4 * run.volume.total_bytes);
  }
}

TEST_CASE("a missing peer trips the deadline with a diagnostic") {
  const CsrMatrix a = coo_to_csr(gen_stencil7(4, 4, 4));
  const PartitionMap p = partition_by_nonzeros(a, 2);
  const auto plans = build_all_plans(a, p);
  for (Mode m : kAllModes) {
    InProcessFabric f(2, {});
    auto t0 = f.endpoint(0);
    t0->set_timeout(0.2s);
    RankRuntime rt(plans[0], 2, m, 0.2s);
    rt.set_b(DenseVector(plans[0].n_local(), 1.0));
    rt.set_epoch(1);
    t0->set_epoch(1);
    const auto start = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(run_step(m, rt, *t0), RuntimeFailure);
    CHECK(std::chrono::steady_clock::now() - start < 10s);
  }
}

TEST_CASE("set_b checks the segment length") {
  const CsrMatrix a = coo_to_csr(gen_stencil7(4, 4, 4));
  const PartitionMap p = partition_by_nonzeros(a, 2);
  const auto plans = build_all_plans(a, p);
  RankRuntime rt(plans[1], 1, Mode::VectorNoOverlap);
  CHECK_THROWS_AS(rt.set_b(DenseVector(3, 1.0)), ValidationError);
}

TEST_CASE("run_benchmark records") {
  Problem prob{"stencil7_6x6x6", coo_to_csr(gen_stencil7(6, 6, 6)), {}};
  prob.rhs = make_rhs({}, prob.matrix.n_rows(), 1);
  std::vector<ExecConfig> cfgs{make_cfg(Mode::VectorNoOverlap, 1, 1, {}, 5),
                               make_cfg(Mode::TaskMode, 3, 2, {}, 5)};
  ModelOptions mo;
  mo.bandwidth_gbs = 18.1;
  const auto runs = run_benchmark(cfgs, prob, mo);
  REQUIRE(runs.size() == 2);
  for (const auto& r : runs) {
    const RunRecord& rec = r.record;
    CHECK(rec.matrix == "stencil7_6x6x6");
    CHECK(rec.n_nz == prob.matrix.n_nz());
    CHECK(rec.min_s <= rec.median_s);
    CHECK(rec.gflops == doctest::Approx(2.0 * rec.n_nz / rec.median_s * 1e-9));
    CHECK(rec.comm_bytes == r.run.volume.total_bytes);
    CHECK(rec.model_bound_gflops > 0);
  }
  CHECK(runs[0].record.comm_bytes == 0);
  CHECK(runs[1].record.comm_bytes ==
        exchange_volume(build_all_plans(prob.matrix, partition_by_nonzeros(prob.matrix, 3)))
            .total_bytes);
  CHECK(runs[1].record.mode == "TaskMode");
  CHECK(runs[1].record.transport == "inproc-onwait");
}

TEST_CASE("relative error") {
  CHECK(relative_error(DenseVector{1, 2}, DenseVector{1, 2}) == 0.0);
  CHECK(relative_error(DenseVector{1, 3}, DenseVector{1, 2}) == 0.5);
  CHECK(relative_error(DenseVector{0.5}, DenseVector{0.0}) == 0.5);
  CHECK_THROWS_AS(relative_error(DenseVector{1}, DenseVector{1, 2}), ValidationError);
}
