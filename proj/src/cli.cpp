// SPDX-License-Identifier: Apache-2.0
#include "ospmv/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ospmv/bench.hpp"
#include "ospmv/error.hpp"
#include "ospmv/exec_engine.hpp"
#include "ospmv/partition_comm.hpp"
#include "ospmv/perf_model.hpp"
#include "ospmv/workload.hpp"

namespace ospmv {

namespace {

constexpr const char* kSuiteHelp = R"(Suite spec: flat "key = value" lines, '#' starts a comment.
  matrix      = stencil7:16 | stencil7:NX,NY,NZ | block_band:dim=..,block=..,band=..,stride=..,nnzr=..,seed=.. | file.mtx
  modes       = all | comma list of vector, naive, task
  ranks       = comma list, e.g. 1,2,4
  workers     = comma list of compute workers per rank
  transports  = comma list of inproc, socket, delayed
  progress    = eager | on-wait       (in-process transports)
  latency_us  = base latency per message for 'delayed'
  per_byte_ns = per-byte delay for 'delayed'
  iterations  = timed MVMs per configuration (C feeds back as B)
  warmup      = untimed MVMs before timing
  seed        = RHS seed
  rhs         = uniform | ramp | const[:c]
  bandwidth_gbs = memory bandwidth for the model bound column (optional)
  kappa       = extra B traffic per nonzero for the model columns
  tolerance   = relative error allowed against the sequential oracle
CSV columns (fixed order):
  )";

struct TransportFlags {
  std::string kind = "inproc";
  std::string progress = "on-wait";
  double latency_us = 0.0;
  double per_byte_ns = 0.0;
  std::string debug_log;

  CLI::Option* latency_opt = nullptr;
  CLI::Option* per_byte_opt = nullptr;

  TransportConfig config() const {
    if (kind != "delayed" && (latency_opt->count() > 0 || per_byte_opt->count() > 0)) {
      throw ValidationError("--latency-us and --per-byte-ns need --transport delayed");
    }
    return parse_transport(kind, parse_progress(progress), latency_us, per_byte_ns);
  }

  void add(CLI::App* app) {
    app->add_option("--transport", kind, "inproc | socket | delayed")->capture_default_str();
    app->add_option("--progress", progress, "eager | on-wait (in-process only)")
        ->capture_default_str();
    latency_opt = app->add_option("--latency-us", latency_us, "per-message delay for the delayed transport")
        ->capture_default_str();
    per_byte_opt = app->add_option("--per-byte-ns", per_byte_ns, "per-byte delay for the delayed transport")
        ->capture_default_str();
    app->add_option("--debug-log", debug_log,
                    "append one line per delivered message to this file (in-process only)");
  }
};

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write '" + path + "'");
  out << text;
}

std::string csv_text(const std::vector<RunRecord>& records) {
  std::ostringstream os;
  write_csv(os, records);
  return os.str();
}

std::string suite_help() {
  std::string s = kSuiteHelp;
  const auto& cols = csv_columns();
  for (std::size_t k = 0; k < cols.size(); ++k) s += (k ? "," : "") + cols[k];
  return s + "\n";
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Distributed sparse matrix-vector multiplication with communication overlap"};
  app.name("ospmv");
  app.require_subcommand(1);
  app.fallthrough(false);

  // spmv ---------------------------------------------------------------------
  auto* spmv = app.add_subcommand("spmv", "Run one distributed spMVM configuration");
  std::string spmv_matrix;
  std::string mode_text = "vector";
  int ranks = 1, workers = 1, iterations = 1, warmup = 1;
  std::uint64_t seed = 42;
  std::string rhs_text = "uniform";
  std::optional<double> bandwidth;
  double kappa = 0.0, tolerance = 1e-12;
  std::optional<double> timeout;
  std::string spmv_json, spmv_csv, spmv_out;
  TransportFlags spmv_tf;
  spmv->add_option("matrix", spmv_matrix, "Matrix Market file or generator spec (stencil7:16)")
      ->required();
  spmv->add_option("--mode", mode_text, "vector | naive | task")->capture_default_str();
  spmv->add_option("--ranks", ranks, "number of ranks")->capture_default_str();
  spmv->add_option("--workers", workers, "compute workers per rank")->capture_default_str();
  spmv->add_option("--iterations", iterations, "timed MVMs")->capture_default_str();
  spmv->add_option("--warmup", warmup, "untimed MVMs before timing")->capture_default_str();
  spmv->add_option("--seed", seed, "RHS seed")->capture_default_str();
  spmv->add_option("--rhs", rhs_text, "uniform | ramp | const[:c]")->capture_default_str();
  spmv->add_option("--bandwidth", bandwidth, "memory bandwidth in GB/s for the model bound");
  spmv->add_option("--kappa", kappa, "extra B bytes per nonzero for the model")
      ->capture_default_str();
  spmv->add_option("--tolerance", tolerance, "allowed relative error against the oracle")
      ->capture_default_str();
  spmv->add_option("--timeout", timeout,
                   "epoch deadlock timeout in seconds (default: OVERLAP_SPMV_TIMEOUT or 60)");
  spmv->add_option("--json", spmv_json, "write the record as JSON to this file ('-' = stdout)");
  spmv->add_option("--csv", spmv_csv, "write the record as CSV to this file (default: stdout unless --json -)");
  spmv->add_option("--result", spmv_out, "write the result vector, one value per line");
  spmv_tf.add(spmv);

  // bench --------------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "Run a benchmark suite from a spec file");
  bench->footer(suite_help());
  std::string bench_spec, bench_csv, bench_json;
  bench->add_option("spec", bench_spec, "suite spec file (format below)")->required();
  bench->add_option("--csv", bench_csv, "CSV output file (default: stdout unless --json -)");
  bench->add_option("--json", bench_json, "JSON mirror of the CSV ('-' = stdout)");

  // triad --------------------------------------------------------------------
  auto* triad = app.add_subcommand("triad", "STREAM triad bandwidth benchmark");
  std::size_t triad_len = 100'000'000;
  int triad_reps = 5, triad_workers = 1;
  bool triad_json = false;
  triad->add_option("--length", triad_len, "elements per array")->capture_default_str();
  triad->add_option("--reps", triad_reps, "repetitions (>= 3)")->capture_default_str();
  triad->add_option("--workers", triad_workers, "concurrent workers")->capture_default_str();
  triad->add_flag("--json", triad_json, "print JSON instead of text");

  // model --------------------------------------------------------------------
  auto* model = app.add_subcommand("model", "Code-balance model report");
  std::optional<double> nnzr, measured;
  std::string model_matrix;
  double model_kappa = 0.0;
  std::optional<double> model_bw;
  bool split = false, model_json = false;
  model->add_option("--nnzr", nnzr, "average nonzeros per row");
  model->add_option("--matrix", model_matrix, "take nnzr from this matrix or generator spec");
  model->add_option("--kappa", model_kappa, "extra B bytes per nonzero")->capture_default_str();
  model->add_option("--bandwidth", model_bw, "memory bandwidth in GB/s");
  model->add_option("--measured", measured, "measured GFlop/s; estimates kappa");
  model->add_flag("--split", split, "two-pass kernel (C written twice)");
  model->add_flag("--json", model_json, "print JSON instead of text");

  // plan ---------------------------------------------------------------------
  auto* plan = app.add_subcommand("plan", "Show the communication plan as JSON");
  std::string plan_matrix;
  int plan_ranks = 2;
  plan->add_option("matrix", plan_matrix, "Matrix Market file or generator spec")->required();
  plan->add_option("--ranks", plan_ranks, "number of ranks")->capture_default_str();

  // gen ----------------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "Write a generated matrix in Matrix Market format");
  gen->require_subcommand(1);
  std::string gen_out;
  auto* gen_st = gen->add_subcommand("stencil7", "7-point Laplacian");
  Stencil7Params sp;
  gen_st->add_option("--nx", sp.nx, "grid points in x")->capture_default_str();
  gen_st->add_option("--ny", sp.ny, "grid points in y")->capture_default_str();
  gen_st->add_option("--nz", sp.nz, "grid points in z")->capture_default_str();
  gen_st->add_option("-o,--output", gen_out, "output file")->required();
  auto* gen_bb = gen->add_subcommand("block_band", "seeded block-banded symmetric matrix");
  BlockBandParams bp;
  gen_bb->add_option("--dim", bp.dim, "matrix dimension")->capture_default_str();
  gen_bb->add_option("--block", bp.block, "diagonal block size")->capture_default_str();
  gen_bb->add_option("--band", bp.inner_band, "coupling reach in columns")->capture_default_str();
  gen_bb->add_option("--stride", bp.outer_stride, "off-diagonal band offset (0: none)")
      ->capture_default_str();
  gen_bb->add_option("--nnzr", bp.target_nnzr, "target nonzeros per row")->capture_default_str();
  gen_bb->add_option("--seed", bp.seed, "generator seed")->capture_default_str();
  gen_bb->add_option("-o,--output", gen_out, "output file")->required();

  // rcm ----------------------------------------------------------------------
  auto* rcm = app.add_subcommand("rcm", "Reverse Cuthill-McKee reordering of a file");
  std::string rcm_in, rcm_out;
  rcm->add_option("input", rcm_in, "input Matrix Market file")->required();
  rcm->add_option("-o,--output", rcm_out, "output file")->required();

  if (argc <= 1) {
    std::cerr << app.help();
    return 1;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*spmv) {
      ProblemSpec ps = parse_problem(spmv_matrix);
      ps.rhs = parse_rhs(rhs_text);
      ps.seed = seed;
      ExecConfig cfg;
      cfg.mode = parse_mode(mode_text);
      cfg.n_ranks = ranks;
      cfg.workers_per_rank = workers;
      cfg.transport = spmv_tf.config();
      std::ofstream log;
      if (!spmv_tf.debug_log.empty()) {
        log.open(spmv_tf.debug_log, std::ios::app);
        if (!log) throw ValidationError("cannot open debug log '" + spmv_tf.debug_log + "'");
        cfg.transport.debug_log = &log;
      }
      cfg.iterations = iterations;
      cfg.warmup = warmup;
      cfg.seed = seed;
      if (timeout) cfg.epoch_timeout_s = *timeout;
      cfg.check();

      const Problem problem = assemble(ps);
      ModelOptions mo;
      mo.bandwidth_gbs = bandwidth;
      mo.kappa = kappa;
      auto runs = run_benchmark(std::span(&cfg, 1), problem, mo);
      RunRecord rec = runs.front().record;
      const DenseVector oracle = sequential_oracle(problem.matrix, problem.rhs, iterations);
      rec.max_rel_error = relative_error(runs.front().run.result, oracle);
      std::vector<RunRecord> recs{rec};
      if (!spmv_csv.empty()) {
        write_text(spmv_csv, csv_text(recs));
      } else if (spmv_json != "-") {
        std::cout << csv_text(recs);
      }
      if (!spmv_json.empty()) write_text(spmv_json, records_to_json(recs) + "\n");
      if (!spmv_out.empty()) {
        std::ostringstream os;
        char buf[40];
        for (double v : runs.front().run.result) {
          std::snprintf(buf, sizeof buf, "%.17g\n", v);
          os << buf;
        }
        write_text(spmv_out, os.str());
      }
      if (!(rec.max_rel_error <= tolerance)) {
        throw RuntimeFailure("result differs from the sequential oracle: relative error " +
                             std::to_string(rec.max_rel_error));
      }
    } else if (*bench) {
      const SuiteSpec spec = read_suite_spec(bench_spec);
      const auto records = bench_suite(spec);
      if (!bench_csv.empty()) {
        write_text(bench_csv, csv_text(records));
      } else if (bench_json != "-") {
        std::cout << csv_text(records);
      }
      if (!bench_json.empty()) write_text(bench_json, records_to_json(records) + "\n");
    } else if (*triad) {
      const TriadResult r = triad_bench(triad_len, triad_reps, triad_workers);
      if (triad_json) {
        nlohmann::json j{{"length", r.length},         {"repetitions", r.repetitions},
                         {"workers", r.workers},       {"best_s", r.best_s},
                         {"raw_gbs", r.raw_gbs},       {"corrected_gbs", r.corrected_gbs}};
        std::cout << j.dump(2) << "\n";
      } else {
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "length        %zu\nrepetitions   %d\nworkers       %d\n"
                      "best          %.6f s\nraw           %.3f GB/s\ncorrected     %.3f GB/s\n",
                      r.length, r.repetitions, r.workers, r.best_s, r.raw_gbs, r.corrected_gbs);
        std::cout << buf;
      }
    } else if (*model) {
      if (nnzr && !model_matrix.empty()) {
        throw ValidationError("give either --nnzr or --matrix, not both");
      }
      perf::BalanceInputs in;
      if (nnzr) {
        in.n_nzr = *nnzr;
      } else if (!model_matrix.empty()) {
        in.n_nzr = assemble_matrix(parse_problem(model_matrix)).nnzr();
      } else {
        throw ValidationError("model needs --nnzr or --matrix");
      }
      in.kappa = model_kappa;
      in.split = split;
      const auto report = perf::make_report(in, model_bw, measured);
      std::cout << (model_json ? perf::format_report_json(report) + "\n"
                               : perf::format_report_text(report));
    } else if (*plan) {
      const CsrMatrix a = assemble_matrix(parse_problem(plan_matrix));
      if (plan_ranks < 1) throw ValidationError("--ranks must be >= 1");
      const auto part = partition_by_nonzeros(a, plan_ranks);
      const auto plans = build_all_plans(a, part);
      std::cout << plan_summary_json(plans) << "\n";
    } else if (*gen) {
      const CooTriples t = *gen_st ? gen_stencil7(sp.nx, sp.ny, sp.nz) : gen_block_band(bp);
      const CsrMatrix a = coo_to_csr(t);
      write_matrix_market(gen_out, a);
      std::cerr << "wrote " << gen_out << ": " << a.n_rows() << " rows, " << a.n_nz()
                << " nonzeros\n";
    } else if (*rcm) {
      const CsrMatrix a = coo_to_csr(read_matrix_market(rcm_in));
      const Permutation p = rcm_permutation(a);
      const CsrMatrix b = permute(a, p);
      write_matrix_market(rcm_out, b);
      std::cout << "bandwidth " << matrix_bandwidth(a) << " -> " << matrix_bandwidth(b) << "\n";
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const RuntimeFailure& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace ospmv
