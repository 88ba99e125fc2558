// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "ospmv/bench.hpp"
#include "ospmv/exec_engine.hpp"
#include "ospmv/partition_comm.hpp"
#include "ospmv/perf_model.hpp"
#include "ospmv/sparse_core.hpp"
#include "ospmv/workload.hpp"

namespace py = pybind11;
using namespace ospmv;

namespace {

template <typename T>
py::array_t<T> to_array(std::span<const T> v) {
  py::array_t<T> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

template <typename T>
std::vector<T> to_vector(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 1) throw ValidationError("expected a one-dimensional array");
  return std::vector<T>(a.data(), a.data() + a.size());
}

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::dict record_dict(const RunRecord& r) {
  py::dict d;
  d["mode"] = r.mode;
  d["n_ranks"] = r.n_ranks;
  d["workers_per_rank"] = r.workers_per_rank;
  d["transport"] = r.transport;
  d["matrix"] = r.matrix;
  d["n_rows"] = r.n_rows;
  d["n_nz"] = r.n_nz;
  d["iterations"] = r.iterations;
  d["median_s"] = r.median_s;
  d["min_s"] = r.min_s;
  d["gflops"] = r.gflops;
  d["model_bound_gflops"] = r.model_bound_gflops;
  d["model_eff_gbs"] = r.model_eff_gbs;
  d["comm_bytes"] = r.comm_bytes;
  d["raw_comm_bytes"] = r.raw_comm_bytes;
  d["messages"] = r.messages;
  d["gather_s"] = r.gather_s;
  d["comm_s"] = r.comm_s;
  d["local_s"] = r.local_s;
  d["remote_s"] = r.remote_s;
  d["max_rel_error"] = r.max_rel_error;
  return d;
}

TransportConfig transport_from(const std::string& name, const std::string& progress,
                               double latency_us, double per_byte_ns) {
  return parse_transport(name, parse_progress(progress), latency_us, per_byte_ns);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Distributed sparse matrix-vector multiply with communication overlap.";

  static py::exception<Error> base_exc(m, "Error");
  static py::exception<ValidationError> validation_exc(m, "ValidationError", base_exc.ptr());
  static py::exception<RuntimeFailure> runtime_exc(m, "RuntimeFailure", base_exc.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValidationError& e) {
      py::set_error(validation_exc, e.what());
    } catch (const RuntimeFailure& e) {
      py::set_error(runtime_exc, e.what());
    } catch (const Error& e) {
      py::set_error(base_exc, e.what());
    }
  });

  py::class_<CsrMatrix>(m, "CsrMatrix")
      .def(py::init([](index_t n_rows, index_t n_cols, py::array_t<offset_t> row_ptr,
                       py::array_t<index_t> col_idx, DoubleArray val) {
             return CsrMatrix(n_rows, n_cols, to_vector<offset_t>(row_ptr),
                              to_vector<index_t>(col_idx), to_vector<double>(val));
           }),
           py::arg("n_rows"), py::arg("n_cols"), py::arg("row_ptr"), py::arg("col_idx"),
           py::arg("val"))
      .def_static(
          "from_coo",
          [](index_t n_rows, index_t n_cols, py::array_t<index_t> rows, py::array_t<index_t> cols,
             DoubleArray vals) {
            auto r = to_vector<index_t>(rows);
            auto c = to_vector<index_t>(cols);
            auto v = to_vector<double>(vals);
            if (r.size() != c.size() || r.size() != v.size()) {
              throw ValidationError("from_coo: rows, cols and vals differ in length");
            }
            CooTriples t{n_rows, n_cols, {}};
            t.entries.reserve(r.size());
            for (std::size_t k = 0; k < r.size(); ++k) t.entries.push_back({r[k], c[k], v[k]});
            return coo_to_csr(t);
          },
          "Builds a matrix from coordinate arrays; duplicates are summed.", py::arg("n_rows"),
          py::arg("n_cols"), py::arg("rows"), py::arg("cols"), py::arg("vals"))
      .def_property_readonly("n_rows", &CsrMatrix::n_rows)
      .def_property_readonly("n_cols", &CsrMatrix::n_cols)
      .def_property_readonly("n_nz", &CsrMatrix::n_nz)
      .def_property_readonly("nnzr", &CsrMatrix::nnzr)
      .def_property_readonly("row_ptr", [](const CsrMatrix& a) { return to_array(a.row_ptr()); })
      .def_property_readonly("col_idx", [](const CsrMatrix& a) { return to_array(a.col_idx()); })
      .def_property_readonly("val", [](const CsrMatrix& a) { return to_array(a.val()); })
      .def("__eq__", [](const CsrMatrix& a, const CsrMatrix& b) { return a == b; })
      .def("__repr__", [](const CsrMatrix& a) {
        std::ostringstream os;
        os << "CsrMatrix(" << a.n_rows() << "x" << a.n_cols() << ", nnz=" << a.n_nz() << ")";
        return os.str();
      });

  m.def(
      "spmv",
      [](const CsrMatrix& a, DoubleArray b) {
        auto x = to_vector<double>(b);
        auto y = spmv(a, x);
        return to_array<double>(y);
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "sequential_oracle",
      [](const CsrMatrix& a, DoubleArray b, int iterations) {
        auto x = to_vector<double>(b);
        return to_array<double>(sequential_oracle(a, x, iterations));
      },
      py::arg("a"), py::arg("b"), py::arg("iterations") = 1);

  m.def("rcm_permutation", &rcm_permutation, py::arg("a"),
        "Reverse Cuthill-McKee ordering; perm[new] = old.");
  m.def("permute", &permute, py::arg("a"), py::arg("perm"));
  m.def("matrix_bandwidth", &matrix_bandwidth, py::arg("a"));

  m.def(
      "partition_rows",
      [](const CsrMatrix& a, int n_ranks) { return partition_by_nonzeros(a, n_ranks).row_start; },
      py::arg("a"), py::arg("n_ranks"),
      "Row boundaries of a nonzero-balanced contiguous partition (n_ranks + 1 entries).");
  m.def(
      "plan_summary",
      [](const CsrMatrix& a, int n_ranks) {
        const auto plans = build_all_plans(a, partition_by_nonzeros(a, n_ranks));
        return plan_summary_json(plans);
      },
      py::arg("a"), py::arg("n_ranks"));

  m.def(
      "stencil7", [](index_t nx, index_t ny, index_t nz) { return coo_to_csr(gen_stencil7(nx, ny, nz)); },
      py::arg("nx"), py::arg("ny"), py::arg("nz"));
  m.def(
      "block_band",
      [](index_t dim, index_t block, index_t band, index_t stride, double nnzr,
         std::uint64_t seed) {
        return coo_to_csr(gen_block_band({dim, block, band, stride, nnzr, seed}));
      },
      py::arg("dim") = 100000, py::arg("block") = 500, py::arg("band") = 12,
      py::arg("stride") = 2500, py::arg("nnzr") = 15.0, py::arg("seed") = 1);
  m.def(
      "load_problem", [](const std::string& text) { return assemble_matrix(parse_problem(text)); },
      py::arg("spec"), "Matrix from a generator spec such as 'stencil7:32' or a .mtx path.");
  m.def(
      "read_matrix_market",
      [](const std::string& path) { return coo_to_csr(read_matrix_market(path)); },
      py::arg("path"));
  m.def(
      "write_matrix_market",
      [](const std::string& path, const CsrMatrix& a) { write_matrix_market(path, a); },
      py::arg("path"), py::arg("a"));

  m.def(
      "code_balance",
      [](double n_nzr, double kappa, bool split) { return perf::code_balance({n_nzr, kappa, split}); },
      py::arg("n_nzr"), py::arg("kappa") = 0.0, py::arg("split") = false);
  m.def("max_performance", &perf::max_performance, py::arg("balance"), py::arg("bandwidth_gbs"));
  m.def(
      "estimate_kappa",
      [](double gflops, double bandwidth_gbs, double n_nzr, bool split) {
        const auto k = perf::estimate_kappa(gflops, bandwidth_gbs, n_nzr, split);
        return py::make_tuple(k.kappa, k.consistent, k.diagnostic);
      },
      py::arg("gflops"), py::arg("bandwidth_gbs"), py::arg("n_nzr"), py::arg("split") = false,
      "Returns (kappa, consistent, diagnostic).");

  m.def(
      "triad",
      [](std::size_t length, int repetitions, int workers) {
        const auto r = triad_bench(length, repetitions, workers);
        py::dict d;
        d["length"] = r.length;
        d["repetitions"] = r.repetitions;
        d["workers"] = r.workers;
        d["best_s"] = r.best_s;
        d["raw_gbs"] = r.raw_gbs;
        d["corrected_gbs"] = r.corrected_gbs;
        return d;
      },
      py::arg("length") = 10000000, py::arg("repetitions") = 5, py::arg("workers") = 1);

  m.def(
      "run",
      [](const CsrMatrix& a, DoubleArray b, const std::string& mode, int ranks, int workers,
         int iterations, int warmup, const std::string& transport, const std::string& progress,
         double latency_us, double per_byte_ns, double timeout_s) {
        ExecConfig cfg;
        cfg.mode = parse_mode(mode);
        cfg.n_ranks = ranks;
        cfg.workers_per_rank = workers;
        cfg.iterations = iterations;
        cfg.warmup = warmup;
        cfg.transport = transport_from(transport, progress, latency_us, per_byte_ns);
        if (timeout_s > 0.0) cfg.epoch_timeout_s = timeout_s;
        cfg.check();
        Problem problem{"python", a, to_vector<double>(b)};
        if (problem.rhs.size() != static_cast<std::size_t>(a.n_cols())) {
          throw ValidationError("run: b has " + std::to_string(problem.rhs.size()) +
                                " entries, matrix has " + std::to_string(a.n_cols()) + " columns");
        }
        DistributedRun run;
        {
          py::gil_scoped_release release;
          run = run_distributed(problem.matrix, problem.rhs, cfg);
        }
        auto rec = make_record(cfg, problem, run, {});
        const auto oracle = sequential_oracle(problem.matrix, problem.rhs, cfg.iterations);
        rec.max_rel_error = relative_error(run.result, oracle);
        return py::make_tuple(to_array<double>(run.result), record_dict(rec));
      },
      py::arg("a"), py::arg("b"), py::arg("mode") = "vector", py::arg("ranks") = 1,
      py::arg("workers") = 1, py::arg("iterations") = 1, py::arg("warmup") = 1,
      py::arg("transport") = "inproc", py::arg("progress") = "on-wait",
      py::arg("latency_us") = 0.0, py::arg("per_byte_ns") = 0.0, py::arg("timeout_s") = 0.0,
      "Runs the distributed multiply; returns (result, record dict).");
}
