// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "ospmv/bench.hpp"
#include "ospmv/error.hpp"

namespace ospmv {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

template <typename T>
T number(const std::string& key, const std::string& text, std::size_t line) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ValidationError("suite spec line " + std::to_string(line) + ": invalid value '" + text +
                          "' for " + key);
  }
  return v;
}

}  // namespace

TransportConfig parse_transport(const std::string& name, Progress progress, double latency_us,
                                double per_byte_ns) {
  TransportConfig t;
  t.progress = progress;
  if (name == "inproc" || name == "in-process") {
    t.kind = TransportKind::InProcess;
  } else if (name == "socket") {
    t.kind = TransportKind::Socket;
  } else if (name == "delayed") {
    t.kind = TransportKind::InProcess;
    t.base_latency_us = latency_us;
    t.per_byte_ns = per_byte_ns;
  } else {
    throw ValidationError("unknown transport '" + name + "' (inproc, socket, delayed)");
  }
  return t;
}

SuiteSpec parse_suite_spec(std::istream& in) {
  SuiteSpec spec;
  std::vector<std::string> transport_names{"inproc"};
  Progress progress = Progress::OnWait;
  double latency_us = 0.0, per_byte_ns = 0.0;
  std::vector<std::string> errors;
  bool have_matrix = false;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "matrix") {
        const RhsRule keep_rhs = spec.problem.rhs;
        const auto keep_seed = spec.problem.seed;
        spec.problem = parse_problem(val);
        spec.problem.rhs = keep_rhs;
        spec.problem.seed = keep_seed;
        have_matrix = true;
      } else if (key == "modes") {
        spec.modes.clear();
        if (val == "all") {
          spec.modes.assign(std::begin(kAllModes), std::end(kAllModes));
        } else {
          for (const auto& m : list(val)) spec.modes.push_back(parse_mode(m));
        }
      } else if (key == "ranks" || key == "workers") {
        std::vector<int> v;
        for (const auto& x : list(val)) v.push_back(number<int>(key, x, lineno));
        (key == "ranks" ? spec.ranks : spec.workers) = v;
      } else if (key == "transports" || key == "transport") {
        transport_names = list(val);
      } else if (key == "progress") {
        progress = parse_progress(val);
      } else if (key == "latency_us") {
        latency_us = number<double>(key, val, lineno);
      } else if (key == "per_byte_ns") {
        per_byte_ns = number<double>(key, val, lineno);
      } else if (key == "iterations") {
        spec.iterations = number<int>(key, val, lineno);
      } else if (key == "warmup") {
        spec.warmup = number<int>(key, val, lineno);
      } else if (key == "seed") {
        spec.problem.seed = number<std::uint64_t>(key, val, lineno);
      } else if (key == "rhs") {
        spec.problem.rhs = parse_rhs(val);
      } else if (key == "bandwidth_gbs") {
        spec.model.bandwidth_gbs = number<double>(key, val, lineno);
      } else if (key == "kappa") {
        spec.model.kappa = number<double>(key, val, lineno);
      } else if (key == "tolerance") {
        spec.tolerance = number<double>(key, val, lineno);
      } else {
        errors.push_back("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
      }
    } catch (const ValidationError& e) {
      errors.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_matrix) errors.push_back("missing 'matrix' key");
  if (spec.modes.empty()) errors.push_back("no modes given");
  if (spec.ranks.empty()) errors.push_back("no rank counts given");
  if (spec.workers.empty()) errors.push_back("no worker counts given");
  spec.transports.clear();
  for (const auto& name : transport_names) {
    try {
      spec.transports.push_back(parse_transport(name, progress, latency_us, per_byte_ns));
    } catch (const ValidationError& e) {
      errors.push_back(e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = "invalid suite spec:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ValidationError(msg);
  }
  return spec;
}

SuiteSpec read_suite_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open suite spec '" + path + "'");
  return parse_suite_spec(in);
}

std::vector<RunRecord> bench_suite(const SuiteSpec& spec) {
  const Problem problem = assemble(spec.problem);
  const DenseVector oracle = sequential_oracle(problem.matrix, problem.rhs, spec.iterations);

  std::vector<ExecConfig> configs;
  for (const auto& transport : spec.transports) {
    for (Mode mode : spec.modes) {
      for (int workers : spec.workers) {
        for (int ranks : spec.ranks) {
          ExecConfig cfg;
          cfg.mode = mode;
          cfg.n_ranks = ranks;
          cfg.workers_per_rank = workers;
          cfg.transport = transport;
          cfg.iterations = spec.iterations;
          cfg.warmup = spec.warmup;
          cfg.seed = spec.problem.seed;
          configs.push_back(cfg);
        }
      }
    }
  }
  // Validate the whole cross product before running anything.
  std::vector<std::string> errs;
  for (const auto& cfg : configs) {
    for (const auto& e : cfg.validate()) errs.push_back(e);
  }
  if (!errs.empty()) {
    std::sort(errs.begin(), errs.end());
    errs.erase(std::unique(errs.begin(), errs.end()), errs.end());
    std::string msg = "invalid suite configuration:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ValidationError(msg);
  }

  std::vector<RunRecord> records;
  for (const auto& cfg : configs) {
    const auto runs = run_benchmark(std::span(&cfg, 1), problem, spec.model);
    RunRecord rec = runs.front().record;
    rec.max_rel_error = relative_error(runs.front().run.result, oracle);
    if (!(rec.max_rel_error <= spec.tolerance)) {
      std::ostringstream os;
      os << "oracle mismatch for mode=" << rec.mode << " ranks=" << rec.n_ranks
         << " workers=" << rec.workers_per_rank << " transport=" << rec.transport
         << ": relative error " << rec.max_rel_error << " exceeds " << spec.tolerance;
      throw RuntimeFailure(os.str());
    }
    records.push_back(rec);
  }
  mark_efficiency(records);
  return records;
}

void mark_efficiency(std::vector<RunRecord>& records) {
  using Key = std::tuple<std::string, int, std::string, std::string>;
  std::map<Key, std::vector<std::size_t>> series;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    series[{r.mode, r.workers_per_rank, r.transport, r.matrix}].push_back(k);
  }
  for (auto& [key, idx] : series) {
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t x, std::size_t y) { return records[x].n_ranks < records[y].n_ranks; });
    const auto base = std::find_if(idx.begin(), idx.end(),
                                   [&](std::size_t k) { return records[k].n_ranks == 1; });
    if (base == idx.end() || !(records[*base].gflops > 0.0)) continue;
    const double g1 = records[*base].gflops;
    bool flagged = false;
    for (std::size_t k : idx) {
      auto& r = records[k];
      r.efficiency = r.gflops / (r.n_ranks * g1);
      r.below_half_efficiency = false;
      if (!flagged && r.efficiency < 0.5) {
        r.below_half_efficiency = true;
        flagged = true;
      }
    }
  }
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{
      "mode",       "n_ranks",    "workers_per_rank", "transport",      "matrix",
      "n_rows",     "n_nz",       "iterations",       "median_s",       "min_s",
      "gflops",     "model_bound_gflops",             "model_eff_gbs",  "comm_bytes",
      "raw_comm_bytes",           "messages",         "gather_s",       "comm_s",
      "local_s",    "remote_s",   "max_rel_error",    "efficiency",     "below_half_efficiency"};
  return cols;
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_csv(std::ostream& out, const std::vector<RunRecord>& records) {
  const auto& cols = csv_columns();
  for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << cols[k];
  out << '\n';
  for (const auto& r : records) {
    out << csv_field(r.mode) << ',' << r.n_ranks << ',' << r.workers_per_rank << ','
        << csv_field(r.transport) << ',' << csv_field(r.matrix) << ',' << r.n_rows << ',' << r.n_nz
        << ',' << r.iterations << ',' << fmt(r.median_s) << ',' << fmt(r.min_s) << ','
        << fmt(r.gflops) << ',' << fmt(r.model_bound_gflops) << ',' << fmt(r.model_eff_gbs) << ','
        << r.comm_bytes << ',' << r.raw_comm_bytes << ',' << r.messages << ',' << fmt(r.gather_s)
        << ',' << fmt(r.comm_s) << ',' << fmt(r.local_s) << ',' << fmt(r.remote_s) << ','
        << fmt(r.max_rel_error) << ',' << fmt(r.efficiency) << ','
        << (r.below_half_efficiency ? 1 : 0) << '\n';
  }
}

std::string records_to_json(const std::vector<RunRecord>& records, int indent) {
  using nlohmann::json;
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  json arr = json::array();
  for (const auto& r : records) {
    arr.push_back({{"mode", r.mode},
                   {"n_ranks", r.n_ranks},
                   {"workers_per_rank", r.workers_per_rank},
                   {"transport", r.transport},
                   {"matrix", r.matrix},
                   {"n_rows", r.n_rows},
                   {"n_nz", r.n_nz},
                   {"iterations", r.iterations},
                   {"median_s", r.median_s},
                   {"min_s", r.min_s},
                   {"gflops", r.gflops},
                   {"model_bound_gflops", num(r.model_bound_gflops)},
                   {"model_eff_gbs", r.model_eff_gbs},
                   {"comm_bytes", r.comm_bytes},
                   {"raw_comm_bytes", r.raw_comm_bytes},
                   {"messages", r.messages},
                   {"gather_s", r.gather_s},
                   {"comm_s", r.comm_s},
                   {"local_s", r.local_s},
                   {"remote_s", r.remote_s},
                   {"max_rel_error", num(r.max_rel_error)},
                   {"efficiency", num(r.efficiency)},
                   {"below_half_efficiency", r.below_half_efficiency}});
  }
  return arr.dump(indent);
}

}  // namespace ospmv
