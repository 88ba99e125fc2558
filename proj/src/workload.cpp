// SPDX-License-Identifier: Apache-2.0
#include "ospmv/workload.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "ospmv/error.hpp"

namespace ospmv {

double unit_uniform(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

CooTriples gen_stencil7(index_t nx, index_t ny, index_t nz) {
  if (nx < 1 || ny < 1 || nz < 1) throw ValidationError("gen_stencil7: dimensions must be >= 1");
  const std::int64_t n = static_cast<std::int64_t>(nx) * ny * nz;
  if (n > std::numeric_limits<index_t>::max()) {
    throw ValidationError("gen_stencil7: grid of " + std::to_string(n) +
                          " points exceeds the 32-bit index range");
  }
  CooTriples t;
  t.n_rows = t.n_cols = static_cast<index_t>(n);
  t.entries.reserve(static_cast<std::size_t>(7 * n));
  auto id = [&](index_t x, index_t y, index_t z) { return x + nx * (y + ny * z); };
  for (index_t z = 0; z < nz; ++z) {
    for (index_t y = 0; y < ny; ++y) {
      for (index_t x = 0; x < nx; ++x) {
        const index_t row = id(x, y, z);
        // Ascending column order.
        if (z > 0) t.entries.push_back({row, id(x, y, z - 1), -1.0});
        if (y > 0) t.entries.push_back({row, id(x, y - 1, z), -1.0});
        if (x > 0) t.entries.push_back({row, id(x - 1, y, z), -1.0});
        t.entries.push_back({row, row, 6.0});
        if (x + 1 < nx) t.entries.push_back({row, id(x + 1, y, z), -1.0});
        if (y + 1 < ny) t.entries.push_back({row, id(x, y + 1, z), -1.0});
        if (z + 1 < nz) t.entries.push_back({row, id(x, y, z + 1), -1.0});
      }
    }
  }
  return t;
}

namespace {

index_t in_block_capacity(const BlockBandParams& p) {
  return std::min(p.inner_band, p.block - 1);
}

index_t outer_capacity(const BlockBandParams& p) {
  return p.outer_stride > 0 ? 2 * p.inner_band + 1 : 0;
}

}  // namespace

CooTriples gen_block_band(const BlockBandParams& p) {
  std::vector<std::string> errs;
  if (p.dim < 1) errs.push_back("dim must be >= 1");
  if (p.block < 1) errs.push_back("block must be >= 1");
  else if (p.dim >= 1 && p.dim % p.block != 0) errs.push_back("block must divide dim");
  if (p.inner_band < 1) errs.push_back("inner_band must be >= 1");
  if (p.outer_stride < 0) errs.push_back("outer_stride must be >= 0");
  if (p.outer_stride > 0 && p.outer_stride <= 2 * p.inner_band) {
    errs.push_back("outer_stride must exceed 2 * inner_band");
  }
  if (!(p.target_nnzr >= 3.0)) errs.push_back("target_nnzr must be >= 3");
  const double upper_per_row = (p.target_nnzr - 1.0) / 2.0;
  if (errs.empty() && in_block_capacity(p) + outer_capacity(p) < upper_per_row + 1.0) {
    errs.push_back("block/inner_band/outer_stride leave too few candidate positions for target_nnzr");
  }
  if (!errs.empty()) {
    std::string msg = "gen_block_band: ";
    for (std::size_t k = 0; k < errs.size(); ++k) msg += (k ? "; " : "") + errs[k];
    throw ValidationError(msg);
  }

  std::mt19937_64 rng(p.seed);
  auto value = [&] { return 0.5 + unit_uniform(rng()); };

  CooTriples t;
  t.n_rows = t.n_cols = p.dim;
  t.entries.reserve(static_cast<std::size_t>(p.dim * (p.target_nnzr + 1.0)));
  std::vector<index_t> cand;
  std::int64_t placed = 0;
  for (index_t i = 0; i < p.dim; ++i) {
    t.entries.push_back({i, i, value()});

    cand.clear();
    const index_t block_end = (i / p.block + 1) * p.block;
    for (index_t j = i + 1; j <= std::min<index_t>(i + p.inner_band, block_end - 1); ++j) {
      cand.push_back(j);
    }
    if (p.outer_stride > 0) {
      const std::int64_t lo = std::int64_t{i} + p.outer_stride - p.inner_band;
      const std::int64_t hi = std::int64_t{i} + p.outer_stride + p.inner_band;
      for (std::int64_t j = lo; j <= hi && j < p.dim; ++j) cand.push_back(static_cast<index_t>(j));
    }

    // Error diffusion keeps the running upper-triangle count on target.
    const auto desired = static_cast<std::int64_t>(std::llround(upper_per_row * (i + 1)));
    const std::int64_t want = std::clamp<std::int64_t>(desired - placed, 0,
                                                       static_cast<std::int64_t>(cand.size()));
    for (std::int64_t k = 0; k < want; ++k) {
      const auto pick = k + static_cast<std::int64_t>(rng() % (cand.size() - k));
      std::swap(cand[k], cand[pick]);
      const double v = value();
      t.entries.push_back({i, cand[k], v});
      t.entries.push_back({cand[k], i, v});
    }
    placed += want;
  }
  return t;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  return out;
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ValidationError("invalid value '" + text + "' for " + key);
  }
  return v;
}

}  // namespace

ProblemSpec parse_problem(const std::string& text) {
  ProblemSpec spec;
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (kind == "stencil7") {
    const auto dims = split(args, ',');
    Stencil7Params s;
    if (dims.size() == 1) {
      s.nx = s.ny = s.nz = parse_value<index_t>("stencil7 size", dims[0]);
    } else if (dims.size() == 3) {
      s.nx = parse_value<index_t>("stencil7 nx", dims[0]);
      s.ny = parse_value<index_t>("stencil7 ny", dims[1]);
      s.nz = parse_value<index_t>("stencil7 nz", dims[2]);
    } else {
      throw ValidationError("stencil7 expects 'stencil7:N' or 'stencil7:NX,NY,NZ'");
    }
    spec.source = s;
  } else if (kind == "block_band") {
    BlockBandParams b;
    for (const auto& kv : split(args, ',')) {
      if (kv.empty()) continue;
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ValidationError("block_band expects key=value, got '" + kv + "'");
      const std::string key = kv.substr(0, eq);
      const std::string val = kv.substr(eq + 1);
      if (key == "dim") b.dim = parse_value<index_t>(key, val);
      else if (key == "block") b.block = parse_value<index_t>(key, val);
      else if (key == "band") b.inner_band = parse_value<index_t>(key, val);
      else if (key == "stride") b.outer_stride = parse_value<index_t>(key, val);
      else if (key == "nnzr") b.target_nnzr = parse_value<double>(key, val);
      else if (key == "seed") b.seed = parse_value<std::uint64_t>(key, val);
      else throw ValidationError("unknown block_band parameter '" + key + "'");
    }
    spec.source = b;
  } else {
    spec.source = MatrixFile{text};
  }
  return spec;
}

RhsRule parse_rhs(const std::string& text) {
  if (text == "uniform") return {RhsKind::Uniform, 1.0};
  if (text == "ramp") return {RhsKind::Ramp, 1.0};
  if (text == "const") return {RhsKind::Constant, 1.0};
  if (text.rfind("const:", 0) == 0) {
    return {RhsKind::Constant, parse_value<double>("rhs constant", text.substr(6))};
  }
  throw ValidationError("unknown rhs rule '" + text + "' (uniform, ramp, const[:c])");
}

std::string problem_name(const ProblemSpec& spec) {
  struct Namer {
    std::string operator()(const MatrixFile& f) const { return f.path.stem().string(); }
    std::string operator()(const Stencil7Params& s) const {
      return "stencil7_" + std::to_string(s.nx) + "x" + std::to_string(s.ny) + "x" +
             std::to_string(s.nz);
    }
    std::string operator()(const BlockBandParams& b) const {
      std::ostringstream os;
      os << "block_band_" << b.dim << "_nnzr" << b.target_nnzr;
      return os.str();
    }
  };
  return std::visit(Namer{}, spec.source);
}

CsrMatrix assemble_matrix(const ProblemSpec& spec) {
  struct Builder {
    CooTriples operator()(const MatrixFile& f) const { return read_matrix_market(f.path); }
    CooTriples operator()(const Stencil7Params& s) const { return gen_stencil7(s.nx, s.ny, s.nz); }
    CooTriples operator()(const BlockBandParams& b) const { return gen_block_band(b); }
  };
  return coo_to_csr(std::visit(Builder{}, spec.source));
}

DenseVector make_rhs(const RhsRule& rule, index_t n, std::uint64_t seed) {
  DenseVector b(static_cast<std::size_t>(n));
  switch (rule.kind) {
    case RhsKind::Constant:
      std::fill(b.begin(), b.end(), rule.constant);
      break;
    case RhsKind::Ramp:
      for (index_t i = 0; i < n; ++i) b[i] = static_cast<double>(i + 1) / n;
      break;
    case RhsKind::Uniform: {
      std::mt19937_64 rng(seed);
      for (auto& v : b) v = unit_uniform(rng());
      break;
    }
  }
  return b;
}

Problem assemble(const ProblemSpec& spec) {
  Problem p{problem_name(spec), assemble_matrix(spec), {}};
  p.rhs = make_rhs(spec.rhs, p.matrix.n_cols(), spec.seed);
  return p;
}

DenseVector sequential_oracle(const CsrMatrix& a, std::span<const double> b, int iterations) {
  if (iterations < 1) throw ValidationError("sequential_oracle: iterations must be >= 1");
  if (iterations > 1 && !a.square()) {
    throw ValidationError("sequential_oracle: repeated application needs a square matrix");
  }
  DenseVector c = spmv(a, b);
  for (int it = 1; it < iterations; ++it) c = spmv(a, c);
  return c;
}

DenseVector sequential_oracle(const ProblemSpec& spec, int iterations) {
  const Problem p = assemble(spec);
  return sequential_oracle(p.matrix, p.rhs, iterations);
}

}  // namespace ospmv
