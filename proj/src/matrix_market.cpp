// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string_view>
#include <vector>

#include "ospmv/error.hpp"
#include "ospmv/workload.hpp"

namespace ospmv {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& msg) {
  throw ValidationError(source + ", line " + std::to_string(line) + ": " + msg);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view tok, T& out) {
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

bool blank_or_comment(const std::string& line) {
  for (char c : line) {
    if (c == '%') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

}  // namespace

CooTriples parse_matrix_market(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;

  if (!std::getline(in, line)) fail(source, 1, "empty file, expected %%MatrixMarket header");
  ++lineno;
  const auto head = split_ws(line);
  if (head.size() != 5 || head[0] != "%%MatrixMarket") {
    fail(source, lineno, "malformed header, expected '%%MatrixMarket matrix coordinate <field> <symmetry>'");
  }
  const std::string object = lower(std::string(head[1]));
  const std::string format = lower(std::string(head[2]));
  const std::string field = lower(std::string(head[3]));
  const std::string symmetry = lower(std::string(head[4]));
  if (object != "matrix") fail(source, lineno, "unsupported object '" + object + "'");
  if (format != "coordinate") fail(source, lineno, "unsupported format '" + format + "'");
  if (field != "real" && field != "integer") {
    fail(source, lineno, "unsupported field '" + field + "' (only real and integer)");
  }
  if (symmetry != "general" && symmetry != "symmetric") {
    fail(source, lineno, "unsupported symmetry '" + symmetry + "'");
  }
  const bool symmetric = symmetry == "symmetric";

  // Size line after any comments.
  long long rows = 0, cols = 0, declared = 0;
  for (;;) {
    if (!std::getline(in, line)) fail(source, lineno + 1, "missing size line");
    ++lineno;
    if (blank_or_comment(line)) continue;
    const auto tok = split_ws(line);
    if (tok.size() != 3 || !parse_number(tok[0], rows) || !parse_number(tok[1], cols) ||
        !parse_number(tok[2], declared) || rows < 0 || cols < 0 || declared < 0) {
      fail(source, lineno, "malformed size line, expected '<rows> <cols> <entries>'");
    }
    if (rows > std::numeric_limits<index_t>::max() || cols > std::numeric_limits<index_t>::max()) {
      fail(source, lineno, "matrix dimensions exceed 32-bit index range");
    }
    break;
  }
  if (symmetric && rows != cols) fail(source, lineno, "symmetric matrix must be square");

  CooTriples t;
  t.n_rows = static_cast<index_t>(rows);
  t.n_cols = static_cast<index_t>(cols);
  t.entries.reserve(static_cast<std::size_t>(symmetric ? 2 * declared : declared));
  long long seen = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank_or_comment(line)) continue;
    if (seen == declared) {
      fail(source, lineno, "more entries than the declared " + std::to_string(declared));
    }
    const auto tok = split_ws(line);
    long long i = 0, j = 0;
    double v = 0.0;
    bool ok = tok.size() == 3 && parse_number(tok[0], i) && parse_number(tok[1], j);
    if (ok) {
      if (field == "integer") {
        long long iv = 0;
        ok = parse_number(tok[2], iv);
        v = static_cast<double>(iv);
      } else {
        ok = parse_number(tok[2], v);
      }
    }
    if (!ok) fail(source, lineno, "malformed entry, expected '<row> <col> <value>'");
    if (i < 1 || i > rows || j < 1 || j > cols) {
      fail(source, lineno,
           "index (" + std::to_string(i) + ", " + std::to_string(j) + ") outside declared " +
               std::to_string(rows) + "x" + std::to_string(cols));
    }
    const auto r = static_cast<index_t>(i - 1);
    const auto c = static_cast<index_t>(j - 1);
    t.entries.push_back({r, c, v});
    if (symmetric && r != c) t.entries.push_back({c, r, v});
    ++seen;
  }
  if (seen != declared) {
    fail(source, lineno,
         "entry count mismatch: declared " + std::to_string(declared) + ", found " +
             std::to_string(seen));
  }
  return t;
}

CooTriples read_matrix_market(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open matrix file '" + path.string() + "'");
  return parse_matrix_market(in, path.string());
}

void write_matrix_market(std::ostream& out, const CsrMatrix& a) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << a.n_rows() << ' ' << a.n_cols() << ' ' << a.n_nz() << '\n';
  char buf[64];
  for (index_t i = 0; i < a.n_rows(); ++i) {
    for (offset_t j = a.row_ptr()[i]; j < a.row_ptr()[i + 1]; ++j) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, a.val()[j]);
      out << (i + 1) << ' ' << (a.col_idx()[j] + 1) << ' ' << std::string_view(buf, ptr - buf)
          << '\n';
    }
  }
}

void write_matrix_market(const std::filesystem::path& path, const CsrMatrix& a) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write matrix file '" + path.string() + "'");
  write_matrix_market(out, a);
  if (!out) throw RuntimeFailure("write to '" + path.string() + "' failed");
}

}  // namespace ospmv
