#pragma once

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpdfp/linops.hpp"
#include "fpdfp/losses.hpp"
#include "fpdfp/rng.hpp"
#include "fpdfp/vec.hpp"

namespace fpdfp {

// File- and format-level failures; the CLI maps this to its own exit code.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Dataset {
  std::size_t d = 0;
  CsrMatrix rows;   // n x d, column indices ascending within each row
  Vec labels;       // in {-1, +1}
  std::string provenance;

  std::size_t size() const { return rows.rows; }
};

/* LIBSVM text parser: one sample per line, "label idx:val idx:val ...",
 * indices 1-based and strictly ascending within a line. Label alphabet is
 * {+1, 1, -1, 2} mapped onto {-1, +1} (2 -> -1, the covtype convention);
 * anything else is an error naming the line. d = max(d_hint, max index).
 */
inline Dataset parse_libsvm(std::istream& in, const std::string& name, std::size_t d_hint = 0) {
  Dataset ds;
  ds.provenance = name;
  ds.rows.row_ptr.push_back(0);
  std::size_t max_index = 0;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw DataError(name + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const char* p = line.c_str();
    while (*p == ' ' || *p == '\t') ++p;
    if (*p == '\0' || *p == '\r') continue;

    char* end = nullptr;
    const double raw_label = std::strtod(p, &end);
    if (end == p) fail("expected a label");
    p = end;
    double label;
    if (raw_label == 1.0)
      label = 1.0;
    else if (raw_label == -1.0)
      label = -1.0;
    else if (raw_label == 2.0)
      label = -1.0;
    else
      fail("unknown label '" + std::to_string(raw_label) + "' (alphabet is +1/-1/1/2)");

    std::size_t prev_index = 0;
    while (true) {
      while (*p == ' ' || *p == '\t') ++p;
      if (*p == '\0' || *p == '\r' || *p == '\n') break;
      const long idx = std::strtol(p, &end, 10);
      if (end == p || *end != ':') fail("expected 'index:value'");
      if (idx < 1) fail("index must be >= 1");
      const std::size_t index = static_cast<std::size_t>(idx);
      if (index <= prev_index)
        fail(index == prev_index ? "duplicate feature index " + std::to_string(index)
                                 : "feature indices must ascend");
      p = end + 1;
      const double value = std::strtod(p, &end);
      if (end == p) fail("expected a value after ':'");
      if (!std::isfinite(value)) fail("non-finite feature value");
      p = end;
      ds.rows.col.push_back(index - 1);
      ds.rows.val.push_back(value);
      prev_index = index;
    }
    if (prev_index > max_index) max_index = prev_index;
    ds.labels.push_back(label);
    ds.rows.row_ptr.push_back(ds.rows.col.size());
  }
  ds.rows.rows = ds.labels.size();
  ds.d = std::max(d_hint, max_index);
  ds.rows.cols = ds.d;
  return ds;
}

inline Dataset load_libsvm(const std::string& path, std::size_t d_hint = 0) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  return parse_libsvm(in, path, d_hint);
}

inline void write_libsvm(std::ostream& out, const Dataset& ds) {
  char buf[40];
  for (std::size_t r = 0; r < ds.size(); ++r) {
    out << (ds.labels[r] > 0 ? "+1" : "-1");
    for (std::size_t k = ds.rows.row_ptr[r]; k < ds.rows.row_ptr[r + 1]; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.rows.val[k]);
      out << ' ' << (ds.rows.col[k] + 1) << ':' << buf;
    }
    out << '\n';
  }
}

// New dataset holding the listed rows (in the given order).
inline Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.d = ds.d;
  out.provenance = ds.provenance;
  out.rows.rows = idx.size();
  out.rows.cols = ds.d;
  out.rows.row_ptr.push_back(0);
  for (std::size_t r : idx) {
    require(r < ds.size(), "take_rows: index out of range");
    for (std::size_t k = ds.rows.row_ptr[r]; k < ds.rows.row_ptr[r + 1]; ++k) {
      out.rows.col.push_back(ds.rows.col[k]);
      out.rows.val.push_back(ds.rows.val[k]);
    }
    out.rows.row_ptr.push_back(out.rows.col.size());
    out.labels.push_back(ds.labels[r]);
  }
  return out;
}

struct TrainTestSplit {
  Dataset train, test;
};

// Seeded shuffle split into disjoint prefixes; exhaustive when the counts sum
// to the dataset size (the benchmark-scale configurations do).
inline TrainTestSplit split_train_test(const Dataset& ds, std::size_t n_train, std::size_t n_test,
                                       std::uint64_t seed) {
  require(n_train + n_test <= ds.size(), "split: counts exceed dataset size");
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(Rng::key(seed, 0x517));
  rng.full_shuffle(idx);
  TrainTestSplit out;
  out.train = take_rows(ds, {idx.begin(), idx.begin() + n_train});
  out.test = take_rows(ds, {idx.begin() + n_train, idx.begin() + n_train + n_test});
  return out;
}

inline TrainTestSplit split_train_test(const Dataset& ds, double train_ratio, std::uint64_t seed) {
  require(train_ratio >= 0.0 && train_ratio <= 1.0, "split: ratio must be in [0, 1]");
  const auto n_train =
      static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(ds.size())));
  return split_train_test(ds, n_train, ds.size() - n_train, seed);
}

struct ShardParams {
  LossKind kind = LossKind::logistic;
  double mu1 = 0.0;
  bool unnormalized = false;
};

// Seeded shuffle + round-robin deal into N shards; sizes differ by at most 1.
inline std::vector<LossShard> partition(const Dataset& ds, std::size_t num_clients,
                                        std::uint64_t seed, const ShardParams& params) {
  require(num_clients >= 1, "partition: need at least one client");
  require(num_clients <= ds.size(), "partition: more clients than samples");
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(Rng::key(seed, 0x9a7));
  rng.full_shuffle(idx);
  std::vector<LossShard> shards(num_clients);
  for (std::size_t c = 0; c < num_clients; ++c) {
    std::vector<std::size_t> mine;
    for (std::size_t j = c; j < idx.size(); j += num_clients) mine.push_back(idx[j]);
    const Dataset sub = take_rows(ds, mine);
    LossShard& s = shards[c];
    s.kind = params.kind;
    s.mu1 = params.mu1;
    s.unnormalized = params.unnormalized;
    s.samples = sub.rows;
    s.targets = sub.labels;
  }
  return shards;
}

/* Pairwise feature-correlation graph: one row per unordered feature pair
 * (i, j), i < j, with |pearson(i, j)| >= threshold, encoding x_i - x_j
 * (+1 at i, -1 at j), rows sorted by (i, j). Zero-variance features are
 * skipped with a warning on stderr. Stands in for a sparse inverse-covariance
 * estimate when only a similarity structure is needed.
 */
inline SparseMatrix build_graph_matrix(const Dataset& ds, double threshold,
                                       std::ostream& warnings = std::cerr) {
  require(ds.size() >= 2, "graph matrix: need at least two samples");
  const std::size_t d = ds.d;
  const double n = static_cast<double>(ds.size());
  Vec mean(d, 0.0);
  std::vector<double> gram(d * d, 0.0);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t k = ds.rows.row_ptr[r]; k < ds.rows.row_ptr[r + 1]; ++k) {
      mean[ds.rows.col[k]] += ds.rows.val[k];
      for (std::size_t l = ds.rows.row_ptr[r]; l < ds.rows.row_ptr[r + 1]; ++l)
        gram[ds.rows.col[k] * d + ds.rows.col[l]] += ds.rows.val[k] * ds.rows.val[l];
    }
  }
  for (double& m : mean) m /= n;
  Vec var(d, 0.0);
  std::vector<bool> ok(d, false);
  for (std::size_t i = 0; i < d; ++i) {
    var[i] = gram[i * d + i] / n - mean[i] * mean[i];
    ok[i] = var[i] > 1e-14;
    if (!ok[i]) warnings << "graph matrix: feature " << (i + 1) << " has zero variance, skipped\n";
  }
  SparseMatrix g;
  g.cols = d;
  for (std::size_t i = 0; i < d; ++i) {
    if (!ok[i]) continue;
    for (std::size_t j = i + 1; j < d; ++j) {
      if (!ok[j]) continue;
      const double cov = gram[i * d + j] / n - mean[i] * mean[j];
      const double corr = cov / std::sqrt(var[i] * var[j]);
      if (std::fabs(corr) >= threshold) {
        g.entries.push_back({g.rows, i, 1.0});
        g.entries.push_back({g.rows, j, -1.0});
        ++g.rows;
      }
    }
  }
  return g;
}

/* Coordinate matrix text interchange: '%' comment lines, then a header
 * "rows cols nnz", then nnz lines "i j value" with 1-based indices. */
inline void save_matrix(std::ostream& out, const SparseMatrix& m) {
  validate_coo(m);
  out << m.rows << ' ' << m.cols << ' ' << m.entries.size() << '\n';
  char buf[40];
  for (const auto& t : m.entries) {
    std::snprintf(buf, sizeof buf, "%.17g", t.v);
    out << (t.r + 1) << ' ' << (t.c + 1) << ' ' << buf << '\n';
  }
}

inline void save_matrix(const std::string& path, const SparseMatrix& m) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  save_matrix(out, m);
}

inline SparseMatrix load_matrix(std::istream& in, const std::string& name) {
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw DataError(name + ":" + std::to_string(lineno) + ": " + what);
  };
  auto next_content_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      std::size_t pos = line.find_first_not_of(" \t\r");
      if (pos == std::string::npos || line[pos] == '%') continue;
      return true;
    }
    return false;
  };
  if (!next_content_line()) throw DataError(name + ": missing header line");
  SparseMatrix m;
  std::size_t nnz = 0;
  {
    std::istringstream h(line);
    if (!(h >> m.rows >> m.cols >> nnz)) fail("header must be 'rows cols nnz'");
    std::string extra;
    if (h >> extra) fail("trailing tokens after header");
  }
  for (std::size_t e = 0; e < nnz; ++e) {
    if (!next_content_line()) fail("expected " + std::to_string(nnz) + " entries, got " +
                                   std::to_string(e));
    std::istringstream t(line);
    long long i = 0, j = 0;
    double v = 0.0;
    if (!(t >> i >> j >> v)) fail("entry must be 'i j value'");
    std::string extra;
    if (t >> extra) fail("trailing tokens after entry");
    if (i < 1 || j < 1 || static_cast<std::size_t>(i) > m.rows ||
        static_cast<std::size_t>(j) > m.cols)
      fail("entry (" + std::to_string(i) + "," + std::to_string(j) + ") outside declared " +
           std::to_string(m.rows) + "x" + std::to_string(m.cols));
    m.entries.push_back({static_cast<std::size_t>(i) - 1, static_cast<std::size_t>(j) - 1, v});
  }
  if (next_content_line()) fail("more entries than the declared nnz");
  try {
    validate_coo(m);
  } catch (const std::invalid_argument& err) {
    throw DataError(name + ": " + err.what());
  }
  return m;
}

inline SparseMatrix load_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  return load_matrix(in, path);
}

}  // namespace fpdfp
