#ifndef LOSSBENCH_SPARSE_HPP
#define LOSSBENCH_SPARSE_HPP

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace lossbench {

/// CSR matrix with double values, used for adjacency-like operators.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;  // size rows+1
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  SparseMatrix() = default;
  SparseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), row_ptr(r + 1, 0) {}

  std::size_t nnz() const { return col_idx.size(); }

  /// Build from (row, col, value) triplets; entries must be unique.
  static SparseMatrix from_triplets(std::size_t r, std::size_t c,
                                    const std::vector<std::size_t>& ri,
                                    const std::vector<std::size_t>& ci,
                                    const std::vector<double>& v) {
    SparseMatrix m(r, c);
    for (std::size_t k = 0; k < ri.size(); ++k) m.row_ptr[ri[k] + 1]++;
    for (std::size_t i = 0; i < r; ++i) m.row_ptr[i + 1] += m.row_ptr[i];
    m.col_idx.resize(ri.size());
    m.values.resize(ri.size());
    std::vector<std::size_t> fill(m.row_ptr.begin(), m.row_ptr.end() - 1);
    for (std::size_t k = 0; k < ri.size(); ++k) {
      std::size_t pos = fill[ri[k]]++;
      m.col_idx[pos] = ci[k];
      m.values[pos] = v[k];
    }
    // sort columns within each row
    for (std::size_t i = 0; i < r; ++i) {
      std::size_t b = m.row_ptr[i], e = m.row_ptr[i + 1];
      std::vector<std::pair<std::size_t, double>> tmp;
      tmp.reserve(e - b);
      for (std::size_t k = b; k < e; ++k) tmp.emplace_back(m.col_idx[k], m.values[k]);
      std::sort(tmp.begin(), tmp.end());
      for (std::size_t k = b; k < e; ++k) {
        m.col_idx[k] = tmp[k - b].first;
        m.values[k] = tmp[k - b].second;
      }
    }
    return m;
  }

  SparseMatrix transposed() const {
    std::vector<std::size_t> ri, ci;
    std::vector<double> v;
    ri.reserve(nnz());
    ci.reserve(nnz());
    v.reserve(nnz());
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
        ri.push_back(col_idx[k]);
        ci.push_back(i);
        v.push_back(values[k]);
      }
    return from_triplets(cols, rows, ri, ci, v);
  }

  double get(std::size_t i, std::size_t j) const {
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
      if (col_idx[k] == j) return values[k];
    return 0.0;
  }
};

}  // namespace lossbench

#endif  // LOSSBENCH_SPARSE_HPP
