#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace tsp {

// Square boolean matrix in CSR form. Column indices are sorted and unique
// within each row, so entry values are implicit.
class SparseBool {
 public:
  SparseBool() = default;
  explicit SparseBool(std::size_t n) : n_(n), row_ptr_(n + 1, 0) {}

  // Builds from an unsorted (row, col) list; duplicates collapse.
  static SparseBool from_pairs(std::size_t n,
                               const std::vector<std::pair<std::uint32_t, std::uint32_t>>& pairs);

  std::size_t size() const { return n_; }
  std::size_t nnz() const { return cols_.size(); }
  bool contains(std::uint32_t row, std::uint32_t col) const;

  // Row slice [begin, end) of sorted column indices.
  const std::uint32_t* row_begin(std::uint32_t row) const {
    return cols_.data() + row_ptr_[row];
  }
  const std::uint32_t* row_end(std::uint32_t row) const {
    return cols_.data() + row_ptr_[row + 1];
  }

  SparseBool transpose() const;

  // Boolean matrix product: (A*B)[i][j] = 1 iff some k has A[i][k] and
  // B[k][j]. The result is already binarized.
  friend SparseBool multiply(const SparseBool& a, const SparseBool& b);

  // Number of positions set in both matrices.
  friend std::size_t intersect_count(const SparseBool& a, const SparseBool& b);

  // Visits every (row, col) entry in row-major order.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (std::uint32_t r = 0; r < n_; ++r) {
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) fn(r, cols_[k]);
    }
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::uint32_t> cols_;
};

SparseBool multiply(const SparseBool& a, const SparseBool& b);
std::size_t intersect_count(const SparseBool& a, const SparseBool& b);

}  // namespace tsp
