#include "tsp/sparse_bool.hpp"

#include <algorithm>

namespace tsp {

SparseBool SparseBool::from_pairs(
    std::size_t n,
    const std::vector<std::pair<std::uint32_t, std::uint32_t>>& pairs) {
  SparseBool m(n);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> sorted = pairs;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  m.cols_.reserve(sorted.size());
  for (const auto& [r, c] : sorted) {
    ++m.row_ptr_[r + 1];
    m.cols_.push_back(c);
  }
  for (std::size_t i = 1; i <= n; ++i) m.row_ptr_[i] += m.row_ptr_[i - 1];
  return m;
}

bool SparseBool::contains(std::uint32_t row, std::uint32_t col) const {
  const auto* begin = row_begin(row);
  const auto* end = row_end(row);
  return std::binary_search(begin, end, col);
}

SparseBool SparseBool::transpose() const {
  SparseBool t(n_);
  t.cols_.resize(cols_.size());
  for (std::uint32_t c : cols_) ++t.row_ptr_[c + 1];
  for (std::size_t i = 1; i <= n_; ++i) t.row_ptr_[i] += t.row_ptr_[i - 1];
  std::vector<std::size_t> cursor(t.row_ptr_.begin(), t.row_ptr_.end() - 1);
  for (std::uint32_t r = 0; r < n_; ++r) {
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      t.cols_[cursor[cols_[k]]++] = r;
    }
  }
  return t;
}

SparseBool multiply(const SparseBool& a, const SparseBool& b) {
  const std::size_t n = a.n_;
  SparseBool c(n);
  std::vector<std::uint32_t> mark(n, 0xffffffffu);
  std::vector<std::uint32_t> scratch;
  for (std::uint32_t i = 0; i < n; ++i) {
    scratch.clear();
    for (std::size_t ka = a.row_ptr_[i]; ka < a.row_ptr_[i + 1]; ++ka) {
      const std::uint32_t k = a.cols_[ka];
      for (std::size_t kb = b.row_ptr_[k]; kb < b.row_ptr_[k + 1]; ++kb) {
        const std::uint32_t j = b.cols_[kb];
        if (mark[j] != i) {
          mark[j] = i;
          scratch.push_back(j);
        }
      }
    }
    std::sort(scratch.begin(), scratch.end());
    c.cols_.insert(c.cols_.end(), scratch.begin(), scratch.end());
    c.row_ptr_[i + 1] = c.cols_.size();
  }
  return c;
}

std::size_t intersect_count(const SparseBool& a, const SparseBool& b) {
  std::size_t count = 0;
  for (std::uint32_t r = 0; r < a.n_; ++r) {
    const auto* pa = a.row_begin(r);
    const auto* ea = a.row_end(r);
    const auto* pb = b.row_begin(r);
    const auto* eb = b.row_end(r);
    while (pa != ea && pb != eb) {
      if (*pa < *pb) ++pa;
      else if (*pb < *pa) ++pb;
      else {
        ++count;
        ++pa;
        ++pb;
      }
    }
  }
  return count;
}

}  // namespace tsp
