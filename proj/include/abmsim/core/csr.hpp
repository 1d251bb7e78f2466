#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace abmsim {

/// Compressed sparse rows with float weights.
struct Csr {
  std::vector<std::uint64_t> row_ptr{0};
  std::vector<std::uint32_t> col;
  std::vector<float> weight;

  std::size_t rows() const noexcept { return row_ptr.size() - 1; }
  std::size_t nnz() const noexcept { return col.size(); }
  std::size_t degree(std::size_t i) const noexcept { return row_ptr[i + 1] - row_ptr[i]; }
};

}  // namespace abmsim
