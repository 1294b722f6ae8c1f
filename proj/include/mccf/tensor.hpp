#pragma once

#include <cassert>
#include <cstdint>
#include <string>
#include <vector>

#include "mccf/rng.hpp"

namespace mccf {

// Dense double-precision tensor (at most rank 2 here; vectors are n x 1).
// Learnable parameters set requires_grad and accumulate adjoints in grad.
//
// Extraction matrices are stored column-major (each column contiguous) so the
// sparse-feature kernels touch contiguous memory; everything else is
// row-major. The at() accessor hides the layout.
struct Tensor {
  int rows = 0;
  int cols = 0;
  bool col_major = false;
  bool requires_grad = false;
  std::vector<double> val;
  std::vector<double> grad;

  Tensor() = default;
  Tensor(int r, int c, bool needs_grad = false, bool cm = false)
      : rows(r), cols(c), col_major(cm), requires_grad(needs_grad),
        val(std::size_t(r) * c, 0.0) {
    if (needs_grad) grad.assign(val.size(), 0.0);
  }

  static Tensor gaussian(int r, int c, Rng& rng, double mean, double stddev,
                         bool needs_grad = true, bool cm = false) {
    Tensor t(r, c, needs_grad, cm);
    for (auto& x : t.val) x = rng.normal(mean, stddev);
    return t;
  }

  std::size_t size() const { return val.size(); }
  bool is_vector() const { return cols == 1; }
  bool is_scalar() const { return rows == 1 && cols == 1; }

  double& at(int r, int c) {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return col_major ? val[std::size_t(c) * rows + r] : val[std::size_t(r) * cols + c];
  }
  double at(int r, int c) const {
    return col_major ? val[std::size_t(c) * rows + r] : val[std::size_t(r) * cols + c];
  }

  void zero_grad() {
    if (requires_grad) grad.assign(val.size(), 0.0);
  }
};

// View of one sparse feature row: column indices (ascending) and values.
struct SparseVec {
  const std::int32_t* idx = nullptr;
  const double* val = nullptr;
  std::int32_t nnz = 0;
};

}  // namespace mccf
