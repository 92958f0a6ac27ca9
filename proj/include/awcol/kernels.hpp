#pragma once

#include <span>

#include "awcol/matrix.hpp"

// Dense kernels behind the encoder and the prototype head.
//
// The top-level functions split their outer (row) loop across OpenMP threads
// when the work is large enough and no enclosing parallel region is active.
// Each output element is produced by exactly one thread with a fixed
// accumulation order, so results are bit-identical to kernels::serial.
namespace awcol::kernels {

/// out[b, o] = bias[o] + sum_i x[b, i] * w[o, i]
Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> bias);

/// dW[o, i] = sum_b dy[b, o] * x[b, i]
Matrix weight_grad(const Matrix& dy, const Matrix& x);

/// dX[b, i] = sum_o dy[b, o] * w[o, i]
Matrix input_grad(const Matrix& dy, const Matrix& w);

/// out[b, j] = || a[b] - c[j] ||^2
Matrix sq_distances(const Matrix& a, const Matrix& c);

/// Work (multiply-adds) above which the row loop goes parallel.
inline constexpr double kParallelWork = 1 << 15;

namespace serial {
Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> bias);
Matrix weight_grad(const Matrix& dy, const Matrix& x);
Matrix input_grad(const Matrix& dy, const Matrix& w);
Matrix sq_distances(const Matrix& a, const Matrix& c);
}  // namespace serial

}  // namespace awcol::kernels
