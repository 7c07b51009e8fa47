#pragma once

#include "vti/tensor.hpp"

namespace vti {

/// Standard matrix product [M,K] x [K,N] -> [M,N]. Accumulation over the
/// inner dimension runs left-to-right, so results are reproducible.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Max-subtracted softmax along `axis` (negative counts from the back).
/// Each slice along the axis sums to 1 within 1e-6.
Tensor softmax(const Tensor& x, int axis = -1);

/// Layer normalization over the last dimension, then affine gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);

struct FeatureStats {
  Tensor mean;      // [D]
  Tensor variance;  // [D], unbiased (divisor K-1)
};

/// Per-feature sample mean and unbiased variance over K rows. K >= 2.
FeatureStats feature_stats(const Tensor& samples);

struct PrincipalOptions {
  // The raw stacked matrix is used by default: the shared shift across
  // examples is the signal, and centering would subtract it away.
  bool center = false;
  double tol = 1e-10;
  int max_iterations = 10000;
};

/// Unit-norm top right singular vector of the N x D matrix, computed by
/// power iteration on the D x D Gram matrix. The sign is oriented so the
/// dot product with the column-wise mean is >= 0. The Gram matrix and
/// column means are accumulated with an order-independent (sorted) sum,
/// so permuting the rows leaves the result bit-identical.
///
/// Throws DegenerateInputError for an all-zero matrix and
/// ConvergenceError (with the iteration count) if power iteration does
/// not settle within max_iterations.
Tensor principal_direction(const DeltaMatrix& m, const PrincipalOptions& opts = {});

}  // namespace vti
