#include "vti/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "vti/detail/gemm.hpp"
#include "vti/errors.hpp"

namespace vti {

namespace {

// Sum of addends in ascending value order. Permutation of the inputs
// cannot change the result: equal values are interchangeable under
// rounding and the order of everything else is fixed by the sort.
double sorted_sum(std::vector<double>& addends) {
  std::sort(addends.begin(), addends.end());
  double acc = 0.0;
  for (double v : addends) acc += v;
  return acc;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: rank-2 tensors required");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions mismatch (" + std::to_string(a.dim(1)) +
                     " vs " + std::to_string(b.dim(0)) + ")");
  }
  Tensor c({a.dim(0), b.dim(1)});
  detail::gemm_acc(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1));
  return c;
}

Tensor softmax(const Tensor& x, int axis) {
  const int r = static_cast<int>(x.rank());
  if (r == 0) throw ShapeError("softmax: scalar input");
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("softmax: axis out of range");

  const std::size_t n = x.dim(axis);
  std::size_t inner = 1, outer = 1;
  for (int i = axis + 1; i < r; ++i) inner *= x.dim(i);
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);

  Tensor out(x.shape());
  const float* src = x.data();
  float* dst = out.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      float mx = src[base];
      for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, src[base + k * inner]);
      float sum = 0.0f;
      for (std::size_t k = 0; k < n; ++k) {
        const float e = std::exp(src[base + k * inner] - mx);
        dst[base + k * inner] = e;
        sum += e;
      }
      const float inv = 1.0f / sum;
      for (std::size_t k = 0; k < n; ++k) dst[base + k * inner] *= inv;
    }
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
  const std::size_t d = x.dim(x.rank() - 1);
  if (gain.size() != d || bias.size() != d) throw ShapeError("layer_norm: gain/bias size mismatch");
  if (!(eps > 0.0f)) throw ValueError("layer_norm: eps must be positive");

  Tensor out(x.shape());
  const std::size_t slices = x.size() / d;
  const float* src = x.data();
  float* dst = out.data();
  for (std::size_t s = 0; s < slices; ++s) {
    const float* row = src + s * d;
    float* orow = dst + s * d;
    float mean = 0.0f;
    for (std::size_t i = 0; i < d; ++i) mean += row[i];
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (std::size_t i = 0; i < d; ++i) {
      const float c = row[i] - mean;
      var += c * c;
    }
    var /= static_cast<float>(d);
    const float inv = 1.0f / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      orow[i] = (row[i] - mean) * inv * gain[i] + bias[i];
    }
  }
  return out;
}

FeatureStats feature_stats(const Tensor& samples) {
  if (samples.rank() != 2) throw ShapeError("feature_stats: rank-2 [K,D] input required");
  const std::size_t k = samples.dim(0);
  const std::size_t d = samples.dim(1);
  if (k < 2) throw InsufficientSamplesError("feature_stats: need at least 2 samples");

  FeatureStats st{Tensor({d}), Tensor({d})};
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < k; ++i) mean += samples.at2(i, j);
    mean /= static_cast<double>(k);
    double ss = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double c = samples.at2(i, j) - mean;
      ss += c * c;
    }
    st.mean[j] = static_cast<float>(mean);
    st.variance[j] = static_cast<float>(ss / static_cast<double>(k - 1));
  }
  return st;
}

Tensor principal_direction(const DeltaMatrix& m, const PrincipalOptions& opts) {
  const std::size_t n = m.rows;
  const std::size_t d = m.cols;
  if (n < 2) throw InsufficientSamplesError("principal_direction: need N >= 2 rows");
  if (d < 1) throw ShapeError("principal_direction: need D >= 1");

  const float* raw = m.data.data();
  bool any_nonzero = false;
  for (std::size_t i = 0; i < n * d; ++i) {
    if (raw[i] != 0.0f) {
      any_nonzero = true;
      break;
    }
  }
  if (!any_nonzero) throw DegenerateInputError("principal_direction: all-zero matrix");

  // Column means, order-independent.
  std::vector<double> col_mean(d);
  std::vector<double> addends(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) addends[i] = static_cast<double>(raw[i * d + j]);
    col_mean[j] = sorted_sum(addends) / static_cast<double>(n);
  }

  std::vector<double> rows(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      rows[i * d + j] = static_cast<double>(raw[i * d + j]) - (opts.center ? col_mean[j] : 0.0);
    }
  }
  if (opts.center) {
    bool nonzero = false;
    for (double v : rows) {
      if (v != 0.0) {
        nonzero = true;
        break;
      }
    }
    if (!nonzero) throw DegenerateInputError("principal_direction: centered matrix is all-zero");
  }

  // Gram matrix G = M^T M with sorted per-entry accumulation. float->double
  // products are exact, so this too is invariant under row permutation.
  std::vector<double> gram(d * d);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a; b < d; ++b) {
      for (std::size_t i = 0; i < n; ++i) addends[i] = rows[i * d + a] * rows[i * d + b];
      const double g = sorted_sum(addends);
      gram[a * d + b] = g;
      gram[b * d + a] = g;
    }
  }

  // Initial vector: normalized column mean, else first basis vector with a
  // nonzero image under G.
  std::vector<double> v(d, 0.0);
  double mean_norm = 0.0;
  for (std::size_t j = 0; j < d; ++j) mean_norm += col_mean[j] * col_mean[j];
  mean_norm = std::sqrt(mean_norm);
  if (mean_norm > 0.0 && !opts.center) {
    for (std::size_t j = 0; j < d; ++j) v[j] = col_mean[j] / mean_norm;
  } else {
    std::size_t pivot = 0;
    for (; pivot < d; ++pivot) {
      double img = 0.0;
      for (std::size_t j = 0; j < d; ++j) img += std::abs(gram[pivot * d + j]);
      if (img > 0.0) break;
    }
    v[pivot] = 1.0;
  }

  std::vector<double> next(d);
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    for (std::size_t a = 0; a < d; ++a) {
      double acc = 0.0;
      const double* ga = gram.data() + a * d;
      for (std::size_t j = 0; j < d; ++j) acc += ga[j] * v[j];
      next[a] = acc;
    }
    double norm = 0.0;
    for (double x : next) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      // v landed in the null space; restart from the next basis vector.
      std::size_t pivot = 0;
      for (; pivot < d; ++pivot) {
        double img = 0.0;
        for (std::size_t j = 0; j < d; ++j) img += std::abs(gram[pivot * d + j]);
        if (img > 0.0) break;
      }
      std::fill(v.begin(), v.end(), 0.0);
      v[pivot] = 1.0;
      continue;
    }
    double diff = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      next[j] /= norm;
      diff = std::max(diff, std::abs(next[j] - v[j]));
    }
    v.swap(next);
    if (diff <= opts.tol) break;
  }
  if (it >= opts.max_iterations) {
    throw ConvergenceError("principal_direction: power iteration did not converge", it);
  }

  // Orient toward the column mean.
  double dot = 0.0;
  for (std::size_t j = 0; j < d; ++j) dot += v[j] * col_mean[j];
  if (dot < 0.0) {
    for (double& x : v) x = -x;
  }

  // Round to float32, then renormalize once in double so the stored values
  // are as close to unit norm as the precision allows.
  std::vector<float> out(d);
  for (std::size_t j = 0; j < d; ++j) out[j] = static_cast<float>(v[j]);
  double norm32 = 0.0;
  for (float x : out) norm32 += static_cast<double>(x) * static_cast<double>(x);
  norm32 = std::sqrt(norm32);
  for (std::size_t j = 0; j < d; ++j) {
    out[j] = static_cast<float>(static_cast<double>(out[j]) / norm32);
  }
  return Tensor({d}, std::move(out));
}

}  // namespace vti
